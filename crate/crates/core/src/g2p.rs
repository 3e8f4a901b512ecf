//! Devanagari grapheme-to-phoneme transducer with schwa deletion.
//!
//! Words are first split into grapheme clusters (consonant or independent
//! vowel plus its attached signs), then turned into phones:
//!
//! * R1: a consonant without matra or virama carries the inherent schwa `a`.
//! * R2: a virama suppresses the vowel.
//! * R3: the word-final inherent schwa is dropped when the word has two or
//!   more clusters.
//! * R4: a medial inherent schwa in a `VC_CV` context is dropped, in a single
//!   left-to-right pass that sees the deletions made before it.
//! * N1: an anusvara before a consonant becomes that consonant's homorganic
//!   nasal; otherwise it nasalizes the preceding vowel. A chandrabindu always
//!   nasalizes.
//!
//! A schwa that carries a nasal mark or visarga is never deleted.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textnorm::parse_tsv_table;

const BUNDLED_GRAPHEMES: &str = include_str!("../data/graphemes_hi.tsv");
const BUNDLED_NASALS: &str = include_str!("../data/varga_nasals_hi.tsv");

const NUKTA: char = '\u{093C}';
const VIRAMA: char = '\u{094D}';
const CHANDRABINDU: char = '\u{0901}';
const ANUSVARA: char = '\u{0902}';
const VISARGA: char = '\u{0903}';
const INHERENT_VOWEL: &str = "a";
const NASALIZED_SUFFIX: char = '~';
/// Realization of a nasal mark on a cluster with no vowel and no following consonant.
const FALLBACK_NASAL: &str = "n";
const VISARGA_PHONE: &str = "h";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum G2pError {
    #[error("empty input")]
    EmptyInput,
    #[error("codepoint {ch:?} (U+{:04X}) at index {index} is not a supported Devanagari letter or sign", *.ch as u32)]
    NonDevanagariCodepoint { index: usize, ch: char },
    #[error("sign {ch:?} at index {index} has no base letter to attach to")]
    OrphanMark { index: usize, ch: char },
    #[error("grapheme {0:?} has no entry in the phone table")]
    Unmapped(String),
    #[error("rule table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NasalMark {
    Anusvara,
    Chandrabindu,
}

/// One base letter with its attached signs. `text` is the exact source
/// slice, so concatenating clusters reproduces the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphemeCluster {
    /// Consonant or independent vowel; precomposed nukta letters are
    /// stored decomposed, with `nukta` set.
    pub base: char,
    pub nukta: bool,
    pub matra: Option<char>,
    pub virama: bool,
    pub nasal: Option<NasalMark>,
    pub visarga: bool,
    pub text: String,
}

impl GraphemeCluster {
    pub fn is_consonant(&self) -> bool {
        is_consonant(self.base)
    }
}

fn is_consonant(c: char) -> bool {
    matches!(c, '\u{0915}'..='\u{0939}' | '\u{0958}'..='\u{095F}')
}

fn is_independent_vowel(c: char) -> bool {
    matches!(c, '\u{0904}'..='\u{0914}' | '\u{0960}' | '\u{0961}')
}

fn is_matra(c: char) -> bool {
    matches!(c, '\u{093E}'..='\u{094C}' | '\u{0962}' | '\u{0963}')
}

fn is_sign(c: char) -> bool {
    is_matra(c) || matches!(c, NUKTA | VIRAMA | CHANDRABINDU | ANUSVARA | VISARGA)
}

/// Splits precomposed nukta letters into (base, true).
fn decompose_nukta(c: char) -> (char, bool) {
    match c {
        '\u{0929}' => ('\u{0928}', true),
        '\u{0931}' => ('\u{0930}', true),
        '\u{0934}' => ('\u{0933}', true),
        '\u{0958}' => ('\u{0915}', true),
        '\u{0959}' => ('\u{0916}', true),
        '\u{095A}' => ('\u{0917}', true),
        '\u{095B}' => ('\u{091C}', true),
        '\u{095C}' => ('\u{0921}', true),
        '\u{095D}' => ('\u{0922}', true),
        '\u{095E}' => ('\u{092B}', true),
        '\u{095F}' => ('\u{092F}', true),
        other => (other, false),
    }
}

/// Left-to-right scan: `base [nukta] [matra | virama] [nasal] [visarga]`
/// for consonants, `base [nasal] [visarga]` for independent vowels.
pub fn parse_graphemes(word: &str) -> Result<Vec<GraphemeCluster>, G2pError> {
    if word.is_empty() {
        return Err(G2pError::EmptyInput);
    }
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    let mut clusters = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (byte_start, c) = chars[i];
        let consonant = is_consonant(c);
        if !consonant && !is_independent_vowel(c) {
            return Err(if is_sign(c) {
                G2pError::OrphanMark { index: i, ch: c }
            } else {
                G2pError::NonDevanagariCodepoint { index: i, ch: c }
            });
        }
        let (base, mut nukta) = decompose_nukta(c);
        let mut cluster = GraphemeCluster {
            base,
            nukta: false,
            matra: None,
            virama: false,
            nasal: None,
            visarga: false,
            text: String::new(),
        };
        i += 1;
        let peek = |i: usize| chars.get(i).map(|&(_, c)| c);
        if consonant {
            if !nukta && peek(i) == Some(NUKTA) {
                nukta = true;
                i += 1;
            }
            match peek(i) {
                Some(m) if is_matra(m) => {
                    cluster.matra = Some(m);
                    i += 1;
                }
                Some(VIRAMA) => {
                    cluster.virama = true;
                    i += 1;
                }
                _ => {}
            }
        }
        cluster.nukta = nukta;
        match peek(i) {
            Some(ANUSVARA) => {
                cluster.nasal = Some(NasalMark::Anusvara);
                i += 1;
            }
            Some(CHANDRABINDU) => {
                cluster.nasal = Some(NasalMark::Chandrabindu);
                i += 1;
            }
            _ => {}
        }
        if peek(i) == Some(VISARGA) {
            cluster.visarga = true;
            i += 1;
        }
        let byte_end = chars.get(i).map_or(word.len(), |&(b, _)| b);
        cluster.text = word[byte_start..byte_end].to_string();
        clusters.push(cluster);
    }
    Ok(clusters)
}

/// A phone symbol from the transducer's inventory.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phone(String);

impl Phone {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Phone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type PhoneSeq = Vec<Phone>;

/// Space-joined phone symbols.
pub fn phones_to_string(phones: &[Phone]) -> String {
    phones.iter().map(Phone::as_str).collect::<Vec<_>>().join(" ")
}

/// Grapheme and varga tables driving the transducer.
#[derive(Debug, Clone)]
pub struct G2pRules {
    consonants: HashMap<(char, bool), Vec<String>>,
    vowels: HashMap<char, Vec<String>>,
    matras: HashMap<char, Vec<String>>,
    homorganic_nasal: HashMap<String, String>,
    inventory: BTreeSet<String>,
}

fn split_phones(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

impl G2pRules {
    pub fn from_tables(graphemes_tsv: &str, nasals_tsv: &str) -> Result<Self, G2pError> {
        let table_err = |e: crate::textnorm::TextNormError| G2pError::Table(e.to_string());
        let mut consonants = HashMap::new();
        let mut vowels = HashMap::new();
        let mut matras = HashMap::new();
        for (key, value) in parse_tsv_table(graphemes_tsv).map_err(table_err)? {
            let phones = split_phones(&value);
            if phones.is_empty() || phones.iter().any(|p| p.ends_with(NASALIZED_SUFFIX)) {
                return Err(G2pError::Table(format!("bad phones {value:?} for {key:?}")));
            }
            let mut it = key.chars();
            let (first, rest) = (it.next(), it.as_str());
            match (first, rest) {
                (Some(c), "") if is_independent_vowel(c) => {
                    vowels.insert(c, phones);
                }
                (Some(c), "") if is_matra(c) => {
                    matras.insert(c, phones);
                }
                (Some(c), "") if is_consonant(c) => {
                    consonants.insert(decompose_nukta(c), phones);
                }
                (Some(c), "\u{093C}") if is_consonant(c) => {
                    consonants.insert((c, true), phones);
                }
                _ => return Err(G2pError::Table(format!("unrecognized grapheme key {key:?}"))),
            }
        }
        let mut homorganic_nasal = HashMap::new();
        for (consonant, nasal) in parse_tsv_table(nasals_tsv).map_err(table_err)? {
            homorganic_nasal.insert(consonant.trim().to_string(), nasal.trim().to_string());
        }

        let mut inventory: BTreeSet<String> = BTreeSet::new();
        let mut vowel_finals: BTreeSet<String> = BTreeSet::from([INHERENT_VOWEL.to_string()]);
        for phones in consonants.values() {
            inventory.extend(phones.iter().cloned());
        }
        for phones in vowels.values().chain(matras.values()) {
            inventory.extend(phones.iter().cloned());
            vowel_finals.extend(phones.last().cloned());
        }
        for v in &vowel_finals {
            inventory.insert(v.clone());
            inventory.insert(format!("{v}{NASALIZED_SUFFIX}"));
        }
        for (c, n) in &homorganic_nasal {
            if !inventory.contains(c) || !inventory.contains(n) {
                return Err(G2pError::Table(format!("nasal map entry {c} -> {n} uses unknown phones")));
            }
        }
        inventory.insert(FALLBACK_NASAL.to_string());
        inventory.insert(VISARGA_PHONE.to_string());
        Ok(Self { consonants, vowels, matras, homorganic_nasal, inventory })
    }

    pub fn bundled() -> Self {
        Self::from_tables(BUNDLED_GRAPHEMES, BUNDLED_NASALS).expect("bundled G2P tables are valid")
    }

    /// Every phone symbol this rule set can emit.
    pub fn inventory(&self) -> impl Iterator<Item = &str> {
        self.inventory.iter().map(String::as_str)
    }

    pub fn contains_phone(&self, symbol: &str) -> bool {
        self.inventory.contains(symbol)
    }

    fn onset(&self, c: &GraphemeCluster) -> Result<Vec<String>, G2pError> {
        self.consonants
            .get(&(c.base, c.nukta))
            .or_else(|| self.consonants.get(&(c.base, false)))
            .cloned()
            .ok_or_else(|| G2pError::Unmapped(c.text.clone()))
    }

    pub fn clusters_to_phones(&self, clusters: &[GraphemeCluster]) -> Result<PhoneSeq, G2pError> {
        if clusters.is_empty() {
            return Err(G2pError::EmptyInput);
        }
        let mut units = clusters
            .iter()
            .map(|c| self.unit(c))
            .collect::<Result<Vec<_>, _>>()?;
        let n = units.len();

        // R3
        if n >= 2 && units[n - 1].deletable() {
            units[n - 1].vowel.clear();
        }

        // R4
        for i in 1..n.saturating_sub(1) {
            let next = &units[i + 1];
            let next_is_cv = next.is_consonant && !next.vowel.is_empty();
            if units[i].deletable() && next_is_cv && self.ends_with_vowel(&units[i - 1], &units[i]) {
                units[i].vowel.clear();
            }
        }

        let mut phones = Vec::new();
        for (i, unit) in units.iter().enumerate() {
            phones.extend(unit.onset.iter().cloned());
            let following_nasal = units.get(i + 1).and_then(|next| self.homorganic(next));
            let mut vowel = unit.vowel.clone();
            match (unit.nasal, vowel.last_mut()) {
                (Some(NasalMark::Anusvara), Some(_)) if following_nasal.is_some() => {
                    phones.append(&mut vowel);
                    phones.push(following_nasal.unwrap().to_string());
                }
                (Some(_), Some(last)) => {
                    last.push(NASALIZED_SUFFIX);
                    phones.append(&mut vowel);
                }
                (Some(_), None) => {
                    phones.push(following_nasal.unwrap_or(FALLBACK_NASAL).to_string());
                }
                (None, _) => phones.append(&mut vowel),
            }
            if unit.visarga {
                phones.push(VISARGA_PHONE.to_string());
            }
        }
        Ok(phones.into_iter().map(Phone).collect())
    }

    fn unit(&self, c: &GraphemeCluster) -> Result<Unit, G2pError> {
        let (onset, vowel, inherent) = if c.is_consonant() {
            let onset = self.onset(c)?;
            match (c.matra, c.virama) {
                (Some(m), _) => {
                    let v = self.matras.get(&m).cloned().ok_or_else(|| G2pError::Unmapped(m.to_string()))?;
                    (onset, v, false)
                }
                (None, true) => (onset, Vec::new(), false),
                (None, false) => (onset, vec![INHERENT_VOWEL.to_string()], true),
            }
        } else {
            let v = self.vowels.get(&c.base).cloned().ok_or_else(|| G2pError::Unmapped(c.text.clone()))?;
            (Vec::new(), v, false)
        };
        Ok(Unit { onset, vowel, inherent, nasal: c.nasal, visarga: c.visarga, is_consonant: c.is_consonant() })
    }

    /// Homorganic nasal for an anusvara placed before `next`.
    fn homorganic(&self, next: &Unit) -> Option<&str> {
        if !next.is_consonant {
            return None;
        }
        next.onset.first().and_then(|p| self.homorganic_nasal.get(p)).map(String::as_str)
    }

    /// Whether `prev`, followed by `cur`, is realized ending in a vowel.
    fn ends_with_vowel(&self, prev: &Unit, cur: &Unit) -> bool {
        if prev.vowel.is_empty() || prev.visarga {
            return false;
        }
        !(prev.nasal == Some(NasalMark::Anusvara) && self.homorganic(cur).is_some())
    }

    pub fn g2p(&self, word: &str) -> Result<PhoneSeq, G2pError> {
        self.clusters_to_phones(&parse_graphemes(word)?)
    }
}

#[derive(Debug, Clone)]
struct Unit {
    onset: Vec<String>,
    vowel: Vec<String>,
    inherent: bool,
    nasal: Option<NasalMark>,
    visarga: bool,
    is_consonant: bool,
}

impl Unit {
    /// An inherent schwa still present and not carrying a nasal or visarga.
    fn deletable(&self) -> bool {
        self.inherent && !self.vowel.is_empty() && self.nasal.is_none() && !self.visarga
    }
}

/// [`G2pRules::clusters_to_phones`] with the bundled tables.
pub fn clusters_to_phones(clusters: &[GraphemeCluster]) -> Result<PhoneSeq, G2pError> {
    bundled_rules().clusters_to_phones(clusters)
}

/// [`G2pRules::g2p`] with the bundled tables.
pub fn g2p(word: &str) -> Result<PhoneSeq, G2pError> {
    bundled_rules().g2p(word)
}

pub fn bundled_rules() -> &'static G2pRules {
    static RULES: std::sync::OnceLock<G2pRules> = std::sync::OnceLock::new();
    RULES.get_or_init(G2pRules::bundled)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    pub phones: PhoneSeq,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LexiconFailure {
    pub word: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Lexicon {
    pub entries: Vec<LexiconEntry>,
    pub failures: Vec<LexiconFailure>,
}

impl Lexicon {
    /// `word<TAB>phone phone ...` lines.
    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\n", e.word, phones_to_string(&e.phones)))
            .collect()
    }
}

/// Deduplicated lexicon sorted by codepoint order. Words that fail G2P are
/// collected in `failures`.
pub fn build_lexicon<S: AsRef<str>>(rules: &G2pRules, words: &[S]) -> Lexicon {
    let unique: BTreeMap<&str, ()> = words.iter().map(|w| (w.as_ref(), ())).collect();
    let mut lex = Lexicon::default();
    for word in unique.into_keys() {
        match rules.g2p(word) {
            Ok(phones) => lex.entries.push(LexiconEntry { word: word.to_string(), phones }),
            Err(e) => lex.failures.push(LexiconFailure { word: word.to_string(), error: e.to_string() }),
        }
    }
    lex
}

/// Parses a lexicon TSV file into a word -> phones map.
pub fn parse_lexicon_tsv(text: &str) -> Result<HashMap<String, PhoneSeq>, G2pError> {
    let rows = parse_tsv_table(text).map_err(|e| G2pError::Table(e.to_string()))?;
    Ok(rows
        .into_iter()
        .map(|(w, p)| (w.trim().to_string(), split_phones(&p).into_iter().map(Phone).collect()))
        .collect())
}
