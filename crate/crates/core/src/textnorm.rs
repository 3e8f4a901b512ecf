//! Rule- and table-driven normalization of Hindi text: digit runs become
//! Indian-system number words and known abbreviations are expanded.

use std::collections::HashMap;

use thiserror::Error;

const BUNDLED_NUMBER_WORDS: &str = include_str!("../data/number_words_hi.tsv");
const BUNDLED_ABBREVIATIONS: &str = include_str!("../data/abbrev_hi.tsv");

/// Exclusive upper bound accepted by [`number_to_words`].
pub const NUMBER_LIMIT: u64 = 1_000_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TextNormError {
    #[error("{0} is outside the supported range [0, 10^9)")]
    OutOfRange(u64),
    #[error("abbreviation {0:?} not found")]
    NotFound(String),
    #[error("table line {line}: {msg}")]
    Table { line: usize, msg: String },
}

/// Parses `key<TAB>value` lines, skipping blanks and `#` comments.
pub fn parse_tsv_table(text: &str) -> Result<Vec<(String, String)>, TextNormError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('\t').ok_or_else(|| TextNormError::Table {
            line: i + 1,
            msg: "expected key<TAB>value".into(),
        })?;
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NumberWordTable {
    units: Vec<String>,
    /// (value, word), strictly increasing by value.
    scale_words: Vec<(u64, String)>,
}

const REQUIRED_SCALES: [u64; 4] = [100, 1_000, 100_000, 10_000_000];

impl NumberWordTable {
    /// Builds a table from TSV text: keys 0..=99 are unit words, keys
    /// 100, 1000, 100000 and 10000000 are the scale words.
    pub fn from_tsv(text: &str) -> Result<Self, TextNormError> {
        let mut units: Vec<Option<String>> = vec![None; 100];
        let mut scales: Vec<(u64, String)> = Vec::new();
        for (line_no, (key, value)) in parse_tsv_table(text)?.into_iter().enumerate() {
            let err = |msg: String| TextNormError::Table { line: line_no + 1, msg };
            let n: u64 = key.trim().parse().map_err(|_| err(format!("key {key:?} is not a number")))?;
            let value = value.trim().to_string();
            if value.is_empty() {
                return Err(err(format!("empty word for {n}")));
            }
            if n < 100 {
                units[n as usize] = Some(value);
            } else if REQUIRED_SCALES.contains(&n) {
                scales.retain(|(v, _)| *v != n);
                scales.push((n, value));
            } else {
                return Err(err(format!("{n} is neither a unit (0-99) nor a scale value")));
            }
        }
        let units = units
            .into_iter()
            .enumerate()
            .map(|(i, w)| {
                w.ok_or_else(|| TextNormError::Table { line: 0, msg: format!("missing unit word for {i}") })
            })
            .collect::<Result<Vec<_>, _>>()?;
        scales.sort_by_key(|(v, _)| *v);
        if scales.len() != REQUIRED_SCALES.len() {
            return Err(TextNormError::Table {
                line: 0,
                msg: "scale words for 100, 1000, 100000 and 10000000 are all required".into(),
            });
        }
        Ok(Self { units, scale_words: scales })
    }

    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_NUMBER_WORDS).expect("bundled number table is valid")
    }

    pub fn unit(&self, n: usize) -> &str {
        &self.units[n]
    }

    pub fn scale_words(&self) -> &[(u64, String)] {
        &self.scale_words
    }

    fn scale(&self, value: u64) -> &str {
        self.scale_words
            .iter()
            .find(|(v, _)| *v == value)
            .map(|(_, w)| w.as_str())
            .expect("all scale words present")
    }
}

/// Reads `n` in the Indian system: crore, lakh, thousand and hundred groups
/// followed by the 0-99 remainder. Zero groups are omitted.
pub fn number_to_words(n: u64, table: &NumberWordTable) -> Result<String, TextNormError> {
    if n >= NUMBER_LIMIT {
        return Err(TextNormError::OutOfRange(n));
    }
    if n == 0 {
        return Ok(table.unit(0).to_string());
    }
    let groups = [
        (n / 10_000_000, Some(10_000_000)),
        ((n / 100_000) % 100, Some(100_000)),
        ((n / 1_000) % 100, Some(1_000)),
        ((n / 100) % 10, Some(100)),
        (n % 100, None),
    ];
    let mut parts: Vec<&str> = Vec::new();
    for (count, scale) in groups {
        if count == 0 {
            continue;
        }
        parts.push(table.unit(count as usize));
        if let Some(scale) = scale {
            parts.push(table.scale(scale));
        }
    }
    Ok(parts.join(" "))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AbbrevTable {
    entries: HashMap<String, String>,
}

impl AbbrevTable {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self, TextNormError> {
        let mut entries = HashMap::new();
        for (i, (key, value)) in pairs.into_iter().enumerate() {
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            let err = |msg: String| TextNormError::Table { line: i + 1, msg };
            if key.is_empty() {
                return Err(err("empty abbreviation".into()));
            }
            if key.chars().any(char::is_whitespace) {
                return Err(err(format!("abbreviation {key:?} contains whitespace")));
            }
            if key == value {
                return Err(err(format!("abbreviation {key:?} maps to itself")));
            }
            entries.insert(key, value);
        }
        // Expansions must be stable under a second normalization pass.
        for (key, value) in &entries {
            if value.chars().any(is_digit) {
                return Err(TextNormError::Table { line: 0, msg: format!("expansion of {key:?} contains digits") });
            }
            if let Some(tok) = value.split_whitespace().find(|t| entries.contains_key(*t)) {
                return Err(TextNormError::Table {
                    line: 0,
                    msg: format!("expansion of {key:?} contains abbreviation {tok:?}"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn from_tsv(text: &str) -> Result<Self, TextNormError> {
        Self::from_pairs(parse_tsv_table(text)?)
    }

    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_ABBREVIATIONS).expect("bundled abbreviation table is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

pub fn expand_abbreviation(token: &str, table: &AbbrevTable) -> Result<String, TextNormError> {
    table
        .entries
        .get(token)
        .cloned()
        .ok_or_else(|| TextNormError::NotFound(token.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanKind {
    Digits,
    Abbreviation,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextSpan {
    pub text: String,
    pub kind: SpanKind,
}

/// ASCII `0-9` or Devanagari `०-९`.
pub fn is_digit(c: char) -> bool {
    c.is_ascii_digit() || ('\u{0966}'..='\u{096F}').contains(&c)
}

fn digit_value(c: char) -> u32 {
    if c.is_ascii_digit() {
        c as u32 - '0' as u32
    } else {
        c as u32 - 0x0966
    }
}

/// Value of a digit run, or `None` when it does not fit below [`NUMBER_LIMIT`].
pub fn parse_digit_run(run: &str) -> Option<u64> {
    let mut n: u64 = 0;
    for c in run.chars() {
        n = n.checked_mul(10)?.checked_add(digit_value(c) as u64)?;
        if n >= NUMBER_LIMIT {
            return None;
        }
    }
    Some(n)
}

/// Splits one whitespace-free token into maximal digit and non-digit spans.
/// The whole token is an abbreviation span when the table knows it.
pub fn classify_token(token: &str, abbrev: Option<&AbbrevTable>) -> Vec<TextSpan> {
    if abbrev.is_some_and(|t| t.entries.contains_key(token)) {
        return vec![TextSpan { text: token.to_string(), kind: SpanKind::Abbreviation }];
    }
    let mut spans: Vec<TextSpan> = Vec::new();
    for c in token.chars() {
        let kind = if is_digit(c) { SpanKind::Digits } else { SpanKind::Plain };
        match spans.last_mut() {
            Some(last) if last.kind == kind => last.text.push(c),
            _ => spans.push(TextSpan { text: c.to_string(), kind }),
        }
    }
    spans
}

/// Which rewrites [`normalize_text`] applies.
#[derive(Debug, Clone, Copy)]
pub struct NormalizeOptions<'a> {
    pub numbers: Option<&'a NumberWordTable>,
    pub abbreviations: Option<&'a AbbrevTable>,
}

impl<'a> NormalizeOptions<'a> {
    pub fn all(numbers: &'a NumberWordTable, abbreviations: &'a AbbrevTable) -> Self {
        Self { numbers: Some(numbers), abbreviations: Some(abbreviations) }
    }
}

/// Rewrites digit runs and known abbreviations; whitespace and every other
/// character are copied through untouched. Unknown abbreviations and digit
/// runs of 10^9 or more are left as they are.
pub fn normalize_text(text: &str, opts: NormalizeOptions<'_>) -> String {
    let mut out = String::with_capacity(text.len() * 2);
    let mut token = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            flush_token(&mut token, &mut out, opts);
            out.push(c);
        } else {
            token.push(c);
        }
    }
    flush_token(&mut token, &mut out, opts);
    out
}

fn flush_token(token: &mut String, out: &mut String, opts: NormalizeOptions<'_>) {
    if token.is_empty() {
        return;
    }
    for span in classify_token(token, opts.abbreviations) {
        match span.kind {
            SpanKind::Abbreviation => {
                let table = opts.abbreviations.expect("classified with a table");
                out.push_str(&expand_abbreviation(&span.text, table).expect("classified as known"));
            }
            SpanKind::Digits => match (opts.numbers, parse_digit_run(&span.text)) {
                (Some(table), Some(n)) => {
                    out.push_str(&number_to_words(n, table).expect("parse_digit_run bounds the value"))
                }
                _ => out.push_str(&span.text),
            },
            SpanKind::Plain => out.push_str(&span.text),
        }
    }
    token.clear();
}
