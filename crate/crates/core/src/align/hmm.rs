//! Three-state-per-phone HMM topology and Viterbi forced alignment.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::NetError;

pub const STATES_PER_PHONE: usize = 3;
pub const SILENCE_STATE: usize = 0;
pub const SILENCE_LABEL: &str = "sil";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubState {
    Rising,
    Stable,
    Falling,
}

impl SubState {
    pub const ALL: [SubState; STATES_PER_PHONE] = [SubState::Rising, SubState::Stable, SubState::Falling];
}

/// State 0 is silence; phone `p` owns states `1 + 3p .. 1 + 3p + 3` in
/// rising, stable, falling order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HmmTopology {
    phones: Vec<String>,
}

impl HmmTopology {
    pub fn new(phones: Vec<String>) -> Result<Self, NetError> {
        let mut seen = std::collections::HashSet::new();
        for p in &phones {
            if p.is_empty() || p == SILENCE_LABEL || !seen.insert(p.as_str()) {
                return Err(NetError::InvalidConfig(format!("invalid or duplicate phone {p:?} in topology")));
            }
        }
        Ok(Self { phones })
    }

    pub fn phones(&self) -> &[String] {
        &self.phones
    }

    pub fn total_states(&self) -> usize {
        1 + STATES_PER_PHONE * self.phones.len()
    }

    pub fn phone_index(&self, phone: &str) -> Option<usize> {
        self.phones.iter().position(|p| p == phone)
    }

    pub fn state_id(&self, phone_index: usize, sub: SubState) -> usize {
        1 + STATES_PER_PHONE * phone_index + sub as usize
    }

    /// `None` for silence.
    pub fn phone_of_state(&self, state: usize) -> Option<(&str, SubState)> {
        if state == SILENCE_STATE || state >= self.total_states() {
            return None;
        }
        let p = (state - 1) / STATES_PER_PHONE;
        Some((self.phones[p].as_str(), SubState::ALL[(state - 1) % STATES_PER_PHONE]))
    }

    pub fn state_label(&self, state: usize) -> String {
        match self.phone_of_state(state) {
            Some((p, sub)) => format!("{p}_{}", sub as usize),
            None => SILENCE_LABEL.to_string(),
        }
    }

    /// Left-to-right state chain for an utterance, optionally framed by
    /// leading and trailing silence.
    pub fn expand_chain<S: AsRef<str>>(&self, phones: &[S], with_silence: bool) -> Result<Vec<usize>, NetError> {
        let mut chain = Vec::with_capacity(phones.len() * STATES_PER_PHONE + 2);
        if with_silence {
            chain.push(SILENCE_STATE);
        }
        for p in phones {
            let idx = self.phone_index(p.as_ref()).ok_or_else(|| NetError::UnknownPhone(p.as_ref().to_string()))?;
            chain.extend(SubState::ALL.iter().map(|&s| self.state_id(idx, s)));
        }
        if with_silence {
            chain.push(SILENCE_STATE);
        }
        Ok(chain)
    }

    /// Maps a per-frame state sequence to phone labels, collapsing
    /// consecutive frames of the same phone and dropping silence.
    pub fn collapse_to_phones(&self, states: &[usize]) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut prev: Option<usize> = None;
        for &s in states {
            let phone = if s == SILENCE_STATE || s >= self.total_states() {
                None
            } else {
                Some((s - 1) / STATES_PER_PHONE)
            };
            if phone != prev {
                if let Some(p) = phone {
                    out.push(self.phones[p].clone());
                }
            }
            prev = phone;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentResult {
    /// Topology state id per frame.
    pub state_ids: Vec<usize>,
    /// Position in the expanded chain per frame.
    pub chain_positions: Vec<usize>,
    pub log_score: f64,
}

/// Best monotonic path through `chain` for a `T x S` matrix of log scores:
/// start in the first chain state, end in the last, and at every frame
/// either stay or advance by one. When a cell's stay and advance
/// predecessors score equally, the advancing transition is taken.
pub fn viterbi_align_log(log_post: &DMatrix<f64>, chain: &[usize]) -> Result<AlignmentResult, NetError> {
    let t_len = log_post.nrows();
    let n = chain.len();
    if n == 0 {
        return Err(NetError::InvalidInput("empty state chain".into()));
    }
    if let Some(&bad) = chain.iter().find(|&&s| s >= log_post.ncols()) {
        return Err(NetError::ShapeMismatch(format!("chain state {bad} but only {} columns", log_post.ncols())));
    }
    if t_len < n {
        return Err(NetError::TooFewFrames { frames: t_len, states: n });
    }

    let mut score = vec![f64::NEG_INFINITY; n];
    let mut advanced = vec![false; t_len * n];
    score[0] = log_post[(0, chain[0])];
    for t in 1..t_len {
        // Positions > t are unreachable; iterate downwards so score[j - 1] is still t - 1's.
        let hi = t.min(n - 1);
        for j in (0..=hi).rev() {
            let emit = log_post[(t, chain[j])];
            let stay = score[j];
            if j > 0 && score[j - 1] >= stay {
                score[j] = score[j - 1] + emit;
                advanced[t * n + j] = true;
            } else {
                score[j] = stay + emit;
            }
        }
    }

    let mut positions = vec![0; t_len];
    let mut j = n - 1;
    for t in (0..t_len).rev() {
        positions[t] = j;
        if t > 0 && advanced[t * n + j] {
            j -= 1;
        }
    }
    debug_assert_eq!(j, 0);
    Ok(AlignmentResult {
        state_ids: positions.iter().map(|&p| chain[p]).collect(),
        chain_positions: positions,
        log_score: score[n - 1],
    })
}

/// [`viterbi_align_log`] on probabilities; entries must be in `[0, 1]`.
pub fn viterbi_align_chain(posteriors: &DMatrix<f64>, chain: &[usize]) -> Result<AlignmentResult, NetError> {
    if let Some(bad) = posteriors.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(NetError::InvalidInput(format!("posterior {bad} is not a probability")));
    }
    viterbi_align_log(&posteriors.map(f64::ln), chain)
}

/// Aligns `T x S` posteriors to the chain of a phone sequence.
pub fn viterbi_align<S: AsRef<str>>(
    posteriors: &DMatrix<f64>,
    phones: &[S],
    topology: &HmmTopology,
    with_silence: bool,
) -> Result<AlignmentResult, NetError> {
    if posteriors.ncols() != topology.total_states() {
        return Err(NetError::ShapeMismatch(format!(
            "posteriors have {} columns, topology has {} states",
            posteriors.ncols(),
            topology.total_states()
        )));
    }
    let chain = topology.expand_chain(phones, with_silence)?;
    viterbi_align_chain(posteriors, &chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo() -> HmmTopology {
        HmmTopology::new(vec!["k".into(), "a".into(), "m".into()]).unwrap()
    }

    #[test]
    fn topology_indexing() {
        let t = topo();
        assert_eq!(t.total_states(), 10);
        assert_eq!(t.state_id(0, SubState::Rising), 1);
        assert_eq!(t.state_id(2, SubState::Falling), 9);
        assert_eq!(t.phone_of_state(5), Some(("a", SubState::Stable)));
        assert_eq!(t.phone_of_state(6), Some(("a", SubState::Falling)));
        assert_eq!(t.phone_of_state(0), None);
        assert_eq!(t.state_label(4), "a_0");
        assert_eq!(t.expand_chain(&["a", "k"], true).unwrap(), vec![0, 4, 5, 6, 1, 2, 3, 0]);
        assert_eq!(t.expand_chain(&["a"], false).unwrap(), vec![4, 5, 6]);
        assert!(matches!(t.expand_chain(&["zz"], false), Err(NetError::UnknownPhone(_))));
        assert!(HmmTopology::new(vec!["a".into(), "a".into()]).is_err());
        assert!(HmmTopology::new(vec!["sil".into()]).is_err());
    }

    #[test]
    fn collapse_runs() {
        let t = topo();
        assert_eq!(t.collapse_to_phones(&[0, 0, 1, 2, 2, 3, 0, 4, 6, 0, 4]), vec!["k", "a", "a"]);
        assert!(t.collapse_to_phones(&[0, 0]).is_empty());
    }

    #[test]
    fn single_state_chain() {
        let post = DMatrix::from_element(5, 2, 0.5);
        let r = viterbi_align_chain(&post, &[1]).unwrap();
        assert_eq!(r.state_ids, vec![1; 5]);
        assert!((r.log_score - 5.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn exact_length_is_diagonal() {
        let post = DMatrix::from_fn(4, 4, |t, s| if t == s { 0.1 } else { 0.9 });
        let r = viterbi_align_chain(&post, &[0, 1, 2, 3]).unwrap();
        assert_eq!(r.state_ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn ties_prefer_the_advancing_transition() {
        // Every path scores the same; each cell takes its advancing predecessor.
        let post = DMatrix::from_element(4, 2, 0.5);
        let r = viterbi_align_chain(&post, &[0, 1]).unwrap();
        assert_eq!(r.chain_positions, vec![0, 0, 0, 1]);
    }

    #[test]
    fn follows_the_evidence() {
        // frames 0-2 favour state 0, frames 3-5 favour state 1
        let post = DMatrix::from_fn(6, 2, |t, s| if (t < 3) == (s == 0) { 0.9 } else { 0.1 });
        let r = viterbi_align_chain(&post, &[0, 1]).unwrap();
        assert_eq!(r.state_ids, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn errors() {
        let post = DMatrix::from_element(2, 3, 0.3);
        assert_eq!(
            viterbi_align_chain(&post, &[0, 1, 2]),
            Err(NetError::TooFewFrames { frames: 2, states: 3 })
        );
        assert!(matches!(viterbi_align_chain(&post, &[5]), Err(NetError::ShapeMismatch(_))));
        assert!(viterbi_align_chain(&DMatrix::from_element(2, 1, 1.5), &[0]).is_err());
        assert!(matches!(viterbi_align(&post, &["k"], &topo(), false), Err(NetError::ShapeMismatch(_))));
    }
}
