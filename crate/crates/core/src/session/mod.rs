//! Time-gap segmentation, adaptive border refinement and the misdivision
//! analyzer.

mod ass;
mod misdivision;

use kast_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::data::synthetic::EventTruth;
use crate::data::BehaviorSequence;
use crate::error::{KastError, Result};

pub use ass::{ass_pass, ass_pass_all, ass_unit, AssConfig, ConflictRule, ForwardTest, PassStats, UnitOutput};
pub use misdivision::{misdivision_stats, write_misdivision_csv, MisdivisionRow};

/// Sessions as ordered lists of positions into one [`BehaviorSequence`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionPartition {
    pub sessions: Vec<Vec<usize>>,
}

impl SessionPartition {
    pub fn new(sessions: Vec<Vec<usize>>) -> Self {
        Self { sessions }
    }

    pub fn n(&self) -> usize {
        self.sessions.len()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.sessions.iter().map(Vec::len).collect()
    }

    pub fn total_events(&self) -> usize {
        self.sessions.iter().map(Vec::len).sum()
    }

    /// Session index of every position, `None` where a position is absent.
    pub fn session_of(&self, len: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; len];
        for (s, members) in self.sessions.iter().enumerate() {
            for &p in members {
                if p < len {
                    out[p] = Some(s);
                }
            }
        }
        out
    }

    /// Keeps positions `< end`, dropping sessions left empty.
    pub fn truncated(&self, end: usize) -> SessionPartition {
        SessionPartition {
            sessions: self
                .sessions
                .iter()
                .map(|s| s.iter().copied().filter(|&p| p < end).collect::<Vec<_>>())
                .filter(|s| !s.is_empty())
                .collect(),
        }
    }
}

/// Starts a new session wherever consecutive events are more than
/// `gap_seconds` apart.
pub fn initial_segment(seq: &BehaviorSequence, gap_seconds: u64) -> SessionPartition {
    let times: Vec<u64> = seq.events.iter().map(|e| e.timestamp).collect();
    segment_times(&times, gap_seconds)
}

pub fn segment_times(times: &[u64], gap_seconds: u64) -> SessionPartition {
    let mut sessions: Vec<Vec<usize>> = Vec::new();
    for (p, &t) in times.iter().enumerate() {
        match sessions.last_mut() {
            Some(cur) if t.saturating_sub(times[p - 1]) <= gap_seconds => cur.push(p),
            _ => sessions.push(vec![p]),
        }
    }
    SessionPartition { sessions }
}

/// Planted events whose true session is present in `partition`, and how
/// many of those share a session with that true session's first regular
/// event.
pub fn planted_recovery(partition: &SessionPartition, truth: &[EventTruth]) -> (usize, usize) {
    let where_ = partition.session_of(truth.len());
    let (mut planted, mut recovered) = (0, 0);
    for (p, t) in truth.iter().enumerate() {
        if !t.planted {
            continue;
        }
        let anchor = truth.iter().position(|o| !o.planted && o.session == t.session);
        if let (Some(a), Some(sp)) = (anchor, where_[p]) {
            if let Some(sa) = where_[a] {
                planted += 1;
                recovered += usize::from(sa == sp);
            }
        }
    }
    (planted, recovered)
}

/// Embedding lookup for the events of one sequence.
pub trait VectorSource {
    fn dim(&self) -> usize;
    fn vector(&self, pos: usize) -> &[f64];
}

/// Rows of an embedding table addressed through per-position row ids.
#[derive(Debug, Clone, Copy)]
pub struct TableRows<'a> {
    pub table: &'a Tensor,
    pub rows: &'a [usize],
}

impl VectorSource for TableRows<'_> {
    fn dim(&self) -> usize {
        self.table.cols()
    }

    fn vector(&self, pos: usize) -> &[f64] {
        self.table.row_slice(self.rows[pos])
    }
}

impl VectorSource for [Vec<f64>] {
    fn dim(&self) -> usize {
        self.first().map_or(0, Vec::len)
    }

    fn vector(&self, pos: usize) -> &[f64] {
        &self[pos]
    }
}

impl VectorSource for Vec<Vec<f64>> {
    fn dim(&self) -> usize {
        self.as_slice().dim()
    }

    fn vector(&self, pos: usize) -> &[f64] {
        &self[pos]
    }
}

/// Arithmetic mean of the member vectors.
pub fn session_mean<S: VectorSource + ?Sized>(session: &[usize], src: &S) -> Result<Vec<f64>> {
    if session.is_empty() {
        return Err(KastError::EmptySession);
    }
    let mut acc = vec![0.0; src.dim()];
    for &p in session {
        for (a, v) in acc.iter_mut().zip(src.vector(p)) {
            *a += v;
        }
    }
    let n = session.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Similarity {
    /// Zero vectors have similarity 0 to everything.
    #[default]
    Cosine,
    /// `-‖a − b‖₂`.
    NegEuclidean,
}

impl std::str::FromStr for Similarity {
    type Err = KastError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "neg-euclidean" | "negative-euclidean" => Ok(Self::NegEuclidean),
            _ => Err(KastError::Config(format!("unknown similarity `{s}`"))),
        }
    }
}

impl std::fmt::Display for Similarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Cosine => "cosine",
            Self::NegEuclidean => "neg-euclidean",
        })
    }
}

pub fn similarity(a: &[f64], b: &[f64], kind: Similarity) -> f64 {
    assert_eq!(a.len(), b.len(), "similarity of vectors with different lengths");
    match kind {
        Similarity::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
            }
        }
        Similarity::NegEuclidean => -a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionEvent;
    use proptest::prelude::*;

    fn seq_at(times: &[u64]) -> BehaviorSequence {
        let ev = times.iter().map(|&t| InteractionEvent::new(0, 0, t, 1)).collect();
        BehaviorSequence::new(0, ev).unwrap()
    }

    #[test]
    fn single_cut() {
        let p = initial_segment(&seq_at(&[0, 10, 7210, 7220]), 1800);
        assert_eq!(p.lengths(), [2, 2]);
    }

    #[test]
    fn no_cut_and_empty() {
        assert_eq!(initial_segment(&seq_at(&[0, 5, 9]), 1800).n(), 1);
        assert_eq!(initial_segment(&seq_at(&[]), 1800).n(), 0);
        // a gap equal to the threshold does not cut
        assert_eq!(initial_segment(&seq_at(&[0, 1800]), 1800).n(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn matches_scan_oracle(gaps in prop::collection::vec(0u64..4000, 0..30)) {
            let mut times = Vec::new();
            let mut t = 0;
            for g in &gaps {
                t += g;
                times.push(t);
            }
            // oracle: list of session ids, bumped after each large gap
            let mut ids = Vec::new();
            let mut id = 0;
            for i in 0..times.len() {
                if i > 0 && times[i] - times[i - 1] > 1800 {
                    id += 1;
                }
                ids.push(id);
            }
            let p = segment_times(&times, 1800);
            let got: Vec<usize> = p.session_of(times.len()).into_iter().map(Option::unwrap).collect();
            prop_assert_eq!(got, ids);
        }

        #[test]
        fn cosine_matches_oracle(a in prop::collection::vec(-3.0f64..3.0, 6), b in prop::collection::vec(-3.0f64..3.0, 6)) {
            let dot: f64 = (0..6).map(|i| a[i] * b[i]).sum();
            let na: f64 = (0..6).map(|i| a[i] * a[i]).sum::<f64>().sqrt();
            let nb: f64 = (0..6).map(|i| b[i] * b[i]).sum::<f64>().sqrt();
            prop_assume!(na > 1e-9 && nb > 1e-9);
            prop_assert!((similarity(&a, &b, Similarity::Cosine) - dot / (na * nb)).abs() < 1e-12);
            let d: f64 = (0..6).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
            prop_assert!((similarity(&a, &b, Similarity::NegEuclidean) + d).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_identities() {
        let x = vec![0.3, -2.0, 1.5];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((similarity(&x, &x, Similarity::Cosine) - 1.0).abs() < 1e-12);
        assert!((similarity(&x, &neg, Similarity::Cosine) + 1.0).abs() < 1e-12);
        assert_eq!(similarity(&x, &[0.0; 3], Similarity::Cosine), 0.0);
    }

    #[test]
    fn means() {
        let e = vec![vec![1.0, -2.0], vec![-1.0, 2.0], vec![4.0, 4.0]];
        assert_eq!(session_mean(&[2], &e).unwrap(), vec![4.0, 4.0]);
        assert_eq!(session_mean(&[0, 1], &e).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(session_mean(&[], &e), Err(KastError::EmptySession)));
    }

    proptest! {
        #[test]
        fn mean_matches_compensated_sum(v in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 5)) {
            let m = session_mean(&[0, 1, 2, 3, 4], &v).unwrap();
            for d in 0..4 {
                // Kahan summation
                let (mut s, mut c) = (0.0f64, 0.0f64);
                for row in &v {
                    let y = row[d] - c;
                    let t = s + y;
                    c = (t - s) - y;
                    s = t;
                }
                prop_assert!((m[d] - s / 5.0).abs() < 1e-12);
            }
        }
    }
}
