use crate::error::{KastError, Result};

/// Integer pair counts behind the AUC: `2·wins + ties` over `2·P·N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub wins: u64,
    pub ties: u64,
    pub positives: u64,
    pub negatives: u64,
}

impl PairCounts {
    pub fn auc(&self) -> f64 {
        (2 * self.wins + self.ties) as f64 / (2 * self.positives * self.negatives) as f64
    }
}

/// Sort-based pair counting; labels are 0 or 1.
pub fn auc_counts(labels: &[f64], scores: &[f64]) -> Result<PairCounts> {
    if labels.len() != scores.len() {
        return Err(KastError::InvalidData("label and score counts differ".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(KastError::InvalidData("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut wins, mut ties, mut neg_below, mut pos_total) = (0u64, 0u64, 0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1.0 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        wins += p * neg_below;
        ties += p * n;
        neg_below += n;
        pos_total += p;
        i = j;
    }
    if pos_total == 0 || neg_below == 0 {
        return Err(KastError::InvalidData(
            "AUC needs both positive and negative labels".into(),
        ));
    }
    Ok(PairCounts {
        wins,
        ties,
        positives: pos_total,
        negatives: neg_below,
    })
}

/// Probability that a random positive outranks a random negative.
pub fn auc(labels: &[f64], scores: &[f64]) -> Result<f64> {
    auc_counts(labels, scores).map(|c| c.auc())
}

pub const CLAMP: f64 = 1e-12;

/// Mean binary cross-entropy and the number of scores clamped into
/// `[1e-12, 1 − 1e-12]`.
pub fn logloss(labels: &[f64], scores: &[f64]) -> Result<(f64, usize)> {
    if labels.len() != scores.len() || labels.is_empty() {
        return Err(KastError::InvalidData(
            "label and score counts differ or are empty".into(),
        ));
    }
    let mut clamps = 0;
    let mut total = 0.0;
    for (&y, &p) in labels.iter().zip(scores) {
        let q = p.clamp(CLAMP, 1.0 - CLAMP);
        if q != p {
            clamps += 1;
        }
        total -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
    }
    Ok((total / labels.len() as f64, clamps))
}
