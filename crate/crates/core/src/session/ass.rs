use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::{session_mean, similarity, SessionPartition, Similarity, VectorSource};
use crate::error::{KastError, Result};
use crate::exec::{map_indexed, Execution};

/// Which move wins when both fire for the same depth `k`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConflictRule {
    /// Larger `θ_target − θ_source`; ties go backward.
    #[default]
    Gain,
    Backward,
    Forward,
}

/// Condition for moving the k-th head item of the later session back to the
/// tail of the earlier one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForwardTest {
    /// Mirror of the backward test: the item is weakly attached to its own
    /// (later) session and closer to the earlier one.
    #[default]
    Mirrored,
    /// `θ(S̄_i, v) < α` and `θ(S̄_{i+1}, v) > θ(S̄_i, v)`: fires on items that
    /// already sit in the session they resemble most.
    Literal,
}

impl std::str::FromStr for ConflictRule {
    type Err = KastError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gain" => Ok(Self::Gain),
            "backward" => Ok(Self::Backward),
            "forward" => Ok(Self::Forward),
            _ => Err(KastError::Config(format!(
                "unknown conflict rule `{s}` (gain, backward, forward)"
            ))),
        }
    }
}

impl std::fmt::Display for ConflictRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gain => "gain",
            Self::Backward => "backward",
            Self::Forward => "forward",
        })
    }
}

impl std::str::FromStr for ForwardTest {
    type Err = KastError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mirrored" => Ok(Self::Mirrored),
            "literal" => Ok(Self::Literal),
            _ => Err(KastError::Config(format!(
                "unknown forward test `{s}` (mirrored, literal)"
            ))),
        }
    }
}

impl std::fmt::Display for ForwardTest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mirrored => "mirrored",
            Self::Literal => "literal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssConfig {
    pub alpha: f64,
    pub k_depth: usize,
    pub similarity: Similarity,
    pub gap_seconds: u64,
    pub conflict: ConflictRule,
    pub forward_test: ForwardTest,
}

impl Default for AssConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            k_depth: 5,
            similarity: Similarity::Cosine,
            gap_seconds: 1800,
            conflict: ConflictRule::Gain,
            forward_test: ForwardTest::Mirrored,
        }
    }
}

impl AssConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_depth == 0 {
            return Err(KastError::Config("k_depth must be at least 1".into()));
        }
        if self.gap_seconds == 0 {
            return Err(KastError::Config("gap_seconds must be positive".into()));
        }
        if !self.alpha.is_finite() {
            return Err(KastError::Config("alpha must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassStats {
    pub backward: usize,
    pub forward: usize,
    /// Depths where both moves fired and one was discarded.
    pub conflicts: usize,
    /// Sessions emptied by moves.
    pub dropped: usize,
}

impl PassStats {
    pub fn moves(&self) -> usize {
        self.backward + self.forward
    }
}

impl AddAssign for PassStats {
    fn add_assign(&mut self, o: Self) {
        self.backward += o.backward;
        self.forward += o.forward;
        self.conflicts += o.conflicts;
        self.dropped += o.dropped;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitOutput {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub stats: PassStats,
}

/// Refines the border between two adjacent sessions. Means and border items
/// are taken once on entry; depth is capped per side by session length.
pub fn ass_unit<S: VectorSource + ?Sized>(
    first: &[usize],
    second: &[usize],
    src: &S,
    cfg: &AssConfig,
) -> Result<UnitOutput> {
    let mut stats = PassStats::default();
    if first.is_empty() || second.is_empty() {
        return Ok(UnitOutput {
            first: first.to_vec(),
            second: second.to_vec(),
            stats,
        });
    }
    let mean_i = session_mean(first, src)?;
    let mean_j = session_mean(second, src)?;
    let kb = cfg.k_depth.min(first.len());
    let kf = cfg.k_depth.min(second.len());
    let sim = |m: &[f64], p: usize| similarity(m, src.vector(p), cfg.similarity);

    let mut back = vec![false; kb];
    let mut fwd = vec![false; kf];
    for k in 0..kb.max(kf) {
        let b = (k < kb).then(|| {
            let e = first[first.len() - 1 - k];
            let (own, other) = (sim(&mean_i, e), sim(&mean_j, e));
            (own < cfg.alpha && other > own, other - own)
        });
        let f = (k < kf).then(|| {
            let s = second[k];
            let (to_i, own) = (sim(&mean_i, s), sim(&mean_j, s));
            let fires = match cfg.forward_test {
                ForwardTest::Mirrored => own < cfg.alpha && to_i > own,
                ForwardTest::Literal => to_i < cfg.alpha && own > to_i,
            };
            (fires, to_i - own)
        });
        match (b, f) {
            (Some((true, gb)), Some((true, gf))) => {
                stats.conflicts += 1;
                let backward_wins = match cfg.conflict {
                    ConflictRule::Gain => gb >= gf,
                    ConflictRule::Backward => true,
                    ConflictRule::Forward => false,
                };
                if backward_wins {
                    back[k] = true;
                } else {
                    fwd[k] = true;
                }
            }
            _ => {
                if let Some((true, _)) = b {
                    back[k] = true;
                }
                if let Some((true, _)) = f {
                    fwd[k] = true;
                }
            }
        }
    }

    // Head insertions in increasing k land in chronological order, as do
    // tail appends.
    let cut_i = first.len() - kb;
    let mut out_i: Vec<usize> = first[..cut_i].to_vec();
    let mut moved_back = Vec::new();
    for (idx, &p) in first[cut_i..].iter().enumerate() {
        let k = kb - 1 - idx;
        if back[k] {
            moved_back.push(p);
        } else {
            out_i.push(p);
        }
    }
    let mut rest_j = Vec::with_capacity(second.len());
    for (k, &p) in second.iter().enumerate() {
        if k < kf && fwd[k] {
            out_i.push(p);
        } else {
            rest_j.push(p);
        }
    }
    stats.backward = moved_back.len();
    stats.forward = second.len() - rest_j.len();
    moved_back.extend(rest_j);
    Ok(UnitOutput {
        first: out_i,
        second: moved_back,
        stats,
    })
}

/// Left-to-right chain of units over adjacent pairs; sessions emptied along
/// the way are dropped at the end.
pub fn ass_pass<S: VectorSource + ?Sized>(
    partition: &SessionPartition,
    src: &S,
    cfg: &AssConfig,
) -> Result<(SessionPartition, PassStats)> {
    let mut stats = PassStats::default();
    let mut iter = partition.sessions.iter();
    let Some(head) = iter.next() else {
        return Ok((partition.clone(), stats));
    };
    let mut out = Vec::with_capacity(partition.n());
    let mut carry = head.clone();
    for next in iter {
        let u = ass_unit(&carry, next, src, cfg)?;
        stats += u.stats;
        out.push(u.first);
        carry = u.second;
    }
    out.push(carry);
    let before = out.len();
    out.retain(|s| !s.is_empty());
    stats.dropped = before - out.len();
    Ok((SessionPartition::new(out), stats))
}

/// One pass per partition; `source(u)` yields the vectors for partition `u`.
pub fn ass_pass_all<S, F>(
    partitions: &[SessionPartition],
    source: F,
    cfg: &AssConfig,
    exec: Execution,
) -> Result<(Vec<SessionPartition>, PassStats)>
where
    S: VectorSource,
    F: Fn(usize) -> S + Sync + Send,
{
    let results = map_indexed(partitions.len(), exec, |u| ass_pass(&partitions[u], &source(u), cfg));
    let mut stats = PassStats::default();
    let mut out = Vec::with_capacity(partitions.len());
    for r in results {
        let (p, s) = r?;
        stats += s;
        out.push(p);
    }
    Ok((out, stats))
}
