//! Translational knowledge-graph scores and the margin loss over
//! user/item/attribute triples.

use std::fmt;
use std::str::FromStr;

use kast_autodiff::{uniform, Graph, ParamId, ParamStore, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Triple;
use crate::error::{KastError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KseVariant {
    #[default]
    TransE,
    TransH,
    TransD,
}

impl fmt::Display for KseVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TransE => "transE",
            Self::TransH => "transH",
            Self::TransD => "transD",
        })
    }
}

impl FromStr for KseVariant {
    type Err = KastError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(Self::TransE),
            "transh" => Ok(Self::TransH),
            "transd" => Ok(Self::TransD),
            _ => Err(KastError::Config(format!("unknown KSE variant `{s}`"))),
        }
    }
}

/// Orientation of the hinge term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KseSign {
    /// `[ξ + f(pos) − f(neg)]₊`: pushes positives below negatives.
    #[default]
    Conventional,
    /// `[ξ + f(neg) − f(pos)]₊`.
    Reversed,
}

impl FromStr for KseSign {
    type Err = KastError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" => Ok(Self::Conventional),
            "reversed" => Ok(Self::Reversed),
            _ => Err(KastError::Config(format!("unknown KSE sign `{s}`"))),
        }
    }
}

impl fmt::Display for KseSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Conventional => "conventional",
            Self::Reversed => "reversed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KseConfig {
    pub variant: KseVariant,
    pub margin: f64,
    pub negatives: usize,
    pub gamma: f64,
    pub sign: KseSign,
    /// Also corrupt heads (each negative picks head or tail with equal odds).
    pub corrupt_heads: bool,
    /// Positive triples sampled per optimizer step.
    pub batch_size: usize,
}

impl Default for KseConfig {
    fn default() -> Self {
        Self {
            variant: KseVariant::TransE,
            margin: 1.0,
            negatives: 5,
            gamma: 0.01,
            sign: KseSign::Conventional,
            corrupt_heads: false,
            batch_size: 256,
        }
    }
}

impl KseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negatives == 0 {
            return Err(KastError::Config("KSE negatives must be at least 1".into()));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(KastError::Config("KSE margin must be positive".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(KastError::Config("gamma must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(KastError::Config("KSE batch size must be at least 1".into()));
        }
        Ok(())
    }
}

fn sq_dist(a: impl Iterator<Item = f64>) -> f64 {
    a.map(|x| x * x).sum()
}

/// `‖h + r − t‖²`.
pub fn trans_e_score(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    sq_dist(h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Translation on the hyperplane with unit normal `w`.
pub fn trans_h_score(h: &[f64], r: &[f64], t: &[f64], w: &[f64]) -> Result<f64> {
    let n = dot(w, w).sqrt();
    if (n - 1.0).abs() > 1e-6 {
        return Err(KastError::InvalidData(format!(
            "hyperplane normal has norm {n}, expected 1"
        )));
    }
    let (wh, wt) = (dot(w, h), dot(w, t));
    Ok(sq_dist(
        (0..h.len()).map(|i| (h[i] - wh * w[i]) + r[i] - (t[i] - wt * w[i])),
    ))
}

/// Translation after the mapping `x ↦ r_p (x_pᵀ x) + x`.
pub fn trans_d_score(h: &[f64], r: &[f64], t: &[f64], hp: &[f64], rp: &[f64], tp: &[f64]) -> f64 {
    let (a, b) = (dot(hp, h), dot(tp, t));
    sq_dist((0..h.len()).map(|i| (rp[i] * a + h[i]) + r[i] - (rp[i] * b + t[i])))
}

/// Hinge loss summed over every (positive, negative) pair; `negatives` holds
/// `negatives.len() / positives.len()` consecutive scores per positive.
pub fn kse_loss(pos_scores: &[f64], neg_scores: &[f64], margin: f64, sign: KseSign) -> f64 {
    if pos_scores.is_empty() {
        return 0.0;
    }
    let n = neg_scores.len() / pos_scores.len();
    let mut total = 0.0;
    for (i, &p) in pos_scores.iter().enumerate() {
        for &q in &neg_scores[i * n..(i + 1) * n] {
            let x = match sign {
                KseSign::Conventional => margin + p - q,
                KseSign::Reversed => margin + q - p,
            };
            total += x.max(0.0);
        }
    }
    total
}

const MAX_RESAMPLE: usize = 32;

/// `n` corruptions per positive, grouped consecutively. Tails (or heads, when
/// enabled) are taken from other triples of the batch; a batch of one draws
/// from the whole entity range instead.
pub fn sample_negatives(
    batch: &[Triple],
    n: usize,
    n_entities: usize,
    corrupt_heads: bool,
    rng: &mut impl Rng,
) -> Vec<Triple> {
    let mut out = Vec::with_capacity(batch.len() * n);
    for (i, pos) in batch.iter().enumerate() {
        for _ in 0..n {
            let head_side = corrupt_heads && rng.gen_bool(0.5);
            let mut neg = None;
            if batch.len() > 1 {
                for _ in 0..MAX_RESAMPLE {
                    let mut j = rng.gen_range(0..batch.len() - 1);
                    if j >= i {
                        j += 1;
                    }
                    let cand = if head_side {
                        pos.with_head(batch[j].head)
                    } else {
                        pos.with_tail(batch[j].tail)
                    };
                    if (cand.head, cand.tail) != (pos.head, pos.tail) {
                        neg = Some(cand);
                        break;
                    }
                }
            }
            let neg = neg.unwrap_or_else(|| loop {
                let e = rng.gen_range(0..n_entities);
                let cand = if head_side { pos.with_head(e) } else { pos.with_tail(e) };
                if (cand.head, cand.tail) != (pos.head, pos.tail) || n_entities < 2 {
                    break cand;
                }
            });
            out.push(neg);
        }
    }
    out
}

/// Relation-side parameters, registered in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KseParams {
    pub variant: KseVariant,
    pub translation: usize,
    pub normal: Option<usize>,
    pub rel_proj: Option<usize>,
    pub ent_proj: Option<usize>,
}

pub const TRANSLATION: &str = "kse.translation";
pub const NORMAL: &str = "kse.normal";
pub const REL_PROJ: &str = "kse.rel_proj";
pub const ENT_PROJ: &str = "kse.ent_proj";

impl KseParams {
    pub fn init(
        store: &mut ParamStore,
        variant: KseVariant,
        n_relations: usize,
        n_entities: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 6.0 / (dim as f64).sqrt();
        let translation = store
            .insert(TRANSLATION, uniform(&[n_relations, dim], bound * 0.1, rng))
            .0;
        let mut p = Self {
            variant,
            translation,
            normal: None,
            rel_proj: None,
            ent_proj: None,
        };
        match variant {
            KseVariant::TransE => {}
            KseVariant::TransH => {
                let id = store.insert(NORMAL, uniform(&[n_relations, dim], 1.0, rng));
                renormalize_rows(store.get_mut(id));
                p.normal = Some(id.0);
            }
            KseVariant::TransD => {
                p.rel_proj = Some(store.insert(REL_PROJ, uniform(&[n_relations, dim], 0.05, rng)).0);
                p.ent_proj = Some(store.insert(ENT_PROJ, uniform(&[n_entities, dim], 0.05, rng)).0);
            }
        }
        p
    }

    /// Looks the parameters up by their registered names.
    pub fn from_store(store: &ParamStore, variant: KseVariant) -> Result<Self> {
        let opt = |name: &str| store.id(name).ok().map(|id| id.0);
        let p = Self {
            variant,
            translation: store.id(TRANSLATION)?.0,
            normal: opt(NORMAL),
            rel_proj: opt(REL_PROJ),
            ent_proj: opt(ENT_PROJ),
        };
        let missing = match variant {
            KseVariant::TransE => None,
            KseVariant::TransH => p.normal.is_none().then_some(NORMAL),
            KseVariant::TransD => (p.rel_proj.is_none() || p.ent_proj.is_none()).then_some(REL_PROJ),
        };
        match missing {
            Some(m) => Err(KastError::Tensor(kast_autodiff::TensorError::UnknownParam(m.into()))),
            None => Ok(p),
        }
    }

    /// Projects TransH normals back onto the unit sphere.
    pub fn post_step(&self, store: &mut ParamStore) {
        if let Some(id) = self.normal {
            renormalize_rows(store.get_mut(ParamId(id)));
        }
    }

    /// Scores `[T, 1]` for each triple, with entity rows from `entities`.
    pub fn score_graph(&self, g: &mut Graph, store: &ParamStore, entities: Var, triples: &[Triple]) -> Result<Var> {
        let heads: Vec<usize> = triples.iter().map(|t| t.head).collect();
        let tails: Vec<usize> = triples.iter().map(|t| t.tail).collect();
        let rels: Vec<usize> = triples.iter().map(|t| t.relation).collect();
        let rel_table = g.param(store, ParamId(self.translation));
        let mut h = g.gather(entities, &heads)?;
        let mut t = g.gather(entities, &tails)?;
        let r = g.gather(rel_table, &rels)?;
        match self.variant {
            KseVariant::TransE => {}
            KseVariant::TransH => {
                let wt = g.param(store, ParamId(self.normal.expect("TransH normal")));
                let w = g.gather(wt, &rels)?;
                for x in [&mut h, &mut t] {
                    let c = g.row_dot(w, *x)?;
                    let proj = g.mul(c, w)?;
                    *x = g.sub(*x, proj)?;
                }
            }
            KseVariant::TransD => {
                let rpt = g.param(store, ParamId(self.rel_proj.expect("TransD projection")));
                let ept = g.param(store, ParamId(self.ent_proj.expect("TransD projection")));
                let rp = g.gather(rpt, &rels)?;
                let hp = g.gather(ept, &heads)?;
                let tp = g.gather(ept, &tails)?;
                for (x, xp) in [(&mut h, hp), (&mut t, tp)] {
                    let c = g.row_dot(xp, *x)?;
                    let m = g.mul(c, rp)?;
                    *x = g.add(m, *x)?;
                }
            }
        }
        let hr = g.add(h, r)?;
        let d = g.sub(hr, t)?;
        Ok(g.row_sq_norm(d)?)
    }

    /// Summed hinge loss over `negatives.len() / positives.len()` negatives
    /// per positive.
    pub fn loss_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        entities: Var,
        positives: &[Triple],
        negatives: &[Triple],
        cfg: &KseConfig,
    ) -> Result<Var> {
        if positives.is_empty() {
            return Ok(g.scalar(0.0));
        }
        let n = negatives.len() / positives.len();
        let pos = self.score_graph(g, store, entities, positives)?;
        let neg = self.score_graph(g, store, entities, negatives)?;
        let expand: Vec<usize> = (0..positives.len()).flat_map(|i| std::iter::repeat_n(i, n)).collect();
        let pos = g.gather(pos, &expand)?;
        let diff = match cfg.sign {
            KseSign::Conventional => g.sub(pos, neg)?,
            KseSign::Reversed => g.sub(neg, pos)?,
        };
        let shifted = g.add_scalar(diff, cfg.margin);
        let h = g.hinge(shifted);
        Ok(g.sum_all(h))
    }

    /// Scores from current parameter values, without a graph.
    pub fn score(&self, store: &ParamStore, entities: &Tensor, t: &Triple) -> Result<f64> {
        let h = entities.row_slice(t.head);
        let tl = entities.row_slice(t.tail);
        let r = store.get(ParamId(self.translation)).row_slice(t.relation);
        Ok(match self.variant {
            KseVariant::TransE => trans_e_score(h, r, tl),
            KseVariant::TransH => {
                let w = store
                    .get(ParamId(self.normal.expect("TransH normal")))
                    .row_slice(t.relation);
                trans_h_score(h, r, tl, w)?
            }
            KseVariant::TransD => {
                let ep = store.get(ParamId(self.ent_proj.expect("TransD projection")));
                let rp = store
                    .get(ParamId(self.rel_proj.expect("TransD projection")))
                    .row_slice(t.relation);
                trans_d_score(h, r, tl, ep.row_slice(t.head), rp, ep.row_slice(t.tail))
            }
        })
    }
}

fn renormalize_rows(t: &mut Tensor) {
    for r in 0..t.rows() {
        let row = t.row_slice_mut(r);
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        } else if let Some(first) = row.first_mut() {
            *first = 1.0;
        }
    }
}
