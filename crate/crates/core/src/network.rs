//! The session-topic CTR network and two sequence baselines.

use std::fmt;
use std::str::FromStr;

use kast_autodiff::{uniform, xavier_uniform, Axis, Graph, ParamId, ParamStore, Pool, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::EntitySpace;
use crate::error::{KastError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Session topics → GRU → target attention → MLP.
    #[default]
    Kast,
    /// Sum-pooled history → MLP.
    PooledMlp,
    /// Item-level GRU, last state → MLP.
    GruNet,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Kast => "kast",
            Self::PooledMlp => "pooled",
            Self::GruNet => "gru-net",
        })
    }
}

impl FromStr for ModelKind {
    type Err = KastError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kast" => Ok(Self::Kast),
            "pooled" => Ok(Self::PooledMlp),
            "gru-net" | "grunet" => Ok(Self::GruNet),
            _ => Err(KastError::Config(format!("unknown model `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub d_model: usize,
    /// Number of most recent sessions fed to the network.
    pub sn: usize,
    /// Longer sessions keep their most recent items.
    pub max_session_len: usize,
    /// GRU hidden size.
    pub hidden: usize,
    pub mlp: Vec<usize>,
    /// Item budget for the non-session baselines.
    pub max_history: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            d_model: 24,
            sn: 8,
            max_session_len: 50,
            hidden: 24,
            mlp: vec![200, 80],
            max_history: 100,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(KastError::Config(m.to_string()));
        if self.d_model == 0 || self.hidden == 0 {
            return bad("d_model and hidden must be positive");
        }
        if self.sn == 0 {
            return bad("sn must be at least 1");
        }
        if self.max_session_len == 0 || self.max_history == 0 {
            return bad("max_session_len and max_history must be positive");
        }
        if self.mlp.contains(&0) {
            return bad("mlp widths must be positive");
        }
        Ok(())
    }
}

/// One CTR example. `sessions` are item ids in chronological order, oldest
/// session first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub user: usize,
    pub target: usize,
    pub label: f64,
    pub sessions: Vec<Vec<usize>>,
}

pub const EMBEDDING: &str = "emb";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruIds {
    pub w: [ParamId; 3],
    pub u: [ParamId; 3],
    pub b: [ParamId; 3],
}

#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    w: [Var; 3],
    u: [Var; 3],
    b: [Var; 3],
}

impl GruIds {
    const GATES: [&'static str; 3] = ["z", "r", "n"];

    fn init(store: &mut ParamStore, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut ids = |k: &str, shape: (usize, usize), zero: bool, rng: &mut dyn FnMut(usize, usize) -> Tensor| {
            [0, 1, 2].map(|g| {
                let name = format!("gru.{k}{}", Self::GATES[g]);
                let t = if zero {
                    Tensor::zeros(&[shape.0, shape.1])
                } else {
                    rng(shape.0, shape.1)
                };
                store.insert(name, t)
            })
        };
        let mut xav = |r: usize, c: usize| xavier_uniform(r, c, rng);
        let w = ids("w", (input, hidden), false, &mut xav);
        let u = ids("u", (hidden, hidden), false, &mut xav);
        let b = ids("b", (1, hidden), true, &mut xav);
        Self { w, u, b }
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let get = |k: &str| -> Result<[ParamId; 3]> {
            let v: Vec<ParamId> = Self::GATES
                .iter()
                .map(|g| store.id(&format!("gru.{k}{g}")))
                .collect::<std::result::Result<_, _>>()?;
            Ok([v[0], v[1], v[2]])
        };
        Ok(Self {
            w: get("w")?,
            u: get("u")?,
            b: get("b")?,
        })
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> GruVars {
        GruVars {
            w: self.w.map(|id| g.param(store, id)),
            u: self.u.map(|id| g.param(store, id)),
            b: self.b.map(|id| g.param(store, id)),
        }
    }
}

/// `h' = (1 − z)⊙h + z⊙n` with update gate `z`, reset gate `r` and candidate
/// `n = tanh(x W_n + (r⊙h) U_n + b_n)`.
pub fn gru_step(g: &mut Graph, p: &GruVars, x: Var, h: Var) -> Result<Var> {
    let gate = |g: &mut Graph, k: usize, hh: Var| -> Result<Var> {
        let a = g.matmul(x, p.w[k])?;
        let b = g.matmul(hh, p.u[k])?;
        let s = g.add(a, b)?;
        g.add(s, p.b[k]).map_err(Into::into)
    };
    let z = gate(g, 0, h)?;
    let z = g.sigmoid(z);
    let r = gate(g, 1, h)?;
    let r = g.sigmoid(r);
    let rh = g.mul(r, h)?;
    let n = gate(g, 2, rh)?;
    let n = g.tanh(n);
    let d = g.sub(n, h)?;
    let zd = g.mul(z, d)?;
    Ok(g.add(h, zd)?)
}

/// Runs the recurrence over `xs` (each `[B, input]`) from `h0`. `masks[s][b]`
/// false keeps row `b`'s previous state at step `s`.
pub fn gru_sequence(g: &mut Graph, p: &GruVars, xs: &[Var], masks: &[Vec<bool>], h0: Var) -> Result<Vec<Var>> {
    let mut h = h0;
    let mut out = Vec::with_capacity(xs.len());
    for (x, m) in xs.iter().zip(masks) {
        if m.iter().any(|&v| v) {
            let hn = gru_step(g, p, *x, h)?;
            h = if m.iter().all(|&v| v) {
                hn
            } else {
                let mv = g.constant(Tensor::column(
                    &m.iter().map(|&v| f64::from(u8::from(v))).collect::<Vec<_>>(),
                ));
                let d = g.sub(hn, h)?;
                let md = g.mul(mv, d)?;
                g.add(h, md)?
            };
        }
        out.push(h);
    }
    Ok(out)
}

/// Target-aware attention: logits `I W hᵢ`, masked softmax over steps,
/// output `Σ aᵢ hᵢ`. Returns `(weights [B, S], pooled [B, H])`; rows with
/// every step masked get zero weights and a zero output.
pub fn attention(g: &mut Graph, target: Var, hiddens: &[Var], mask: Vec<bool>, w_att: Var) -> Result<(Var, Var)> {
    let iw = g.matmul(target, w_att)?;
    let logits: Vec<Var> = hiddens
        .iter()
        .map(|&h| g.row_dot(iw, h))
        .collect::<std::result::Result<_, _>>()?;
    let l = g.concat(&logits, Axis::Cols)?;
    let a = g.masked_softmax(l, mask)?;
    let mut acc: Option<Var> = None;
    for (s, &h) in hiddens.iter().enumerate() {
        let col = g.slice(a, Axis::Cols, s, s + 1)?;
        let t = g.mul(col, h)?;
        acc = Some(match acc {
            None => t,
            Some(prev) => g.add(prev, t)?,
        });
    }
    Ok((a, acc.expect("at least one step")))
}

/// Sessions after truncation, left-padded to `sn` slots; `None` marks padding.
pub fn session_slots<'a>(sessions: &'a [Vec<usize>], cfg: &NetworkConfig) -> Vec<Option<&'a [usize]>> {
    let recent: Vec<&[usize]> = sessions
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| &s[s.len().saturating_sub(cfg.max_session_len)..])
        .collect();
    let recent = &recent[recent.len().saturating_sub(cfg.sn)..];
    let mut slots = vec![None; cfg.sn - recent.len()];
    slots.extend(recent.iter().map(|s| Some(*s)));
    slots
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    pub kind: ModelKind,
    pub cfg: NetworkConfig,
    pub space: EntitySpace,
    pub emb: ParamId,
    gru: Option<GruIds>,
    att: Option<ParamId>,
    mlp: Vec<(ParamId, ParamId)>,
}

impl Model {
    pub fn init(
        kind: ModelKind,
        cfg: NetworkConfig,
        space: EntitySpace,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let emb = store.insert(EMBEDDING, uniform(&[space.len(), d], 0.05, rng));
        let (gru, att) = match kind {
            ModelKind::Kast => (
                Some(GruIds::init(store, d, cfg.hidden, rng)),
                Some(store.insert("att.w", xavier_uniform(d, cfg.hidden, rng))),
            ),
            ModelKind::GruNet => (Some(GruIds::init(store, d, cfg.hidden, rng)), None),
            ModelKind::PooledMlp => (None, None),
        };
        let mut widths = vec![Self::mlp_input(kind, &cfg)];
        widths.extend(&cfg.mlp);
        widths.push(1);
        let mlp = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                (
                    store.insert(format!("mlp.w{l}"), xavier_uniform(w[0], w[1], rng)),
                    store.insert(format!("mlp.b{l}"), Tensor::zeros(&[1, w[1]])),
                )
            })
            .collect();
        Ok(Self {
            kind,
            cfg,
            space,
            emb,
            gru,
            att,
            mlp,
        })
    }

    /// Rebinds a model to parameters loaded from a checkpoint.
    pub fn from_store(kind: ModelKind, cfg: NetworkConfig, space: EntitySpace, store: &ParamStore) -> Result<Self> {
        cfg.validate()?;
        let emb = store.id(EMBEDDING)?;
        if store.get(emb).shape() != [space.len(), cfg.d_model] {
            return Err(KastError::Config(format!(
                "checkpoint embedding shape {:?} does not match {} entities × d_model {}",
                store.get(emb).shape(),
                space.len(),
                cfg.d_model
            )));
        }
        let (gru, att) = match kind {
            ModelKind::Kast => (Some(GruIds::from_store(store)?), Some(store.id("att.w")?)),
            ModelKind::GruNet => (Some(GruIds::from_store(store)?), None),
            ModelKind::PooledMlp => (None, None),
        };
        let layers = cfg.mlp.len() + 1;
        let mlp = (0..layers)
            .map(|l| Ok((store.id(&format!("mlp.w{l}"))?, store.id(&format!("mlp.b{l}"))?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            kind,
            cfg,
            space,
            emb,
            gru,
            att,
            mlp,
        })
    }

    fn mlp_input(kind: ModelKind, cfg: &NetworkConfig) -> usize {
        match kind {
            ModelKind::Kast | ModelKind::GruNet => cfg.hidden + 2 * cfg.d_model,
            ModelKind::PooledMlp => 3 * cfg.d_model,
        }
    }

    pub fn gru_ids(&self) -> Option<GruIds> {
        self.gru
    }

    pub fn attention_id(&self) -> Option<ParamId> {
        self.att
    }

    pub fn mlp_ids(&self) -> &[(ParamId, ParamId)] {
        &self.mlp
    }

    fn item_row(&self, item: usize) -> Result<usize> {
        self.space.item(item)
    }

    /// Logits `[B, 1]` with the embedding table bound to `emb`.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, emb: Var, batch: &[Sample]) -> Result<Var> {
        if batch.is_empty() {
            return Err(KastError::InvalidData("empty batch".into()));
        }
        let users: Vec<usize> = batch.iter().map(|s| self.space.user(s.user)).collect::<Result<_>>()?;
        let targets: Vec<usize> = batch.iter().map(|s| self.item_row(s.target)).collect::<Result<_>>()?;
        let user_e = g.gather(emb, &users)?;
        let target_e = g.gather(emb, &targets)?;
        let summary = match self.kind {
            ModelKind::Kast => self.session_summary(g, store, emb, target_e, batch)?,
            ModelKind::PooledMlp => {
                let groups = batch
                    .iter()
                    .map(|s| self.flat_history(s).iter().map(|&i| self.item_row(i)).collect())
                    .collect::<Result<Vec<Vec<usize>>>>()?;
                g.gather_pool(emb, groups, Pool::Sum)?
            }
            ModelKind::GruNet => self.item_gru(g, store, emb, batch)?,
        };
        let x = g.concat(&[summary, target_e, user_e], Axis::Cols)?;
        self.mlp_forward(g, store, x)
    }

    fn flat_history(&self, s: &Sample) -> Vec<usize> {
        let all: Vec<usize> = s.sessions.iter().flatten().copied().collect();
        all[all.len().saturating_sub(self.cfg.max_history)..].to_vec()
    }

    fn session_summary(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        emb: Var,
        target_e: Var,
        batch: &[Sample],
    ) -> Result<Var> {
        let (b, sn) = (batch.len(), self.cfg.sn);
        let slots: Vec<Vec<Option<&[usize]>>> = batch.iter().map(|s| session_slots(&s.sessions, &self.cfg)).collect();
        let mut groups = Vec::with_capacity(sn * b);
        let mut masks = vec![vec![false; b]; sn];
        for (s, mask) in masks.iter_mut().enumerate() {
            for (r, sl) in slots.iter().enumerate() {
                match sl[s] {
                    Some(items) => {
                        groups.push(items.iter().map(|&i| self.item_row(i)).collect::<Result<Vec<_>>>()?);
                        mask[r] = true;
                    }
                    None => groups.push(Vec::new()),
                }
            }
        }
        let topics = g.gather_pool(emb, groups, Pool::Mean)?;
        let xs: Vec<Var> = (0..sn)
            .map(|s| g.slice(topics, Axis::Rows, s * b, (s + 1) * b))
            .collect::<std::result::Result<_, _>>()?;
        let gru = self.gru.expect("kast model has a GRU").bind(g, store);
        let h0 = g.constant(Tensor::zeros(&[b, self.cfg.hidden]));
        let hs = gru_sequence(g, &gru, &xs, &masks, h0)?;
        let att_mask: Vec<bool> = (0..b)
            .flat_map(|r| (0..sn).map(move |s| (r, s)))
            .map(|(r, s)| masks[s][r])
            .collect();
        let w = g.param(store, self.att.expect("kast model has attention"));
        let (_, pooled) = attention(g, target_e, &hs, att_mask, w)?;
        Ok(pooled)
    }

    fn item_gru(&self, g: &mut Graph, store: &ParamStore, emb: Var, batch: &[Sample]) -> Result<Var> {
        let b = batch.len();
        let hists: Vec<Vec<usize>> = batch.iter().map(|s| self.flat_history(s)).collect();
        let steps = hists.iter().map(Vec::len).max().unwrap_or(0);
        let h0 = g.constant(Tensor::zeros(&[b, self.cfg.hidden]));
        if steps == 0 {
            return Ok(h0);
        }
        let mut xs = Vec::with_capacity(steps);
        let mut masks = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut rows = Vec::with_capacity(b);
            let mut m = Vec::with_capacity(b);
            for h in &hists {
                let pad = steps - h.len();
                if t >= pad {
                    rows.push(vec![self.item_row(h[t - pad])?]);
                    m.push(true);
                } else {
                    rows.push(Vec::new());
                    m.push(false);
                }
            }
            xs.push(g.gather_pool(emb, rows, Pool::Sum)?);
            masks.push(m);
        }
        let gru = self.gru.expect("gru-net has a GRU").bind(g, store);
        let hs = gru_sequence(g, &gru, &xs, &masks, h0)?;
        Ok(*hs.last().expect("non-empty"))
    }

    /// Relu hidden layers, linear output logit.
    pub fn mlp_forward(&self, g: &mut Graph, store: &ParamStore, mut x: Var) -> Result<Var> {
        let last = self.mlp.len() - 1;
        for (l, &(w, b)) in self.mlp.iter().enumerate() {
            let wv = g.param(store, w);
            let bv = g.param(store, b);
            let y = g.matmul(x, wv)?;
            x = g.add(y, bv)?;
            if l < last {
                x = g.relu(x);
            }
        }
        Ok(x)
    }

    /// pCTR for each sample.
    pub fn predict(&self, store: &ParamStore, batch: &[Sample]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let emb = g.param(store, self.emb);
        let z = self.logits(&mut g, store, emb, batch)?;
        let p = g.sigmoid(z);
        Ok(g.value(p).data().to_vec())
    }
}

/// Mean-pooled topic per slot and its mask, padded on the left to `sn`.
pub fn distill_topics(
    sessions: &[Vec<usize>],
    emb: &Tensor,
    space: &EntitySpace,
    cfg: &NetworkConfig,
) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    let slots = session_slots(sessions, cfg);
    let groups = slots
        .iter()
        .map(|s| {
            s.map_or(Ok(Vec::new()), |items| {
                items.iter().map(|&i| space.item(i)).collect::<Result<Vec<_>>>()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut g = Graph::new();
    let e = g.constant(emb.clone());
    let t = g.gather_pool(e, groups, Pool::Mean)?;
    let v = g.value(t);
    Ok((
        (0..slots.len()).map(|r| v.row_slice(r).to_vec()).collect(),
        slots.iter().map(Option::is_some).collect(),
    ))
}

/// Hidden states for one topic sequence.
pub fn gru_forward(topics: &[Vec<f64>], mask: &[bool], store: &ParamStore, ids: &GruIds) -> Result<Vec<Vec<f64>>> {
    let hidden = store.get(ids.u[0]).rows();
    let mut g = Graph::new();
    let p = ids.bind(&mut g, store);
    let xs: Vec<Var> = topics.iter().map(|t| g.constant(Tensor::row(t))).collect();
    let masks: Vec<Vec<bool>> = mask.iter().map(|&m| vec![m]).collect();
    let h0 = g.constant(Tensor::zeros(&[1, hidden]));
    let hs = gru_sequence(&mut g, &p, &xs, &masks, h0)?;
    Ok(hs.iter().map(|&h| g.value(h).data().to_vec()).collect())
}

/// Attention weights and pooled vector for one target.
pub fn attention_pool(
    target: &[f64],
    hiddens: &[Vec<f64>],
    mask: &[bool],
    w_att: &Tensor,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut g = Graph::new();
    let t = g.constant(Tensor::row(target));
    let hs: Vec<Var> = hiddens.iter().map(|h| g.constant(Tensor::row(h))).collect();
    let w = g.constant(w_att.clone());
    let (a, u) = attention(&mut g, t, &hs, mask.to_vec(), w)?;
    Ok((g.value(a).data().to_vec(), g.value(u).data().to_vec()))
}

/// `mean BCE(p, y) + γ · kse`.
pub fn global_loss(p: &[f64], labels: &[f64], kse: f64, gamma: f64) -> Result<f64> {
    if p.len() != labels.len() || p.is_empty() {
        return Err(KastError::InvalidData("prediction and label counts differ".into()));
    }
    let mut total = 0.0;
    for (&p, &y) in p.iter().zip(labels) {
        if y != 0.0 && y != 1.0 {
            return Err(KastError::InvalidData(format!("label {y} is not 0 or 1")));
        }
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(total / p.len() as f64 + gamma * kse)
}
