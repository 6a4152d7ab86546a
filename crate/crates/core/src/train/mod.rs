//! Joint training with between-epoch session refinement, evaluation metrics
//! and ablation grids.

mod ablation;
mod metrics;

use std::time::Instant;

use kast_autodiff::{AdamConfig, AdamState, Graph, ParamStore, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{build_triples, BehaviorSequence, EntitySpace, RelationSchema, Triple, Vocab};
use crate::error::{KastError, Result};
use crate::exec::{map_indexed, Execution};
use crate::kse::{sample_negatives, KseConfig, KseParams};
use crate::network::{Model, ModelKind, NetworkConfig, Sample};
use crate::session::{ass_pass_all, initial_segment, AssConfig, PassStats, SessionPartition, TableRows};

pub use ablation::{run_ablation, AblationRow, AblationSuite, AblationSummary, AblationTable};
pub use metrics::{auc, auc_counts, logloss, PairCounts, CLAMP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Epochs before the first segmentation refinement.
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub model: ModelKind,
    pub ass_on: bool,
    pub kse_on: bool,
    pub ass: AssConfig,
    pub kse: KseConfig,
    pub network: NetworkConfig,
    pub relations: RelationSchema,
    /// Keep only each user's most recent training targets.
    pub max_targets_per_user: Option<usize>,
    /// Which earlier behaviour a training target may see.
    pub history: HistoryScope,
    /// Fixed sampled negatives per test positive (implicit data only).
    pub test_negatives: usize,
    /// Use logged labels as-is instead of sampling negatives.
    pub explicit_labels: bool,
    /// Stop after this many epochs without a test AUC improvement.
    pub patience: Option<usize>,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            warmup_epochs: 1,
            batch_size: 128,
            lr: 1e-3,
            seed: 0,
            model: ModelKind::Kast,
            ass_on: true,
            kse_on: true,
            ass: AssConfig::default(),
            kse: KseConfig::default(),
            network: NetworkConfig::default(),
            relations: "clicks,category,brand".parse().expect("static schema"),
            max_targets_per_user: None,
            history: HistoryScope::BeforeSession,
            test_negatives: 1,
            explicit_labels: false,
            patience: None,
            execution: Execution::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs > 0 && self.warmup_epochs >= self.epochs {
            return Err(KastError::Config(format!(
                "warmup_epochs ({}) must be below epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(KastError::Config("batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(KastError::Config("learning rate must be positive".into()));
        }
        self.ass.validate()?;
        self.kse.validate()?;
        self.network.validate()
    }

    fn kse_active(&self) -> bool {
        self.kse_on && self.kse.gamma > 0.0
    }
}

/// Training-target history cut.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum HistoryScope {
    /// Every earlier event.
    BeforeEvent,
    /// Events before the target's own time-gap session, the view a test
    /// event after the cutoff has.
    #[default]
    BeforeSession,
}

impl std::str::FromStr for HistoryScope {
    type Err = KastError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "event" => Ok(Self::BeforeEvent),
            "session" => Ok(Self::BeforeSession),
            _ => Err(KastError::Config(format!(
                "unknown history scope `{s}` (expected event or session)"
            ))),
        }
    }
}

impl std::fmt::Display for HistoryScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::BeforeEvent => "event",
            Self::BeforeSession => "session",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_ctr_loss: f64,
    pub test_auc: Option<f64>,
    pub test_logloss: Option<f64>,
    pub logloss_clamps: usize,
    /// Refinement after this epoch, if one ran.
    pub ass: Option<PassStats>,
}

/// Deterministic per-epoch metrics; wall-clock lives in [`Timings`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub epochs: Vec<EpochMetrics>,
}

impl MetricsReport {
    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    pub fn final_auc(&self) -> Option<f64> {
        self.last().and_then(|e| e.test_auc)
    }

    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "epoch",
            "train_loss",
            "train_ctr_loss",
            "test_auc",
            "test_logloss",
            "logloss_clamps",
            "ass_backward",
            "ass_forward",
            "ass_conflicts",
            "ass_dropped",
        ])?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.10}"));
        for e in &self.epochs {
            let a = e.ass.unwrap_or_default();
            let ran = e.ass.is_some();
            let cnt = |v: usize| if ran { v.to_string() } else { String::new() };
            w.write_record([
                e.epoch.to_string(),
                format!("{:.10}", e.train_loss),
                format!("{:.10}", e.train_ctr_loss),
                opt(e.test_auc),
                opt(e.test_logloss),
                e.logloss_clamps.to_string(),
                cnt(a.backward),
                cnt(a.forward),
                cnt(a.conflicts),
                cnt(a.dropped),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub epoch_seconds: Vec<f64>,
    pub ass_seconds: Vec<f64>,
}

#[derive(Debug, Clone)]
struct UserData {
    user_id: usize,
    items: Vec<usize>,
    rows: Vec<usize>,
    /// Sorted ids of every item the user touched, train or test.
    touched: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Target {
    user: usize,
    pos: usize,
    /// History is positions `< hist_end`.
    hist_end: usize,
    label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub user: usize,
    pub item: usize,
    pub label: f64,
    pub p_ctr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// `None` when the test labels are single-class.
    pub auc: Option<f64>,
    pub logloss: f64,
    pub clamps: usize,
    pub predictions: Vec<Prediction>,
}

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_NEGATIVES: u64 = 2;
const STREAM_KSE: u64 = 3;
const STREAM_TEST: u64 = 4;
const STREAM_KSE_INIT: u64 = 5;

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(s);
    r
}

/// Stateful trainer; [`train`] wraps it for one-shot use.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub space: EntitySpace,
    pub model: Model,
    pub store: ParamStore,
    adam: AdamState,
    kse: Option<(KseParams, Vec<Triple>)>,
    users: Vec<UserData>,
    partitions: Vec<SessionPartition>,
    targets: Vec<Target>,
    test: Vec<(usize, usize, f64)>,
    rng_shuffle: ChaCha8Rng,
    rng_neg: ChaCha8Rng,
    rng_kse: ChaCha8Rng,
    report: MetricsReport,
    timings: Timings,
    epoch: usize,
    best_auc: Option<(f64, usize)>,
}

impl Trainer {
    pub fn new(train: &[BehaviorSequence], test: &[BehaviorSequence], cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if train.iter().all(BehaviorSequence::is_empty) {
            return Err(KastError::InvalidData("training data is empty".into()));
        }
        let vocab = Vocab::from_sequences(train).merge(&Vocab::from_sequences(test));
        let space = EntitySpace::new(&vocab);

        let mut init = stream(cfg.seed, STREAM_INIT);
        let mut store = ParamStore::new();
        let model = Model::init(cfg.model, cfg.network.clone(), space.clone(), &mut store, &mut init)?;
        let kse = if cfg.kse_active() {
            let triples = build_triples(train, &cfg.relations, &space)?;
            if triples.skipped > 0 {
                log::warn!("{} triples skipped for missing attributes", triples.skipped);
            }
            let mut ki = stream(cfg.seed, STREAM_KSE_INIT);
            let p = KseParams::init(
                &mut store,
                cfg.kse.variant,
                cfg.relations.len(),
                space.len(),
                cfg.network.d_model,
                &mut ki,
            );
            (!triples.triples.is_empty()).then_some((p, triples.triples))
        } else {
            None
        };

        let mut by_user: std::collections::BTreeMap<usize, (Option<&BehaviorSequence>, Option<&BehaviorSequence>)> =
            Default::default();
        for s in train {
            by_user.entry(s.user_id).or_default().0 = Some(s);
        }
        for s in test {
            by_user.entry(s.user_id).or_default().1 = Some(s);
        }
        let mut users = Vec::new();
        let mut partitions = Vec::new();
        let mut targets = Vec::new();
        let mut test_samples = Vec::new();
        let mut rng_test = stream(cfg.seed, STREAM_TEST);
        for (&uid, &(tr, te)) in &by_user {
            let u = users.len();
            let empty = BehaviorSequence {
                user_id: uid,
                events: Vec::new(),
            };
            let tr = tr.unwrap_or(&empty);
            let items: Vec<usize> = tr.events.iter().map(|e| e.item_id).collect();
            let rows = items.iter().map(|&i| space.item(i)).collect::<Result<Vec<_>>>()?;
            let mut touched: Vec<usize> = items.clone();
            touched.extend(te.iter().flat_map(|s| s.events.iter().map(|e| e.item_id)));
            touched.sort_unstable();
            touched.dedup();
            let initial = initial_segment(tr, cfg.ass.gap_seconds);
            let mut session_start = vec![0; tr.len()];
            for s in &initial.sessions {
                for &p in s {
                    session_start[p] = s[0];
                }
            }
            partitions.push(initial);

            let mut user_targets: Vec<Target> = (1..tr.len())
                .map(|pos| Target {
                    user: u,
                    pos,
                    hist_end: match cfg.history {
                        HistoryScope::BeforeEvent => pos,
                        HistoryScope::BeforeSession => session_start[pos],
                    },
                    label: f64::from(tr.events[pos].label),
                })
                .filter(|t| t.hist_end > 0 && (cfg.explicit_labels || t.label == 1.0))
                .collect();
            if let Some(m) = cfg.max_targets_per_user {
                let cut = user_targets.len().saturating_sub(m);
                user_targets.drain(..cut);
            }
            targets.extend(user_targets);

            let user = UserData {
                user_id: uid,
                items,
                rows,
                touched,
            };
            if let Some(te) = te {
                for e in &te.events {
                    if cfg.explicit_labels {
                        test_samples.push((u, e.item_id, f64::from(e.label)));
                    } else if e.label == 1 {
                        test_samples.push((u, e.item_id, 1.0));
                        for _ in 0..cfg.test_negatives {
                            let n = sample_untouched(&user.touched, space.n_items, &mut rng_test);
                            test_samples.push((u, n, 0.0));
                        }
                    }
                }
            }
            users.push(user);
        }

        let adam = AdamState::new(
            AdamConfig {
                lr: cfg.lr,
                ..AdamConfig::default()
            },
            &store,
        );
        Ok(Self {
            rng_shuffle: stream(cfg.seed, STREAM_SHUFFLE),
            rng_neg: stream(cfg.seed, STREAM_NEGATIVES),
            rng_kse: stream(cfg.seed, STREAM_KSE),
            cfg,
            space,
            model,
            store,
            adam,
            kse,
            users,
            partitions,
            targets,
            test: test_samples,
            report: MetricsReport::default(),
            timings: Timings::default(),
            epoch: 0,
            best_auc: None,
        })
    }

    pub fn report(&self) -> &MetricsReport {
        &self.report
    }

    pub fn timings(&self) -> &Timings {
        &self.timings
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Current partitions, keyed by user id.
    pub fn partitions(&self) -> impl Iterator<Item = (usize, &SessionPartition)> {
        self.users.iter().map(|u| u.user_id).zip(&self.partitions)
    }

    pub fn num_train_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn num_test_samples(&self) -> usize {
        self.test.len()
    }

    pub fn triples(&self) -> Option<&[Triple]> {
        self.kse.as_ref().map(|(_, t)| t.as_slice())
    }

    fn history(&self, u: usize, end: Option<usize>) -> Vec<Vec<usize>> {
        let items = &self.users[u].items;
        let part = &self.partitions[u];
        part.sessions
            .iter()
            .map(|s| {
                s.iter()
                    .filter(|&&p| end.is_none_or(|e| p < e))
                    .map(|&p| items[p])
                    .collect::<Vec<_>>()
            })
            .filter(|s| !s.is_empty())
            .collect()
    }

    fn is_finished(&self) -> bool {
        if self.epoch >= self.cfg.epochs {
            return true;
        }
        match (self.cfg.patience, self.best_auc) {
            (Some(p), Some((_, at))) => self.epoch >= at + 1 + p,
            _ => false,
        }
    }

    /// One epoch of mini-batch Adam, then (when scheduled) a refinement pass
    /// and a test evaluation. Returns `Ok(false)` once training is over.
    pub fn run_epoch(&mut self) -> Result<bool> {
        if self.is_finished() {
            return Ok(false);
        }
        let start = Instant::now();
        let e = self.epoch;
        let mut epoch_samples: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(self.targets.len() * 2);
        for t in &self.targets {
            let u = &self.users[t.user];
            epoch_samples.push((t.user, t.hist_end, u.items[t.pos], t.label));
            if !self.cfg.explicit_labels {
                let n = sample_untouched(&u.touched, self.space.n_items, &mut self.rng_neg);
                epoch_samples.push((t.user, t.hist_end, n, 0.0));
            }
        }
        epoch_samples.shuffle(&mut self.rng_shuffle);

        let (mut loss_sum, mut ctr_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in epoch_samples.chunks(self.cfg.batch_size) {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&(u, pos, item, label)| Sample {
                    user: self.users[u].user_id,
                    target: item,
                    label,
                    sessions: self.history(u, Some(pos)),
                })
                .collect();
            let sampled = match &self.kse {
                Some((_, triples)) => {
                    let pos: Vec<Triple> = (0..self.cfg.kse.batch_size)
                        .map(|_| triples[self.rng_kse.gen_range(0..triples.len())])
                        .collect();
                    let neg = sample_negatives(
                        &pos,
                        self.cfg.kse.negatives,
                        self.space.len(),
                        self.cfg.kse.corrupt_heads,
                        &mut self.rng_kse,
                    );
                    Some((pos, neg))
                }
                None => None,
            };
            let kse_batch = match (&self.kse, &sampled) {
                (Some((params, _)), Some((pos, neg))) => Some(KseBatch {
                    params,
                    pos,
                    neg,
                    cfg: &self.cfg.kse,
                }),
                _ => None,
            };
            let mut g = Graph::new();
            let (total, ctr) = joint_loss(&mut g, &self.model, &self.store, &batch, kse_batch)?;
            let lv = g.value(total).item();
            g.backward(total)?;
            let grads = g.param_gradients();
            if !lv.is_finite() || grads.iter().any(|(_, t)| !t.all_finite()) {
                self.report.epochs.push(EpochMetrics {
                    epoch: e,
                    train_loss: lv,
                    train_ctr_loss: g.value(ctr).item(),
                    test_auc: None,
                    test_logloss: None,
                    logloss_clamps: 0,
                    ass: None,
                });
                return Err(KastError::Diverged { epoch: e });
            }
            loss_sum += lv;
            ctr_sum += g.value(ctr).item();
            batches += 1;
            self.adam.step(&mut self.store, &grads)?;
            if let Some((kp, _)) = &self.kse {
                kp.post_step(&mut self.store);
            }
        }

        let mut ass = None;
        let mut ass_secs = 0.0;
        if self.cfg.ass_on && e + 1 >= self.cfg.warmup_epochs && e + 1 < self.cfg.epochs {
            let t0 = Instant::now();
            ass = Some(self.refine_sessions()?);
            ass_secs = t0.elapsed().as_secs_f64();
        }

        let (test_auc, test_logloss, clamps) = match self.evaluate()? {
            Some(ev) => (ev.auc, Some(ev.logloss), ev.clamps),
            None => (None, None, 0),
        };
        let n = batches.max(1) as f64;
        self.report.epochs.push(EpochMetrics {
            epoch: e,
            train_loss: loss_sum / n,
            train_ctr_loss: ctr_sum / n,
            test_auc,
            test_logloss,
            logloss_clamps: clamps,
            ass,
        });
        self.timings.epoch_seconds.push(start.elapsed().as_secs_f64());
        self.timings.ass_seconds.push(ass_secs);
        if let Some(a) = test_auc {
            if self.best_auc.is_none_or(|(b, _)| a > b) {
                self.best_auc = Some((a, e));
            }
        }
        self.epoch += 1;
        Ok(!self.is_finished())
    }

    /// One pass per user against a frozen copy of the embedding table.
    pub fn refine_sessions(&mut self) -> Result<PassStats> {
        let snapshot = self.store.get(self.model.emb).clone();
        let users = &self.users;
        let (parts, stats) = ass_pass_all(
            &self.partitions,
            |u| TableRows {
                table: &snapshot,
                rows: &users[u].rows,
            },
            &self.cfg.ass,
            self.cfg.execution,
        )?;
        self.partitions = parts;
        Ok(stats)
    }

    /// Scores for every test sample with the full training history.
    pub fn predict_test(&self) -> Result<Vec<Prediction>> {
        let chunks: Vec<&[(usize, usize, f64)]> = self.test.chunks(self.cfg.batch_size.max(256)).collect();
        let out = map_indexed(chunks.len(), self.cfg.execution, |c| -> Result<Vec<Prediction>> {
            let batch: Vec<Sample> = chunks[c]
                .iter()
                .map(|&(u, item, label)| Sample {
                    user: self.users[u].user_id,
                    target: item,
                    label,
                    sessions: self.history(u, None),
                })
                .collect();
            let p = self.model.predict(&self.store, &batch)?;
            Ok(batch
                .iter()
                .zip(p)
                .map(|(s, p_ctr)| Prediction {
                    user: s.user,
                    item: s.target,
                    label: s.label,
                    p_ctr,
                })
                .collect())
        });
        let mut preds = Vec::with_capacity(self.test.len());
        for r in out {
            preds.extend(r?);
        }
        Ok(preds)
    }

    /// Test metrics under the current parameters and partitions; `None`
    /// without test samples.
    pub fn evaluate(&self) -> Result<Option<Evaluation>> {
        if self.test.is_empty() {
            return Ok(None);
        }
        let predictions = self.predict_test()?;
        let labels: Vec<f64> = predictions.iter().map(|p| p.label).collect();
        let scores: Vec<f64> = predictions.iter().map(|p| p.p_ctr).collect();
        let auc = auc(&labels, &scores).ok();
        let (logloss, clamps) = logloss(&labels, &scores)?;
        Ok(Some(Evaluation {
            auc,
            logloss,
            clamps,
            predictions,
        }))
    }

    /// Replaces every parameter with a stored one of the same name and shape.
    pub fn load_params(&mut self, stored: &ParamStore) -> Result<()> {
        if stored.len() != self.store.len() {
            return Err(KastError::Config(format!(
                "checkpoint has {} tensors, model expects {}",
                stored.len(),
                self.store.len()
            )));
        }
        let ids: Vec<_> = self.store.ids().collect();
        for id in ids {
            let name = self.store.name(id).to_string();
            let src = stored
                .by_name(&name)
                .ok_or_else(|| KastError::Config(format!("checkpoint lacks `{name}`")))?;
            let dst = self.store.get_mut(id);
            if src.shape() != dst.shape() {
                return Err(KastError::Config(format!(
                    "`{name}` has shape {:?} in checkpoint, model expects {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src.clone();
        }
        Ok(())
    }

    pub fn finish(self) -> (ParamStore, MetricsReport, Timings) {
        (self.store, self.report, self.timings)
    }
}

/// Knowledge triples for the auxiliary term of one batch.
#[derive(Debug, Clone, Copy)]
pub struct KseBatch<'a> {
    pub params: &'a KseParams,
    pub pos: &'a [Triple],
    /// `cfg.negatives` corruptions per positive, grouped by positive.
    pub neg: &'a [Triple],
    pub cfg: &'a KseConfig,
}

/// Records the training objective `BCE + γ·L_KSE` on `g`, sharing a single
/// embedding table between both terms. Returns `(total, ctr)`.
pub fn joint_loss(
    g: &mut Graph,
    model: &Model,
    store: &ParamStore,
    batch: &[Sample],
    kse: Option<KseBatch<'_>>,
) -> Result<(Var, Var)> {
    let labels: Vec<f64> = batch.iter().map(|s| s.label).collect();
    let emb = g.param(store, model.emb);
    let z = model.logits(g, store, emb, batch)?;
    let ctr = g.bce_with_logits(z, &labels)?;
    let total = match kse {
        Some(k) => {
            let l = k.params.loss_graph(g, store, emb, k.pos, k.neg, k.cfg)?;
            let wl = g.scale(l, k.cfg.gamma);
            g.add(ctr, wl)?
        }
        None => ctr,
    };
    Ok((total, ctr))
}

/// Uniform item outside `touched` (sorted); gives up after a bounded number
/// of draws when the user touched nearly everything.
fn sample_untouched(touched: &[usize], n_items: usize, rng: &mut impl Rng) -> usize {
    let mut item = rng.gen_range(0..n_items);
    for _ in 0..100 {
        if touched.binary_search(&item).is_err() {
            break;
        }
        item = rng.gen_range(0..n_items);
    }
    item
}

/// Trains for `cfg.epochs` epochs.
pub fn train(
    train: &[BehaviorSequence],
    test: &[BehaviorSequence],
    cfg: TrainConfig,
) -> Result<(ParamStore, MetricsReport)> {
    let mut t = Trainer::new(train, test, cfg)?;
    while t.run_epoch()? {}
    let (store, report, _) = t.finish();
    Ok((store, report))
}
