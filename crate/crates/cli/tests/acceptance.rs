//! Acceptance suite: one PASS/FAIL line per criterion. Built with
//! `harness = false`; exits non-zero when any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use kast_autodiff::{check_params, uniform, AdamConfig, AdamState, Graph, ParamStore};
use kast_core::data::synthetic::{generate_synthetic, SyntheticSpec};
use kast_core::data::{split_by_time, EntitySpace, Triple, Vocab};
use kast_core::kse::{sample_negatives, KseConfig, KseParams, KseSign, KseVariant};
use kast_core::network::{Model, ModelKind, NetworkConfig, Sample};
use kast_core::session::{ass_pass, ass_unit, AssConfig, ConflictRule, ForwardTest, SessionPartition, Similarity};
use kast_core::train::{auc, auc_counts, joint_loss, logloss, train, KseBatch, TrainConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let space = EntitySpace::new(&Vocab {
        n_users: 3,
        n_items: 7,
        attrs: BTreeMap::from([("category".to_string(), 3)]),
    });
    let net = NetworkConfig {
        d_model: 4,
        sn: 3,
        max_session_len: 4,
        hidden: 4,
        mlp: vec![5],
        max_history: 6,
    };
    let mut worst = 0.0f64;
    let mut tensors = 0;
    for variant in [KseVariant::TransE, KseVariant::TransH, KseVariant::TransD] {
        let mut store = ParamStore::new();
        let model = Model::init(ModelKind::Kast, net.clone(), space.clone(), &mut store, &mut rng)
            .map_err(|e| e.to_string())?;
        let kp = KseParams::init(&mut store, variant, 2, space.len(), 4, &mut rng);
        // Weights large enough to leave every nonlinearity's flat region.
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            for v in store.get_mut(id).data_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let batch: Vec<Sample> = (0..6)
            .map(|_| Sample {
                user: rng.gen_range(0..3),
                target: rng.gen_range(0..7),
                label: f64::from(rng.gen_range(0..2u8)),
                sessions: (0..rng.gen_range(1..5))
                    .map(|_| (0..rng.gen_range(1..5)).map(|_| rng.gen_range(0..7)).collect())
                    .collect(),
            })
            .collect();
        let pos: Vec<Triple> = (0..5)
            .map(|_| {
                Triple::positive(
                    rng.gen_range(0..space.len()),
                    rng.gen_range(0..2),
                    rng.gen_range(0..space.len()),
                )
            })
            .collect();
        let cfg = KseConfig {
            variant,
            margin: 2.0,
            gamma: 0.5,
            negatives: 3,
            ..KseConfig::default()
        };
        let neg = sample_negatives(&pos, cfg.negatives, space.len(), false, &mut rng);
        let loss = |st: &ParamStore, grad: bool| {
            let mut g = Graph::new();
            let kb = KseBatch {
                params: &kp,
                pos: &pos,
                neg: &neg,
                cfg: &cfg,
            };
            let (total, _) = joint_loss(&mut g, &model, st, &batch, Some(kb)).unwrap();
            let v = g.value(total).item();
            if grad {
                g.backward(total).unwrap();
            }
            (v, g.param_gradients())
        };
        let (_, grads) = loss(&store, true);
        for c in check_params(&store, &grads, |st| loss(st, false).0, 1e-5) {
            if c.max_rel_error >= 1e-4 {
                return Err(format!("{variant} {}: relative error {:.2e}", c.name, c.max_rel_error));
            }
            worst = worst.max(c.max_rel_error);
            tensors += 1;
        }
    }
    Ok(format!(
        "max relative error {worst:.2e} over {tensors} tensors, three structural variants"
    ))
}

// ---------------------------------------------------------------- 2

/// Similarity written out directly.
fn oracle_sim(a: &[f64], b: &[f64], kind: Similarity) -> f64 {
    match kind {
        Similarity::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum();
            let nb: f64 = b.iter().map(|x| x * x).sum();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
            }
        }
        Similarity::NegEuclidean => -a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
    }
}

fn oracle_mean(q: &[usize], vecs: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; vecs[0].len()];
    for &p in q {
        for (a, v) in m.iter_mut().zip(&vecs[p]) {
            *a += v;
        }
    }
    m.iter().map(|a| a / q.len() as f64).collect()
}

/// Step-by-step list surgery: means and border items taken once, then for
/// each depth the two tests, the chosen move applied by removing and
/// inserting into the working lists.
fn oracle_unit(qi: &[usize], qn: &[usize], vecs: &[Vec<f64>], cfg: &AssConfig) -> (Vec<usize>, Vec<usize>) {
    let s_i = oracle_mean(qi, vecs);
    let s_n = oracle_mean(qn, vecs);
    let kb = cfg.k_depth.min(qi.len());
    let kf = cfg.k_depth.min(qn.len());
    let e: Vec<usize> = (0..kb).map(|k| qi[qi.len() - 1 - k]).collect();
    let s: Vec<usize> = (0..kf).map(|k| qn[k]).collect();
    let mut out_i = qi.to_vec();
    let mut out_n = qn.to_vec();
    for k in 0..cfg.k_depth {
        let mut back = None;
        if k < kb {
            let t_ii = oracle_sim(&s_i, &vecs[e[k]], cfg.similarity);
            let t_ni = oracle_sim(&s_n, &vecs[e[k]], cfg.similarity);
            if t_ii < cfg.alpha && t_ni > t_ii {
                back = Some(t_ni - t_ii);
            }
        }
        let mut fwd = None;
        if k < kf {
            let t_in = oracle_sim(&s_i, &vecs[s[k]], cfg.similarity);
            let t_nn = oracle_sim(&s_n, &vecs[s[k]], cfg.similarity);
            let fires = match cfg.forward_test {
                ForwardTest::Mirrored => t_nn < cfg.alpha && t_in > t_nn,
                ForwardTest::Literal => t_in < cfg.alpha && t_nn > t_in,
            };
            if fires {
                fwd = Some(t_in - t_nn);
            }
        }
        if let (Some(gb), Some(gf)) = (back, fwd) {
            let keep_back = match cfg.conflict {
                ConflictRule::Gain => gb >= gf,
                ConflictRule::Backward => true,
                ConflictRule::Forward => false,
            };
            if keep_back {
                fwd = None;
            } else {
                back = None;
            }
        }
        if back.is_some() {
            out_i.retain(|&x| x != e[k]);
            out_n.insert(0, e[k]);
        }
        if fwd.is_some() {
            out_n.retain(|&x| x != s[k]);
            out_i.push(s[k]);
        }
    }
    (out_i, out_n)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut checks, mut moves, mut conflicts) = (0usize, 0usize, 0usize);
    for case in 0..1000 {
        let a = rng.gen_range(1..=6);
        let b = rng.gen_range(1..=6);
        // Every other case draws from a small lattice so ties and exact
        // threshold hits occur.
        let vecs: Vec<Vec<f64>> = (0..a + b)
            .map(|_| {
                (0..4)
                    .map(|_| {
                        if case % 2 == 0 {
                            rng.gen_range(-1.0..1.0)
                        } else {
                            f64::from(rng.gen_range(-1i8..=1))
                        }
                    })
                    .collect()
            })
            .collect();
        let qi: Vec<usize> = (0..a).collect();
        let qn: Vec<usize> = (a..a + b).collect();
        let k_depth = rng.gen_range(1..=3);
        for similarity in [Similarity::Cosine, Similarity::NegEuclidean] {
            let alpha = match similarity {
                Similarity::Cosine => rng.gen_range(-1.0..1.0),
                Similarity::NegEuclidean => rng.gen_range(-2.5..0.0),
            };
            for conflict in [ConflictRule::Gain, ConflictRule::Backward, ConflictRule::Forward] {
                for forward_test in [ForwardTest::Mirrored, ForwardTest::Literal] {
                    let cfg = AssConfig {
                        alpha,
                        k_depth,
                        similarity,
                        conflict,
                        forward_test,
                        ..AssConfig::default()
                    };
                    let got = ass_unit(&qi, &qn, &vecs, &cfg).map_err(|e| e.to_string())?;
                    let want = oracle_unit(&qi, &qn, &vecs, &cfg);
                    if (got.first.clone(), got.second.clone()) != want {
                        return Err(format!(
                            "case {case} {cfg:?}: got {:?}/{:?}, oracle {want:?}",
                            got.first, got.second
                        ));
                    }
                    checks += 1;
                    moves += got.stats.moves();
                    conflicts += got.stats.conflicts;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        conflicts > 0 && moves > 0 && secs < 10.0,
        format!(
            "{checks} unit runs identical to the oracle ({moves} moves, {conflicts} conflicts resolved) in {secs:.1}s"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 10_000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (
        prop::collection::vec(1usize..7, 1..8),
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 42),
        -1.0f64..1.0,
        1usize..5,
        prop::bool::ANY,
    );
    let result = runner.run(&strategy, |(lens, vecs, alpha, k, euclid)| {
        let mut sessions = Vec::new();
        let mut pos = 0;
        for l in lens {
            sessions.push((pos..pos + l).collect::<Vec<_>>());
            pos += l;
        }
        let p0 = SessionPartition::new(sessions);
        let cfg = AssConfig {
            alpha: if euclid { alpha - 1.0 } else { alpha },
            k_depth: k,
            similarity: if euclid {
                Similarity::NegEuclidean
            } else {
                Similarity::Cosine
            },
            ..AssConfig::default()
        };
        let (p1, _) = ass_pass(&p0, &vecs, &cfg).unwrap();
        let mut a: Vec<usize> = p0.sessions.concat();
        let mut b: Vec<usize> = p1.sessions.concat();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        // Relative order of any two events that share an output session.
        for s in &p1.sessions {
            prop_assert!(!s.is_empty());
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
        Ok(())
    });
    match result {
        Ok(()) => Ok("10000 random partitions: multiset and intra-session order conserved".into()),
        Err(e) => Err(e.to_string()),
    }
}

// ---------------------------------------------------------------- 4

fn kast(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_kast"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("KAST_OUT_DIR")
        .output()
        .expect("run kast");
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn criterion_4(tmp: &Path) -> Outcome {
    let gen = tmp.join("c4-data");
    let (rc, err) = kast(&["gen-data", "--users", "2000", "--pmis", "0.1", "--seed", "4"], &gen);
    if rc != 0 {
        return Err(format!("gen-data exit {rc}: {err}"));
    }
    let out = tmp.join("c4-seg");
    let data = gen.join("interactions.csv");
    let (rc, err) = kast(
        &[
            "segment-analyze",
            "--data",
            data.to_str().unwrap(),
            "--gap",
            "1800",
            "--keys",
            "category",
            "--keys",
            "category,shop",
            "--keys",
            "category,shop,brand",
        ],
        &out,
    );
    if rc != 0 {
        return Err(format!("segment-analyze exit {rc}: {err}"));
    }
    let text = std::fs::read_to_string(out.join("misdivision.csv")).map_err(|e| e.to_string())?;
    let rows: Vec<(String, usize, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    let labels: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    if labels != ["category", "category+shop", "category+shop+brand"] {
        return Err(format!("unexpected rows {labels:?}"));
    }
    let pcts: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let strict = pcts[2];
    let monotone = pcts.windows(2).all(|w| w[0] >= w[1]);
    ensure(
        rows[2].1 >= 10_000 && (strict - 10.0).abs() <= 1.0 && monotone,
        format!(
            "{} boundaries; pct by nested keys {pcts:?}; strictest {strict:.2}% vs 10%",
            rows[2].1
        ),
    )
}

// ---------------------------------------------------------------- 5–7

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Shared setting for the ablation directions: users browse eight
/// interest topics, so the history mixes several topics per user.
fn data_spec() -> SyntheticSpec {
    SyntheticSpec {
        users: 2000,
        p_mis: 0.1,
        topics_per_user: 8,
        ..SyntheticSpec::default()
    }
}

fn base_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 8,
        warmup_epochs: 2,
        lr: 3e-3,
        seed,
        ass_on: true,
        kse_on: false,
        ass: AssConfig {
            alpha: 0.3,
            k_depth: 3,
            ..AssConfig::default()
        },
        network: NetworkConfig {
            d_model: 16,
            hidden: 16,
            mlp: vec![64, 32],
            sn: 8,
            ..NetworkConfig::default()
        },
        test_negatives: 4,
        ..TrainConfig::default()
    }
}

/// Final test AUC per (variant, seed); runs are deterministic, so variants
/// shared between criteria are trained once.
#[derive(Default)]
struct Runs {
    cache: HashMap<(&'static str, u64), f64>,
    seconds: f64,
}

impl Runs {
    fn auc(&mut self, label: &'static str, seed: u64, tweak: fn(&mut TrainConfig)) -> f64 {
        if let Some(&a) = self.cache.get(&(label, seed)) {
            return a;
        }
        let t0 = Instant::now();
        let spec = data_spec();
        let (seqs, _) = generate_synthetic(&spec, 100 + seed).unwrap();
        let (tr, te) = split_by_time(&seqs, spec.cutoff);
        let mut cfg = base_cfg(seed);
        tweak(&mut cfg);
        let (_, report) = train(&tr, &te, cfg).unwrap();
        let a = report.final_auc().expect("test AUC");
        self.seconds += t0.elapsed().as_secs_f64();
        self.cache.insert((label, seed), a);
        a
    }

    fn mean(&mut self, label: &'static str, tweak: fn(&mut TrainConfig)) -> (f64, Vec<f64>) {
        let v: Vec<f64> = SEEDS.iter().map(|&s| self.auc(label, s, tweak)).collect();
        (v.iter().sum::<f64>() / v.len() as f64, v)
    }
}

fn full(_: &mut TrainConfig) {}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

fn criterion_5(runs: &mut Runs) -> Outcome {
    let t0 = runs.seconds;
    let (on, von) = runs.mean("ass_on", full);
    let (off, voff) = runs.mean("ass_off", |c| c.ass_on = false);
    let secs = runs.seconds - t0;
    ensure(
        on - off >= 0.002 && secs < 900.0,
        format!(
            "AUC on {on:.4} [{}] − off {off:.4} [{}] = {:+.4} (≥ +0.002), {secs:.0}s",
            fmt(&von),
            fmt(&voff),
            on - off
        ),
    )
}

/// Entities on a line; relation r maps h to h + r + 1.
fn toy_mean_rank(seed: u64) -> f64 {
    const N: usize = 20;
    let triples: Vec<Triple> = (0..3)
        .flat_map(|r| (0..N - r - 1).map(move |h| Triple::positive(h, r, h + r + 1)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let ent = store.insert("entities", uniform(&[N, 8], 0.5, &mut rng));
    let p = KseParams::init(&mut store, KseVariant::TransE, 3, N, 8, &mut rng);
    let cfg = KseConfig::default();
    let mut adam = AdamState::new(
        AdamConfig {
            lr: 0.03,
            ..AdamConfig::default()
        },
        &store,
    );
    for _ in 0..200 {
        let neg = sample_negatives(&triples, cfg.negatives, N, false, &mut rng);
        let mut g = Graph::new();
        let e = g.param(&store, ent);
        let l = p.loss_graph(&mut g, &store, e, &triples, &neg, &cfg).unwrap();
        g.backward(l).unwrap();
        adam.step(&mut store, &g.param_gradients()).unwrap();
    }
    let ents = store.get(ent);
    let total: usize = triples
        .iter()
        .map(|t| {
            let truth = p.score(&store, ents, t).unwrap();
            1 + (0..N)
                .filter(|&e| e != t.tail && p.score(&store, ents, &t.with_tail(e)).unwrap() < truth)
                .count()
        })
        .sum();
    total as f64 / triples.len() as f64
}

fn criterion_6(runs: &mut Runs) -> Outcome {
    let t0 = runs.seconds;
    let (with, vwith) = runs.mean("kse_transE", |c| {
        c.kse_on = true;
        c.kse.variant = KseVariant::TransE;
        c.kse.sign = KseSign::Conventional;
    });
    let (without, vwithout) = runs.mean("ass_on", full);
    let secs = runs.seconds - t0;
    let ranks: Vec<f64> = (0..3).map(toy_mean_rank).collect();
    let rank = ranks.iter().cloned().fold(0.0, f64::max);
    ensure(
        with >= without && rank < 2.0 && secs < 900.0,
        format!(
            "AUC γ>0 {with:.4} [{}] vs γ=0 {without:.4} [{}] ({:+.4}); toy TransE mean rank ≤ {rank:.2} (< 2), {secs:.0}s",
            fmt(&vwith),
            fmt(&vwithout),
            with - without
        ),
    )
}

fn criterion_7(runs: &mut Runs) -> Outcome {
    let true_sn = data_spec().sessions_per_user;
    assert_eq!(base_cfg(0).network.sn, true_sn);
    let (at_true, vt) = runs.mean("ass_on", full);
    let (one, v1) = runs.mean("sn_1", |c| c.network.sn = 1);
    ensure(
        at_true - one >= 0.005,
        format!(
            "AUC SN={true_sn} {at_true:.4} [{}] − SN=1 {one:.4} [{}] = {:+.4} (≥ +0.005)",
            fmt(&vt),
            fmt(&v1),
            at_true - one
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut sets = 0;
    let mut worst_ll = 0.0f64;
    while sets < 1000 {
        let n = rng.gen_range(2..400);
        let levels = rng.gen_range(1..12);
        let labels: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    f64::from(rng.gen_range(0..levels)) / 12.0 + 0.01
                } else {
                    rng.gen_range(0.001..0.999)
                }
            })
            .collect();
        let pos = labels.iter().filter(|&&y| y == 1.0).count();
        if pos == 0 || pos == n {
            continue;
        }
        let (mut num, mut p, mut q) = (0u64, 0u64, 0u64);
        for i in 0..n {
            if labels[i] == 1.0 {
                p += 1;
                for j in 0..n {
                    if labels[j] == 0.0 {
                        num += if scores[i] > scores[j] {
                            2
                        } else if scores[i] == scores[j] {
                            1
                        } else {
                            0
                        };
                    }
                }
            } else {
                q += 1;
            }
        }
        let c = auc_counts(&labels, &scores).map_err(|e| e.to_string())?;
        if 2 * c.wins + c.ties != num || c.positives * c.negatives != p * q {
            return Err(format!("pair counts differ on set {sets}"));
        }
        if auc(&labels, &scores).unwrap() != num as f64 / (2 * p * q) as f64 {
            return Err(format!("AUC differs on set {sets}"));
        }
        let mut acc = 0.0;
        for (y, s) in labels.iter().zip(&scores) {
            acc += if *y == 1.0 { -s.ln() } else { -(1.0 - s).ln() };
        }
        let (ll, _) = logloss(&labels, &scores).unwrap();
        let err = (ll - acc / n as f64).abs();
        if err >= 1e-12 {
            return Err(format!("logloss off by {err:e} on set {sets}"));
        }
        worst_ll = worst_ll.max(err);
        sets += 1;
    }
    Ok(format!(
        "1000 sets with ties: AUC exactly equal to pair counts; logloss error ≤ {worst_ll:.1e}"
    ))
}

// ---------------------------------------------------------------- 9

fn criterion_9(tmp: &Path) -> Outcome {
    let gen = tmp.join("c9-gen");
    let data = gen.join("interactions.csv");
    let d = data.to_str().unwrap().to_string();
    let ckpt = tmp.join("c9-train").join("checkpoint.bin");
    let c = ckpt.to_str().unwrap().to_string();
    let small = ["--d-model", "6", "--hidden", "6", "--mlp", "8", "--epochs", "3"];
    let cmds: Vec<(&str, Vec<String>)> = vec![
        (
            "c9-gen",
            ["gen-data", "--users", "120", "--seed", "9"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        ),
        ("c9-seg", vec!["segment-analyze".into(), "--data".into(), d.clone()]),
        (
            "c9-train",
            ["train", "--data", &d]
                .iter()
                .chain(&small)
                .map(|s| s.to_string())
                .collect(),
        ),
        (
            "c9-eval",
            ["eval", "--data", &d, "--checkpoint", &c]
                .iter()
                .chain(&small)
                .map(|s| s.to_string())
                .collect(),
        ),
        (
            "c9-ablate",
            ["ablate", "--data", &d, "--suite", "ass", "--seeds", "0,1"]
                .iter()
                .chain(&small)
                .map(|s| s.to_string())
                .collect(),
        ),
    ];
    let mut verified = Vec::new();
    for (dir, args) in &cmds {
        let out = tmp.join(dir);
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let (rc, err) = kast(&args, &out);
        if rc != 0 {
            return Err(format!("{} exit {rc}: {err}", args[0]));
        }
        let manifest = out.join("manifest.json");
        let (rc, err) = kast(
            &["replay", "--verify", "--manifest", manifest.to_str().unwrap()],
            &tmp.join(format!("{dir}-replay")),
        );
        if rc != 0 {
            return Err(format!("replay of {} exit {rc}: {err}", args[0]));
        }
        verified.push(args[0]);
    }
    Ok(format!(
        "replayed from manifests with byte-identical outputs: {}",
        verified.join(", ")
    ))
}

// ----------------------------------------------------------------

fn main() {
    // `cargo test` passes filter and harness flags; a `--list` query gets
    // an empty listing.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut runs = Runs::default();
    let mut failed = 0;
    for n in 1..=9 {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(tmp.path()),
            5 => criterion_5(&mut runs),
            6 => criterion_6(&mut runs),
            7 => criterion_7(&mut runs),
            8 => criterion_8(),
            _ => criterion_9(tmp.path()),
        }))
        .unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {n}: PASS  {msg}  [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n}: FAIL  {msg}  [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
