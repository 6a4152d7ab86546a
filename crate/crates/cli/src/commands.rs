use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ArgMatches;
use serde::Serialize;

use kast_autodiff::checkpoint;
use kast_core::data::synthetic::generate_synthetic;
use kast_core::data::{load_interactions, split_by_time, write_interactions, BehaviorSequence, ColumnSchema};
use kast_core::session::{misdivision_stats, write_misdivision_csv, PassStats};
use kast_core::train::{run_ablation, AblationSuite, Prediction, Trainer};

use crate::manifest::{self, OutputFile, RunManifest};
use crate::settings::{self, Key, ABLATE_KEYS, GEN_KEYS, MODEL_KEYS, SEGMENT_KEYS};
use crate::ReplayMismatch;

/// Output file names and whether a replay must reproduce them exactly.
const GEN_OUT: &[(&str, bool)] = &[
    ("interactions.csv", true),
    ("truth.csv", true),
    ("truth_summary.json", true),
];
const SEGMENT_OUT: &[(&str, bool)] = &[("misdivision.csv", true), ("misdivision.json", true)];
const TRAIN_OUT: &[(&str, bool)] = &[
    ("metrics.json", true),
    ("metrics.csv", true),
    ("checkpoint.bin", true),
    ("predictions.csv", true),
    ("timings.json", false),
];
const EVAL_OUT: &[(&str, bool)] = &[("eval.json", true), ("predictions.csv", true)];
const ABLATE_OUT: &[(&str, bool)] = &[
    ("ablation.json", true),
    ("ablation_rows.csv", true),
    ("ablation_summary.csv", true),
];

pub fn dispatch(m: &ArgMatches) -> Result<()> {
    let out_dir: PathBuf = m.get_one::<PathBuf>("out-dir").cloned().expect("defaulted");
    let file = match m.get_one::<PathBuf>("config") {
        Some(p) => settings::read_file(p)?,
        None => BTreeMap::new(),
    };
    let (name, sub) = m.subcommand().expect("subcommand required");
    if name == "replay" {
        let path = sub.get_one::<PathBuf>("manifest").expect("required");
        let explicit = m.value_source("out-dir") != Some(clap::parser::ValueSource::DefaultValue);
        return replay(path, explicit.then_some(out_dir.as_path()), sub.get_flag("verify"));
    }
    let keys: Vec<Key> = match name {
        "gen-data" => GEN_KEYS.to_vec(),
        "segment-analyze" => SEGMENT_KEYS.to_vec(),
        "ablate" => MODEL_KEYS.iter().chain(ABLATE_KEYS).copied().collect(),
        _ => MODEL_KEYS.to_vec(),
    };
    let s = settings::resolve(sub, &keys, &file);
    let mut inputs = BTreeMap::new();
    for flag in ["data", "test-data", "checkpoint"] {
        if let Ok(Some(p)) = sub.try_get_one::<PathBuf>(flag) {
            inputs.insert(flag.to_string(), manifest::input(p)?);
        }
    }
    let outputs = match name {
        "gen-data" => GEN_OUT,
        "segment-analyze" => SEGMENT_OUT,
        "train" => TRAIN_OUT,
        "eval" => EVAL_OUT,
        "ablate" => ABLATE_OUT,
        _ => unreachable!("unknown subcommand {name}"),
    };
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let out_dir = std::fs::canonicalize(&out_dir)?;
    let run = RunManifest {
        command: name.to_string(),
        version: manifest::version(),
        seed: s.get("seed").and_then(|v| v.parse().ok()),
        settings: s,
        inputs,
        out_dir,
        outputs: outputs
            .iter()
            .map(|&(n, d)| OutputFile {
                name: n.to_string(),
                deterministic: d,
            })
            .collect(),
    };
    // Parse everything before the manifest claims a run has started.
    validate(&run)?;
    run.write()?;
    match name {
        "gen-data" => gen_data(&run),
        "segment-analyze" => segment_analyze(&run),
        "train" => train(&run),
        "eval" => eval(&run),
        "ablate" => ablate(&run),
        _ => unreachable!(),
    }
}

fn validate(run: &RunManifest) -> Result<()> {
    let s = &run.settings;
    match run.command.as_str() {
        "gen-data" => {
            settings::synthetic_spec(s)?.validate()?;
            settings::get::<u64>(s, "seed")?;
        }
        "segment-analyze" => {
            settings::get_list::<u64>(s, "gap", ',')?;
            settings::key_sets(s)?;
        }
        cmd => {
            settings::train_config(s)?;
            settings::get::<u64>(s, "cutoff")?;
            if cmd == "ablate" {
                settings::get::<AblationSuite>(s, "suite")?;
                if settings::get_list::<u64>(s, "seeds", ',')?.is_empty() {
                    bail!("--seeds needs at least one seed");
                }
            }
        }
    }
    Ok(())
}

fn create(run: &RunManifest, name: &str) -> Result<BufWriter<File>> {
    let path = run.out_dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(run: &RunManifest, name: &str, value: &impl Serialize) -> Result<()> {
    let mut w = create(run, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load(path: &Path) -> Result<Vec<BehaviorSequence>> {
    load_interactions(path, &ColumnSchema::default()).with_context(|| format!("loading {}", path.display()))
}

fn load_split(run: &RunManifest) -> Result<(Vec<BehaviorSequence>, Vec<BehaviorSequence>)> {
    let data = load(&run.inputs["data"].path)?;
    match run.inputs.get("test-data") {
        Some(t) => Ok((data, load(&t.path)?)),
        None => Ok(split_by_time(&data, settings::get(&run.settings, "cutoff")?)),
    }
}

#[derive(Serialize)]
struct TruthSummary {
    users: usize,
    events: usize,
    border_events: usize,
    planted: usize,
}

fn gen_data(run: &RunManifest) -> Result<()> {
    let spec = settings::synthetic_spec(&run.settings)?;
    let seed = settings::get(&run.settings, "seed")?;
    let (seqs, truth) = generate_synthetic(&spec, seed)?;
    let mut w = create(run, "interactions.csv")?;
    write_interactions(&mut w, &seqs, b',')?;
    w.flush()?;
    let mut w = create(run, "truth.csv")?;
    truth.write_csv(&seqs, &mut w)?;
    w.flush()?;
    let summary = TruthSummary {
        users: seqs.len(),
        events: seqs.iter().map(BehaviorSequence::len).sum(),
        border_events: truth.border_events,
        planted: truth.planted,
    };
    write_json(run, "truth_summary.json", &summary)?;
    println!(
        "{} users, {} events, {} planted misdivisions over {} boundaries",
        summary.users, summary.events, summary.planted, summary.border_events
    );
    Ok(())
}

fn segment_analyze(run: &RunManifest) -> Result<()> {
    let seqs = load(&run.inputs["data"].path)?;
    let gaps: Vec<u64> = settings::get_list(&run.settings, "gap", ',')?;
    let sets = settings::key_sets(&run.settings)?;
    let mut rows = Vec::new();
    for gap in gaps {
        rows.extend(misdivision_stats(&seqs, gap, &sets)?);
    }
    let mut w = create(run, "misdivision.csv")?;
    write_misdivision_csv(&rows, &mut w)?;
    w.flush()?;
    write_json(run, "misdivision.json", &rows)?;
    for r in &rows {
        let pct = r
            .misdivided_pct
            .map_or_else(|| "NA (no boundaries)".to_string(), |p| format!("{p:.2}%"));
        println!(
            "{:<28} gap {:>6}s  {:>7} boundaries  {pct}",
            r.key_label(),
            r.gap_seconds,
            r.boundary_count
        );
    }
    Ok(())
}

fn write_predictions(run: &RunManifest, preds: &[Prediction]) -> Result<()> {
    let mut w = create(run, "predictions.csv")?;
    writeln!(w, "user,item,label,p_ctr")?;
    for p in preds {
        writeln!(w, "{},{},{},{}", p.user, p.item, p.label, p.p_ctr)?;
    }
    w.flush()?;
    Ok(())
}

fn train(run: &RunManifest) -> Result<()> {
    let cfg = settings::train_config(&run.settings)?;
    let (train_data, test_data) = load_split(run)?;
    let mut t = Trainer::new(&train_data, &test_data, cfg)?;
    log::info!(
        "{} training targets, {} test samples",
        t.num_train_targets(),
        t.num_test_samples()
    );
    let outcome = loop {
        match t.run_epoch() {
            Ok(more) => {
                if let Some(e) = t.report().last() {
                    let auc = e.test_auc.map_or_else(|| "NA".to_string(), |a| format!("{a:.4}"));
                    println!("epoch {:>3}  loss {:.5}  test auc {auc}", e.epoch, e.train_loss);
                }
                if !more {
                    break Ok(());
                }
            }
            Err(e) => break Err(e),
        }
    };
    // Partial reports are kept on divergence.
    write_json(run, "metrics.json", t.report())?;
    let mut w = create(run, "metrics.csv")?;
    t.report().write_csv(&mut w)?;
    w.flush()?;
    write_json(run, "timings.json", t.timings())?;
    outcome?;
    checkpoint::save(run.out_dir.join("checkpoint.bin"), &t.store)?;
    write_predictions(run, &t.predict_test()?)?;
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    auc: Option<f64>,
    logloss: Option<f64>,
    logloss_clamps: usize,
    test_samples: usize,
    /// The refinement pass run with the checkpoint's embeddings.
    ass: Option<PassStats>,
}

fn eval(run: &RunManifest) -> Result<()> {
    let cfg = settings::train_config(&run.settings)?;
    let (train_data, test_data) = load_split(run)?;
    let stored = checkpoint::load(&run.inputs["checkpoint"].path).context("loading checkpoint")?;
    let ass_on = cfg.ass_on;
    let mut t = Trainer::new(&train_data, &test_data, cfg)?;
    t.load_params(&stored)
        .context("checkpoint does not fit the configured model")?;
    let ass = if ass_on { Some(t.refine_sessions()?) } else { None };
    let ev = t.evaluate()?;
    let report = EvalReport {
        auc: ev.as_ref().and_then(|e| e.auc),
        logloss: ev.as_ref().map(|e| e.logloss),
        logloss_clamps: ev.as_ref().map_or(0, |e| e.clamps),
        test_samples: t.num_test_samples(),
        ass,
    };
    write_json(run, "eval.json", &report)?;
    write_predictions(run, ev.as_ref().map_or(&[][..], |e| &e.predictions))?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
    println!("test auc {}  logloss {}", fmt(report.auc), fmt(report.logloss));
    Ok(())
}

fn ablate(run: &RunManifest) -> Result<()> {
    let cfg = settings::train_config(&run.settings)?;
    let suite: AblationSuite = settings::get(&run.settings, "suite")?;
    let seeds: Vec<u64> = settings::get_list(&run.settings, "seeds", ',')?;
    let (train_data, test_data) = load_split(run)?;
    let table = run_ablation(suite, &cfg, &seeds, &train_data, &test_data, cfg.execution)?;
    write_json(run, "ablation.json", &table)?;
    let mut w = create(run, "ablation_rows.csv")?;
    table.write_rows_csv(&mut w)?;
    w.flush()?;
    let mut w = create(run, "ablation_summary.csv")?;
    table.write_summary_csv(&mut w)?;
    w.flush()?;
    for r in &table.summary {
        println!(
            "{:<16} auc {:.4} ± {:.4} over {} runs",
            r.config, r.auc_mean, r.auc_std, r.runs
        );
    }
    Ok(())
}

/// Re-runs into `out_dir`, or into `replay/` under the recorded directory
/// when none is given or it is the recorded one.
fn replay(path: &Path, out_dir: Option<&Path>, verify: bool) -> Result<()> {
    let recorded = RunManifest::read(path)?;
    for (flag, f) in &recorded.inputs {
        let now = manifest::sha256_file(&f.path).with_context(|| format!("input --{flag}"))?;
        if now != f.sha256 {
            bail!("input --{flag} {} changed since the recorded run", f.path.display());
        }
    }
    if recorded.version != manifest::version() {
        log::warn!(
            "recorded with version {}, replaying with {}",
            recorded.version,
            manifest::version()
        );
    }
    let nested = recorded.out_dir.join("replay");
    let target = match out_dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            let d = std::fs::canonicalize(d)?;
            if d == recorded.out_dir {
                nested
            } else {
                d
            }
        }
        None => nested,
    };
    let m = crate::cli()
        .try_get_matches_from(recorded.argv(&target))
        .context("manifest does not form a valid command line")?;
    dispatch(&m)?;
    println!("replayed `{}` into {}", recorded.command, target.display());
    if verify {
        let mut differ = Vec::new();
        for o in recorded.outputs.iter().filter(|o| o.deterministic) {
            let a = std::fs::read(recorded.out_dir.join(&o.name)).with_context(|| format!("recorded {}", o.name))?;
            let b = std::fs::read(target.join(&o.name)).with_context(|| format!("replayed {}", o.name))?;
            if a == b {
                println!("identical  {}", o.name);
            } else {
                println!("DIFFERENT  {}", o.name);
                differ.push(o.name.clone());
            }
        }
        if !differ.is_empty() {
            return Err(ReplayMismatch(differ).into());
        }
    }
    Ok(())
}
