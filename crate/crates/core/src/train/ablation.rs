use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{train, TrainConfig};
use crate::data::BehaviorSequence;
use crate::error::{KastError, Result};
use crate::exec::{map_indexed, Execution};
use crate::kse::KseVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationSuite {
    /// Refinement off / on, structural loss off.
    Ass,
    /// No structural loss, then each translational variant.
    KseVariants,
    /// `SN = 1..=10`.
    SessionNumber,
    /// `K = 1..=8`.
    KDepth,
}

impl fmt::Display for AblationSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ass => "ass",
            Self::KseVariants => "kse_variants",
            Self::SessionNumber => "session_number",
            Self::KDepth => "k_depth",
        })
    }
}

impl FromStr for AblationSuite {
    type Err = KastError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ass" => Ok(Self::Ass),
            "kse_variants" | "kse" => Ok(Self::KseVariants),
            "session_number" | "sn" => Ok(Self::SessionNumber),
            "k_depth" | "k" => Ok(Self::KDepth),
            _ => Err(KastError::Config(format!(
                "unknown suite `{s}` (expected ass, kse_variants, session_number, k_depth)"
            ))),
        }
    }
}

impl AblationSuite {
    /// Labelled configurations of the grid.
    pub fn grid(&self, base: &TrainConfig) -> Vec<(String, TrainConfig)> {
        let with = |f: &dyn Fn(&mut TrainConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match self {
            Self::Ass => vec![
                (
                    "ass_off".into(),
                    with(&|c| {
                        c.ass_on = false;
                        c.kse_on = false;
                    }),
                ),
                (
                    "ass_on".into(),
                    with(&|c| {
                        c.ass_on = true;
                        c.kse_on = false;
                    }),
                ),
            ],
            Self::KseVariants => {
                let mut rows = vec![("none".to_string(), with(&|c| c.kse_on = false))];
                for v in [KseVariant::TransE, KseVariant::TransH, KseVariant::TransD] {
                    rows.push((
                        v.to_string(),
                        with(&|c| {
                            c.kse_on = true;
                            c.kse.variant = v;
                        }),
                    ));
                }
                rows
            }
            Self::SessionNumber => (1..=10)
                .map(|sn| (format!("sn={sn}"), with(&|c| c.network.sn = sn)))
                .collect(),
            Self::KDepth => (1..=8)
                .map(|k| {
                    (
                        format!("k={k}"),
                        with(&|c| {
                            c.ass_on = true;
                            c.ass.k_depth = k;
                        }),
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: String,
    pub seed: u64,
    pub auc: f64,
    pub logloss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub config: String,
    pub runs: usize,
    pub auc_mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub auc_std: f64,
    pub logloss_mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub summary: Vec<AblationSummary>,
}

impl AblationTable {
    pub fn summary_for(&self, config: &str) -> Option<&AblationSummary> {
        self.summary.iter().find(|s| s.config == config)
    }

    pub fn write_rows_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["config", "seed", "auc", "logloss"])?;
        for r in &self.rows {
            w.write_record([
                r.config.clone(),
                r.seed.to_string(),
                format!("{:.10}", r.auc),
                format!("{:.10}", r.logloss),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["config", "runs", "auc_mean", "auc_std", "logloss_mean"])?;
        for s in &self.summary {
            w.write_record([
                s.config.clone(),
                s.runs.to_string(),
                format!("{:.10}", s.auc_mean),
                format!("{:.10}", s.auc_std),
                format!("{:.10}", s.logloss_mean),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains every (configuration, seed) cell on the same data; cells run in
/// parallel under `exec`, each trainer itself sequential.
pub fn run_ablation(
    suite: AblationSuite,
    base: &TrainConfig,
    seeds: &[u64],
    train_data: &[BehaviorSequence],
    test_data: &[BehaviorSequence],
    exec: Execution,
) -> Result<AblationTable> {
    let grid = suite.grid(base);
    let cells: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results = map_indexed(cells.len(), exec, |i| -> Result<AblationRow> {
        let (c, seed) = cells[i];
        let mut cfg = grid[c].1.clone();
        cfg.seed = seed;
        if exec.is_parallel() {
            cfg.execution = Execution::Sequential;
        }
        let (_, report) = train(train_data, test_data, cfg)?;
        let last = report
            .last()
            .ok_or_else(|| KastError::Config("ablation needs at least one epoch".into()))?;
        Ok(AblationRow {
            config: grid[c].0.clone(),
            seed,
            auc: last
                .test_auc
                .ok_or_else(|| KastError::InvalidData("test set lacks both classes".into()))?,
            logloss: last.test_logloss.unwrap_or(f64::NAN),
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = grid
        .iter()
        .map(|(label, _)| {
            let r: Vec<&AblationRow> = rows.iter().filter(|r| &r.config == label).collect();
            let n = r.len() as f64;
            let mean = r.iter().map(|x| x.auc).sum::<f64>() / n;
            let var = if r.len() > 1 {
                r.iter().map(|x| (x.auc - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            AblationSummary {
                config: label.clone(),
                runs: r.len(),
                auc_mean: mean,
                auc_std: var.sqrt(),
                logloss_mean: r.iter().map(|x| x.logloss).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(AblationTable { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_have_expected_rows() {
        let base = TrainConfig::default();
        let labels = |s: AblationSuite| s.grid(&base).into_iter().map(|(l, _)| l).collect::<Vec<_>>();
        assert_eq!(labels(AblationSuite::Ass), ["ass_off", "ass_on"]);
        assert_eq!(
            labels(AblationSuite::KseVariants),
            ["none", "transE", "transH", "transD"]
        );
        assert_eq!(labels(AblationSuite::SessionNumber).len(), 10);
        assert_eq!(labels(AblationSuite::KDepth).len(), 8);
    }
}
