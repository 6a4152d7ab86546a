use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::initial_segment;
use crate::data::{BehaviorSequence, InteractionEvent};
use crate::error::{KastError, Result};

/// Pseudo-attribute comparing item ids.
const ITEM_KEY: &str = "item";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisdivisionRow {
    pub keys: Vec<String>,
    pub gap_seconds: u64,
    /// Boundaries where every key was present on both sides.
    pub boundary_count: usize,
    pub agreeing: usize,
    pub skipped: usize,
    /// `None` when no boundary could be evaluated.
    pub misdivided_pct: Option<f64>,
}

impl MisdivisionRow {
    pub fn key_label(&self) -> String {
        self.keys.join("+")
    }
}

fn key_value(e: &InteractionEvent, key: &str) -> Option<u64> {
    if key == ITEM_KEY {
        Some(e.item_id as u64)
    } else {
        e.attrs.get(key).map(|&v| u64::from(v))
    }
}

/// For each key set, the share of time-gap session boundaries whose two
/// adjacent events agree on every key.
pub fn misdivision_stats(
    seqs: &[BehaviorSequence],
    gap_seconds: u64,
    key_sets: &[Vec<String>],
) -> Result<Vec<MisdivisionRow>> {
    let available: BTreeSet<&str> = seqs
        .iter()
        .flat_map(|s| s.events.iter())
        .flat_map(|e| e.attrs.keys().map(String::as_str))
        .chain([ITEM_KEY])
        .collect();
    for key in key_sets.iter().flatten() {
        if !available.contains(key.as_str()) {
            return Err(KastError::UnknownKey {
                key: key.clone(),
                available: available.iter().copied().collect::<Vec<_>>().join(", "),
            });
        }
    }

    let mut pairs: Vec<(&InteractionEvent, &InteractionEvent)> = Vec::new();
    for s in seqs {
        let p = initial_segment(s, gap_seconds);
        for w in p.sessions.windows(2) {
            let last = *w[0].last().expect("sessions are non-empty");
            pairs.push((&s.events[last], &s.events[w[1][0]]));
        }
    }

    Ok(key_sets
        .iter()
        .map(|keys| {
            let (mut count, mut agree, mut skipped) = (0, 0, 0);
            for (a, b) in &pairs {
                let mut ok = true;
                let mut missing = false;
                for k in keys {
                    match (key_value(a, k), key_value(b, k)) {
                        (Some(x), Some(y)) => ok &= x == y,
                        _ => missing = true,
                    }
                }
                if missing {
                    skipped += 1;
                } else {
                    count += 1;
                    agree += usize::from(ok);
                }
            }
            if count == 0 {
                log::warn!("key set {keys:?} at gap {gap_seconds}s: no evaluable session boundary");
            }
            MisdivisionRow {
                keys: keys.clone(),
                gap_seconds,
                boundary_count: count,
                agreeing: agree,
                skipped,
                misdivided_pct: (count > 0).then(|| 100.0 * agree as f64 / count as f64),
            }
        })
        .collect())
}

/// CSV with columns `key_set,gap_seconds,boundary_count,misdivided_pct`;
/// rows without boundaries carry `NA`.
pub fn write_misdivision_csv(rows: &[MisdivisionRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["key_set", "gap_seconds", "boundary_count", "misdivided_pct"])?;
    for r in rows {
        w.write_record([
            r.key_label(),
            r.gap_seconds.to_string(),
            r.boundary_count.to_string(),
            r.misdivided_pct.map_or_else(|| "NA".to_string(), |p| format!("{p:.4}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}
