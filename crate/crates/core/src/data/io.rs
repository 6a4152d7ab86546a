use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use super::{BehaviorSequence, InteractionEvent};
use crate::error::{KastError, Result};

/// Column mapping for delimited interaction logs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub user: String,
    pub item: String,
    pub timestamp: String,
    pub label: String,
    /// Attribute columns; `None` takes every column not named above.
    pub attrs: Option<Vec<String>>,
    pub delimiter: u8,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            user: "user".into(),
            item: "item".into(),
            timestamp: "timestamp".into(),
            label: "label".into(),
            attrs: None,
            delimiter: b',',
        }
    }
}

pub fn load_interactions(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Vec<BehaviorSequence>> {
    let file = std::fs::File::open(path)?;
    read_interactions(std::io::BufReader::new(file), schema)
}

/// Parses a headed delimited log into one sequence per user, ordered by user
/// id. Events are sorted by timestamp; ties keep file order. Empty attribute
/// cells are treated as missing.
pub fn read_interactions(reader: impl Read, schema: &ColumnSchema) -> Result<Vec<BehaviorSequence>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| KastError::MissingColumn(name.to_string()))
    };
    let (cu, ci, ct, cl) = (
        col(&schema.user)?,
        col(&schema.item)?,
        col(&schema.timestamp)?,
        col(&schema.label)?,
    );
    let attr_cols: Vec<(String, usize)> = match &schema.attrs {
        Some(names) => names
            .iter()
            .map(|n| col(n).map(|c| (n.clone(), c)))
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![cu, ci, ct, cl].contains(i))
            .map(|(i, h)| (h.to_string(), i))
            .collect(),
    };

    let mut by_user: BTreeMap<usize, Vec<InteractionEvent>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |c: usize, what: &str| -> Result<&str> {
            rec.get(c).ok_or_else(|| KastError::Parse {
                line,
                message: format!("missing {what} field"),
            })
        };
        fn num<T: std::str::FromStr>(s: &str, what: &str, line: u64) -> Result<T> {
            s.trim().parse().map_err(|_| KastError::Parse {
                line,
                message: format!("cannot parse {what} `{s}`"),
            })
        }
        let user: usize = num(field(cu, "user")?, "user", line)?;
        let item: usize = num(field(ci, "item")?, "item", line)?;
        let timestamp: u64 = num(field(ct, "timestamp")?, "timestamp", line)?;
        let label: u8 = num(field(cl, "label")?, "label", line)?;
        if label > 1 {
            return Err(KastError::Parse {
                line,
                message: format!("label must be 0 or 1, got {label}"),
            });
        }
        let mut attrs = BTreeMap::new();
        for (name, c) in &attr_cols {
            let raw = field(*c, name)?;
            if !raw.trim().is_empty() {
                attrs.insert(name.clone(), num(raw, name, line)?);
            }
        }
        by_user.entry(user).or_default().push(InteractionEvent {
            user_id: user,
            item_id: item,
            timestamp,
            label,
            attrs,
        });
    }
    by_user
        .into_iter()
        .map(|(u, ev)| BehaviorSequence::from_unsorted(u, ev))
        .collect()
}

/// Writes sequences with header `user,item,timestamp,label,<attrs…>`; the
/// attribute columns are the union of keys present, in name order.
pub fn write_interactions(writer: impl Write, seqs: &[BehaviorSequence], delimiter: u8) -> Result<()> {
    let attr_names: BTreeSet<&str> = seqs
        .iter()
        .flat_map(|s| s.events.iter())
        .flat_map(|e| e.attrs.keys().map(String::as_str))
        .collect();
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
    let mut header = vec!["user", "item", "timestamp", "label"];
    header.extend(attr_names.iter().copied());
    w.write_record(&header)?;
    for s in seqs {
        for e in &s.events {
            let mut row = vec![
                e.user_id.to_string(),
                e.item_id.to_string(),
                e.timestamp.to_string(),
                e.label.to_string(),
            ];
            for a in &attr_names {
                row.push(e.attrs.get(*a).map(u32::to_string).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
