//! String-keyed settings with layered sources: built-in defaults, a
//! `key = value` file, `KAST_*` environment variables, then flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches};

use kast_core::data::synthetic::SyntheticSpec;
use kast_core::kse::KseVariant;
use kast_core::network::NetworkConfig;
use kast_core::train::TrainConfig;

/// Resolved settings of one command, keyed by flag name.
pub type Settings = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
    /// Repeatable flag; occurrences are joined with this separator.
    pub join: Option<char>,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default,
        help,
        join: None,
    }
}

const fn repeated(name: &'static str, default: &'static str, help: &'static str, sep: char) -> Key {
    Key {
        name,
        default,
        help,
        join: Some(sep),
    }
}

pub const GEN_KEYS: &[Key] = &[
    key("users", "2000", "Number of users"),
    key("seed", "0", "Generator seed"),
    key(
        "pmis",
        "0.1",
        "Probability that a block boundary carries a planted misdivision",
    ),
    key("topics", "40", "Number of latent topics"),
    key("items-per-topic", "25", "Items per topic"),
    key(
        "sessions-per-user",
        "8",
        "Blocks before the cutoff (the true session number)",
    ),
    key("test-sessions", "1", "Blocks at or after the cutoff"),
    key("items-per-session", "4", "Events per block"),
    key("topics-per-user", "4", "Topics one user draws blocks from"),
    key("topics-per-category", "4", "Consecutive topics sharing a category id"),
    key("topics-per-shop", "2", "Consecutive topics sharing a shop id"),
    key(
        "cutoff",
        "1600000000",
        "First test block starts at or after this timestamp",
    ),
];

pub const SEGMENT_KEYS: &[Key] = &[
    repeated(
        "gap",
        "600,1800",
        "Time-gap thresholds in seconds; repeatable or comma separated",
        ',',
    ),
    repeated(
        "keys",
        "category;category,shop;category,shop,brand",
        "Attribute key sets; repeatable, or `;` between sets and `,` within one",
        ';',
    ),
];

pub const MODEL_KEYS: &[Key] = &[
    key("epochs", "5", "Training epochs"),
    key("warmup-epochs", "1", "Epochs before the first segmentation pass"),
    key("batch-size", "128", "Samples per optimizer step"),
    key("lr", "0.001", "Adam learning rate"),
    key("seed", "0", "Training seed"),
    key("model", "kast", "Network: kast, pooled or gru-net"),
    key("ass", "on", "Adaptive session segmentation: on or off"),
    key("alpha", "0.5", "Similarity threshold for moving a border item"),
    key("k-depth", "5", "Border items examined per side"),
    key("similarity", "cosine", "cosine or neg-euclidean"),
    key("gap", "1800", "Initial time-gap session threshold in seconds"),
    key(
        "ass-conflict",
        "gain",
        "When both tests fire: gain, backward or forward",
    ),
    key("forward-test", "mirrored", "Forward test form: mirrored or literal"),
    key("kse", "transE", "Structural loss: none, transE, transH or transD"),
    key("gamma", "0.01", "Weight of the structural loss"),
    key("margin", "1", "Hinge margin of the structural loss"),
    key("kse-negatives", "5", "Corrupted triples per positive"),
    key(
        "kse-sign",
        "conventional",
        "Hinge orientation: conventional or reversed",
    ),
    key("kse-batch", "256", "Positive triples per optimizer step"),
    key("corrupt-heads", "false", "Also corrupt triple heads"),
    key("d-model", "24", "Embedding width"),
    key("sn", "8", "Most recent sessions fed to the network"),
    key("hidden", "24", "GRU hidden size"),
    key("mlp", "200,80", "Hidden widths of the output MLP"),
    key("max-session-len", "50", "Longer sessions keep their most recent items"),
    key("max-history", "100", "Item budget of the non-session baselines"),
    key(
        "relations",
        "clicks,category,brand",
        "Relation schema of the knowledge triples",
    ),
    key("history", "session", "History a training target sees: event or session"),
    key("test-negatives", "1", "Sampled negatives per test positive"),
    key(
        "explicit-labels",
        "false",
        "Use logged labels instead of sampled negatives",
    ),
    key("patience", "none", "Stop after this many epochs without test AUC gain"),
    key("execution", "parallel", "parallel or sequential"),
    key(
        "cutoff",
        "1600000000",
        "Train/test split timestamp when no test file is given",
    ),
];

pub const ABLATE_KEYS: &[Key] = &[
    key("suite", "ass", "ass, kse_variants, session_number or k_depth"),
    key("seeds", "0,1,2,3,4", "Comma-separated seeds per configuration"),
];

pub fn env_name(name: &str) -> String {
    format!("KAST_{}", name.replace('-', "_").to_uppercase())
}

pub fn args(keys: &[Key]) -> Vec<Arg> {
    keys.iter()
        .map(|k| {
            let a = Arg::new(k.name)
                .long(k.name)
                .value_name("VALUE")
                .env(env_name(k.name))
                .default_value(k.default)
                .help(k.help);
            if k.join.is_some() {
                a.action(ArgAction::Append)
            } else {
                a
            }
        })
        .collect()
}

fn normalize(key: &str) -> String {
    key.trim().to_lowercase().replace('_', "-")
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected `key = value`", i + 1))?;
        out.insert(normalize(k), v.trim().to_string());
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let map = parse_file(&text)?;
    let known = [GEN_KEYS, SEGMENT_KEYS, MODEL_KEYS, ABLATE_KEYS];
    for k in map.keys() {
        if !known.iter().any(|t| t.iter().any(|x| x.name == k)) {
            bail!("config {}: unknown key `{k}`", path.display());
        }
    }
    Ok(map)
}

/// File values replace built-in defaults only; environment and flags win.
pub fn resolve(m: &ArgMatches, keys: &[Key], file: &BTreeMap<String, String>) -> Settings {
    keys.iter()
        .map(|k| {
            let from_cli: Vec<&String> = m.get_many::<String>(k.name).map(Iterator::collect).unwrap_or_default();
            let sep = k.join.map_or_else(String::new, String::from);
            let value = match (m.value_source(k.name), file.get(k.name)) {
                (Some(ValueSource::DefaultValue) | None, Some(f)) => f.clone(),
                _ => from_cli.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(&sep),
            };
            (k.name.to_string(), value)
        })
        .collect()
}

pub fn get<T: FromStr>(s: &Settings, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = s.get(name).ok_or_else(|| anyhow!("missing setting `{name}`"))?;
    raw.trim()
        .parse()
        .map_err(|e| anyhow!("invalid value `{raw}` for --{name}: {e}"))
}

pub fn get_bool(s: &Settings, name: &str) -> Result<bool> {
    let raw: String = get(s, name)?;
    match raw.to_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => bail!("invalid value `{raw}` for --{name}: expected on or off"),
    }
}

pub fn get_list<T: FromStr>(s: &Settings, name: &str, sep: char) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let raw: String = get(s, name)?;
    raw.split(sep)
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|e| anyhow!("invalid value `{x}` in --{name}: {e}")))
        .collect()
}

pub fn synthetic_spec(s: &Settings) -> Result<SyntheticSpec> {
    Ok(SyntheticSpec {
        users: get(s, "users")?,
        topics: get(s, "topics")?,
        items_per_topic: get(s, "items-per-topic")?,
        sessions_per_user: get(s, "sessions-per-user")?,
        test_sessions: get(s, "test-sessions")?,
        items_per_session: get(s, "items-per-session")?,
        p_mis: get(s, "pmis")?,
        topics_per_user: get(s, "topics-per-user")?,
        topics_per_category: get(s, "topics-per-category")?,
        topics_per_shop: get(s, "topics-per-shop")?,
        cutoff: get(s, "cutoff")?,
        ..SyntheticSpec::default()
    })
}

pub fn key_sets(s: &Settings) -> Result<Vec<Vec<String>>> {
    let sets: Vec<String> = get_list(s, "keys", ';')?;
    if sets.is_empty() {
        bail!("--keys needs at least one key set");
    }
    Ok(sets
        .iter()
        .map(|set| {
            set.split(',')
                .map(|k| k.trim().to_string())
                .filter(|k| !k.is_empty())
                .collect()
        })
        .collect())
}

pub fn train_config(s: &Settings) -> Result<TrainConfig> {
    let mut c = TrainConfig {
        epochs: get(s, "epochs")?,
        warmup_epochs: get(s, "warmup-epochs")?,
        batch_size: get(s, "batch-size")?,
        lr: get(s, "lr")?,
        seed: get(s, "seed")?,
        model: get(s, "model")?,
        ass_on: get_bool(s, "ass")?,
        network: NetworkConfig {
            d_model: get(s, "d-model")?,
            sn: get(s, "sn")?,
            hidden: get(s, "hidden")?,
            mlp: get_list(s, "mlp", ',')?,
            max_session_len: get(s, "max-session-len")?,
            max_history: get(s, "max-history")?,
        },
        relations: get(s, "relations")?,
        history: get(s, "history")?,
        test_negatives: get(s, "test-negatives")?,
        explicit_labels: get_bool(s, "explicit-labels")?,
        execution: get(s, "execution")?,
        ..TrainConfig::default()
    };
    c.ass.alpha = get(s, "alpha")?;
    c.ass.k_depth = get(s, "k-depth")?;
    c.ass.similarity = get(s, "similarity")?;
    c.ass.gap_seconds = get(s, "gap")?;
    c.ass.conflict = get(s, "ass-conflict")?;
    c.ass.forward_test = get(s, "forward-test")?;
    let kse: String = get(s, "kse")?;
    c.kse_on = kse != "none";
    if c.kse_on {
        c.kse.variant = kse
            .parse::<KseVariant>()
            .map_err(|e| anyhow!("invalid value `{kse}` for --kse: {e}"))?;
    }
    c.kse.gamma = get(s, "gamma")?;
    c.kse.margin = get(s, "margin")?;
    c.kse.negatives = get(s, "kse-negatives")?;
    c.kse.sign = get(s, "kse-sign")?;
    c.kse.batch_size = get(s, "kse-batch")?;
    c.kse.corrupt_heads = get_bool(s, "corrupt-heads")?;
    let patience: String = get(s, "patience")?;
    c.patience = match patience.as_str() {
        "none" | "" => None,
        p => Some(
            p.parse()
                .map_err(|e| anyhow!("invalid value `{p}` for --patience: {e}"))?,
        ),
    };
    c.validate()?;
    Ok(c)
}
