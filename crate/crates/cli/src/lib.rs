//! `kast` command line: synthetic data, segmentation analysis, training,
//! evaluation, ablations and manifest replay.

mod commands;
pub mod manifest;
pub mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use kast_core::KastError;

use settings::{ABLATE_KEYS, GEN_KEYS, MODEL_KEYS, SEGMENT_KEYS};

/// Replayed outputs differ from the recorded run.
#[derive(Debug, thiserror::Error)]
#[error("replay differs from the recorded run in: {}", .0.join(", "))]
pub struct ReplayMismatch(pub Vec<String>);

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("PATH")
        .value_parser(value_parser!(PathBuf))
        .help(help)
}

fn data_args(cmd: Command) -> Command {
    cmd.arg(
        path_arg(
            "data",
            "Interaction CSV (training data, or all data when split by --cutoff)",
        )
        .required(true),
    )
    .arg(path_arg("test-data", "Separate test interaction CSV").conflicts_with("cutoff"))
}

pub fn cli() -> Command {
    Command::new("kast")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Session-aware CTR laboratory")
        .after_help(
            "Settings resolve as: built-in default < --config file < KAST_<KEY> environment variable < flag.\n\
             Config files hold `key = value` lines; keys are flag names without the leading dashes.",
        )
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("out-dir")
                .long("out-dir")
                .global(true)
                .env("KAST_OUT_DIR")
                .default_value("kast-out")
                .value_parser(value_parser!(PathBuf))
                .help("Directory for every output file"),
        )
        .arg(path_arg("config", "key = value settings file").global(true))
        .subcommand(
            Command::new("gen-data")
                .about("Generate topic-structured synthetic interactions with planted misdivisions")
                .args(settings::args(GEN_KEYS)),
        )
        .subcommand(
            Command::new("segment-analyze")
                .about("Share of time-gap session boundaries whose neighbours agree on attribute keys")
                .arg(path_arg("data", "Interaction CSV").required(true))
                .args(settings::args(SEGMENT_KEYS)),
        )
        .subcommand(
            data_args(Command::new("train").about("Train a model and export metrics and a checkpoint"))
                .args(settings::args(MODEL_KEYS)),
        )
        .subcommand(
            data_args(Command::new("eval").about("Score test data with a checkpoint"))
                .arg(path_arg("checkpoint", "Checkpoint written by train").required(true))
                .args(settings::args(MODEL_KEYS)),
        )
        .subcommand(
            data_args(Command::new("ablate").about("Train a grid of configurations over several seeds"))
                .args(settings::args(MODEL_KEYS))
                .args(settings::args(ABLATE_KEYS)),
        )
        .subcommand(
            Command::new("replay")
                .about("Re-run a command from its manifest")
                .arg(path_arg("manifest", "manifest.json of an earlier run").required(true))
                .arg(
                    Arg::new("verify")
                        .long("verify")
                        .action(ArgAction::SetTrue)
                        .help("Compare deterministic outputs with the recorded run byte for byte"),
                ),
        )
}

fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ReplayMismatch>() {
            return EXIT_NUMERIC;
        }
        if let Some(KastError::Diverged { .. } | KastError::Tensor(kast_autodiff::TensorError::NonFiniteGradient(_))) =
            cause.downcast_ref::<KastError>()
        {
            return EXIT_NUMERIC;
        }
    }
    EXIT_USAGE
}

pub fn dispatch(m: &ArgMatches) -> anyhow::Result<()> {
    commands::dispatch(m)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let m = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&m) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
