//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! failures while running (including digest mismatches).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::data::{LabelColumn, PartitionDigest};
use crate::error::{Error, Result};
use crate::experiment::{
    emit_metrics, metrics_csv, partition_digests, run_centralized, run_wssl_detailed, DataSource,
    ExperimentConfig, RoundReport, TransportKind,
};
use crate::selection::ImportanceStrategy;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "wssl", version, about = "Weighted sampled split learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train with split learning and importance-weighted client sampling.
    Wssl {
        #[command(flatten)]
        run: RunArgs,
        /// Write the partition digests registered at join time as JSON.
        #[arg(long, value_name = "PATH")]
        digests_out: Option<PathBuf>,
    },
    /// Train the unsplit model on the pooled training data.
    Centralized {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run both and print the final accuracies and their difference.
    Compare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Recompute the client partitions and check them against a digest file.
    VerifyDigests {
        #[command(flatten)]
        run: RunArgs,
        /// Digest file written by `wssl --digests-out` or `--record`.
        #[arg(long, value_name = "PATH")]
        digests: PathBuf,
        /// Write the current digests to `--digests` instead of checking.
        #[arg(long)]
        record: bool,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config file; flags below override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Number of clients.
    #[arg(long, value_name = "N")]
    clients: Option<usize>,
    #[arg(long, value_name = "N")]
    rounds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Clients trained per round after round 0.
    #[arg(long, value_name = "K")]
    clients_per_round: Option<usize>,
    /// `inproc`, `tcp` (any free port) or `tcp:PORT`.
    #[arg(long, value_name = "KIND")]
    transport: Option<String>,
    /// Metrics CSV path. Without it the CSV goes to stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Load rows from a CSV file instead of the configured source.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Label column of `--csv`, by header name or zero-based index.
    #[arg(long, value_name = "COLUMN", default_value = "label", requires = "csv")]
    label_column: String,
    /// `inverse_loss`, `accuracy` or `uniform`.
    #[arg(long, value_name = "STRATEGY")]
    importance: Option<String>,
    /// Keep client halves local instead of broadcasting the average.
    #[arg(long)]
    no_broadcast: bool,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(n) = self.clients {
            cfg.n_clients = n;
        }
        if let Some(r) = self.rounds {
            cfg.rounds = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(k) = self.clients_per_round {
            cfg.clients_per_round = Some(k);
        }
        if let Some(t) = &self.transport {
            cfg.transport = t.parse::<TransportKind>()?;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        if let Some(path) = &self.csv {
            let label_column = match self.label_column.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(self.label_column.clone()),
            };
            cfg.data = DataSource::Csv { path: path.clone(), label_column };
        }
        if let Some(s) = &self.importance {
            cfg.importance = serde_json::from_value::<ImportanceStrategy>(serde_json::Value::String(s.clone()))
                .map_err(|_| Error::Config(format!("importance '{s}': expected inverse_loss, accuracy or uniform")))?;
        }
        if self.no_broadcast {
            cfg.broadcast_global = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Wssl { run, digests_out } => {
            let cfg = run.config()?;
            let result = run_wssl_detailed(&cfg)?;
            if let Some(path) = digests_out {
                write_digests(&path, &result.digests)?;
            }
            write_reports(&cfg, cfg.output.as_deref(), &result.reports)?;
        }
        Command::Centralized { run } => {
            let cfg = run.config()?;
            let reports = run_centralized(&cfg)?;
            write_reports(&cfg, cfg.output.as_deref(), &reports)?;
        }
        Command::Compare { run } => {
            let cfg = run.config()?;
            let split = run_wssl_detailed(&cfg)?.reports;
            let central = run_centralized(&cfg)?;
            if let Some(out) = &cfg.output {
                emit_metrics(&split, out)?;
                emit_metrics(&central, centralized_path(out))?;
            }
            let a = final_accuracy(&split);
            let b = final_accuracy(&central);
            println!("wssl final accuracy:        {a:.4}");
            println!("centralized final accuracy: {b:.4}");
            println!("difference (wssl - centralized): {:+.4}", a - b);
        }
        Command::VerifyDigests { run, digests, record } => {
            let cfg = run.config()?;
            let current = partition_digests(&cfg)?;
            if record {
                write_digests(&digests, &current)?;
                println!("recorded {} partition digests to {}", current.len(), digests.display());
                return Ok(EXIT_OK);
            }
            let expected = read_digests(&digests)?;
            let failing = mismatched_clients(&expected, &current);
            if failing.is_empty() {
                println!("all {} partitions verified", current.len());
            } else {
                for id in &failing {
                    println!("client {id}: partition digest mismatch");
                }
                return Ok(EXIT_RUNTIME);
            }
        }
    }
    Ok(EXIT_OK)
}

fn final_accuracy(reports: &[RoundReport]) -> f64 {
    reports.last().map_or(0.0, |r| r.val_accuracy)
}

fn write_reports(cfg: &ExperimentConfig, out: Option<&Path>, reports: &[RoundReport]) -> Result<()> {
    match out {
        Some(path) => {
            emit_metrics(reports, path)?;
            println!(
                "{} rounds, final accuracy {:.4}, metrics in {}",
                cfg.rounds,
                final_accuracy(reports),
                path.display()
            );
        }
        None => print!("{}", metrics_csv(reports)),
    }
    Ok(())
}

/// `runs/m.csv` -> `runs/m-centralized.csv`.
pub fn centralized_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}-centralized.{}", ext.to_string_lossy()),
        None => format!("{stem}-centralized"),
    };
    out.with_file_name(name)
}

fn write_digests(path: &Path, digests: &[PartitionDigest]) -> Result<()> {
    let json = serde_json::to_string_pretty(digests).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

fn read_digests(path: &Path) -> Result<Vec<PartitionDigest>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Client ids whose recorded digest is missing or differs. A recorded
/// digest for a client that no longer exists also counts.
fn mismatched_clients(expected: &[PartitionDigest], current: &[PartitionDigest]) -> Vec<u32> {
    let mut ids: Vec<u32> = current
        .iter()
        .filter(|c| !expected.iter().any(|e| e == *c))
        .map(|c| c.client_id)
        .chain(
            expected
                .iter()
                .filter(|e| !current.iter().any(|c| c.client_id == e.client_id))
                .map(|e| e.client_id),
        )
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}
