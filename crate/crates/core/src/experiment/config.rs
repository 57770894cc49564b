use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::LabelColumn;
use crate::error::{Error, Result};
use crate::selection::ImportanceStrategy;

/// Where the experiment's rows come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        label_column: LabelColumn,
    },
    Synth {
        n: usize,
        d: usize,
        classes: usize,
        separation: f64,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth {
            n: 2000,
            d: 20,
            classes: 2,
            separation: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TransportKind {
    #[default]
    InProc,
    /// Loopback TCP; port 0 picks a free port.
    Tcp { port: u16 },
}

impl FromStr for TransportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inproc" => Ok(TransportKind::InProc),
            "tcp" => Ok(TransportKind::Tcp { port: 0 }),
            _ => s
                .strip_prefix("tcp:")
                .and_then(|p| p.parse().ok())
                .map(|port| TransportKind::Tcp { port })
                .ok_or_else(|| Error::Config(format!("transport '{s}': expected 'inproc' or 'tcp:<port>'"))),
        }
    }
}

impl TryFrom<String> for TransportKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TransportKind> for String {
    fn from(t: TransportKind) -> String {
        t.to_string()
    }
}

impl fmt::Display for TransportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportKind::InProc => write!(f, "inproc"),
            TransportKind::Tcp { port } => write!(f, "tcp:{port}"),
        }
    }
}

/// Declarative description of one run. Every field has a default, so `{}`
/// is a valid config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Total number of clients.
    pub n_clients: usize,
    /// Communication rounds (one local epoch per selected client each).
    pub rounds: usize,
    pub batch_size: usize,
    pub client_lr: f64,
    pub server_lr: f64,
    /// Replaces the count formula of the selection step when set.
    pub clients_per_round: Option<usize>,
    /// Send the averaged client half to every client at round end.
    pub broadcast_global: bool,
    pub importance: ImportanceStrategy,
    pub transport: TransportKind,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub train_fraction: f64,
    pub shuffle: bool,
    /// Dense widths after the input layer on the client side; the last one
    /// is the cut width.
    pub client_hidden: Vec<usize>,
    /// Hidden Dense widths on the server side, before the output layer.
    pub server_hidden: Vec<usize>,
    /// Fill `wall_ms` in reports. Off by default so metrics files are
    /// reproducible byte for byte.
    pub record_wall_clock: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::default(),
            n_clients: 4,
            rounds: 20,
            batch_size: 128,
            client_lr: 0.05,
            server_lr: 0.05,
            clients_per_round: None,
            broadcast_global: true,
            importance: ImportanceStrategy::InverseLoss,
            transport: TransportKind::InProc,
            seed: 0,
            output: None,
            train_fraction: 0.8,
            shuffle: true,
            client_hidden: vec![16, 8],
            server_hidden: vec![8, 4],
            record_wall_clock: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_clients == 0 {
            return fail("n_clients must be >= 1".into());
        }
        if self.rounds == 0 {
            return fail("rounds must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if let Some(k) = self.clients_per_round {
            if k == 0 || k > self.n_clients {
                return fail(format!(
                    "clients_per_round {k} must be within 1..={}",
                    self.n_clients
                ));
            }
        }
        for (name, lr) in [("client_lr", self.client_lr), ("server_lr", self.server_lr)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return fail(format!("{name} must be a non-negative number, got {lr}"));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail(format!("train_fraction {} not in (0, 1)", self.train_fraction));
        }
        if self.client_hidden.iter().chain(&self.server_hidden).any(|&w| w == 0) {
            return fail("layer widths must be >= 1".into());
        }
        if let DataSource::Synth { n, d, classes, separation } = self.data {
            if classes < 2 || d == 0 || n < classes || separation.is_nan() || separation <= 0.0 {
                return fail(
                    "synthetic data needs classes >= 2, d >= 1, n >= classes, separation > 0".into(),
                );
            }
        }
        Ok(())
    }
}
