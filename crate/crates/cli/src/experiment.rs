//! Experiment description, argument parsing and the result envelope.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands;
use crate::error::{CliError, CliResult};
use crate::output::{to_json, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    /// Monte Carlo distance between the network and its mean-field approximation.
    Simulate,
    /// Error rates, constants and the resulting bound.
    Rates,
    /// Checks the simulated distance against the bound; exit 3 on FAIL.
    Certify,
    /// Rates along a network family indexed by size.
    ChaosSweep,
    /// One preferential-attachment graph with its degree history.
    Pagen,
    /// Maximum-degree exponents fitted over independent seeds.
    Pafit,
    /// Cumulant values along a family, with Cesàro averages.
    LdpLambda,
    /// Normalized tail probabilities along a family.
    LdpTail,
    /// Distance vs size for McKean's model.
    MckeanSweep,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Rates => "rates",
            Kind::Certify => "certify",
            Kind::ChaosSweep => "chaos-sweep",
            Kind::Pagen => "pagen",
            Kind::Pafit => "pafit",
            Kind::LdpLambda => "ldp-lambda",
            Kind::LdpTail => "ldp-tail",
            Kind::MckeanSweep => "mckean-sweep",
        }
    }
}

/// Built-in network families for size sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Mckean,
    Classex,
    Sparse,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Mckean => "mckean",
            Family::Classex => "classex",
            Family::Sparse => "sparse",
        }
    }
}

/// Command line of the `pmfs` tool.
#[derive(Debug, Parser)]
#[command(name = "pmfs", version, about = "Mean-field approximation experiments for networks of linear SDEs")]
pub struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    pub kind: Kind,
    /// TOML file with the network, `[pa]` or `[ldp]` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; every random stream derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "pmfs-out")]
    pub out: PathBuf,
    /// Comma-separated, strictly increasing sizes.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    /// Monte Carlo paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Time steps (or growth steps for `pagen`).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Time horizon.
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    /// Network family for sweeps.
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Exceedance level for `ldp-tail`.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Independent graphs for `pafit`.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Recorded trajectories for `simulate`.
    #[arg(long, default_value_t = 0)]
    pub traces: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub kind: Kind,
    pub config: Option<PathBuf>,
    pub n_grid: Option<Vec<usize>>,
    pub seed: u64,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub horizon: f64,
    pub family: Option<Family>,
    pub eps: Option<f64>,
    pub replicates: Option<usize>,
    pub traces: usize,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl From<Args> for ExperimentSpec {
    fn from(a: Args) -> Self {
        Self {
            kind: a.kind,
            config: a.config,
            n_grid: a.n_grid,
            seed: a.seed,
            paths: a.paths,
            steps: a.steps,
            horizon: a.horizon,
            family: a.family,
            eps: a.eps,
            replicates: a.replicates,
            traces: a.traces,
            threads: a.threads,
            out: a.out,
        }
    }
}

impl ExperimentSpec {
    pub fn new(kind: Kind, out: impl Into<PathBuf>) -> Self {
        Self {
            kind,
            config: None,
            n_grid: None,
            seed: 0,
            paths: None,
            steps: None,
            horizon: 1.0,
            family: None,
            eps: None,
            replicates: None,
            traces: 0,
            threads: None,
            out: out.into(),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if let Some(p) = &self.config {
            if !p.is_file() {
                return bad(format!("config file {} does not exist", p.display()));
            }
        }
        if let Some(g) = &self.n_grid {
            if g.is_empty() || g.contains(&0) {
                return bad("--n-grid needs positive sizes".into());
            }
            if g.windows(2).any(|w| w[0] >= w[1]) {
                return bad("--n-grid must be strictly increasing".into());
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("--horizon {} must be positive", self.horizon));
        }
        if self.paths == Some(0) || self.steps == Some(0) || self.threads == Some(0) || self.replicates == Some(0) {
            return bad("--paths, --steps, --threads and --replicates must be >= 1".into());
        }
        Ok(())
    }

    pub fn grid_or(&self, default: &[usize]) -> Vec<usize> {
        self.n_grid.clone().unwrap_or_else(|| default.to_vec())
    }
}

/// What a command produced: the payload plus plot tables.
#[derive(Debug)]
pub struct Outcome {
    pub payload: Value,
    pub tables: Vec<Table>,
    /// One-line human summary.
    pub summary: String,
    pub exit_code: u8,
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

/// Result files written by [`run`].
#[derive(Debug)]
pub struct RunReport {
    pub outcome: Outcome,
    pub payload_path: PathBuf,
    pub envelope_path: PathBuf,
}

/// Validates, runs the experiment on a pool of `threads` workers, and writes
/// `payload.json`, `envelope.json` and the plot tables into `spec.out`.
pub fn run(spec: &ExperimentSpec) -> CliResult<RunReport> {
    spec.validate()?;
    let started = unix_ms();
    let outcome = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t).build()?.install(|| commands::dispatch(spec))?,
        None => commands::dispatch(spec)?,
    };
    let finished = unix_ms();
    std::fs::create_dir_all(&spec.out)?;
    let payload_path = spec.out.join("payload.json");
    std::fs::write(&payload_path, to_json(&outcome.payload))?;
    for t in &outcome.tables {
        t.write(&spec.out)?;
    }
    let envelope = json!({
        "tool": "pmfs",
        "version": env!("CARGO_PKG_VERSION"),
        "kind": spec.kind.name(),
        "spec": serde_json::to_value(spec)?,
        "master_seed": spec.seed,
        "threads": spec.threads,
        "started_unix_ms": started as u64,
        "finished_unix_ms": finished as u64,
        "files": outcome.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
        "payload": outcome.payload,
    });
    let envelope_path = spec.out.join("envelope.json");
    std::fs::write(&envelope_path, to_json(&envelope))?;
    Ok(RunReport { outcome, payload_path, envelope_path })
}

/// Reads a config file, mapping I/O failures to config errors.
pub(crate) fn read_config(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
