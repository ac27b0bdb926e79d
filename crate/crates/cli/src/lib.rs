//! Command-line experiment runner: `simulate` writes detection events,
//! `analyze` turns them into waiting-time and g² statistics, `reference`
//! evaluates the master-equation curves and `compare` overlays two curves.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{preset, ChannelSelection, ExperimentConfig, ModelKind, PartialConfig, SchemeName, PRESETS};
use crate::error::{CliError, Result};
use crate::manifest::{RunManifest, SIMULATE_MANIFEST};

#[derive(Debug, Parser)]
#[command(name = "wgqed", version, about = "Quantum-jump simulations of qubits driven through a 1D waveguide")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the trajectory ensemble and record every detection.
    Simulate(Shared),
    /// Build WTD, AWTD and g² histograms from a finished simulation.
    Analyze(Shared),
    /// Evaluate steady-state populations, fluxes and g² from the master equation.
    Reference(Shared),
    /// Compare a measured curve file against a reference curve file.
    Compare {
        measured: PathBuf,
        reference: PathBuf,
        /// Fail (exit 4) if any bin deviates by more than this many σ.
        #[arg(long)]
        max_sigma: Option<f64>,
    },
}

/// Options shared by the experiment commands. Flags override the config
/// file or preset, which override the built-in defaults.
#[derive(Debug, Default, Args)]
pub struct Shared {
    #[arg(long, conflicts_with = "config", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    pub preset: Option<String>,
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub gamma2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_im: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub phase_k: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub phase_eg: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub trajectories: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<f64>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeName>,
    #[arg(long, value_enum)]
    pub channel: Option<ChannelSelection>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub tau_max: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl Shared {
    fn flag_layer(&self) -> PartialConfig {
        let mut p = PartialConfig::default();
        let m = &mut p.model;
        m.kind = self.model;
        m.gamma = self.gamma;
        m.gamma2 = self.gamma2;
        m.alpha_re = self.alpha_re;
        m.alpha_im = self.alpha_im;
        m.delta = self.delta;
        m.delta2 = self.delta2;
        m.phase_k = self.phase_k;
        m.phase_eg = self.phase_eg;
        let r = &mut p.run;
        r.dt = self.dt;
        r.t_end = self.t_end;
        r.trajectories = self.trajectories;
        r.seed = self.seed;
        r.burn_in = self.burn_in;
        r.scheme = self.scheme;
        r.workers = self.workers;
        p.stats.channel = self.channel;
        p.stats.bins = self.bins;
        p.stats.tau_max = self.tau_max;
        p.output.dir = self.out.clone();
        p
    }

    /// The preset or config-file layer, if any.
    fn file_layer(&self) -> Result<PartialConfig> {
        match (&self.preset, &self.config) {
            (Some(name), _) => preset(name),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
                PartialConfig::from_toml(&text)
            }
            (None, None) => Ok(PartialConfig::default()),
        }
    }

    /// defaults ← preset or config file ← flags.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        self.file_layer()?.overlay(&self.flag_layer()).resolve()
    }

    /// For `analyze`: the simulation's own configuration is the base layer,
    /// so only statistics settings need to be given again.
    pub fn resolve_over_run(&self) -> Result<ExperimentConfig> {
        let file = self.file_layer()?;
        let flags = self.flag_layer();
        let dir = flags.output.dir.clone().or_else(|| file.output.dir.clone()).unwrap_or_else(|| PathBuf::from("wgqed-out"));
        let run = RunManifest::read(&dir.join(SIMULATE_MANIFEST))?;
        let mut base = PartialConfig::from_toml(&run.config.to_toml())?;
        base.output.dir = Some(dir);
        base.overlay(&file).overlay(&flags).resolve()
    }
}

/// Runs one command and returns the text to print on success.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Simulate(args) => {
            let cfg = args.resolve()?;
            let m = commands::simulate(&cfg, args.preset.as_deref())?;
            Ok(format!(
                "simulated {} trajectories: {} R and {} L detections in {:.1} s -> {}\n",
                m.trajectories_completed,
                m.event_counts.get("R").copied().unwrap_or(0),
                m.event_counts.get("L").copied().unwrap_or(0),
                m.wall_clock_seconds,
                cfg.output.dir.display()
            ))
        }
        Command::Analyze(args) => {
            let cfg = args.resolve_over_run()?;
            commands::analyze(&cfg, args.preset.as_deref()).map(|(_, report)| report)
        }
        Command::Reference(args) => {
            let cfg = args.resolve()?;
            commands::reference(&cfg, args.preset.as_deref()).map(|(_, report)| report)
        }
        Command::Compare { measured, reference, max_sigma } => commands::compare(measured, reference, *max_sigma),
    }
}
