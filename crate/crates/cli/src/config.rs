//! Experiment configuration: a partial, layered form (defaults ← preset ←
//! config file ← command-line flags) and the fully resolved form that is
//! validated up front and recorded in every manifest.

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use wgqed::model::{build_one_qubit, build_two_qubit};
use wgqed::stats::BinGeometry;
use wgqed::{Channel, ExchangeTerm, ModelOperators, OneQubitParams, Scheme, TrajectoryConfig, TwoQubitParams, C64};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    OneQubit,
    TwoQubit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum ChannelSelection {
    #[serde(rename = "R")]
    #[value(name = "R")]
    Right,
    #[serde(rename = "L")]
    #[value(name = "L")]
    Left,
    #[serde(rename = "both")]
    #[value(name = "both")]
    Both,
}

impl ChannelSelection {
    pub fn channels(self) -> Vec<Channel> {
        match self {
            ChannelSelection::Right => vec![Channel::Right],
            ChannelSelection::Left => vec![Channel::Left],
            ChannelSelection::Both => Channel::BOTH.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Exp,
    Euler,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Exp => Scheme::Exp,
            SchemeName::Euler => Scheme::Euler,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExchangeName {
    Symmetric,
    AsPrinted,
}

impl From<ExchangeName> for ExchangeTerm {
    fn from(e: ExchangeName) -> Self {
        match e {
            ExchangeName::Symmetric => ExchangeTerm::Symmetric,
            ExchangeName::AsPrinted => ExchangeTerm::AsPrinted,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Wtd,
    Awtd,
    G2,
}

/// Fully resolved configuration. Every field is concrete; this is the form
/// written to manifests and it re-parses to itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub run: RunConfig,
    pub stats: StatsConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub gamma: f64,
    pub gamma2: f64,
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub delta: f64,
    pub delta2: f64,
    pub phase_k: f64,
    pub phase_eg1: f64,
    pub phase_eg2: f64,
    pub exchange: ExchangeName,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dt: f64,
    pub t_end: f64,
    pub trajectories: u64,
    pub seed: u64,
    pub burn_in: f64,
    pub scheme: SchemeName,
    /// Worker threads; 0 uses every available core. Never affects output.
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    pub channel: ChannelSelection,
    /// WTD bins over τ/τ̄ ∈ [0, tau_max].
    pub bins: usize,
    pub tau_max: f64,
    /// AWTD bins per axis over [0, awtd_tau_max]² in units of τ̄.
    pub awtd_bins: usize,
    pub awtd_tau_max: f64,
    /// Histogram g² bin width and range, in units of 1/Γ.
    pub g2_bin_width: f64,
    pub g2_tau_max: f64,
    pub outputs: Vec<OutputKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

/// Sparse configuration layer as read from a file or built from flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    #[serde(default)]
    pub model: PartialModel,
    #[serde(default)]
    pub run: PartialRun,
    #[serde(default)]
    pub stats: PartialStats,
    #[serde(default)]
    pub output: PartialOutput,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialModel {
    pub kind: Option<ModelKind>,
    pub gamma: Option<f64>,
    pub gamma2: Option<f64>,
    pub alpha_re: Option<f64>,
    pub alpha_im: Option<f64>,
    pub delta: Option<f64>,
    pub delta2: Option<f64>,
    pub phase_k: Option<f64>,
    /// Sets both emission phases.
    pub phase_eg: Option<f64>,
    pub phase_eg1: Option<f64>,
    pub phase_eg2: Option<f64>,
    /// Propagation delay Δt; derives `phase_egᵢ = phase_k + δᵢ·Δt`.
    pub delay: Option<f64>,
    pub exchange: Option<ExchangeName>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialRun {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub trajectories: Option<u64>,
    pub seed: Option<u64>,
    pub burn_in: Option<f64>,
    pub scheme: Option<SchemeName>,
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialStats {
    pub channel: Option<ChannelSelection>,
    pub bins: Option<usize>,
    pub tau_max: Option<f64>,
    pub awtd_bins: Option<usize>,
    pub awtd_tau_max: Option<f64>,
    pub g2_bin_width: Option<f64>,
    pub g2_tau_max: Option<f64>,
    pub outputs: Option<Vec<OutputKind>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialOutput {
    pub dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr; $($field:ident),+ $(,)?) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )+
    };
}

impl PartialConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Values present in `top` win.
    pub fn overlay(mut self, top: &PartialConfig) -> Self {
        let (m, t) = (&mut self.model, &top.model);
        overlay!(m, t; kind, gamma, gamma2, alpha_re, alpha_im, delta, delta2, phase_k, phase_eg, phase_eg1, phase_eg2, delay, exchange);
        // A later layer that sets a phase rule replaces the earlier rule.
        if t.phase_eg.is_some() || t.delay.is_some() {
            if t.phase_eg1.is_none() {
                m.phase_eg1 = None;
            }
            if t.phase_eg2.is_none() {
                m.phase_eg2 = None;
            }
            if t.phase_eg.is_none() {
                m.phase_eg = None;
            }
            if t.delay.is_none() {
                m.delay = None;
            }
        }
        let (r, t) = (&mut self.run, &top.run);
        overlay!(r, t; dt, t_end, trajectories, seed, burn_in, scheme, workers);
        let (s, t) = (&mut self.stats, &top.stats);
        overlay!(s, t; channel, bins, tau_max, awtd_bins, awtd_tau_max, g2_bin_width, g2_tau_max, outputs);
        overlay!(self.output, top.output; dir);
        self
    }

    /// Fills defaults and checks every downstream precondition.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let m = &self.model;
        let kind = m.kind.unwrap_or(ModelKind::OneQubit);
        let gamma = m.gamma.unwrap_or(1.0);
        let delta = m.delta.unwrap_or(0.0);
        let delta2 = m.delta2.unwrap_or(delta);
        let phase_k = m.phase_k.unwrap_or(0.0);
        if m.phase_eg.is_some() && m.delay.is_some() {
            return Err(CliError::Validation("phase_eg and delay are mutually exclusive".into()));
        }
        let derived = |d: f64| match (m.phase_eg, m.delay) {
            (Some(p), _) => p,
            (None, Some(dt)) => phase_k + d * dt,
            (None, None) => phase_k,
        };
        let model = ModelConfig {
            kind,
            gamma,
            gamma2: m.gamma2.unwrap_or(gamma),
            alpha_re: m.alpha_re.unwrap_or(1.0),
            alpha_im: m.alpha_im.unwrap_or(0.0),
            delta,
            delta2,
            phase_k,
            phase_eg1: m.phase_eg1.unwrap_or_else(|| derived(delta)),
            phase_eg2: m.phase_eg2.unwrap_or_else(|| derived(delta2)),
            exchange: m.exchange.unwrap_or(ExchangeName::Symmetric),
        };
        let ops = model.build()?;
        let r = &self.run;
        let slowest = model.slowest_decay();
        let run = RunConfig {
            dt: r.dt.unwrap_or_else(|| ops.max_dt()),
            t_end: r.t_end.unwrap_or(2.0e4 / slowest),
            trajectories: r.trajectories.unwrap_or(100),
            seed: r.seed.unwrap_or(1),
            burn_in: r.burn_in.unwrap_or(10.0 / slowest),
            scheme: r.scheme.unwrap_or(SchemeName::Exp),
            workers: r.workers.unwrap_or(0),
        };
        let s = &self.stats;
        let mut outputs = s.outputs.clone().unwrap_or_else(|| vec![OutputKind::Wtd, OutputKind::Awtd, OutputKind::G2]);
        outputs.sort();
        outputs.dedup();
        let stats = StatsConfig {
            channel: s.channel.unwrap_or(ChannelSelection::Both),
            bins: s.bins.unwrap_or(100),
            tau_max: s.tau_max.unwrap_or(4.0),
            awtd_bins: s.awtd_bins.unwrap_or(60),
            awtd_tau_max: s.awtd_tau_max.unwrap_or(3.0),
            g2_bin_width: s.g2_bin_width.unwrap_or(0.1 / slowest),
            g2_tau_max: s.g2_tau_max.unwrap_or(10.0 / slowest),
            outputs,
        };
        let output = OutputConfig { dir: self.output.dir.clone().unwrap_or_else(|| PathBuf::from("wgqed-out")) };
        let cfg = ExperimentConfig { model, run, stats, output };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ModelConfig {
    pub fn alpha(&self) -> C64 {
        C64::new(self.alpha_re, self.alpha_im)
    }

    fn slowest_decay(&self) -> f64 {
        match self.kind {
            ModelKind::OneQubit => self.gamma,
            ModelKind::TwoQubit => [self.gamma, self.gamma2].into_iter().filter(|g| *g > 0.0).fold(f64::INFINITY, f64::min),
        }
        .max(f64::MIN_POSITIVE)
    }

    pub fn build(&self) -> Result<ModelOperators> {
        match self.kind {
            ModelKind::OneQubit => {
                let p = OneQubitParams::new(self.gamma, self.alpha(), self.delta).map_err(CliError::validation)?;
                build_one_qubit(&p).map_err(CliError::validation)
            }
            ModelKind::TwoQubit => {
                let p = TwoQubitParams {
                    gamma1: self.gamma,
                    gamma2: self.gamma2,
                    alpha: self.alpha(),
                    delta1: self.delta,
                    delta2: self.delta2,
                    phase_k: self.phase_k,
                    phase_eg1: self.phase_eg1,
                    phase_eg2: self.phase_eg2,
                    exchange: self.exchange.into(),
                };
                p.validate().map_err(CliError::validation)?;
                build_two_qubit(&p).map_err(CliError::validation)
            }
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("resolved config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config is always serializable")
    }

    pub fn trajectory_config(&self) -> TrajectoryConfig {
        TrajectoryConfig { scheme: self.run.scheme.into(), ..TrajectoryConfig::new(self.run.dt, self.run.t_end, self.run.seed) }
    }

    pub fn g2_geometry(&self) -> Result<BinGeometry> {
        let s = &self.stats;
        let base = BinGeometry::snapped(s.g2_bin_width, 1, self.run.dt).map_err(CliError::statistics)?;
        let n = (s.g2_tau_max / base.bin_width()).round().max(1.0) as usize;
        BinGeometry::new(self.run.dt, base.steps_per_bin, n).map_err(CliError::validation)
    }

    /// Checks every precondition of the engine and the estimators.
    pub fn validate(&self) -> Result<()> {
        let ops = self.model.build()?;
        self.trajectory_config().validate(&ops).map_err(CliError::validation)?;
        let (r, s) = (&self.run, &self.stats);
        let fail = |msg: String| Err(CliError::Validation(msg));
        if r.trajectories == 0 {
            return fail("at least one trajectory is required".into());
        }
        if r.seed > i64::MAX as u64 {
            return fail(format!("seed must be at most {}", i64::MAX));
        }
        if !(r.burn_in >= 0.0 && r.burn_in < r.t_end) {
            return fail(format!("burn_in must lie in [0, t_end), got {}", r.burn_in));
        }
        if s.bins == 0 || s.awtd_bins == 0 {
            return fail("bin counts must be positive".into());
        }
        for (name, v) in [("tau_max", s.tau_max), ("awtd_tau_max", s.awtd_tau_max), ("g2_tau_max", s.g2_tau_max), ("g2_bin_width", s.g2_bin_width)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        let g2 = self.g2_geometry()?;
        if s.outputs.contains(&OutputKind::G2) && r.burn_in + g2.range() >= r.t_end {
            return fail("t_end must exceed burn_in + g2_tau_max".into());
        }
        Ok(())
    }
}

/// Paper presets. Only the parameters the figures state are pinned here;
/// everything else comes from the defaults and is recorded in manifests.
pub fn preset(name: &str) -> Result<PartialConfig> {
    let mut p = PartialConfig::default();
    p.model.gamma = Some(1.0);
    p.model.alpha_re = Some(1.0);
    p.model.alpha_im = Some(0.0);
    p.model.delta = Some(0.0);
    match name {
        "fig2" => {
            p.model.kind = Some(ModelKind::OneQubit);
            p.stats.channel = Some(ChannelSelection::Right);
            p.stats.outputs = Some(vec![OutputKind::G2]);
        }
        "fig3" => {
            p.model.kind = Some(ModelKind::OneQubit);
            p.stats.channel = Some(ChannelSelection::Both);
            p.stats.outputs = Some(vec![OutputKind::Wtd]);
        }
        "fig4" => {
            p.model.kind = Some(ModelKind::TwoQubit);
            p.model.delta2 = Some(0.0);
            p.model.phase_k = Some(FRAC_PI_2);
            p.model.phase_eg = Some(FRAC_PI_2);
            p.stats.channel = Some(ChannelSelection::Left);
            p.stats.outputs = Some(vec![OutputKind::Wtd, OutputKind::Awtd, OutputKind::G2]);
        }
        "fig5" => {
            p.model.kind = Some(ModelKind::OneQubit);
            p.stats.channel = Some(ChannelSelection::Both);
            p.stats.outputs = Some(vec![OutputKind::G2]);
        }
        other => return Err(CliError::Validation(format!("unknown preset '{other}' (expected fig2, fig3, fig4 or fig5)"))),
    }
    Ok(p)
}

pub const PRESETS: [&str; 4] = ["fig2", "fig3", "fig4", "fig5"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_and_round_trip() {
        let cfg = PartialConfig::default().resolve().unwrap();
        assert_eq!(cfg.run.dt, 0.01);
        assert_eq!(cfg.run.burn_in, 10.0);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        // The resolved form is also a valid partial layer resolving to itself.
        assert_eq!(PartialConfig::from_toml(&cfg.to_toml()).unwrap().resolve().unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PartialConfig::from_toml("[model]\ngama = 1.0\n").is_err());
        assert!(PartialConfig::from_toml("[runs]\n").is_err());
    }

    #[test]
    fn later_layers_win() {
        let file = PartialConfig::from_toml("[model]\ngamma = 2.0\n[run]\nseed = 5\n").unwrap();
        let mut flags = PartialConfig::default();
        flags.run.seed = Some(9);
        let cfg = preset("fig3").unwrap().overlay(&file).overlay(&flags).resolve().unwrap();
        assert_eq!(cfg.model.gamma, 2.0);
        assert_eq!(cfg.run.seed, 9);
        assert_eq!(cfg.run.burn_in, 5.0);
    }

    #[test]
    fn fig4_pins_the_quarter_wavelength_geometry() {
        let cfg = preset("fig4").unwrap().resolve().unwrap();
        assert_eq!(cfg.model.kind, ModelKind::TwoQubit);
        assert_eq!((cfg.model.phase_k, cfg.model.phase_eg1, cfg.model.phase_eg2), (FRAC_PI_2, FRAC_PI_2, FRAC_PI_2));
        assert_eq!(cfg.stats.channel, ChannelSelection::Left);
    }

    #[test]
    fn delay_derives_emission_phases() {
        let cfg = PartialConfig::from_toml("[model]\nkind = \"two-qubit\"\nphase_k = 1.0\ndelta = 0.5\ndelta2 = -0.5\ndelay = 2.0\n")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!((cfg.model.phase_eg1, cfg.model.phase_eg2), (2.0, 0.0));
        assert!(PartialConfig::from_toml("[model]\nphase_eg = 1.0\ndelay = 2.0\n").unwrap().resolve().is_err());
    }

    #[test]
    fn invalid_settings_fail_before_any_work() {
        for text in ["[run]\ndt = 0.5\n", "[run]\ntrajectories = 0\n", "[run]\nburn_in = 1e9\n", "[model]\ngamma = -1.0\n", "[stats]\ng2_bin_width = 0.001\n"] {
            let err = PartialConfig::from_toml(text).unwrap().resolve().unwrap_err();
            assert!(matches!(err, CliError::Validation(_)), "{text}: {err}");
        }
        assert!(preset("fig9").is_err());
    }
}
