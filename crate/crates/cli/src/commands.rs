//! The four subcommands. Each validates its whole configuration before doing
//! any work and writes its manifest last.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use wgqed::master::{g2_from_state, steady_state, uniform_grid, CorrelationCurve, SteadyFluxes};
use wgqed::stats::{awtd, bound_violations, compare_to_reference, g2_histogram, waiting_times, wtd, ObservationWindow};
use wgqed::trajectory::stream_ensemble;
use wgqed::{Channel, DetectionEvent, Engine, ModelOperators, StateVector};

use crate::config::{ExperimentConfig, ModelKind, OutputKind};
use crate::error::{CliError, Result};
use crate::io::{num, read_events, sha256_file, write_event, HashingWriter, Table, EVENTS_FILE};
use crate::manifest::{Failure, RunManifest, Status, ANALYZE_MANIFEST, REFERENCE_MANIFEST, SIMULATE_MANIFEST};

/// Trajectories computed per parallel batch before their events are flushed.
const STREAM_CHUNK: usize = 32;

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start {workers} workers: {e}")))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))
}

fn remove_if_present(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(CliError::io(format!("removing {}", path.display()))(e)),
        _ => Ok(()),
    }
}

fn provenance(cfg: &ExperimentConfig, preset: Option<&str>) -> Vec<String> {
    let m = &cfg.model;
    let mut lines = vec![
        crate::manifest::tool_version(),
        format!("preset: {}", preset.unwrap_or("none")),
        format!(
            "model: {:?} gamma={} gamma2={} alpha={}{:+}i delta={} delta2={} phase_k={} phase_eg1={} phase_eg2={} exchange={:?}",
            m.kind, m.gamma, m.gamma2, m.alpha_re, m.alpha_im, m.delta, m.delta2, m.phase_k, m.phase_eg1, m.phase_eg2, m.exchange
        ),
        format!(
            "run: dt={} t_end={} trajectories={} seed={} burn_in={} scheme={:?}",
            cfg.run.dt, cfg.run.t_end, cfg.run.trajectories, cfg.run.seed, cfg.run.burn_in, cfg.run.scheme
        ),
    ];
    lines.push(format!("rng: {}", wgqed::rng::RNG_ALGORITHM));
    lines
}

/// Runs the ensemble and streams events to `events.tsv`.
pub fn simulate(cfg: &ExperimentConfig, preset: Option<&str>) -> Result<RunManifest> {
    let start = Instant::now();
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    remove_if_present(&dir.join(SIMULATE_MANIFEST))?;
    let ops = cfg.model.build()?;
    let engine = Engine::new(&ops, cfg.trajectory_config()).map_err(CliError::validation)?;
    let psi0 = StateVector::ground(ops.dim());
    let mut manifest = RunManifest::new("simulate", preset, cfg);
    let mut writer = HashingWriter::create(&dir.join(EVENTS_FILE))?;
    let (mut right, mut left, mut done) = (0u64, 0u64, 0u64);
    let outcome = pool(cfg.run.workers)?.install(|| {
        stream_ensemble::<CliError>(&engine, 0..cfg.run.trajectories, STREAM_CHUNK, &psi0, |rec| {
            for e in &rec.events {
                write_event(&mut writer, e).map_err(CliError::io("writing events"))?;
                match e.channel {
                    Channel::Right => right += 1,
                    Channel::Left => left += 1,
                }
            }
            done += 1;
            Ok(())
        })
    });
    manifest.files.insert(EVENTS_FILE.into(), writer.finish()?);
    manifest.event_counts.insert("R".into(), right);
    manifest.event_counts.insert("L".into(), left);
    manifest.trajectories_completed = done;
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    if let Err(CliError::Engine { message, trajectory }) = &outcome {
        manifest.status = Status::Failed;
        manifest.failure = Some(Failure { message: message.clone(), trajectory: *trajectory });
    }
    manifest.write(dir, SIMULATE_MANIFEST)?;
    outcome.map(|_| manifest)
}

/// Loads the simulate manifest of `cfg.output.dir` and checks that the
/// events on disk belong to it and to the model and run settings of `cfg`.
pub fn load_run(cfg: &ExperimentConfig) -> Result<(RunManifest, Vec<DetectionEvent>)> {
    let dir = &cfg.output.dir;
    let manifest = RunManifest::read(&dir.join(SIMULATE_MANIFEST))?;
    if manifest.status != Status::Ok {
        return Err(CliError::Stale(format!("simulation in {} did not complete", dir.display())));
    }
    if manifest.config.model != cfg.model || manifest.config.run.with_workers(0) != cfg.run.with_workers(0) {
        return Err(CliError::Stale("model or run settings differ from the manifest".into()));
    }
    let path = dir.join(EVENTS_FILE);
    let actual = sha256_file(&path)?;
    if manifest.files.get(EVENTS_FILE) != Some(&actual) {
        return Err(CliError::Stale(format!("{} does not match its manifest checksum", path.display())));
    }
    let events = read_events(&path)?;
    Ok((manifest, events))
}

impl crate::config::RunConfig {
    fn with_workers(&self, workers: usize) -> Self {
        Self { workers, ..self.clone() }
    }
}

/// Master-equation g² on a grid of step `dt` up to `tau_max`.
fn master_g2(ops: &ModelOperators, cfg: &ExperimentConfig, ch: Channel, tau_max: f64) -> Result<CorrelationCurve> {
    let rho = steady_state(&ops.generator).map_err(CliError::statistics)?;
    let taus = uniform_grid(tau_max, cfg.run.dt);
    g2_from_state(&ops.generator, ch, ops.jump(ch), &rho, &taus, cfg.run.dt).map_err(CliError::statistics)
}

fn curve_table(comments: Vec<String>, curve: &CorrelationCurve) -> Table {
    let with_err = curve.stderr.is_some();
    let mut t = Table::new(comments, if with_err { &["tau", "value", "stderr", "source"] } else { &["tau", "g2", "source"] });
    for (i, (&tau, &v)) in curve.taus.iter().zip(&curve.values).enumerate() {
        let mut row = vec![num(tau), num(v)];
        if let Some(s) = &curve.stderr {
            row.push(num(s[i]));
        }
        row.push(curve.source.to_string());
        t.push(row);
    }
    t
}

/// Computes the requested statistics from a finished simulation.
pub fn analyze(cfg: &ExperimentConfig, preset: Option<&str>) -> Result<(RunManifest, String)> {
    let start = Instant::now();
    let (run, events) = load_run(cfg)?;
    let dir = &cfg.output.dir;
    remove_if_present(&dir.join(ANALYZE_MANIFEST))?;
    let ops = cfg.model.build()?;
    let dt = cfg.run.dt;
    let s = &cfg.stats;
    let mut manifest = RunManifest::new("analyze", preset, cfg);
    manifest.files.insert(EVENTS_FILE.into(), run.files[EVENTS_FILE].clone());
    manifest.event_counts = run.event_counts.clone();
    manifest.trajectories_completed = run.trajectories_completed;
    let mut report = String::new();
    for ch in s.channel.channels() {
        let series = waiting_times(&events, ch, cfg.run.burn_in, dt).map_err(CliError::statistics)?;
        let mut head = provenance(cfg, preset);
        head.push(format!("channel: {ch}"));
        head.push(format!("waits: {}", series.len()));
        let mut wtd_curve = None;
        if s.outputs.contains(&OutputKind::Wtd) {
            let h = wtd(&series, s.bins, s.tau_max).map_err(CliError::statistics)?;
            let mut c = head.clone();
            c.push(format!("tau_bar: {}", num(h.mean_wait().unwrap_or(0.0))));
            c.push(format!("bins: n={} width={} dt={} (right-closed, tau scaled by tau_bar)", h.geometry.n_bins, num(h.bin_width()), dt));
            c.push(format!("overflow: {} of {}", h.overflow, h.total_samples));
            let mut t = Table::new(c, &["tau_scaled", "density", "stderr"]);
            for ((x, d), e) in h.centers().iter().zip(h.density()).zip(h.stderr()) {
                t.push(vec![num(*x), num(d), num(e)]);
            }
            let name = format!("wtd_{ch}.csv");
            manifest.files.insert(name.clone(), t.write(&dir.join(&name))?);
            writeln!(report, "{ch}: {} waits, tau_bar = {:.6}", series.len(), h.mean_wait().unwrap_or(0.0)).ok();
            wtd_curve = Some(h.to_curve(ch));
        }
        if s.outputs.contains(&OutputKind::Awtd) {
            let h = awtd(&series, s.awtd_bins, s.awtd_tau_max).map_err(CliError::statistics)?;
            let mut c = head.clone();
            c.push(format!("tau_bar: {}", num(h.mean_wait().unwrap_or(0.0))));
            c.push(format!("bins: {n}x{n} width={} dt={} (tau scaled by tau_bar)", num(h.geometry.bin_width()), dt, n = h.n_bins()));
            let mut t = Table::new(c, &["tau1", "tau2", "density"]);
            let (x, d) = (h.centers(), h.density());
            for i in 0..h.n_bins() {
                for j in 0..h.n_bins() {
                    t.push(vec![num(x[i]), num(x[j]), num(d[i * h.n_bins() + j])]);
                }
            }
            let name = format!("awtd_{ch}.csv");
            manifest.files.insert(name.clone(), t.write(&dir.join(&name))?);
        }
        if s.outputs.contains(&OutputKind::G2) {
            let geometry = cfg.g2_geometry()?;
            let window = ObservationWindow { burn_in: cfg.run.burn_in, t_end: cfg.run.t_end, n_trajectories: cfg.run.trajectories };
            let hist = g2_histogram(&events, ch, geometry, window).map_err(CliError::statistics)?;
            let reference = master_g2(&ops, cfg, ch, geometry.range())?;
            let cmp = compare_to_reference(&hist, &reference).map_err(CliError::statistics)?;
            let mut c = head.clone();
            c.push(format!("bin_width: {}", num(geometry.bin_width())));
            c.push(format!("bins: n={} dt={} (right-closed)", geometry.n_bins, dt));
            let name = format!("g2_hist_{ch}.csv");
            manifest.files.insert(name.clone(), curve_table(c, &hist).write(&dir.join(&name))?);
            let name = format!("g2_master_{ch}.csv");
            manifest.files.insert(name.clone(), curve_table(head.clone(), &reference).write(&dir.join(&name))?);
            writeln!(
                report,
                "{ch}: g2 histogram vs master: {:.1}% of bins within 3 sigma, max |z| = {:.2}",
                100.0 * cmp.fraction_within(3.0),
                cmp.max_abs_z()
            )
            .ok();
            if let Some(w) = &wtd_curve {
                // W ≤ g²: compare the WTD against the bin-averaged reference on its own grid.
                let upper = wgqed::stats::bin_average(&reference, w).map_err(CliError::statistics)?;
                let covered = w.taus.iter().filter(|&&t| t + w.bin_width.unwrap_or(0.0) / 2.0 <= geometry.range()).count();
                let lower = CorrelationCurve { taus: w.taus[..covered].to_vec(), values: w.values[..covered].to_vec(), stderr: w.stderr.as_ref().map(|e| e[..covered].to_vec()), ..w.clone() };
                let upper = CorrelationCurve { taus: upper.taus[..covered].to_vec(), values: upper.values[..covered].to_vec(), ..upper };
                let v = bound_violations(&lower, &upper, 3.0).map_err(CliError::statistics)?;
                writeln!(report, "{ch}: W <= g2 violated beyond 3 sigma in {} of {covered} bins", v.len()).ok();
            }
        }
    }
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(dir, ANALYZE_MANIFEST)?;
    Ok((manifest, report))
}

/// Master-equation steady state and g² curves.
pub fn reference(cfg: &ExperimentConfig, preset: Option<&str>) -> Result<(RunManifest, String)> {
    let start = Instant::now();
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    remove_if_present(&dir.join(REFERENCE_MANIFEST))?;
    let ops = cfg.model.build()?;
    let rho = steady_state(&ops.generator).map_err(CliError::statistics)?;
    let fluxes = SteadyFluxes::of(&ops, &rho);
    let mut manifest = RunManifest::new("reference", preset, cfg);
    let head = provenance(cfg, preset);

    let mut summary = Table::new(head.clone(), &["quantity", "value"]);
    let labels: &[&str] = if ops.dim() == 2 { &["population_g", "population_e"] } else { &["population_gg", "population_ge", "population_eg", "population_ee"] };
    for (label, p) in labels.iter().zip(rho.populations()) {
        summary.push(vec![label.to_string(), num(p)]);
    }
    summary.push(vec!["flux_R".into(), num(fluxes.right)]);
    summary.push(vec!["flux_L".into(), num(fluxes.left)]);
    summary.push(vec!["flux_in".into(), num(fluxes.input)]);
    summary.push(vec!["flux_residual".into(), num(fluxes.conservation_residual())]);
    manifest.files.insert("reference_summary.csv".into(), summary.write(&dir.join("reference_summary.csv"))?);

    let mut report = String::new();
    writeln!(report, "flux R = {:.9}, L = {:.9}, input = {:.9}", fluxes.right, fluxes.left, fluxes.input).ok();
    writeln!(report, "flux residual = {:.3e}", fluxes.conservation_residual()).ok();
    for ch in cfg.stats.channel.channels() {
        let curve = match master_g2(&ops, cfg, ch, cfg.stats.g2_tau_max) {
            Ok(c) => c,
            Err(e) => {
                // A dark channel has no g²; the summary is still valid.
                writeln!(report, "warning: {ch}: {e}; no g2 curve written").ok();
                continue;
            }
        };
        let mut t = curve_table(head.clone(), &curve);
        if cfg.model.kind == ModelKind::OneQubit && ch == Channel::Right {
            // Overlay column: exp[−τ(Γ/2 + n̄)].
            let rate = cfg.model.gamma / 2.0 + cfg.model.alpha().norm_sqr() / (2.0 * PI);
            t.columns.insert(2, "analytic".into());
            let g0 = curve.values[0];
            for (row, &tau) in t.rows.iter_mut().zip(&curve.taus) {
                row.insert(2, num(g0 * (-rate * tau).exp()));
            }
            t.comments.push(format!("analytic: g2(0)*exp(-tau*(gamma/2+nbar)), rate={}", num(rate)));
        }
        let name = format!("g2_master_{ch}.csv");
        manifest.files.insert(name.clone(), t.write(&dir.join(&name))?);
        writeln!(report, "{ch}: g2(0) = {:.6}", curve.values[0]).ok();
    }
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(dir, REFERENCE_MANIFEST)?;
    Ok((manifest, report))
}

/// Reads a g² or WTD curve written by `analyze` or `reference`.
pub fn read_curve(path: &Path) -> Result<CorrelationCurve> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    let t = Table::parse(&text)?;
    let bad = |what: &str| CliError::Stale(format!("{}: {what}", path.display()));
    let tau = t.column("tau").ok_or_else(|| bad("no tau column"))?;
    let value = t.column("value").or_else(|| t.column("g2")).ok_or_else(|| bad("no value column"))?;
    let channel = t.comment_value("channel").and_then(|c| c.parse().ok()).unwrap_or(Channel::Right);
    let source = if t.column("stderr").is_some() { wgqed::CurveSource::TrajectoryHistogram } else { wgqed::CurveSource::MasterEquation };
    Ok(CorrelationCurve {
        channel,
        taus: t.numeric_column(tau)?,
        values: t.numeric_column(value)?,
        stderr: t.column("stderr").map(|i| t.numeric_column(i)).transpose()?,
        bin_width: t.comment_value("bin_width").and_then(|w| w.parse().ok()),
        source,
    })
}

/// Overlays a measured curve on a reference and reports deviations in σ.
pub fn compare(measured: &Path, reference: &Path, max_sigma: Option<f64>) -> Result<String> {
    let m = read_curve(measured)?;
    let r = read_curve(reference)?;
    let cmp = compare_to_reference(&m, &r).map_err(CliError::statistics)?;
    let mut out = String::new();
    writeln!(out, "bins: {}", cmp.z.len()).ok();
    writeln!(out, "max |z|: {:.3}", cmp.max_abs_z()).ok();
    writeln!(out, "within 3 sigma: {:.2}%", 100.0 * cmp.fraction_within(3.0)).ok();
    if let Some(limit) = max_sigma {
        if cmp.max_abs_z() > limit {
            return Err(CliError::Statistics(format!("{out}max |z| {:.3} exceeds {limit}", cmp.max_abs_z())));
        }
    }
    Ok(out)
}

pub fn print(report: &str) {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let _ = lock.write_all(report.as_bytes());
}
