//! Photon-counting statistics from detection-event streams: waiting-time
//! distributions (WTD), adjacent-waiting-time distributions (AWTD),
//! histogram g²(τ) without the next-photon restriction, and the statistical
//! comparisons used to check them against master-equation references.
//!
//! Times are quantized: the engine stamps each detection at the end of its
//! step, so every interval is an integer number `k ≥ 1` of steps. Bins are
//! whole multiples `m` of `dt` and right-closed: bin `i` collects
//! `k ∈ [i·m + 1, (i+1)·m]`. All counters are integers, so merging partial
//! histograms is exact, associative and commutative.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::master::{CorrelationCurve, CurveSource};
use crate::model::Channel;
use crate::trajectory::DetectionEvent;

/// Relative slack when snapping a bin width onto the `dt` grid.
const SNAP_TOL: f64 = 1e-9;

fn to_steps(t: f64, dt: f64) -> u64 {
    (t / dt).round().max(0.0) as u64
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryWaits {
    pub trajectory_id: u64,
    pub waits: Vec<f64>,
}

/// Per-trajectory ordered waiting times of one channel (or of both channels
/// pooled when `channel` is `None`).
#[derive(Clone, Debug, PartialEq)]
pub struct WaitingTimeSeries {
    pub channel: Option<Channel>,
    pub dt: f64,
    pub trajectories: Vec<TrajectoryWaits>,
}

impl WaitingTimeSeries {
    pub fn len(&self) -> usize {
        self.trajectories.iter().map(|t| t.waits.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn waits(&self) -> impl Iterator<Item = f64> + '_ {
        self.trajectories.iter().flat_map(|t| t.waits.iter().copied())
    }

    /// Adjacent pairs `(τᵢ, τᵢ₊₁)` within each trajectory.
    pub fn adjacent_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.trajectories.iter().flat_map(|t| t.waits.windows(2).map(|w| (w[0], w[1])))
    }

    /// Sample mean τ̄.
    pub fn mean(&self) -> Option<f64> {
        let n = self.len();
        (n > 0).then(|| self.waits().sum::<f64>() / n as f64)
    }

    /// Pearson correlation of adjacent waits.
    pub fn adjacent_correlation(&self) -> Option<f64> {
        let pairs: Vec<(f64, f64)> = self.adjacent_pairs().collect();
        if pairs.len() < 2 {
            return None;
        }
        let n = pairs.len() as f64;
        let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in &pairs {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Groups events by trajectory (ascending id), checking that times are
/// non-decreasing within each trajectory.
fn group_by_trajectory(events: &[DetectionEvent]) -> Result<BTreeMap<u64, Vec<&DetectionEvent>>> {
    let mut groups: BTreeMap<u64, Vec<&DetectionEvent>> = BTreeMap::new();
    for e in events {
        let list = groups.entry(e.trajectory_id).or_default();
        if let Some(last) = list.last() {
            if e.time < last.time {
                return Err(Error::invalid(format!(
                    "events of trajectory {} are not sorted by time",
                    e.trajectory_id
                )));
            }
        }
        list.push(e);
    }
    Ok(groups)
}

fn series_from(events: &[DetectionEvent], channel: Option<Channel>, burn_in: f64, dt: f64) -> Result<WaitingTimeSeries> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let mut trajectories = Vec::new();
    for (id, list) in group_by_trajectory(events)? {
        let times: Vec<f64> = list
            .iter()
            .filter(|e| channel.is_none_or(|c| e.channel == c) && e.time > burn_in)
            .map(|e| e.time)
            .collect();
        let waits: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(&w) = waits.iter().find(|&&w| w <= 0.0) {
            return Err(Error::invalid(format!("non-positive waiting time {w} in trajectory {id}")));
        }
        if !waits.is_empty() {
            trajectories.push(TrajectoryWaits { trajectory_id: id, waits });
        }
    }
    Ok(WaitingTimeSeries { channel, dt, trajectories })
}

/// Same-channel waits between consecutive detections after `burn_in`, never
/// across trajectories. `dt` is the engine step that quantizes the times.
pub fn waiting_times(events: &[DetectionEvent], channel: Channel, burn_in: f64, dt: f64) -> Result<WaitingTimeSeries> {
    series_from(events, Some(channel), burn_in, dt)
}

/// Waits between consecutive detections on either channel.
pub fn waiting_times_both_channels(events: &[DetectionEvent], burn_in: f64, dt: f64) -> Result<WaitingTimeSeries> {
    series_from(events, None, burn_in, dt)
}

/// Bin layout on the `dt` lattice: `n_bins` right-closed bins of
/// `steps_per_bin·dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinGeometry {
    pub dt: f64,
    pub steps_per_bin: u64,
    pub n_bins: usize,
}

impl BinGeometry {
    pub fn new(dt: f64, steps_per_bin: u64, n_bins: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if steps_per_bin == 0 || n_bins == 0 {
            return Err(Error::invalid("bins must span at least one step and there must be at least one bin"));
        }
        Ok(Self { dt, steps_per_bin, n_bins })
    }

    /// Rounds `width` to the nearest multiple of `dt`; widths below one step
    /// are rejected.
    pub fn snapped(width: f64, n_bins: usize, dt: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::invalid(format!("bin width must be positive, got {width}")));
        }
        if width < dt * (1.0 - SNAP_TOL) {
            return Err(Error::BinTooNarrow { bin_width: width, dt });
        }
        let m = (width / dt).round().max(1.0) as u64;
        Self::new(dt, m, n_bins)
    }

    pub fn bin_width(&self) -> f64 {
        self.steps_per_bin as f64 * self.dt
    }

    pub fn range(&self) -> f64 {
        self.bin_width() * self.n_bins as f64
    }

    pub fn max_steps(&self) -> u64 {
        self.steps_per_bin * self.n_bins as u64
    }

    /// Bin of an interval of `k` steps, `None` beyond the range.
    pub fn bin_of_steps(&self, k: u64) -> Option<usize> {
        let i = (k.max(1) - 1) / self.steps_per_bin;
        (i < self.n_bins as u64).then_some(i as usize)
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.n_bins).map(|i| (i as f64 + 0.5) * w).collect()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self != other {
            return Err(Error::GeometryMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// Probability density in time.
    Density,
    /// τ̄ × density over the scaled axis τ/τ̄.
    PerMeanTau,
}

/// Moments of the binned waits, kept in integer steps so merging is exact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WaitMoments {
    pub count: u64,
    pub sum_steps: u128,
    pub sum_sq_steps: u128,
}

impl WaitMoments {
    fn add(&mut self, k: u64) {
        self.count += 1;
        self.sum_steps += k as u128;
        self.sum_sq_steps += (k as u128) * (k as u128);
    }

    fn merged(&self, o: &Self) -> Self {
        Self {
            count: self.count + o.count,
            sum_steps: self.sum_steps + o.sum_steps,
            sum_sq_steps: self.sum_sq_steps + o.sum_sq_steps,
        }
    }

    pub fn mean(&self, dt: f64) -> Option<f64> {
        (self.count > 0).then(|| self.sum_steps as f64 / self.count as f64 * dt)
    }

    /// Standard error of the mean.
    pub fn mean_stderr(&self, dt: f64) -> Option<f64> {
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        let mean = self.sum_steps as f64 / n;
        let var = (self.sum_sq_steps as f64 / n - mean * mean) * n / (n - 1.0);
        Some((var.max(0.0) / n).sqrt() * dt)
    }
}

/// Binned waiting-time density. Samples beyond the last bin go to
/// `overflow`; `Σcounts + overflow = total_samples`, and densities are per
/// total sample, so the in-range integral plus the overflow fraction is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram1D {
    pub geometry: BinGeometry,
    pub counts: Vec<u64>,
    pub overflow: u64,
    pub total_samples: u64,
    pub normalization: Normalization,
    pub moments: WaitMoments,
}

impl Histogram1D {
    pub fn new(geometry: BinGeometry, normalization: Normalization) -> Self {
        Self {
            counts: vec![0; geometry.n_bins],
            geometry,
            overflow: 0,
            total_samples: 0,
            normalization,
            moments: WaitMoments::default(),
        }
    }

    pub fn bin_width(&self) -> f64 {
        self.geometry.bin_width()
    }

    pub fn fill_steps(&mut self, k: u64) {
        match self.geometry.bin_of_steps(k) {
            Some(i) => self.counts[i] += 1,
            None => self.overflow += 1,
        }
        self.total_samples += 1;
        self.moments.add(k);
    }

    pub fn fill(&mut self, wait: f64) {
        self.fill_steps(to_steps(wait, self.geometry.dt));
    }

    pub fn fill_series(&mut self, series: &WaitingTimeSeries) {
        for w in series.waits() {
            self.fill(w);
        }
    }

    /// Mean wait τ̄ over all filled samples (including overflow).
    pub fn mean_wait(&self) -> Option<f64> {
        self.moments.mean(self.geometry.dt)
    }

    fn scale(&self) -> f64 {
        let n = self.total_samples.max(1) as f64;
        let raw = 1.0 / (n * self.bin_width());
        match self.normalization {
            Normalization::Density => raw,
            Normalization::PerMeanTau => raw * self.mean_wait().unwrap_or(0.0),
        }
    }

    pub fn density(&self) -> Vec<f64> {
        let s = self.scale();
        self.counts.iter().map(|&c| c as f64 * s).collect()
    }

    /// Poisson errors; empty bins carry the one-count error.
    pub fn stderr(&self) -> Vec<f64> {
        let s = self.scale();
        self.counts.iter().map(|&c| (c.max(1) as f64).sqrt() * s).collect()
    }

    /// Bin centres on the reported axis (τ/τ̄ for [`Normalization::PerMeanTau`]).
    pub fn centers(&self) -> Vec<f64> {
        let c = self.geometry.centers();
        match (self.normalization, self.mean_wait()) {
            (Normalization::PerMeanTau, Some(tb)) => c.into_iter().map(|x| x / tb).collect(),
            _ => c,
        }
    }

    /// Bin width on the reported axis.
    pub fn axis_bin_width(&self) -> f64 {
        match (self.normalization, self.mean_wait()) {
            (Normalization::PerMeanTau, Some(tb)) => self.bin_width() / tb,
            _ => self.bin_width(),
        }
    }

    /// `Σ density·width` over bins plus the overflow fraction; 1 for any
    /// non-empty histogram.
    pub fn total_probability(&self) -> f64 {
        let n = self.total_samples.max(1) as f64;
        let w = self.axis_bin_width();
        self.density().iter().map(|d| d * w).sum::<f64>() + self.overflow as f64 / n
    }

    pub fn merge(&self, other: &Self) -> Result<Self> {
        self.geometry.check_same(&other.geometry)?;
        if self.normalization != other.normalization {
            return Err(Error::GeometryMismatch("normalization differs".into()));
        }
        Ok(Self {
            geometry: self.geometry,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            overflow: self.overflow + other.overflow,
            total_samples: self.total_samples + other.total_samples,
            normalization: self.normalization,
            moments: self.moments.merged(&other.moments),
        })
    }

    /// The WTD as a curve on raw time in units of τ̄·W, i.e. in the same
    /// normalization as g²(τ).
    pub fn to_curve(&self, channel: Channel) -> CorrelationCurve {
        let tb = self.mean_wait().unwrap_or(0.0);
        let n = self.total_samples.max(1) as f64;
        let s = tb / (n * self.bin_width());
        CorrelationCurve {
            channel,
            taus: self.geometry.centers(),
            values: self.counts.iter().map(|&c| c as f64 * s).collect(),
            stderr: Some(self.counts.iter().map(|&c| (c.max(1) as f64).sqrt() * s).collect()),
            bin_width: Some(self.bin_width()),
            source: CurveSource::TrajectoryHistogram,
        }
    }
}

/// Joint density of adjacent waits on a square grid; `counts[i·n + j]`
/// holds pairs with τ₁ in bin `i` and τ₂ in bin `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram2D {
    pub geometry: BinGeometry,
    pub counts: Vec<u64>,
    pub overflow: u64,
    pub total_samples: u64,
    pub normalization: Normalization,
    /// Moments of every wait of the contributing series, for τ̄.
    pub moments: WaitMoments,
}

impl Histogram2D {
    pub fn new(geometry: BinGeometry, normalization: Normalization) -> Self {
        Self {
            counts: vec![0; geometry.n_bins * geometry.n_bins],
            geometry,
            overflow: 0,
            total_samples: 0,
            normalization,
            moments: WaitMoments::default(),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.geometry.n_bins
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n_bins() + j]
    }

    pub fn fill_pair_steps(&mut self, k1: u64, k2: u64) {
        match (self.geometry.bin_of_steps(k1), self.geometry.bin_of_steps(k2)) {
            (Some(i), Some(j)) => self.counts[i * self.geometry.n_bins + j] += 1,
            _ => self.overflow += 1,
        }
        self.total_samples += 1;
    }

    pub fn fill_series(&mut self, series: &WaitingTimeSeries) {
        let dt = self.geometry.dt;
        for t in &series.trajectories {
            let steps: Vec<u64> = t.waits.iter().map(|&w| to_steps(w, dt)).collect();
            for &k in &steps {
                self.moments.add(k);
            }
            for w in steps.windows(2) {
                self.fill_pair_steps(w[0], w[1]);
            }
        }
    }

    pub fn mean_wait(&self) -> Option<f64> {
        self.moments.mean(self.geometry.dt)
    }

    fn scale(&self) -> f64 {
        let n = self.total_samples.max(1) as f64;
        let w = self.geometry.bin_width();
        let raw = 1.0 / (n * w * w);
        match self.normalization {
            Normalization::Density => raw,
            Normalization::PerMeanTau => raw * self.mean_wait().unwrap_or(0.0).powi(2),
        }
    }

    pub fn density(&self) -> Vec<f64> {
        let s = self.scale();
        self.counts.iter().map(|&c| c as f64 * s).collect()
    }

    pub fn stderr(&self) -> Vec<f64> {
        let s = self.scale();
        self.counts.iter().map(|&c| (c.max(1) as f64).sqrt() * s).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        let c = self.geometry.centers();
        match (self.normalization, self.mean_wait()) {
            (Normalization::PerMeanTau, Some(tb)) => c.into_iter().map(|x| x / tb).collect(),
            _ => c,
        }
    }

    pub fn total_probability(&self) -> f64 {
        let n = self.total_samples.max(1) as f64;
        let w = match (self.normalization, self.mean_wait()) {
            (Normalization::PerMeanTau, Some(tb)) => self.geometry.bin_width() / tb,
            _ => self.geometry.bin_width(),
        };
        self.density().iter().map(|d| d * w * w).sum::<f64>() + self.overflow as f64 / n
    }

    pub fn merge(&self, other: &Self) -> Result<Self> {
        self.geometry.check_same(&other.geometry)?;
        if self.normalization != other.normalization {
            return Err(Error::GeometryMismatch("normalization differs".into()));
        }
        Ok(Self {
            geometry: self.geometry,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            overflow: self.overflow + other.overflow,
            total_samples: self.total_samples + other.total_samples,
            normalization: self.normalization,
            moments: self.moments.merged(&other.moments),
        })
    }

    /// Sums `factor × factor` blocks into one bin.
    pub fn rebin(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_bins().is_multiple_of(factor) {
            return Err(Error::invalid(format!("rebin factor {factor} must divide {}", self.n_bins())));
        }
        let n = self.n_bins() / factor;
        let geometry = BinGeometry::new(self.geometry.dt, self.geometry.steps_per_bin * factor as u64, n)?;
        let mut counts = vec![0; n * n];
        for i in 0..self.n_bins() {
            for j in 0..self.n_bins() {
                counts[(i / factor) * n + j / factor] += self.get(i, j);
            }
        }
        Ok(Self { geometry, counts, ..self.clone() })
    }
}

fn mean_or_empty(series: &WaitingTimeSeries) -> Result<f64> {
    series.mean().ok_or_else(|| Error::invalid("waiting-time series is empty"))
}

/// WTD over τ/τ̄ ∈ [0, tau_max] with `bins` bins, τ̄ the sample mean. The
/// nominal width `tau_max·τ̄/bins` is snapped to the `dt` lattice, so the
/// covered range may differ slightly from `tau_max`.
pub fn wtd(series: &WaitingTimeSeries, bins: usize, tau_max: f64) -> Result<Histogram1D> {
    let tb = mean_or_empty(series)?;
    let geometry = BinGeometry::snapped(tau_max * tb / bins.max(1) as f64, bins, series.dt)?;
    wtd_with_geometry(series, geometry)
}

/// WTD on an explicit raw-time bin layout (used when partial histograms from
/// several shards have to share one geometry).
pub fn wtd_with_geometry(series: &WaitingTimeSeries, geometry: BinGeometry) -> Result<Histogram1D> {
    check_lattice(series.dt, geometry.dt)?;
    let mut h = Histogram1D::new(geometry, Normalization::PerMeanTau);
    h.fill_series(series);
    Ok(h)
}

/// AWTD over (τ₁/τ̄, τ₂/τ̄) ∈ [0, tau_max]².
pub fn awtd(series: &WaitingTimeSeries, bins: usize, tau_max: f64) -> Result<Histogram2D> {
    let tb = mean_or_empty(series)?;
    let geometry = BinGeometry::snapped(tau_max * tb / bins.max(1) as f64, bins, series.dt)?;
    awtd_with_geometry(series, geometry)
}

pub fn awtd_with_geometry(series: &WaitingTimeSeries, geometry: BinGeometry) -> Result<Histogram2D> {
    check_lattice(series.dt, geometry.dt)?;
    let mut h = Histogram2D::new(geometry, Normalization::PerMeanTau);
    h.fill_series(series);
    Ok(h)
}

fn check_lattice(series_dt: f64, bin_dt: f64) -> Result<()> {
    if (series_dt - bin_dt).abs() > SNAP_TOL * series_dt {
        return Err(Error::GeometryMismatch(format!("series dt {series_dt} vs bin dt {bin_dt}")));
    }
    Ok(())
}

/// Stationary observation window shared by every trajectory of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationWindow {
    pub burn_in: f64,
    pub t_end: f64,
    pub n_trajectories: u64,
}

/// Mergeable accumulator for the histogram g²(τ): for every anchor event,
/// the delays to all later same-channel events up to the range are binned.
/// Anchors are post-burn-in events whose full τ window fits before `t_end`.
#[derive(Clone, Debug, PartialEq)]
pub struct G2Accumulator {
    pub channel: Channel,
    pub geometry: BinGeometry,
    pub counts: Vec<u64>,
    pub anchors: u64,
    /// Post-burn-in events on the channel (flux numerator).
    pub events: u64,
    pub trajectories: u64,
    burn_in_steps: u64,
    end_steps: u64,
}

impl G2Accumulator {
    pub fn new(channel: Channel, geometry: BinGeometry, burn_in: f64, t_end: f64) -> Result<Self> {
        let burn_in_steps = to_steps(burn_in, geometry.dt);
        let end_steps = to_steps(t_end, geometry.dt);
        if end_steps <= burn_in_steps + geometry.max_steps() {
            return Err(Error::invalid("observation window shorter than the g² range"));
        }
        Ok(Self { channel, counts: vec![0; geometry.n_bins], geometry, anchors: 0, events: 0, trajectories: 0, burn_in_steps, end_steps })
    }

    /// Adds one trajectory's events (any channel, sorted by time). Must be
    /// called once for every trajectory, including those without events.
    pub fn add_trajectory(&mut self, events: &[DetectionEvent]) {
        let steps: Vec<u64> = events
            .iter()
            .filter(|e| e.channel == self.channel)
            .map(|e| to_steps(e.time, self.geometry.dt))
            .filter(|&k| k > self.burn_in_steps && k <= self.end_steps)
            .collect();
        self.trajectories += 1;
        self.events += steps.len() as u64;
        let max = self.geometry.max_steps();
        for (a, &ka) in steps.iter().enumerate() {
            if ka + max > self.end_steps {
                break;
            }
            self.anchors += 1;
            for &kb in &steps[a + 1..] {
                let d = kb - ka;
                if d > max {
                    break;
                }
                if let Some(i) = self.geometry.bin_of_steps(d) {
                    self.counts[i] += 1;
                }
            }
        }
    }

    pub fn merge(&self, other: &Self) -> Result<Self> {
        self.geometry.check_same(&other.geometry)?;
        if self.channel != other.channel || self.burn_in_steps != other.burn_in_steps || self.end_steps != other.end_steps {
            return Err(Error::GeometryMismatch("g² accumulators observe different windows".into()));
        }
        Ok(Self {
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            anchors: self.anchors + other.anchors,
            events: self.events + other.events,
            trajectories: self.trajectories + other.trajectories,
            ..self.clone()
        })
    }

    /// Measured steady-state flux of the channel.
    pub fn flux(&self) -> f64 {
        let span = (self.end_steps - self.burn_in_steps) as f64 * self.geometry.dt;
        self.events as f64 / (self.trajectories.max(1) as f64 * span)
    }

    /// g² normalized by anchors × bin width × measured flux.
    pub fn curve(&self) -> Result<CorrelationCurve> {
        let flux = self.flux();
        if self.events == 0 || self.anchors == 0 {
            return Err(Error::DarkChannel { channel: self.channel, flux });
        }
        let s = 1.0 / (self.anchors as f64 * self.geometry.bin_width() * flux);
        Ok(CorrelationCurve {
            channel: self.channel,
            taus: self.geometry.centers(),
            values: self.counts.iter().map(|&c| c as f64 * s).collect(),
            stderr: Some(self.counts.iter().map(|&c| (c.max(1) as f64).sqrt() * s).collect()),
            bin_width: Some(self.geometry.bin_width()),
            source: CurveSource::TrajectoryHistogram,
        })
    }
}

/// Histogram g²(τ) from an event stream covering `window.n_trajectories`
/// trajectories.
pub fn g2_histogram(events: &[DetectionEvent], channel: Channel, geometry: BinGeometry, window: ObservationWindow) -> Result<CorrelationCurve> {
    let mut acc = G2Accumulator::new(channel, geometry, window.burn_in, window.t_end)?;
    let groups = group_by_trajectory(events)?;
    if groups.len() as u64 > window.n_trajectories {
        return Err(Error::invalid("more trajectories in the event stream than in the window"));
    }
    for list in groups.values() {
        let owned: Vec<DetectionEvent> = list.iter().map(|e| **e).collect();
        acc.add_trajectory(&owned);
    }
    acc.trajectories = window.n_trajectories;
    acc.curve()
}

/// Per-bin z-scores of a histogram curve against a reference curve averaged
/// over each bin.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveComparison {
    pub taus: Vec<f64>,
    pub measured: Vec<f64>,
    pub reference: Vec<f64>,
    pub z: Vec<f64>,
}

impl CurveComparison {
    pub fn fraction_within(&self, k_sigma: f64) -> f64 {
        if self.z.is_empty() {
            return 0.0;
        }
        self.z.iter().filter(|z| z.abs() <= k_sigma).count() as f64 / self.z.len() as f64
    }

    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().fold(0.0, |m, z| m.max(z.abs()))
    }
}

pub fn compare_to_reference(measured: &CorrelationCurve, reference: &CorrelationCurve) -> Result<CurveComparison> {
    let (stderr, width) = match (&measured.stderr, measured.bin_width) {
        (Some(s), Some(w)) => (s, w),
        _ => return Err(Error::invalid("measured curve needs standard errors and a bin width")),
    };
    let reference_vals: Vec<f64> = measured
        .taus
        .iter()
        .map(|&c| reference.average_over((c - width / 2.0).max(0.0), c + width / 2.0))
        .collect();
    let z = measured.values.iter().zip(&reference_vals).zip(stderr).map(|((m, r), s)| (m - r) / s).collect();
    Ok(CurveComparison { taus: measured.taus.clone(), measured: measured.values.clone(), reference: reference_vals, z })
}

/// Bins where `lower` exceeds `upper` by more than `k_sigma` combined
/// standard errors. Both curves must share the τ grid; a curve without
/// errors contributes none.
pub fn bound_violations(lower: &CorrelationCurve, upper: &CorrelationCurve, k_sigma: f64) -> Result<Vec<usize>> {
    if lower.taus.len() != upper.taus.len() || lower.taus.iter().zip(&upper.taus).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs())) {
        return Err(Error::GeometryMismatch("curves are sampled on different grids".into()));
    }
    let err = |c: &CorrelationCurve, i: usize| c.stderr.as_ref().map_or(0.0, |s| s[i]);
    Ok((0..lower.values.len())
        .filter(|&i| {
            let sigma = (err(lower, i).powi(2) + err(upper, i).powi(2)).sqrt();
            lower.values[i] - upper.values[i] > k_sigma * sigma
        })
        .collect())
}

/// Bin-averages a reference curve onto a histogram curve's grid, so the two
/// can be compared bin by bin.
pub fn bin_average(reference: &CorrelationCurve, like: &CorrelationCurve) -> Result<CorrelationCurve> {
    let width = like.bin_width.ok_or_else(|| Error::invalid("target curve has no bin width"))?;
    Ok(CorrelationCurve {
        channel: reference.channel,
        taus: like.taus.clone(),
        values: like.taus.iter().map(|&c| reference.average_over((c - width / 2.0).max(0.0), c + width / 2.0)).collect(),
        stderr: None,
        bin_width: Some(width),
        source: reference.source,
    })
}

/// Significant local maxima of a noisy 1D profile. Each maximum is followed
/// down until the profile rises above it again on both sides; its
/// prominence over the higher of the two saddles must exceed `k_sigma`
/// combined standard errors. The global maximum is always reported. End
/// bins can be maxima.
pub fn significant_maxima_1d(values: &[f64], stderr: &[f64], k_sigma: f64) -> Vec<usize> {
    let n = values.len();
    let mut peaks = Vec::new();
    for i in 0..n {
        let v = values[i];
        let left_ok = i == 0 || values[i - 1] < v;
        let right_ok = i + 1 == n || values[i + 1] <= v;
        if !(left_ok && right_ok) {
            continue;
        }
        // Lowest point on each side before the profile exceeds v.
        let side = |range: &mut dyn Iterator<Item = usize>| -> Option<usize> {
            let mut lowest: Option<usize> = None;
            for j in range {
                if values[j] > v {
                    return lowest.or(Some(j));
                }
                if lowest.is_none_or(|l| values[j] < values[l]) {
                    lowest = Some(j);
                }
            }
            None
        };
        let left = side(&mut (0..i).rev());
        let right = side(&mut (i + 1..n));
        let saddle = match (left, right) {
            (None, None) => {
                peaks.push(i);
                continue;
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (Some(l), Some(r)) => {
                if values[l] > values[r] {
                    l
                } else {
                    r
                }
            }
        };
        let sigma = (stderr[i].powi(2) + stderr[saddle].powi(2)).sqrt();
        if v - values[saddle] > k_sigma * sigma {
            peaks.push(i);
        }
    }
    peaks
}

/// Significant local maxima of a noisy 2D grid (row-major `n × n`) by
/// persistence: pixels are added from the highest down and 8-connected
/// components merge at saddles; a component's peak survives if it rose more
/// than `k_sigma` combined standard errors above the saddle where it merged
/// into a higher one. The global maximum is always reported.
pub fn significant_maxima_2d(values: &[f64], stderr: &[f64], n: usize, k_sigma: f64) -> Vec<(usize, usize)> {
    let total = n * n;
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut parent: Vec<usize> = (0..total).collect();
    let mut active = vec![false; total];
    // Component root → its peak pixel.
    let peak_of: Vec<usize> = (0..total).collect();
    let mut peaks = Vec::new();

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    for &p in &order {
        active[p] = true;
        let (r, c) = (p / n, p % n);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr >= n as i64 || nc >= n as i64 {
                    continue;
                }
                let q = nr as usize * n + nc as usize;
                if !active[q] {
                    continue;
                }
                let (rp, rq) = (find(&mut parent, p), find(&mut parent, q));
                if rp == rq {
                    continue;
                }
                let (hp, hq) = (peak_of[rp], peak_of[rq]);
                // The lower peak dies at this saddle.
                let (winner, loser) = if values[hp] > values[hq] || (values[hp] == values[hq] && hp < hq) {
                    (rp, rq)
                } else {
                    (rq, rp)
                };
                let dying = peak_of[loser];
                if dying != p {
                    let sigma = (stderr[dying].powi(2) + stderr[p].powi(2)).sqrt();
                    if values[dying] - values[p] > k_sigma * sigma {
                        peaks.push(dying);
                    }
                }
                parent[loser] = winner;
            }
        }
    }
    if let Some(&top) = order.first() {
        peaks.push(top);
    }
    peaks.sort_unstable();
    peaks.dedup();
    peaks.into_iter().map(|p| (p / n, p % n)).collect()
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF. Returns
/// `(D, p)` with the asymptotic p-value.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    });
    (d, kolmogorov_survival((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d))
}

/// Two-sample Kolmogorov–Smirnov test. Returns `(D, p)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    (d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d))
}

/// `Q(λ) = 2Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
