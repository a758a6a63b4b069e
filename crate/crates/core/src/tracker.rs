//! Sweep of the delay from 0 to `h_final`, maintaining the set of zeros in
//! the region.
//!
//! Zeros of `a + b` in the region seed the set at `h = 0`. The sweep stops
//! at every delay where crossings enter the region, inserts the new boundary
//! zeros there, and drops zeros once they fall left of the boundary.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuation::{advance_with_step, detour, Outcome, NEAR_REAL, TraceConfig, TrajectorySample};
use crate::crossing::{find_crossings, CrossingEvent, Region, CROSSING_TOL};
use crate::error::{Error, Result};
use crate::poly::RealPolynomial;
use crate::quasipoly::QuasiPolynomial;

/// Seeds with `Re(s) >= sigma0 - BOUNDARY_MARGIN` join the initial set.
pub const BOUNDARY_MARGIN: f64 = 1e-9;
/// Zeros are dropped once `Re(s) < sigma0 - EXIT_MARGIN`.
pub const EXIT_MARGIN: f64 = 1e-6;
/// Events whose delays differ by less than this share one stop.
pub const EVENT_MERGE_TOL: f64 = 1e-9;
/// Distance from a multiple root at which its split zeros are started.
pub const SPLIT_RADIUS: f64 = 1e-4;
/// `|abscissa|` at or below this counts as on the imaginary axis.
pub const MARGINAL_TOL: f64 = 1e-6;
/// Zeros within this distance of the imaginary axis are reported as near-marginal.
pub const NEAR_MARGINAL_BAND: f64 = 0.01;

/// A detour around a defect starts from the last sample at least this far back.
pub const DETOUR_BACKOFF: f64 = 1e-2;
/// Detours allowed per trajectory and segment.
pub const MAX_DETOURS: usize = 8;
/// A failed detour is retried with the backoff doubled, up to this many attempts.
pub const DETOUR_ATTEMPTS: u32 = 4;

const SEED_ROOT_TOL: f64 = 1e-7;
const SEED_CLUSTER_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryOrigin {
    InitialRoot,
    /// Index into [`TraceResult::events`].
    EnteredAtEvent { event: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Active,
    Exited { h_exit: f64 },
    Defect { h: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    pub origin: TrajectoryOrigin,
    pub samples: Vec<TrajectorySample>,
    pub status: TrajectoryStatus,
    #[serde(skip)]
    next_step: f64,
}

impl Trajectory {
    pub fn first(&self) -> &TrajectorySample {
        &self.samples[0]
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn is_active(&self) -> bool {
        self.status == TrajectoryStatus::Active
    }

    /// Position at `h` by linear interpolation between samples, or `None`
    /// outside the sampled delay range.
    pub fn position_at(&self, h: f64) -> Option<Complex64> {
        if h < self.first().h || h > self.last().h {
            return None;
        }
        let i = self.samples.partition_point(|smp| smp.h < h);
        let hi = &self.samples[i];
        if hi.h == h || i == 0 {
            return Some(hi.s);
        }
        let lo = &self.samples[i - 1];
        let t = (h - lo.h) / (hi.h - lo.h);
        Some(lo.s + (hi.s - lo.s) * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStatistics {
    pub accepted: usize,
    pub rejected: usize,
    /// Complex-delay detours taken around collisions.
    pub detours: usize,
    pub min_step: f64,
    pub max_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceResult {
    pub quasi_polynomial: QuasiPolynomial,
    pub region: Region,
    pub h_final: f64,
    pub config: TraceConfig,
    pub events: Vec<CrossingEvent>,
    /// `{0}` and every entering event delay, ascending.
    pub delay_set: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    pub zeros_final: Vec<Complex64>,
    pub max_residual: f64,
    pub steps: StepStatistics,
    pub warnings: Vec<String>,
}

impl TraceResult {
    /// Trajectories whose sampled range covers `h` and whose interpolated
    /// position is not left of the exit threshold.
    pub fn active_at(&self, h: f64) -> Vec<(usize, Complex64)> {
        let threshold = self.region.sigma0 - EXIT_MARGIN;
        self.trajectories
            .iter()
            .filter_map(|t| t.position_at(h).filter(|s| s.re >= threshold).map(|s| (t.id, s)))
            .collect()
    }

    pub fn active_count_at(&self, h: f64) -> usize {
        self.active_at(h).len()
    }

    pub fn defects(&self) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.iter().filter(|t| matches!(t.status, TrajectoryStatus::Defect { .. }))
    }

    pub fn has_defects(&self) -> bool {
        self.defects().next().is_some()
    }
}

/// Traces every zero of the region from `h = 0` to `h_final`.
pub fn trace_all(
    q: &QuasiPolynomial,
    region: &Region,
    h_final: f64,
    cfg: &TraceConfig,
) -> Result<TraceResult> {
    cfg.validate()?;
    if !(h_final > 0.0) || !h_final.is_finite() {
        return Err(Error::InvalidInput(format!("h_final must be positive, got {h_final}")));
    }

    let events = find_crossings(q, region, h_final, CROSSING_TOL)?;
    let mut delay_set = vec![0.0];
    for e in events.iter().filter(|e| e.entering) {
        if e.delay - delay_set.last().copied().unwrap_or(0.0) > EVENT_MERGE_TOL {
            delay_set.push(e.delay);
        }
    }

    let mut warnings = Vec::new();
    let mut trajectories = seed_trajectories(q, region, cfg, &mut warnings)?;
    let exit_below = region.sigma0 - EXIT_MARGIN;

    let mut stops: Vec<f64> = delay_set[1..].to_vec();
    if stops.last().is_none_or(|&h| h_final - h > EVENT_MERGE_TOL) {
        stops.push(h_final);
    }

    let mut accepted = 0;
    let mut rejected = 0;
    let mut detours = 0;
    for &stop in &stops {
        if q.is_delay_free() {
            // f does not depend on h: every zero stays where it is.
            for t in trajectories.iter_mut() {
                let s = TrajectorySample { h: stop, ..*t.last() };
                t.samples.push(s);
            }
            continue;
        }
        let results: Vec<Option<Result<SegmentRun>>> = trajectories
            .par_iter()
            .map(|t| (t.is_active() && t.last().h < stop).then(|| run_segment(q, t, stop, h_final, cfg, exit_below)))
            .collect();
        for (t, res) in trajectories.iter_mut().zip(results) {
            let Some(res) = res else { continue };
            let run = res?;
            accepted += run.accepted;
            rejected += run.rejected;
            detours += run.detours;
            t.next_step = run.next_step;
            t.samples.extend_from_slice(&run.samples);
            if run.detours > 0 {
                warnings.push(format!(
                    "trajectory {} passed {} near-collision(s) through a complex-delay detour before h = {stop}",
                    t.id, run.detours
                ));
            }
            if let Some(status) = run.status {
                if let TrajectoryStatus::Defect { h, reason } = &status {
                    log::warn!("trajectory {} stopped at h = {h}: {reason}", t.id);
                }
                t.status = status;
            }
        }

        for (k, e) in events.iter().enumerate() {
            if !e.entering || (e.delay - stop).abs() > EVENT_MERGE_TOL {
                continue;
            }
            let upper = e.point(region.sigma0);
            let points = if e.omega == 0.0 { vec![upper] } else { vec![upper, upper.conj()] };
            for s in points {
                let sample = TrajectorySample::at(q, s, stop)?;
                trajectories.push(Trajectory {
                    id: trajectories.len(),
                    origin: TrajectoryOrigin::EnteredAtEvent { event: k },
                    samples: vec![sample],
                    status: TrajectoryStatus::Active,
                    next_step: cfg.h_step_init,
                });
            }
        }
        proximity_warnings(&trajectories, stop, cfg, &mut warnings);
    }

    let zeros_final = trajectories
        .iter()
        .filter(|t| t.is_active())
        .map(|t| t.last().s)
        .collect();
    let max_residual = trajectories
        .iter()
        .flat_map(|t| t.samples.iter().map(|s| s.residual))
        .fold(0.0, f64::max);
    let (mut min_step, mut max_step) = (f64::INFINITY, 0.0f64);
    for t in &trajectories {
        for w in t.samples.windows(2) {
            let d = w[1].h - w[0].h;
            min_step = min_step.min(d);
            max_step = max_step.max(d);
        }
    }
    if !min_step.is_finite() {
        min_step = 0.0;
    }

    Ok(TraceResult {
        quasi_polynomial: q.clone(),
        region: *region,
        h_final,
        config: *cfg,
        events,
        delay_set,
        trajectories,
        zeros_final,
        max_residual,
        steps: StepStatistics { accepted, rejected, detours, min_step, max_step },
        warnings,
    })
}

struct SegmentRun {
    samples: Vec<TrajectorySample>,
    status: Option<TrajectoryStatus>,
    next_step: f64,
    accepted: usize,
    rejected: usize,
    detours: usize,
}

// Advances one trajectory to `stop`. A defect is first retried by a detour
// through complex delays, started DETOUR_BACKOFF before the defect.
fn run_segment(
    q: &QuasiPolynomial,
    t: &Trajectory,
    stop: f64,
    h_final: f64,
    cfg: &TraceConfig,
    exit_below: f64,
) -> Result<SegmentRun> {
    let mut run = SegmentRun {
        samples: Vec::new(),
        status: None,
        next_step: t.next_step,
        accepted: 0,
        rejected: 0,
        detours: 0,
    };
    let mut start = *t.last();
    if start.s.re < exit_below {
        run.status = Some(TrajectoryStatus::Exited { h_exit: start.h });
        return Ok(run);
    }
    loop {
        let adv = advance_with_step(q, start, stop, cfg, run.next_step, Some(exit_below))?;
        run.accepted += adv.accepted_steps;
        run.rejected += adv.rejected_steps;
        run.next_step = adv.next_step;
        run.samples.extend_from_slice(&adv.samples[1..]);
        let last = *adv.last();
        let error = match adv.outcome {
            Outcome::Reached => return Ok(run),
            Outcome::Exited => {
                run.status = Some(TrajectoryStatus::Exited { h_exit: last.h });
                return Ok(run);
            }
            Outcome::Defect(e) => e,
        };
        let defect = |reason: String| Some(TrajectoryStatus::Defect { h: last.h, reason });
        if run.detours >= MAX_DETOURS || stop <= last.h {
            run.status = defect(error.to_string());
            return Ok(run);
        }
        let mut attempt = Err(error.clone());
        for k in 0..DETOUR_ATTEMPTS {
            let backoff = DETOUR_BACKOFF * f64::from(1u32 << k);
            let base = t
                .samples
                .iter()
                .chain(run.samples.iter())
                .rev()
                .find(|smp| smp.h <= last.h - backoff)
                .unwrap_or(t.first());
            let h_end = (2.0 * last.h - base.h).min(h_final);
            attempt = detour(q, *base, h_end, cfg).map(|end| snap_real(q, end));
            if attempt.is_ok() || base.h == t.first().h {
                break;
            }
        }
        match attempt {
            Ok(end) => {
                run.detours += 1;
                run.samples.push(end);
                run.next_step = cfg.h_step_init;
                if end.s.re < exit_below {
                    run.status = Some(TrajectoryStatus::Exited { h_exit: end.h });
                    return Ok(run);
                }
                if end.h >= stop {
                    return Ok(run);
                }
                start = end;
            }
            Err(e) => {
                run.status = defect(format!("{error}; detour failed: {e}"));
                return Ok(run);
            }
        }
    }
}

fn seed_trajectories(
    q: &QuasiPolynomial,
    region: &Region,
    cfg: &TraceConfig,
    warnings: &mut Vec<String>,
) -> Result<Vec<Trajectory>> {
    let p = q.delay_zero_polynomial();
    let roots = p.find_roots(SEED_ROOT_TOL)?;
    let clusters = p.root_clusters(&roots, SEED_CLUSTER_RADIUS);
    let threshold = region.sigma0 - BOUNDARY_MARGIN;
    let mut out = Vec::new();
    let mut push = |samples: Vec<TrajectorySample>| {
        out.push(Trajectory {
            id: out.len(),
            origin: TrajectoryOrigin::InitialRoot,
            samples,
            status: TrajectoryStatus::Active,
            next_step: cfg.h_step_init,
        });
    };
    for cl in clusters.iter().filter(|c| c.center.re >= threshold) {
        let m = cl.multiplicity();
        if m == 1 || q.is_delay_free() {
            let sample = snap_real(q, TrajectorySample::at(q, cl.center, 0.0)?);
            for _ in 0..m {
                push(vec![sample]);
            }
            continue;
        }
        let start = TrajectorySample::at(q, cl.center, 0.0)?;
        let split = split_multiple_root(q, &p, cl.center, m, cfg)?;
        let distinct = split
            .iter()
            .enumerate()
            .all(|(i, a)| split[..i].iter().all(|b| (a.s - b.s).norm() > 0.1 * SPLIT_RADIUS));
        if !distinct {
            warnings.push(format!(
                "split zeros of the multiple root {} at h = {} are not distinct",
                cl.center, cfg.h_step_min
            ));
        }
        for s in split {
            push(vec![start, s]);
        }
    }
    Ok(out)
}

// Moves a zero with negligible imaginary part onto the real axis, polishing
// in real arithmetic. Real zeros then stay exactly real along the sweep.
fn snap_real(q: &QuasiPolynomial, sample: TrajectorySample) -> TrajectorySample {
    if sample.s.im == 0.0 {
        return sample;
    }
    let polished = polish(q, sample.s, sample.h);
    if polished.im.abs() > NEAR_REAL * polished.norm().max(1.0) {
        return sample;
    }
    let mut s = Complex64::new(polished.re, 0.0);
    for _ in 0..8 {
        let Ok(p) = q.partials(s, sample.h) else { return sample };
        let ds = p.f.re / p.fs.re;
        if !ds.is_finite() {
            return sample;
        }
        s.re -= ds;
        if ds.abs() <= 4.0 * f64::EPSILON * s.re.abs().max(1.0) {
            break;
        }
    }
    match TrajectorySample::at(q, s, sample.h) {
        Ok(snapped) if snapped.residual <= sample.residual.max(f64::EPSILON * q.scale_at(s)) * 10.0 => snapped,
        _ => sample,
    }
}

// Zeros near an m-fold root s* of a + b at h = h_step_min. Locally
// f ~ p^(m)(s*) e^m / m! - s* b(s*) h, so the m branches leave along the
// m-th roots of m! s* b(s*) h / p^(m)(s*).
fn split_multiple_root(
    q: &QuasiPolynomial,
    p: &RealPolynomial,
    center: Complex64,
    m: usize,
    cfg: &TraceConfig,
) -> Result<Vec<TrajectorySample>> {
    let h = cfg.h_step_min;
    let mut dm = p.clone();
    let mut factorial = 1.0;
    for k in 1..=m {
        dm = dm.derivative();
        factorial *= k as f64;
    }
    let target = center * q.b().eval(center) * (factorial * h) / dm.eval(center);
    let theta0 = if target.norm() > 0.0 { target.arg() / m as f64 } else { 0.0 };
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let theta = theta0 + 2.0 * std::f64::consts::PI * k as f64 / m as f64;
        let mut s = center + Complex64::from_polar(SPLIT_RADIUS, theta);
        for _ in 0..50 {
            let pd = q.partials(s, h)?;
            if pd.fs.norm() == 0.0 {
                break;
            }
            let ds = pd.f / pd.fs;
            s -= ds;
            if ds.norm() <= 4.0 * f64::EPSILON * s.norm().max(1.0) {
                break;
            }
        }
        let sample = snap_real(q, TrajectorySample::at(q, s, h)?);
        if sample.residual > cfg.eps_tz {
            return Err(Error::DefectPoint { s, h });
        }
        out.push(sample);
    }
    Ok(out)
}

fn proximity_warnings(trajectories: &[Trajectory], h: f64, cfg: &TraceConfig, warnings: &mut Vec<String>) {
    let live: Vec<&Trajectory> = trajectories.iter().filter(|t| t.is_active()).collect();
    for (i, a) in live.iter().enumerate() {
        for b in &live[i + 1..] {
            let d = (a.last().s - b.last().s).norm();
            if d < 10.0 * cfg.eps_tz {
                let msg = format!("trajectories {} and {} are {d:e} apart at h = {h}", a.id, b.id);
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Marginal,
    Unstable,
    /// `sigma0 >= 0`: zeros left of the boundary are not traced.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbscissaSample {
    pub h: f64,
    /// Largest real part among zeros in the region; `None` when the region is empty.
    pub abscissa: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub sigma0: f64,
    /// `false` when `sigma0 >= 0`.
    pub conclusive: bool,
    pub samples: Vec<AbscissaSample>,
    /// First delay at which the abscissa reaches 0.
    pub delay_margin: Option<f64>,
    pub near_marginal_band: f64,
    /// First delay from which the abscissa stays within the band of 0.
    pub near_marginal_from: Option<f64>,
    pub notes: Vec<String>,
}

/// Restricted spectral abscissa over the union of all sample delays, with
/// positions re-polished at each delay.
pub fn stability_report(result: &TraceResult) -> StabilityReport {
    let q = &result.quasi_polynomial;
    let sigma0 = result.region.sigma0;
    let conclusive = sigma0 < 0.0;

    let mut grid: Vec<f64> = result
        .trajectories
        .iter()
        .flat_map(|t| t.samples.iter().map(|s| s.h))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let samples: Vec<AbscissaSample> = grid
        .par_iter()
        .map(|&h| {
            let abscissa = result
                .active_at(h)
                .into_iter()
                .map(|(_, s)| polish(q, s, h).re)
                .reduce(f64::max);
            let verdict = match abscissa {
                _ if !conclusive => Verdict::Inconclusive,
                None => Verdict::Stable,
                Some(x) if x < -MARGINAL_TOL => Verdict::Stable,
                Some(x) if x <= MARGINAL_TOL => Verdict::Marginal,
                Some(_) => Verdict::Unstable,
            };
            AbscissaSample { h, abscissa, verdict }
        })
        .collect();

    let mut delay_margin = None;
    let mut prev: Option<(f64, f64)> = None;
    for smp in &samples {
        let Some(x) = smp.abscissa else {
            prev = None;
            continue;
        };
        if x >= -MARGINAL_TOL {
            delay_margin = Some(match prev {
                Some((h0, x0)) if x > 0.0 && x0 < 0.0 => h0 + (smp.h - h0) * (-x0) / (x - x0),
                _ => smp.h,
            });
            break;
        }
        prev = Some((smp.h, x));
    }

    let near_marginal_from = samples
        .iter()
        .rposition(|s| s.abscissa.is_none_or(|x| x < -NEAR_MARGINAL_BAND))
        .map_or(samples.first().map(|s| s.h), |i| samples.get(i + 1).map(|s| s.h));

    let mut notes = Vec::new();
    if !conclusive {
        notes.push(format!(
            "sigma0 = {sigma0} >= 0: zeros left of the boundary are not traced; stability is inconclusive"
        ));
    }
    if let Some(h) = delay_margin {
        notes.push(format!("spectral abscissa reaches the imaginary axis at h = {h}"));
    }
    if let Some(h) = near_marginal_from {
        notes.push(format!(
            "zeros within {NEAR_MARGINAL_BAND} of the imaginary axis for h >= {h}"
        ));
    }

    StabilityReport {
        sigma0,
        conclusive,
        samples,
        delay_margin,
        near_marginal_band: NEAR_MARGINAL_BAND,
        near_marginal_from,
        notes,
    }
}

fn polish(q: &QuasiPolynomial, s0: Complex64, h: f64) -> Complex64 {
    let mut s = s0;
    for _ in 0..8 {
        let Ok(p) = q.partials(s, h) else { return s0 };
        if p.fs.norm() == 0.0 {
            break;
        }
        let ds = p.f / p.fs;
        s -= ds;
        if ds.norm() <= 4.0 * f64::EPSILON * s.norm().max(1.0) {
            break;
        }
    }
    // A polish that wanders off means the interpolated point was not close.
    if s.is_finite() && (s - s0).norm() < 0.1 {
        s
    } else {
        s0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{count_zeros, ContourRectangle};
    use std::f64::consts::PI;

    fn fixture() -> QuasiPolynomial {
        QuasiPolynomial::from_coeffs(&[1.0, 1.0, 1.0], &[0.0, 1.0]).unwrap()
    }

    fn fixture_run() -> TraceResult {
        let q = fixture();
        let region = Region::with_default_window(&q, -1.0, PI).unwrap();
        trace_all(&q, &region, PI, &TraceConfig::default()).unwrap()
    }

    #[test]
    fn fixture_seeds_and_delay_set() {
        let r = fixture_run();
        let seeds: Vec<_> = r.trajectories.iter().filter(|t| t.origin == TrajectoryOrigin::InitialRoot).collect();
        assert_eq!(seeds.len(), 2);
        for t in &seeds {
            assert!((t.first().s - Complex64::new(-1.0, 0.0)).norm() < 1e-6);
            assert_eq!(t.first().h, 0.0);
        }
        assert_eq!(r.delay_set.len(), 13);
        assert_eq!(r.delay_set[0], 0.0);
        assert!(r.delay_set.windows(2).all(|w| w[0] < w[1]));
        let tabulated = [0.65, 1.57, 1.96, 2.21, 2.40, 2.55, 2.68, 2.79, 2.88, 2.97, 3.05, 3.12];
        for (d, t) in r.delay_set[1..].iter().zip(tabulated) {
            assert!((d - t).abs() < 0.01, "{d} vs {t}");
        }
    }

    #[test]
    fn fixture_final_zeros() {
        let r = fixture_run();
        assert!(r.max_residual < 1e-3);
        assert!(!r.has_defects());
        assert_eq!(r.zeros_final.len(), 25);
        assert!(r.zeros_final.iter().any(|z| (z - Complex64::new(0.0, 1.0)).norm() < 1e-3));
        assert!(r.zeros_final.iter().any(|z| (z - Complex64::new(0.0, -1.0)).norm() < 1e-3));
        assert!(r.zeros_final.iter().any(|z| (z - Complex64::new(-0.3037, 0.0)).norm() < 1e-3));
        for t in r.trajectories.iter().filter(|t| t.is_active()) {
            assert_eq!(t.last().h, PI);
        }
        for t in &r.trajectories {
            assert!(t.samples.windows(2).all(|w| w[1].h > w[0].h));
            if let TrajectoryStatus::Exited { h_exit } = t.status {
                assert_eq!(t.last().h, h_exit);
                assert!(t.last().s.re < -1.0 - EXIT_MARGIN);
            }
        }
    }

    #[test]
    fn bookkeeping_and_conjugate_closure() {
        let r = fixture_run();
        let initial = r.trajectories.iter().filter(|t| t.origin == TrajectoryOrigin::InitialRoot).count();
        for h in [0.0, 0.3, 0.65, 1.0, 1.8, 2.5, 3.0, PI] {
            let entered: usize = r
                .events
                .iter()
                .filter(|e| e.entering && e.delay <= h)
                .map(|e| e.multiplicity())
                .sum();
            let exited = r
                .trajectories
                .iter()
                .filter(|t| matches!(t.status, TrajectoryStatus::Exited { h_exit } if h_exit <= h))
                .count();
            let active = r.active_at(h);
            assert_eq!(active.len(), initial + entered - exited, "h = {h}");

            let zs: Vec<Complex64> = active.iter().map(|&(_, s)| s).collect();
            for z in &zs {
                let d = zs.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
                assert!(d <= 10.0 * r.config.eps_tz, "h = {h}: {z} has no mirror ({d:e})");
            }
        }
    }

    #[test]
    fn counts_agree_with_oracle() {
        let r = fixture_run();
        let rect = ContourRectangle::for_region(&r.quasi_polynomial, &r.region, r.h_final).unwrap();
        for h in [0.0, 0.5, 1.0, 2.0, PI] {
            assert_eq!(r.active_count_at(h), count_zeros(&r.quasi_polynomial, h, &rect).unwrap(), "h = {h}");
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(fixture_run(), fixture_run());
    }

    #[test]
    fn delay_free_paths_are_constant() {
        // (s + 0.5)(s + 2)(s^2 + 2s + 5): roots -0.5, -2, -1 +- 2j.
        let a = &(&RealPolynomial::new(vec![1.0, 2.5, 1.0]).unwrap()
            * &RealPolynomial::new(vec![5.0, 2.0, 1.0]).unwrap())
            * &RealPolynomial::constant(1.0);
        let q = QuasiPolynomial::delay_free(a).unwrap();
        let region = Region::new(-1.5, 10.0).unwrap();
        for h_final in [0.5, 4.0] {
            let r = trace_all(&q, &region, h_final, &TraceConfig::default()).unwrap();
            assert!(r.events.is_empty());
            assert_eq!(r.delay_set, vec![0.0]);
            let mut z = r.zeros_final.clone();
            z.sort_by(|x, y| x.im.total_cmp(&y.im));
            let expected = [Complex64::new(-1.0, -2.0), Complex64::new(-0.5, 0.0), Complex64::new(-1.0, 2.0)];
            assert_eq!(z.len(), 3);
            for (a, b) in z.iter().zip(expected) {
                assert!((a - b).norm() < 1e-9);
            }
            for t in &r.trajectories {
                assert!(t.samples.iter().all(|s| s.s == t.first().s));
            }
            let rep = stability_report(&r);
            assert!(rep.conclusive);
            assert!(rep.samples.iter().all(|s| s.verdict == Verdict::Stable));
            assert_eq!(rep.delay_margin, None);
        }
    }

    #[test]
    fn fixture_stability_report() {
        let rep = stability_report(&fixture_run());
        assert!(rep.conclusive);
        let margin = rep.delay_margin.unwrap();
        assert!((margin - PI).abs() <= 0.02, "{margin}");
        assert!(rep.samples.iter().filter(|s| s.h < 3.0).all(|s| s.verdict == Verdict::Stable));
        let from = rep.near_marginal_from.unwrap();
        assert!((2.45..=2.55).contains(&from), "{from}");
        assert!(rep
            .samples
            .iter()
            .filter(|s| s.h >= from)
            .all(|s| s.abscissa.unwrap() >= -NEAR_MARGINAL_BAND));
    }

    #[test]
    fn nonnegative_boundary_is_inconclusive() {
        let q = fixture();
        let region = Region::with_default_window(&q, 0.0, 2.0).unwrap();
        let r = trace_all(&q, &region, 2.0, &TraceConfig::default()).unwrap();
        let rep = stability_report(&r);
        assert!(!rep.conclusive);
        assert!(rep.samples.iter().all(|s| s.verdict == Verdict::Inconclusive));
    }

    #[test]
    fn rejects_bad_arguments() {
        let q = fixture();
        let region = Region::new(-1.0, 30.0).unwrap();
        assert!(trace_all(&q, &region, 0.0, &TraceConfig::default()).is_err());
        assert!(trace_all(&q, &region, 1.0, &TraceConfig::with_eps_tz(-1.0)).is_err());
    }
}
