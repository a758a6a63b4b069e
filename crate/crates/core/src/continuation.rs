//! Continuation of a single zero along the delay axis.
//!
//! A zero `s(h)` of `f(., h)` follows `ds/dh = -(f_h + f) / f_s`. On the
//! zero manifold the `f` term vanishes and the equation gives the exact root
//! velocity; off the manifold it pulls the iterate back, since along the flow
//! `df/dh = -f`. Steps are classical RK4 with a residual-driven step rule and
//! a short Newton polish when the predictor leaves the residual tube.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quasipoly::{QuasiPolynomial, EXP_GUARD, SINGULAR_FS};

/// Growth of the step rule is capped by flooring the residual at this
/// fraction of `eps_tz`.
pub const RESIDUAL_FLOOR: f64 = 1e-3;

/// Steps whose RK4 stage slopes differ by more than this fraction are rejected.
pub const MAX_STAGE_SPREAD: f64 = 0.5;

/// A zero with `|Im(s)| <= NEAR_REAL * max(1, |s|)` counts as real.
pub const NEAR_REAL: f64 = 1e-8;

/// Initial number of steps along a [`detour`]; doubled on failure.
pub const DETOUR_MIN_STEPS: usize = 64;
pub const DETOUR_MAX_STEPS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    /// Residual tolerance `|f(s, h)| <= eps_tz` for every accepted sample.
    pub eps_tz: f64,
    pub h_step_init: f64,
    pub h_step_min: f64,
    pub h_step_max: f64,
    /// Newton corrections allowed after a predictor step.
    pub corrector_cap: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            eps_tz: 1e-3,
            h_step_init: 1e-2,
            h_step_min: 1e-8,
            h_step_max: 0.1,
            corrector_cap: 3,
        }
    }
}

impl TraceConfig {
    pub fn with_eps_tz(eps_tz: f64) -> Self {
        Self { eps_tz, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_tz > 0.0) || !self.eps_tz.is_finite() {
            return Err(Error::InvalidInput(format!("eps_tz must be positive, got {}", self.eps_tz)));
        }
        let ordered = self.h_step_min > 0.0
            && self.h_step_min <= self.h_step_init
            && self.h_step_init <= self.h_step_max
            && self.h_step_max.is_finite();
        if !ordered {
            return Err(Error::InvalidInput(format!(
                "step sizes must satisfy 0 < h_step_min <= h_step_init <= h_step_max, got {} / {} / {}",
                self.h_step_min, self.h_step_init, self.h_step_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub h: f64,
    pub s: Complex64,
    /// `|f(s, h)|`.
    pub residual: f64,
}

impl TrajectorySample {
    /// Sample at `(s, h)` with its residual evaluated.
    pub fn at(q: &QuasiPolynomial, s: Complex64, h: f64) -> Result<Self> {
        Ok(Self { h, s, residual: q.eval_f(s, h)?.norm() })
    }
}

/// `-(f_h + f) / f_s` at `(s, h)`.
pub fn rhs(q: &QuasiPolynomial, s: Complex64, h: f64) -> Result<Complex64> {
    let p = q.partials(s, h)?;
    if p.fs.norm() <= SINGULAR_FS * q.scale() {
        return Err(Error::DefectPoint { s, h });
    }
    Ok(-(p.fh + p.f) / p.fs)
}

/// The flow with `h` frozen: `-f / f_s`. Along it `|f|` decays like
/// `e^{-t}` in the pseudo-time `t`.
pub fn frozen_rhs(q: &QuasiPolynomial, s: Complex64, h: f64) -> Result<Complex64> {
    let p = q.partials(s, h)?;
    if p.fs.norm() <= SINGULAR_FS * q.scale() {
        return Err(Error::DefectPoint { s, h });
    }
    Ok(-p.f / p.fs)
}

/// One classical RK4 step of `ds/dh = rhs` from `(s, h)` over `dh`.
pub fn rk4_step(q: &QuasiPolynomial, s: Complex64, h: f64, dh: f64) -> Result<Complex64> {
    Ok(rk4_with_spread(q, s, h, dh)?.0)
}

// The RK4 update together with `max |k_i - k_1| / max |k_i|`, the relative
// disagreement of the stage slopes.
fn rk4_with_spread(q: &QuasiPolynomial, s: Complex64, h: f64, dh: f64) -> Result<(Complex64, f64)> {
    let k1 = rhs(q, s, h)?;
    let k2 = rhs(q, s + k1 * (0.5 * dh), h + 0.5 * dh)?;
    let k3 = rhs(q, s + k2 * (0.5 * dh), h + 0.5 * dh)?;
    let k4 = rhs(q, s + k3 * dh, h + dh)?;
    let largest = [k1, k2, k3, k4].iter().map(|k| k.norm()).fold(0.0, f64::max);
    let spread = [k2, k3, k4].iter().map(|k| (k - k1).norm()).fold(0.0, f64::max);
    let spread = if largest > 0.0 { spread / largest } else { 0.0 };
    Ok((s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dh / 6.0), spread))
}

/// How an [`Advance`] ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    /// The last sample sits at `h_target`.
    Reached,
    /// The last sample fell below the exit abscissa.
    Exited,
    /// Singular `f_s` or step underflow; the samples up to the failure are kept.
    Defect(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advance {
    /// Accepted samples; the first is the input sample.
    pub samples: Vec<TrajectorySample>,
    /// Step suggested for the next interval.
    pub next_step: f64,
    pub outcome: Outcome,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Advance {
    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("advance keeps the input sample")
    }

    pub fn is_defect(&self) -> bool {
        matches!(self.outcome, Outcome::Defect(_))
    }
}

/// Traces the zero at `sample` from `sample.h` to exactly `h_target`,
/// starting with `cfg.h_step_init`.
pub fn advance(
    q: &QuasiPolynomial,
    sample: TrajectorySample,
    h_target: f64,
    cfg: &TraceConfig,
) -> Result<Advance> {
    advance_with_step(q, sample, h_target, cfg, cfg.h_step_init, None)
}

/// [`advance`] with an explicit first step, stopping early once a sample
/// has `Re(s) < exit_below`.
pub fn advance_with_step(
    q: &QuasiPolynomial,
    sample: TrajectorySample,
    h_target: f64,
    cfg: &TraceConfig,
    first_step: f64,
    exit_below: Option<f64>,
) -> Result<Advance> {
    cfg.validate()?;
    if !(h_target >= sample.h) {
        return Err(Error::InvalidInput(format!(
            "h_target = {h_target} precedes the sample delay {}",
            sample.h
        )));
    }
    if sample.residual > cfg.eps_tz {
        return Err(Error::InvalidInput(format!(
            "start residual {:e} exceeds eps_tz = {:e}",
            sample.residual, cfg.eps_tz
        )));
    }

    let mut out = Advance {
        samples: vec![sample],
        next_step: first_step.clamp(cfg.h_step_min, cfg.h_step_max),
        outcome: Outcome::Reached,
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let mut cur = sample;
    let mut dh = out.next_step;

    while cur.h < h_target {
        let remaining = h_target - cur.h;
        let landing = dh >= remaining;
        let step = if landing { remaining } else { dh };
        let h_new = if landing { h_target } else { cur.h + step };

        match try_step(q, cur, h_new, step, cfg) {
            Some((next, predictor_residual)) => {
                out.accepted_steps += 1;
                let grown = step
                    * (cfg.eps_tz / predictor_residual.max(RESIDUAL_FLOOR * cfg.eps_tz)).sqrt();
                let grown = grown.clamp(cfg.h_step_min, cfg.h_step_max);
                // A shortened landing step says nothing about the next interval.
                dh = if landing { grown.max(dh).min(cfg.h_step_max) } else { grown };
                cur = next;
                out.samples.push(cur);
                if exit_below.is_some_and(|x| cur.s.re < x) {
                    out.outcome = Outcome::Exited;
                    break;
                }
            }
            None => {
                out.rejected_steps += 1;
                let floor = cfg.h_step_min.min(remaining);
                if step <= floor {
                    out.outcome = Outcome::Defect(defect_at(q, cur));
                    break;
                }
                dh = (step / 2.0).max(floor);
            }
        }
    }
    out.next_step = dh;
    Ok(out)
}

// Predictor plus bounded corrector; `None` when the step must be rejected.
// On success also returns the predictor residual, which drives the step rule.
fn try_step(
    q: &QuasiPolynomial,
    cur: TrajectorySample,
    h_new: f64,
    step: f64,
    cfg: &TraceConfig,
) -> Option<(TrajectorySample, f64)> {
    let (mut s, spread) = rk4_with_spread(q, cur.s, cur.h, step).ok()?;
    // Stage slopes that disagree this much mean the step straddles a fast
    // turn or a near-collision, where the predictor can land on another zero.
    if spread > MAX_STAGE_SPREAD || !s.is_finite() || leaves_half_plane(cur.s, s) {
        return None;
    }
    let predictor_residual = q.eval_f(s, h_new).ok()?.norm();
    let mut residual = predictor_residual;
    let mut corrections = 0;
    while residual > cfg.eps_tz && corrections < cfg.corrector_cap {
        let p = q.partials(s, h_new).ok()?;
        if p.fs.norm() <= SINGULAR_FS * q.scale() {
            return None;
        }
        s -= p.f / p.fs;
        residual = q.eval_f(s, h_new).ok()?.norm();
        corrections += 1;
    }
    if residual > cfg.eps_tz {
        return None;
    }
    if cur.s.im != 0.0 {
        // Near the real axis the tube may hide a collision; settle it on the
        // polished zero.
        let p = q.partials(s, h_new).ok()?;
        if p.f.norm() >= 0.5 * s.im.abs() * p.fs.norm() {
            s = polish_off_axis(q, s, h_new)?;
            residual = q.eval_f(s, h_new).ok()?.norm();
        }
        if leaves_half_plane(cur.s, s) {
            return None;
        }
    }
    (residual <= cfg.eps_tz).then_some((TrajectorySample { h: h_new, s, residual }, predictor_residual))
}

// Full Newton polish; `None` if it lands on (or next to) the real axis.
fn polish_off_axis(q: &QuasiPolynomial, mut s: Complex64, h: f64) -> Option<Complex64> {
    for _ in 0..30 {
        let p = q.partials(s, h).ok()?;
        let ds = p.f / p.fs;
        if !ds.is_finite() {
            return None;
        }
        s -= ds;
        if ds.norm() <= 4.0 * f64::EPSILON * s.norm().max(1.0) {
            break;
        }
    }
    (s.im.abs() > NEAR_REAL * s.norm().max(1.0)).then_some(s)
}

// A non-real zero of a real function reaches the real axis only by meeting
// its conjugate, so such a step passes a collision.
fn leaves_half_plane(from: Complex64, to: Complex64) -> bool {
    from.im != 0.0 && (to.im.abs() <= NEAR_REAL * to.norm().max(1.0) || (to.im > 0.0) != (from.im > 0.0))
}

fn defect_at(q: &QuasiPolynomial, cur: TrajectorySample) -> Error {
    match rhs(q, cur.s, cur.h) {
        Err(e) => e,
        Ok(_) => Error::DefectPoint { s: cur.s, h: cur.h },
    }
}

/// Continues the zero at `sample` to the real delay `h_end` along the upper
/// half circle with diameter `[sample.h, h_end]` in the complex delay plane.
///
/// `f` is analytic in `h`, so the path avoids a branch point where two zeros
/// collide on the real delay axis. Every caller takes the upper side, hence
/// distinct zeros are carried to distinct zeros.
pub fn detour(
    q: &QuasiPolynomial,
    sample: TrajectorySample,
    h_end: f64,
    cfg: &TraceConfig,
) -> Result<TrajectorySample> {
    if !(h_end > sample.h) {
        return Err(Error::InvalidInput(format!(
            "detour end {h_end} must exceed the start delay {}",
            sample.h
        )));
    }
    let center = 0.5 * (sample.h + h_end);
    let radius = 0.5 * (h_end - sample.h);
    let defect = Error::DefectPoint { s: sample.s, h: sample.h };
    let mut n = DETOUR_MIN_STEPS;
    while n <= DETOUR_MAX_STEPS {
        if let Some(s) = detour_path(q, sample.s, center, radius, n, cfg.eps_tz) {
            let end = TrajectorySample::at(q, s, h_end)?;
            if end.residual <= cfg.eps_tz {
                return Ok(end);
            }
        }
        n *= 2;
    }
    Err(defect)
}

// h(theta) = center - radius e^{-j theta}, theta from 0 to pi.
fn detour_path(
    q: &QuasiPolynomial,
    mut s: Complex64,
    center: f64,
    radius: f64,
    n: usize,
    eps_tz: f64,
) -> Option<Complex64> {
    let path = |theta: f64| center - Complex64::from_polar(radius, -theta);
    let dpath = |theta: f64| Complex64::new(0.0, radius) * Complex64::from_polar(1.0, -theta);
    let slope = |s: Complex64, theta: f64| -> Option<Complex64> {
        let (_, fs, fh) = complex_delay_partials(q, s, path(theta))?;
        if fs.norm() <= SINGULAR_FS * q.scale() {
            return None;
        }
        Some(-fh / fs * dpath(theta))
    };
    let dt = std::f64::consts::PI / n as f64;
    for i in 0..n {
        let theta = i as f64 * dt;
        let k1 = slope(s, theta)?;
        let k2 = slope(s + k1 * (0.5 * dt), theta + 0.5 * dt)?;
        let k3 = slope(s + k2 * (0.5 * dt), theta + 0.5 * dt)?;
        let k4 = slope(s + k3 * dt, theta + dt)?;
        let largest = [k1, k2, k3, k4].iter().map(|k| k.norm()).fold(0.0, f64::max);
        let spread = [k2, k3, k4].iter().map(|k| (k - k1).norm()).fold(0.0, f64::max);
        if spread > MAX_STAGE_SPREAD * largest {
            return None;
        }
        let step = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        s += step;
        let h = if i + 1 == n { Complex64::new(center + radius, 0.0) } else { path(theta + dt) };
        let mut converged = false;
        for _ in 0..8 {
            let (f, fs, _) = complex_delay_partials(q, s, h)?;
            if f.norm() <= 1e-3 * eps_tz {
                converged = true;
                break;
            }
            let ds = f / fs;
            if !ds.is_finite() || ds.norm() > 0.5 * step.norm() + 1e-3 * eps_tz {
                return None;
            }
            s -= ds;
        }
        if !converged {
            return None;
        }
    }
    Some(s)
}

// f, f_s and f_h for a complex delay.
fn complex_delay_partials(
    q: &QuasiPolynomial,
    s: Complex64,
    h: Complex64,
) -> Option<(Complex64, Complex64, Complex64)> {
    let x = -h * s;
    if x.re > EXP_GUARD || !x.is_finite() {
        return None;
    }
    let e = x.exp();
    let bs = q.b().eval(s);
    Some((
        q.a().eval(s) + bs * e,
        q.da().eval(s) + (q.db().eval(s) - bs * h) * e,
        -s * bs * e,
    ))
}

/// Fixed-step RK4 from `sample` to `h_target` with no corrector and no
/// step control. Samples record the raw residual.
pub fn integrate_fixed(
    q: &QuasiPolynomial,
    sample: TrajectorySample,
    h_target: f64,
    dh: f64,
) -> Result<Vec<TrajectorySample>> {
    if !(dh > 0.0) || !(h_target >= sample.h) {
        return Err(Error::InvalidInput(format!(
            "fixed-step integration needs dh > 0 and h_target >= h, got dh = {dh}, h_target = {h_target}"
        )));
    }
    let n = ((h_target - sample.h) / dh).round().max(1.0) as usize;
    let mut samples = vec![sample];
    let mut s = sample.s;
    for i in 0..n {
        let h = sample.h + i as f64 * dh;
        let h_next = if i + 1 == n { h_target } else { sample.h + (i + 1) as f64 * dh };
        s = rk4_step(q, s, h, h_next - h)?;
        samples.push(TrajectorySample::at(q, s, h_next)?);
    }
    Ok(samples)
}
