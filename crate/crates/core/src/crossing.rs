//! Boundary crossings: frequencies `omega >= 0` and delays `h > 0` at which
//! a zero of `f(., h)` sits on the line `Re(s) = sigma0`, with the
//! entering/exiting classification of each crossing.
//!
//! For `sigma0 != 0` a crossing solves the magnitude equation
//! `h(omega) = -ln|a/b| / sigma0` together with the phase equation
//! `h(omega) omega + 2 k pi + arg(-a/b) = 0` for an integer branch `k`.
//! The phase is unwrapped along a refined grid on `[0, omega_max]` and every
//! multiple of `2 pi` crossed by `h(omega) omega + arg(-a/b)` is bisected.
//!
//! For `sigma0 = 0` the magnitude equation degenerates; crossings are the
//! positive real roots of `|a(j w)|^2 - |b(j w)|^2`, a real polynomial in
//! `w`, with one delay per phase branch.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::RealPolynomial;
use crate::quasipoly::QuasiPolynomial;

/// Uniform scan points on `[0, omega_max]` before refinement.
pub const SCAN_POINTS: usize = 4096;
/// Absolute bisection tolerance on `omega`.
pub const OMEGA_TOL: f64 = 1e-12;
/// Events closer than this in both `omega` and delay are merged.
pub const COALESCE_TOL: f64 = 1e-9;
/// Default relative residual tolerance for accepted events.
pub const CROSSING_TOL: f64 = 1e-8;
/// `|rt_value|` at or below this is a tangential (degenerate) crossing.
pub const TANGENTIAL_TOL: f64 = 1e-12;

// Largest phase step between neighbouring scan points before subdividing.
const MAX_PHASE_STEP: f64 = PI / 4.0;
const MAX_REFINE_DEPTH: u32 = 16;

/// The analysis region `Re(s) > sigma0`, with the frequency window
/// `|Im(s)| <= omega_max` used for crossing search and verification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub sigma0: f64,
    pub omega_max: f64,
}

impl Region {
    pub fn new(sigma0: f64, omega_max: f64) -> Result<Self> {
        if !sigma0.is_finite() {
            return Err(Error::InvalidInput(format!("sigma0 must be finite, got {sigma0}")));
        }
        if !(omega_max > 0.0) || !omega_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "omega_max must be positive and finite, got {omega_max}"
            )));
        }
        Ok(Self { sigma0, omega_max })
    }

    /// Region with [`default_omega_max`].
    pub fn with_default_window(q: &QuasiPolynomial, sigma0: f64, h_final: f64) -> Result<Self> {
        Self::new(sigma0, default_omega_max(q, sigma0, h_final)?)
    }

    pub fn contains(&self, s: Complex64) -> bool {
        s.re > self.sigma0
    }
}

/// Default frequency window for a sweep up to `h_final`.
///
/// Takes the larger of `1.25 (root_bound(a + b) + 2 pi (n_a + 1) / h_final)`
/// and `1.25 R`, where `R` is [`QuasiPolynomial::zero_modulus_bound`]; the
/// second term guarantees that every zero in the region, and therefore every
/// crossing, lies inside the window.
pub fn default_omega_max(q: &QuasiPolynomial, sigma0: f64, h_final: f64) -> Result<f64> {
    if !(h_final > 0.0) {
        return Err(Error::InvalidInput(format!("h_final must be positive, got {h_final}")));
    }
    let heuristic = 1.25
        * (q.delay_zero_polynomial().root_bound()?
            + 2.0 * PI * (q.a().degree() as f64 + 1.0) / h_final);
    let guaranteed = 1.25 * q.zero_modulus_bound(sigma0, h_final);
    Ok(heuristic.max(guaranteed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    /// Crossing frequency; the zero sits at `sigma0 + j omega`.
    pub omega: f64,
    /// Delay at which the zero is on the boundary.
    pub delay: f64,
    /// Integer `k` of the phase equation.
    pub branch: i64,
    pub entering: bool,
    /// Left side of the direction inequality; `entering == (rt_value > 0)`.
    pub rt_value: f64,
}

impl CrossingEvent {
    pub fn point(&self, sigma0: f64) -> Complex64 {
        Complex64::new(sigma0, self.omega)
    }

    /// Real crossings (`omega = 0`) bring one zero; others bring a conjugate pair.
    pub fn multiplicity(&self) -> usize {
        if self.omega == 0.0 {
            1
        } else {
            2
        }
    }
}

/// `h(omega) = -ln|a/b| / sigma0` at `s = sigma0 + j omega`, or `None` when
/// that delay is not positive.
pub fn delay_of_omega(q: &QuasiPolynomial, sigma0: f64, omega: f64) -> Result<Option<f64>> {
    if sigma0 == 0.0 {
        return Err(Error::InvalidInput(
            "magnitude equation is undefined for sigma0 = 0".into(),
        ));
    }
    let s = Complex64::new(sigma0, omega);
    let b = q.b().eval(s);
    if b.norm() == 0.0 {
        return Err(Error::BoundaryPole { omega });
    }
    let h = -(q.a().eval(s) / b).norm().ln() / sigma0;
    Ok((h > 0.0).then_some(h))
}

/// `Re[(1/s)(b'/b - a'/a - delay)]` at `s = sigma0 + j omega`.
/// Positive means the zero enters `Re(s) > sigma0` as the delay grows.
pub fn direction_test(q: &QuasiPolynomial, sigma0: f64, omega: f64, delay: f64) -> Result<f64> {
    let s = Complex64::new(sigma0, omega);
    let degenerate = |reason: &str| Error::DegenerateCrossing {
        omega,
        delay,
        reason: reason.to_string(),
    };
    if s.norm() == 0.0 {
        return Err(degenerate("crossing point is s = 0"));
    }
    let a = q.a().eval(s);
    let b = q.b().eval(s);
    if a.norm() == 0.0 {
        return Err(degenerate("a vanishes at the crossing point"));
    }
    if b.norm() == 0.0 {
        return Err(degenerate("b vanishes at the crossing point"));
    }
    let inner = q.db().eval(s) / b - q.da().eval(s) / a - delay;
    Ok((inner / s).re)
}

/// All boundary crossings with `0 <= omega <= omega_max` and
/// `0 < delay <= h_final`, sorted by delay. Each accepted event satisfies
/// `|f(s, delay)| <= tol * scale_at(s)` at `s = sigma0 + j omega`.
///
/// Tangential and degenerate crossings are logged and left out.
pub fn find_crossings(
    q: &QuasiPolynomial,
    region: &Region,
    h_final: f64,
    tol: f64,
) -> Result<Vec<CrossingEvent>> {
    if !(h_final > 0.0) {
        return Err(Error::InvalidInput(format!("h_final must be positive, got {h_final}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("crossing tolerance must be positive, got {tol}")));
    }
    if q.is_delay_free() {
        return Ok(Vec::new());
    }
    let candidates = if region.sigma0 == 0.0 {
        imaginary_axis_candidates(q, region, h_final)?
    } else {
        phase_scan_candidates(q, region, h_final)
    };

    let mut events = Vec::new();
    for (omega, delay) in candidates {
        if !(delay > 0.0 && delay <= h_final) || !(0.0..=region.omega_max).contains(&omega) {
            continue;
        }
        let s = Complex64::new(region.sigma0, omega);
        let residual = match q.eval_f(s, delay) {
            Ok(f) => f.norm(),
            Err(_) => continue,
        };
        if residual > tol * q.scale_at(s) {
            log::warn!(
                "discarding crossing candidate omega = {omega}, delay = {delay}: residual {residual:e}"
            );
            continue;
        }
        let rt_value = match direction_test(q, region.sigma0, omega, delay) {
            Ok(v) if v.abs() > TANGENTIAL_TOL => v,
            Ok(v) => {
                log::warn!("tangential crossing at omega = {omega}, delay = {delay} (rt = {v:e}); excluded");
                continue;
            }
            Err(e) => {
                log::warn!("{e}; excluded");
                continue;
            }
        };
        events.push(CrossingEvent {
            omega,
            delay,
            branch: phase_branch(q, s, delay),
            entering: rt_value > 0.0,
            rt_value,
        });
    }

    events.sort_by(|x, y| x.omega.total_cmp(&y.omega).then(x.delay.total_cmp(&y.delay)));
    let mut merged: Vec<CrossingEvent> = Vec::with_capacity(events.len());
    for e in events {
        let dup = merged.iter().rev().take_while(|m| e.omega - m.omega <= COALESCE_TOL).any(|m| {
            (m.delay - e.delay).abs() <= COALESCE_TOL
        });
        if !dup {
            merged.push(e);
        }
    }
    merged.sort_by(|x, y| x.delay.total_cmp(&y.delay).then(x.omega.total_cmp(&y.omega)));
    Ok(merged)
}

/// The `k` for which `h omega + 2 k pi + Arg(-a/b)` is closest to zero.
fn phase_branch(q: &QuasiPolynomial, s: Complex64, delay: f64) -> i64 {
    let arg = (-q.a().eval(s) / q.b().eval(s)).arg();
    (-(delay * s.im + arg) / (2.0 * PI)).round() as i64
}

/// Residual of the phase equation at an event, wrapped to `(-pi, pi]`.
pub fn phase_residual(q: &QuasiPolynomial, sigma0: f64, event: &CrossingEvent) -> f64 {
    let s = Complex64::new(sigma0, event.omega);
    let arg = (-q.a().eval(s) / q.b().eval(s)).arg();
    wrap(event.delay * event.omega + 2.0 * PI * event.branch as f64 + arg)
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

struct ScanPoint {
    omega: f64,
    /// Unwrapped `arg(-a/b)`.
    phase: f64,
    /// `h(omega)`; may be negative or non-finite.
    delay: f64,
}

impl ScanPoint {
    fn total_phase(&self) -> f64 {
        self.delay * self.omega + self.phase
    }
}

fn ratio_at(q: &QuasiPolynomial, sigma0: f64, omega: f64) -> Complex64 {
    let s = Complex64::new(sigma0, omega);
    -q.a().eval(s) / q.b().eval(s)
}

fn phase_scan_candidates(q: &QuasiPolynomial, region: &Region, h_final: f64) -> Vec<(f64, f64)> {
    let sigma0 = region.sigma0;
    let magnitude_delay = |r: Complex64| -r.norm().ln() / sigma0;
    let mut candidates = Vec::new();

    // omega = 0: -a/b is real; a real zero crosses when it is positive.
    let r0 = ratio_at(q, sigma0, 0.0);
    if r0.re > 0.0 && r0.re.is_finite() {
        candidates.push((0.0, magnitude_delay(r0)));
    }

    // Unwrap arg(-a/b) along a grid refined wherever it turns quickly.
    let step = region.omega_max / (SCAN_POINTS - 1) as f64;
    let mut points: Vec<Vec<ScanPoint>> = vec![Vec::new()];
    let start = ratio_at(q, sigma0, 0.0);
    points[0].push(ScanPoint {
        omega: 0.0,
        phase: start.arg(),
        delay: magnitude_delay(start),
    });
    for i in 1..SCAN_POINTS {
        let lo = (i - 1) as f64 * step;
        let hi = if i == SCAN_POINTS - 1 { region.omega_max } else { i as f64 * step };
        push_refined(q, sigma0, lo, hi, 0, &mut points);
    }

    // Each cell is bracketed and bisected independently.
    let cells: Vec<(&ScanPoint, &ScanPoint)> = points
        .iter()
        .flat_map(|run| run.windows(2).map(|w| (&w[0], &w[1])))
        .collect();
    let found: Vec<Vec<(f64, f64)>> = cells
        .par_iter()
        .map(|&(p0, p1)| bracket_cell(q, sigma0, h_final, p0, p1))
        .collect();
    candidates.extend(found.into_iter().flatten());
    candidates
}

// Appends points on (lo, hi] to the last run, subdividing while the phase
// step exceeds MAX_PHASE_STEP. A non-finite ratio starts a new run.
fn push_refined(
    q: &QuasiPolynomial,
    sigma0: f64,
    lo: f64,
    hi: f64,
    depth: u32,
    runs: &mut Vec<Vec<ScanPoint>>,
) {
    let r = ratio_at(q, sigma0, hi);
    if !r.is_finite() || r.norm() == 0.0 {
        runs.push(Vec::new());
        return;
    }
    let delay = -r.norm().ln() / sigma0;
    let Some(prev) = runs.last().and_then(|run| run.last()) else {
        runs.last_mut().unwrap().push(ScanPoint { omega: hi, phase: r.arg(), delay });
        return;
    };
    let d = wrap(r.arg() - prev.phase);
    if d.abs() > MAX_PHASE_STEP && depth < MAX_REFINE_DEPTH {
        let mid = 0.5 * (lo + hi);
        push_refined(q, sigma0, lo, mid, depth + 1, runs);
        push_refined(q, sigma0, mid, hi, depth + 1, runs);
    } else {
        let phase = prev.phase + d;
        runs.last_mut().unwrap().push(ScanPoint { omega: hi, phase, delay });
    }
}

fn bracket_cell(
    q: &QuasiPolynomial,
    sigma0: f64,
    h_final: f64,
    p0: &ScanPoint,
    p1: &ScanPoint,
) -> Vec<(f64, f64)> {
    if !(p0.delay.is_finite() && p1.delay.is_finite()) {
        return Vec::new();
    }
    // h is continuous over the cell, so cells far outside (0, h_final] hold no events.
    let slack = 0.25 * h_final;
    if p0.delay.min(p1.delay) > h_final + slack || p0.delay.max(p1.delay) < -slack {
        return Vec::new();
    }
    let (g0, g1) = (p0.total_phase(), p1.total_phase());
    let n_lo = (g0.min(g1) / (2.0 * PI)).floor() as i64;
    let n_hi = (g0.max(g1) / (2.0 * PI)).ceil() as i64;
    let mut out = Vec::new();
    for n in n_lo..=n_hi {
        let target = 2.0 * PI * n as f64;
        let (r0, r1) = (g0 - target, g1 - target);
        // half-open in omega: a root exactly at p0 belongs to the previous cell
        if (r0 < 0.0) == (r1 < 0.0) {
            continue;
        }
        let total = |omega: f64| -> f64 {
            let r = ratio_at(q, sigma0, omega);
            let phase = p0.phase + wrap(r.arg() - p0.phase);
            -r.norm().ln() / sigma0 * omega + phase - target
        };
        let (mut lo, mut hi) = (p0.omega, p1.omega);
        let mut f_lo = r0;
        for _ in 0..200 {
            if hi - lo <= OMEGA_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let f_mid = total(mid);
            if (f_mid < 0.0) == (f_lo < 0.0) {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
        let omega = 0.5 * (lo + hi);
        if omega <= COALESCE_TOL {
            // the omega = 0 crossing is handled separately
            continue;
        }
        let delay = -ratio_at(q, sigma0, omega).norm().ln() / sigma0;
        out.push((omega, delay));
    }
    out
}

/// `|a(jw)|^2 - |b(jw)|^2` as a real polynomial in `w`.
pub fn imaginary_axis_magnitude_polynomial(q: &QuasiPolynomial) -> RealPolynomial {
    let split = |p: &RealPolynomial| -> (RealPolynomial, RealPolynomial) {
        // j^k cycles through 1, j, -1, -j
        let mut re = vec![0.0; p.coeffs().len()];
        let mut im = vec![0.0; p.coeffs().len()];
        for (k, &c) in p.coeffs().iter().enumerate() {
            match k % 4 {
                0 => re[k] = c,
                1 => im[k] = c,
                2 => re[k] = -c,
                _ => im[k] = -c,
            }
        }
        (
            RealPolynomial::new(re).expect("finite"),
            RealPolynomial::new(im).expect("finite"),
        )
    };
    let sq = |p: &RealPolynomial| -> RealPolynomial {
        let (re, im) = split(p);
        &(&re * &re) + &(&im * &im)
    };
    &sq(q.a()) - &sq(q.b())
}

fn imaginary_axis_candidates(
    q: &QuasiPolynomial,
    region: &Region,
    h_final: f64,
) -> Result<Vec<(f64, f64)>> {
    let p = imaginary_axis_magnitude_polynomial(q);
    let roots = p.find_roots(1e-10)?;
    let dp = p.derivative();
    let mut omegas: Vec<f64> = Vec::new();
    for r in roots {
        if r.im.abs() > 1e-6 * (1.0 + r.norm()) || r.re <= COALESCE_TOL {
            continue;
        }
        // polish on the real line
        let mut w = r.re;
        for _ in 0..8 {
            let d = dp.eval_real(w);
            if d == 0.0 {
                break;
            }
            let step = p.eval_real(w) / d;
            w -= step;
            if step.abs() <= 1e-15 * w.abs() {
                break;
            }
        }
        if w > COALESCE_TOL && !omegas.iter().any(|&o| (o - w).abs() <= COALESCE_TOL) {
            omegas.push(w);
        }
    }

    let mut out = Vec::new();
    for omega in omegas {
        let theta = ratio_at(q, 0.0, omega).arg();
        let k_max = (h_final * region.omega_max / (2.0 * PI)).ceil() as i64 + 1;
        for k in -k_max..=k_max {
            let delay = -(theta + 2.0 * PI * k as f64) / omega;
            if delay > 0.0 && delay <= h_final {
                out.push((omega, delay));
            }
        }
    }
    Ok(out)
}
