//! Zero counting by the argument principle and a plain Newton locator.
//!
//! The count is the winding number of `f(., h)` around 0 along a
//! rectangle, obtained by summing phase increments between contour samples.
//! Neighbouring samples whose phase differs by more than `pi / 2` are
//! subdivided until every increment is unambiguous.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossing::Region;
use crate::error::{Error, Result};
use crate::quasipoly::QuasiPolynomial;

pub const DEFAULT_SEGMENTS: usize = 256;
pub const MAX_REFINE_LEVELS: u32 = 12;
/// Minimum `|f(s)|` on the contour, relative to [`QuasiPolynomial::scale_at`].
pub const CLEARANCE: f64 = 1e-6;
/// Outward shift of every edge per failed clearance check.
pub const INFLATION: f64 = 1e-3;
pub const INFLATION_ATTEMPTS: usize = 5;
/// Largest accepted distance of `total / 2 pi` from an integer.
pub const ROUNDING_SLACK: f64 = 0.25;
pub const NEWTON_CAP: usize = 100;

const MAX_PHASE_JUMP: f64 = PI / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourRectangle {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub segments_per_edge: usize,
}

impl ContourRectangle {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        Self::with_segments(re_min, re_max, im_min, im_max, DEFAULT_SEGMENTS)
    }

    pub fn with_segments(
        re_min: f64,
        re_max: f64,
        im_min: f64,
        im_max: f64,
        segments_per_edge: usize,
    ) -> Result<Self> {
        let finite = [re_min, re_max, im_min, im_max].iter().all(|x| x.is_finite());
        if !finite || !(re_min < re_max) || !(im_min < im_max) {
            return Err(Error::InvalidInput(format!(
                "degenerate rectangle [{re_min}, {re_max}] x [{im_min}, {im_max}]"
            )));
        }
        if segments_per_edge == 0 {
            return Err(Error::InvalidInput("segments_per_edge must be positive".into()));
        }
        Ok(Self { re_min, re_max, im_min, im_max, segments_per_edge })
    }

    /// `[sigma0, R + 1] x [-omega_max, omega_max]` with `R` from
    /// [`QuasiPolynomial::zero_modulus_bound`], so every zero of the region
    /// with `h <= h_final` lies inside or on the left edge.
    pub fn for_region(q: &QuasiPolynomial, region: &Region, h_final: f64) -> Result<Self> {
        let right = q.zero_modulus_bound(region.sigma0, h_final) + 1.0;
        Self::new(region.sigma0, right.max(region.sigma0 + 1.0), -region.omega_max, region.omega_max)
    }

    pub fn inflated(&self, by: f64) -> Self {
        Self {
            re_min: self.re_min - by,
            re_max: self.re_max + by,
            im_min: self.im_min - by,
            im_max: self.im_max + by,
            ..*self
        }
    }

    pub fn with_segments_per_edge(&self, segments_per_edge: usize) -> Self {
        Self { segments_per_edge, ..*self }
    }

    /// Left and right parts of a vertical cut at `re`.
    pub fn split_re(&self, re: f64) -> Result<(Self, Self)> {
        Ok((
            Self::with_segments(self.re_min, re, self.im_min, self.im_max, self.segments_per_edge)?,
            Self::with_segments(re, self.re_max, self.im_min, self.im_max, self.segments_per_edge)?,
        ))
    }

    /// Lower and upper parts of a horizontal cut at `im`.
    pub fn split_im(&self, im: f64) -> Result<(Self, Self)> {
        Ok((
            Self::with_segments(self.re_min, self.re_max, self.im_min, im, self.segments_per_edge)?,
            Self::with_segments(self.re_min, self.re_max, im, self.im_max, self.segments_per_edge)?,
        ))
    }

    pub fn contains(&self, s: Complex64) -> bool {
        s.re > self.re_min && s.re < self.re_max && s.im > self.im_min && s.im < self.im_max
    }

    // Counter-clockwise corners, starting bottom left.
    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re_min, self.im_min),
            Complex64::new(self.re_max, self.im_min),
            Complex64::new(self.re_max, self.im_max),
            Complex64::new(self.re_min, self.im_max),
        ]
    }

    fn boundary_points(&self) -> Vec<Complex64> {
        let c = self.corners();
        let n = self.segments_per_edge;
        let mut pts = Vec::with_capacity(4 * n + 1);
        for e in 0..4 {
            let (p, q) = (c[e], c[(e + 1) % 4]);
            for i in 0..n {
                pts.push(p + (q - p) * (i as f64 / n as f64));
            }
        }
        pts.push(c[0]);
        pts
    }
}

/// Number of zeros of `f(., h)` inside `rect`, with multiplicity.
///
/// When `|f(s)| <= CLEARANCE * scale_at(s)` at a contour sample, or a phase
/// jump survives [`MAX_REFINE_LEVELS`] subdivisions, the contour is taken to
/// pass through a zero: the rectangle is inflated by [`INFLATION`] and
/// sampled again.
pub fn count_zeros(q: &QuasiPolynomial, h: f64, rect: &ContourRectangle) -> Result<usize> {
    Ok(count_zeros_detailed(q, h, rect)?.count)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroCount {
    pub count: usize,
    /// The rectangle actually used, after any inflation.
    pub rect: ContourRectangle,
    /// `total phase / 2 pi` before rounding.
    pub winding: f64,
    pub min_abs_f: f64,
}

pub fn count_zeros_detailed(q: &QuasiPolynomial, h: f64, rect: &ContourRectangle) -> Result<ZeroCount> {
    let mut current = *rect;
    let mut min_abs_f = 0.0;
    for attempt in 0..=INFLATION_ATTEMPTS {
        if attempt > 0 {
            current = current.inflated(INFLATION);
            log::debug!("contour too close to a zero (min |f| = {min_abs_f:e}); inflating, attempt {attempt}");
        }
        match winding(q, h, &current)? {
            Winding::TooClose(m) => min_abs_f = m,
            Winding::Total { phase, min_abs_f } => {
                let w = phase / (2.0 * PI);
                let n = w.round();
                if (w - n).abs() >= ROUNDING_SLACK || n < 0.0 {
                    return Err(Error::PhaseAmbiguity { winding: w });
                }
                return Ok(ZeroCount { count: n as usize, rect: current, winding: w, min_abs_f });
            }
        }
    }
    Err(Error::ContourTooClose { min_abs_f, attempts: INFLATION_ATTEMPTS })
}

enum Winding {
    TooClose(f64),
    Total { phase: f64, min_abs_f: f64 },
}

fn winding(q: &QuasiPolynomial, h: f64, rect: &ContourRectangle) -> Result<Winding> {
    let pts = rect.boundary_points();
    let vals: Vec<Complex64> = pts.par_iter().map(|&p| q.eval_f(p, h)).collect::<Result<_>>()?;
    if let Some(i) = (0..pts.len()).find(|&i| too_close(q, pts[i], vals[i])) {
        return Ok(Winding::TooClose(vals[i].norm()));
    }
    let min_abs_f = vals.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    let pieces: Vec<Segment> = (0..pts.len() - 1)
        .into_par_iter()
        .map(|i| segment_phase(q, h, pts[i], vals[i], pts[i + 1], vals[i + 1], 0))
        .collect::<Result<_>>()?;
    let mut phase = 0.0;
    let mut min_abs = min_abs_f;
    for seg in pieces {
        match seg {
            // A jump that survives full refinement means a zero on the segment.
            Segment::TooClose(m) | Segment::Unresolved(m) => return Ok(Winding::TooClose(m)),
            Segment::Phase { delta, min_abs_f } => {
                phase += delta;
                min_abs = min_abs.min(min_abs_f);
            }
        }
    }
    Ok(Winding::Total { phase, min_abs_f: min_abs })
}

enum Segment {
    Phase { delta: f64, min_abs_f: f64 },
    TooClose(f64),
    /// Phase jump still above the limit at full refinement; holds min `|f|`.
    Unresolved(f64),
}

fn too_close(q: &QuasiPolynomial, p: Complex64, f: Complex64) -> bool {
    f.norm() <= CLEARANCE * q.scale_at(p)
}

fn segment_phase(
    q: &QuasiPolynomial,
    h: f64,
    p0: Complex64,
    f0: Complex64,
    p1: Complex64,
    f1: Complex64,
    depth: u32,
) -> Result<Segment> {
    let delta = (f1 / f0).arg();
    if delta.abs() <= MAX_PHASE_JUMP {
        return Ok(Segment::Phase { delta, min_abs_f: f0.norm().min(f1.norm()) });
    }
    if depth >= MAX_REFINE_LEVELS {
        return Ok(Segment::Unresolved(f0.norm().min(f1.norm())));
    }
    let pm = (p0 + p1) * 0.5;
    let fm = q.eval_f(pm, h)?;
    if too_close(q, pm, fm) {
        return Ok(Segment::TooClose(fm.norm()));
    }
    let left = segment_phase(q, h, p0, f0, pm, fm, depth + 1)?;
    let right = segment_phase(q, h, pm, fm, p1, f1, depth + 1)?;
    Ok(match (left, right) {
        (Segment::Phase { delta: d0, min_abs_f: m0 }, Segment::Phase { delta: d1, min_abs_f: m1 }) => {
            Segment::Phase { delta: d0 + d1, min_abs_f: m0.min(m1) }
        }
        (Segment::Phase { .. }, other) | (other, _) => other,
    })
}

/// Newton iteration `s <- s - f / f_s` at fixed `h` until
/// `|f(s)| <= tol * scale_at(s)`, for at most [`NEWTON_CAP`] iterations.
pub fn refine_zero(q: &QuasiPolynomial, h: f64, seed: Complex64, tol: f64) -> Result<Complex64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let fail = || Error::NoZeroNearSeed { seed, h };
    let mut s = seed;
    for _ in 0..=NEWTON_CAP {
        let f = q.eval_f(s, h).map_err(|_| fail())?;
        if f.norm() <= tol * q.scale_at(s) {
            return Ok(s);
        }
        let fs = q.eval_fs(s, h).map_err(|_| fail())?;
        let next = s - f / fs;
        if !next.is_finite() {
            return Err(fail());
        }
        s = next;
    }
    Err(fail())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::RealPolynomial;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> QuasiPolynomial {
        QuasiPolynomial::from_coeffs(&[1.0, 1.0, 1.0], &[0.0, 1.0]).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fixture_zeros_at_pi() -> Vec<Complex64> {
        let upper = [
            (0.00, 1.00),
            (-0.27, 2.60),
            (-0.47, 4.54),
            (-0.59, 6.52),
            (-0.68, 8.51),
            (-0.75, 10.51),
            (-0.80, 12.51),
            (-0.85, 14.50),
            (-0.89, 16.50),
            (-0.93, 18.50),
            (-0.96, 20.50),
            (-0.99, 22.50),
        ];
        let mut z = vec![c(-0.30, 0.0)];
        for (re, im) in upper {
            z.push(c(re, im));
            z.push(c(re, -im));
        }
        z
    }

    #[test]
    fn rejects_degenerate_rectangles() {
        assert!(ContourRectangle::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(ContourRectangle::new(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(ContourRectangle::with_segments(0.0, 1.0, 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn fixture_count_at_pi() {
        let rect = ContourRectangle::new(-1.0001, 3.0, -23.0, 23.0).unwrap();
        let n = count_zeros(&fixture(), PI, &rect).unwrap();
        // One real zero near -0.30 plus twelve conjugate pairs.
        assert_eq!(n, 25);
        assert_eq!(n, fixture_zeros_at_pi().len());
    }

    #[test]
    fn fixture_count_at_zero_delay() {
        let rect = ContourRectangle::new(-1.5, 1.0, -1.0, 1.0).unwrap();
        assert_eq!(count_zeros(&fixture(), 0.0, &rect).unwrap(), 2);
    }

    #[test]
    fn delay_free_zero_outside() {
        let a = RealPolynomial::new(vec![1.0, 1.0]).unwrap();
        let q = QuasiPolynomial::delay_free(a).unwrap();
        let rect = ContourRectangle::new(0.0, 2.0, -1.0, 1.0).unwrap();
        for h in [0.0, 1.0, 50.0] {
            assert_eq!(count_zeros(&q, h, &rect).unwrap(), 0);
        }
    }

    #[test]
    fn contour_through_zero_is_inflated() {
        // The double zero at -1 sits on the left edge.
        let rect = ContourRectangle::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let r = count_zeros_detailed(&fixture(), 0.0, &rect).unwrap();
        assert_eq!(r.count, 2);
        assert!(r.rect.re_min < -1.0);
    }

    #[test]
    fn refine_converges_to_marginal_zero() {
        let s = refine_zero(&fixture(), PI, c(0.1, 0.9), 1e-12).unwrap();
        assert!((s - c(0.0, 1.0)).norm() < 1e-8, "{s}");
    }

    #[test]
    fn refine_keeps_exact_zero() {
        let q = fixture();
        let s = c(0.0, 1.0);
        assert!(q.eval_f(s, PI).unwrap().norm() < 1e-15);
        assert_eq!(refine_zero(&q, PI, s, 1e-12).unwrap(), s);
    }

    #[test]
    fn refine_fails_without_zero() {
        let a = RealPolynomial::new(vec![1.0, 0.0, 1.0]).unwrap();
        let q = QuasiPolynomial::delay_free(a).unwrap();
        // Newton on s^2 + 1 from a real seed never leaves the real axis.
        assert!(matches!(
            refine_zero(&q, 0.0, c(0.5, 0.0), 1e-12),
            Err(Error::NoZeroNearSeed { .. })
        ));
    }

    #[test]
    fn tabulated_zeros_are_near_true_zeros() {
        let q = fixture();
        let mut found = Vec::new();
        for z in fixture_zeros_at_pi() {
            let s = refine_zero(&q, PI, z, 1e-10).unwrap();
            assert!((s.re - z.re).abs() < 0.01 && (s.im - z.im).abs() < 0.01, "{z} -> {s}");
            assert!(found.iter().all(|&f: &Complex64| (f - s).norm() > 1e-6));
            found.push(s);
        }
    }

    #[test]
    fn count_is_invariant_under_refinement() {
        let q = fixture();
        let rect = ContourRectangle::new(-1.0, 4.0, -25.0, 25.0).unwrap();
        for h in [0.3, 0.5, 1.0, 2.0, 2.7, PI] {
            let base = count_zeros(&q, h, &rect).unwrap();
            for segs in [512, 1024] {
                assert_eq!(count_zeros(&q, h, &rect.with_segments_per_edge(segs)).unwrap(), base);
            }
        }
    }

    #[test]
    fn count_is_additive_under_bisection() {
        let q = fixture();
        let rect = ContourRectangle::new(-1.0001, 3.0, -23.0, 23.0).unwrap();
        for h in [0.5, 1.0, 2.0, PI] {
            let whole = count_zeros(&q, h, &rect).unwrap();
            let (lo, hi) = rect.split_im(0.37).unwrap();
            assert_eq!(count_zeros(&q, h, &lo).unwrap() + count_zeros(&q, h, &hi).unwrap(), whole);
            let (l, r) = rect.split_re(-0.5).unwrap();
            assert_eq!(count_zeros(&q, h, &l).unwrap() + count_zeros(&q, h, &r).unwrap(), whole);
        }
    }

    #[test]
    fn delay_free_count_matches_polynomial_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let deg = rng.gen_range(1..=8);
            let mut coeffs: Vec<f64> = (0..deg).map(|_| rng.gen_range(-2.0..2.0)).collect();
            coeffs.push(rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
            let a = RealPolynomial::new(coeffs).unwrap();
            let roots = a.find_roots(1e-10).unwrap();
            let q = QuasiPolynomial::delay_free(a).unwrap();
            let rect = ContourRectangle::new(-0.7, 1.3, -0.9, 1.1).unwrap();
            let r = count_zeros_detailed(&q, 0.0, &rect).unwrap();
            let expected = roots.iter().filter(|&&z| r.rect.contains(z)).count();
            assert_eq!(r.count, expected, "roots {roots:?}");
        }
    }
}
