//! The retarded quasi-polynomial `f(s, h) = a(s) + b(s) e^{-hs}` and its
//! partial derivatives.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::RealPolynomial;

/// Largest admissible `Re(-h s)` before `exp` is considered out of domain.
pub const EXP_GUARD: f64 = 700.0;

/// Relative threshold below which `|f_s|` is treated as singular.
pub const SINGULAR_FS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuasiPolynomialRepr", into = "QuasiPolynomialRepr")]
pub struct QuasiPolynomial {
    a: RealPolynomial,
    b: RealPolynomial,
    da: RealPolynomial,
    db: RealPolynomial,
    delay_free: bool,
}

/// `f`, `f_s` and `f_h` at one point, sharing a single exponential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub f: Complex64,
    pub fs: Complex64,
    pub fh: Complex64,
}

impl QuasiPolynomial {
    /// A retarded quasi-polynomial; requires `deg a > deg b` and `b != 0`.
    pub fn new(a: RealPolynomial, b: RealPolynomial) -> Result<Self> {
        if b.is_zero() {
            return Err(Error::InvalidInput(
                "b is identically zero; use QuasiPolynomial::delay_free for a problem without delay term"
                    .into(),
            ));
        }
        if a.is_zero() || a.degree() <= b.degree() {
            return Err(Error::InvalidInput(format!(
                "quasi-polynomial must be retarded: deg(a) = {} must exceed deg(b) = {}",
                a.degree(),
                b.degree()
            )));
        }
        Ok(Self::build(a, b, false))
    }

    /// A problem with no delay term: `f(s, h) = a(s)` for every `h`.
    pub fn delay_free(a: RealPolynomial) -> Result<Self> {
        if a.degree() == 0 {
            return Err(Error::InvalidInput(
                "delay-free problem needs deg(a) >= 1".into(),
            ));
        }
        Ok(Self::build(a, RealPolynomial::zero(), true))
    }

    pub fn from_coeffs(a: &[f64], b: &[f64]) -> Result<Self> {
        Self::new(RealPolynomial::new(a.to_vec())?, RealPolynomial::new(b.to_vec())?)
    }

    fn build(a: RealPolynomial, b: RealPolynomial, delay_free: bool) -> Self {
        let da = a.derivative();
        let db = b.derivative();
        Self { a, b, da, db, delay_free }
    }

    pub fn a(&self) -> &RealPolynomial {
        &self.a
    }

    pub fn b(&self) -> &RealPolynomial {
        &self.b
    }

    pub fn da(&self) -> &RealPolynomial {
        &self.da
    }

    pub fn db(&self) -> &RealPolynomial {
        &self.db
    }

    pub fn is_delay_free(&self) -> bool {
        self.delay_free
    }

    /// `a + b`, whose zeros are the zeros of `f` at `h = 0`.
    pub fn delay_zero_polynomial(&self) -> RealPolynomial {
        &self.a + &self.b
    }

    /// Tolerance scale: largest coefficient magnitude of `a`.
    pub fn scale(&self) -> f64 {
        self.a.max_abs_coeff()
    }

    /// [`scale`](Self::scale) times `max(1, |s|)^deg(a)`: the size of the
    /// dominant term at `s`, against which residuals at `s` are judged.
    pub fn scale_at(&self, s: Complex64) -> f64 {
        self.scale() * s.norm().max(1.0).powi(self.a.degree() as i32)
    }

    fn exp_term(&self, s: Complex64, h: f64) -> Result<Complex64> {
        if h == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let x = -h * s;
        if x.re > EXP_GUARD || !x.re.is_finite() {
            return Err(Error::OutOfDomain { s, h });
        }
        Ok(x.exp())
    }

    pub fn eval_f(&self, s: Complex64, h: f64) -> Result<Complex64> {
        let e = self.exp_term(s, h)?;
        Ok(self.a.eval(s) + self.b.eval(s) * e)
    }

    pub fn eval_fs(&self, s: Complex64, h: f64) -> Result<Complex64> {
        let e = self.exp_term(s, h)?;
        Ok(self.da.eval(s) + (self.db.eval(s) - self.b.eval(s) * h) * e)
    }

    pub fn eval_fh(&self, s: Complex64, h: f64) -> Result<Complex64> {
        let e = self.exp_term(s, h)?;
        Ok(-s * self.b.eval(s) * e)
    }

    pub fn partials(&self, s: Complex64, h: f64) -> Result<Partials> {
        let e = self.exp_term(s, h)?;
        let bs = self.b.eval(s);
        let be = bs * e;
        Ok(Partials {
            f: self.a.eval(s) + be,
            fs: self.da.eval(s) + (self.db.eval(s) - bs * h) * e,
            fh: -s * be,
        })
    }

    /// First-order zero displacement rate `|f_h / f_s|`: a zero at `(s, h)`
    /// moves by at most this times `|dh|`, plus `O(dh^2)`.
    pub fn sensitivity_bound(&self, s: Complex64, h: f64) -> Result<f64> {
        let p = self.partials(s, h)?;
        if p.fs.norm() <= SINGULAR_FS * self.scale() {
            return Err(Error::SingularSensitivity { s, h });
        }
        Ok(p.fh.norm() / p.fs.norm())
    }

    /// A radius `R` such that no zero of `f(., h)` with `Re(s) >= sigma0`
    /// and `0 <= h <= h_final` has `|s| >= R`.
    ///
    /// Any such zero satisfies `|a(s)| <= C |b(s)|` with
    /// `C = max(1, e^{-sigma0 h_final})`. For `|s| = r` the lower bound
    /// `|a_n| r^n - sum_{k<n} |a_k| r^k - C sum_k |b_k| r^k`, divided by
    /// `r^n`, is increasing in `r`, so its first positive radius bounds
    /// every zero.
    pub fn zero_modulus_bound(&self, sigma0: f64, h_final: f64) -> f64 {
        let c = if self.delay_free {
            0.0
        } else {
            (-sigma0 * h_final).exp().max(1.0)
        };
        let n = self.a.degree();
        let lead = self.a.leading().abs();
        let margin = |r: f64| -> f64 {
            let mut rest = 0.0;
            for (k, ak) in self.a.coeffs()[..n].iter().enumerate() {
                rest += ak.abs() * r.powi(k as i32 - n as i32);
            }
            for (k, bk) in self.b.coeffs().iter().enumerate() {
                rest += c * bk.abs() * r.powi(k as i32 - n as i32);
            }
            lead - rest
        };
        let mut hi = 1.0;
        if margin(hi) > 0.0 {
            return hi;
        }
        while margin(hi) <= 0.0 {
            hi *= 2.0;
        }
        let mut lo = hi / 2.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if margin(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

#[derive(Serialize, Deserialize)]
struct QuasiPolynomialRepr {
    a: RealPolynomial,
    b: RealPolynomial,
}

impl TryFrom<QuasiPolynomialRepr> for QuasiPolynomial {
    type Error = Error;

    fn try_from(r: QuasiPolynomialRepr) -> Result<Self> {
        if r.b.is_zero() {
            Self::delay_free(r.a)
        } else {
            Self::new(r.a, r.b)
        }
    }
}

impl From<QuasiPolynomial> for QuasiPolynomialRepr {
    fn from(q: QuasiPolynomial) -> Self {
        Self { a: q.a, b: q.b }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn fixture() -> QuasiPolynomial {
        QuasiPolynomial::from_coeffs(&[1.0, 1.0, 1.0], &[0.0, 1.0]).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_non_retarded() {
        assert!(QuasiPolynomial::from_coeffs(&[1.0, 1.0], &[0.0, 1.0]).is_err());
        assert!(QuasiPolynomial::from_coeffs(&[1.0, 1.0], &[0.0, 0.0, 2.0]).is_err());
        let err = QuasiPolynomial::from_coeffs(&[1.0, 1.0], &[0.0]).unwrap_err();
        assert!(err.to_string().contains("delay_free"));
        assert!(QuasiPolynomial::delay_free(RealPolynomial::constant(3.0)).is_err());
    }

    #[test]
    fn eval_f_examples() {
        let q = fixture();
        assert!(q.eval_f(c(0.0, 1.0), PI).unwrap().norm() < 1e-14);
        assert_eq!(q.eval_f(c(-1.0, 0.0), 0.0).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn h_zero_is_bitwise_a_plus_b() {
        let q = QuasiPolynomial::from_coeffs(&[0.7, -1.3, 2.9, 0.4], &[1.1, -0.6]).unwrap();
        for s in [c(0.3, -1.2), c(-2.0, 4.5), c(1e3, 1e-3)] {
            assert_eq!(q.eval_f(s, 0.0).unwrap(), q.a().eval(s) + q.b().eval(s));
        }
    }

    #[test]
    fn eval_fs_examples() {
        let q = fixture();
        assert_eq!(q.eval_fs(c(-1.0, 0.0), 0.0).unwrap(), c(0.0, 0.0));
        assert_eq!(q.eval_fs(c(0.0, 1.0), 0.0).unwrap(), c(2.0, 2.0));
    }

    #[test]
    fn eval_fh_examples() {
        let q = fixture();
        assert_eq!(q.eval_fh(c(0.0, 0.0), 1.7).unwrap().norm(), 0.0);
        assert_eq!(q.eval_fh(c(0.0, 1.0), 0.0).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn overflow_guard_trips() {
        let q = fixture();
        assert!(matches!(q.eval_f(c(-300.0, 0.0), 3.0), Err(Error::OutOfDomain { .. })));
        assert!(q.eval_f(c(-200.0, 0.0), 3.0).is_ok());
    }

    #[test]
    fn sensitivity_examples() {
        let q = fixture();
        assert_eq!(q.sensitivity_bound(c(0.0, 0.0), 1.0).unwrap(), 0.0);
        let v = q.sensitivity_bound(c(0.0, 1.0), 0.0).unwrap();
        assert!((v - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-15);
        assert!(matches!(
            q.sensitivity_bound(c(-1.0, 0.0), 0.0),
            Err(Error::SingularSensitivity { .. })
        ));
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (QuasiPolynomial, Complex64, f64) {
        let na = rng.gen_range(1..=5);
        let nb = rng.gen_range(0..na);
        let mut a: Vec<f64> = (0..=na).map(|_| rng.gen_range(-2.0..2.0)).collect();
        a[na] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.5..2.0);
        let mut b: Vec<f64> = (0..=nb).map(|_| rng.gen_range(-2.0..2.0)).collect();
        b[nb] = rng.gen_range(0.5..2.0);
        let q = QuasiPolynomial::from_coeffs(&a, &b).unwrap();
        let s = c(rng.gen_range(-1.0..2.0), rng.gen_range(-3.0..3.0));
        (q, s, rng.gen_range(0.1..2.0))
    }

    #[test]
    fn partials_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (q, s, h) = random_instance(&mut rng);
            let delta = 1e-6;
            let fd_s = (q.eval_f(s + delta, h).unwrap() - q.eval_f(s - delta, h).unwrap())
                / (2.0 * delta);
            let fd_h = (q.eval_f(s, h + delta).unwrap() - q.eval_f(s, h - delta).unwrap())
                / (2.0 * delta);
            let fs = q.eval_fs(s, h).unwrap();
            let fh = q.eval_fh(s, h).unwrap();
            assert!((fd_s - fs).norm() <= 1e-6 * (1.0 + fs.norm()), "{fd_s} vs {fs}");
            assert!((fd_h - fh).norm() <= 1e-6 * (1.0 + fh.norm()), "{fd_h} vs {fh}");
        }
    }

    #[test]
    fn partials_agree_with_individual_evaluations() {
        let q = fixture();
        let (s, h) = (c(0.4, 2.2), 1.3);
        let p = q.partials(s, h).unwrap();
        assert_eq!(p.f, q.eval_f(s, h).unwrap());
        assert!((p.fs - q.eval_fs(s, h).unwrap()).norm() < 1e-14);
        assert!((p.fh - q.eval_fh(s, h).unwrap()).norm() < 1e-14);
    }

    #[test]
    fn zero_modulus_bound_covers_fixture_zeros() {
        let q = fixture();
        let r = q.zero_modulus_bound(-1.0, PI);
        // zeros up to |s| ~ 22.5 exist at h = pi
        assert!(r > 22.6 && r < 30.0, "{r}");
        // delay-free: bound reduces to a root bound of a
        let q = QuasiPolynomial::delay_free(RealPolynomial::new(vec![-6.0, 11.0, -6.0, 1.0]).unwrap())
            .unwrap();
        assert!(q.zero_modulus_bound(-1.0, 1.0) > 3.0);
    }

    proptest! {
        #[test]
        fn conjugate_symmetry(seed in any::<u64>(), re in -1.0..3.0f64, im in -5.0..5.0f64, h in 0.0..3.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (q, _, _) = random_instance(&mut rng);
            let s = c(re, im);
            let p = q.partials(s, h).unwrap();
            let pc = q.partials(s.conj(), h).unwrap();
            for (x, y) in [(p.f, pc.f), (p.fs, pc.fs), (p.fh, pc.fh)] {
                prop_assert!((x.conj() - y).norm() <= 1e-13 * (1.0 + x.norm()));
            }
        }
    }
}
