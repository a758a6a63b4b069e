//! Real-coefficient polynomials evaluated on the complex plane.
//!
//! Coefficients are stored in ascending order: `coeffs[k]` multiplies `s^k`.
//! Trailing zeros are trimmed on construction so the last stored coefficient
//! is the leading one, except for the zero polynomial which is `[0.0]`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iteration cap for the simultaneous root iteration.
pub const ROOT_ITERATION_CAP: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealPolynomial {
    coeffs: Vec<f64>,
}

impl RealPolynomial {
    /// Builds a polynomial from ascending coefficients, trimming trailing zeros.
    /// Non-finite coefficients are rejected.
    pub fn new(coeffs: impl Into<Vec<f64>>) -> Result<Self> {
        let mut coeffs = coeffs.into();
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coefficient {bad}")));
        }
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Ok(Self { coeffs })
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![0.0] }
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    /// The monomial `s`.
    pub fn identity() -> Self {
        Self { coeffs: vec![0.0, 1.0] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[self.degree()]
    }

    /// Largest coefficient magnitude; the scale used by residual tolerances.
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Horner evaluation at a complex point.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        let n = self.degree();
        let mut acc = Complex64::new(self.coeffs[n], 0.0);
        for &c in self.coeffs[..n].iter().rev() {
            acc = acc * s + c;
        }
        acc
    }

    /// Value and first derivative in one Horner pass.
    pub fn eval_with_derivative(&self, s: Complex64) -> (Complex64, Complex64) {
        let n = self.degree();
        let mut p = Complex64::new(self.coeffs[n], 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &c in self.coeffs[..n].iter().rev() {
            dp = dp * s + p;
            p = p * s + c;
        }
        (p, dp)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.degree() == 0 {
            return Self::zero();
        }
        let coeffs: Vec<f64> = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect();
        Self::new(coeffs).expect("derivative of finite coefficients is finite")
    }

    /// Cauchy bound: every root satisfies `|root| <= 1 + max_k |c_k / c_n|`.
    pub fn root_bound(&self) -> Result<f64> {
        if self.degree() == 0 {
            return Err(Error::InvalidInput(
                "root bound needs a polynomial of degree >= 1".into(),
            ));
        }
        let lead = self.leading();
        let m = self.coeffs[..self.degree()]
            .iter()
            .fold(0.0_f64, |m, c| m.max((c / lead).abs()));
        Ok(1.0 + m)
    }

    /// All `degree` complex roots, with multiplicity, by Aberth–Ehrlich
    /// simultaneous iteration started on a circle of radius [`root_bound`].
    ///
    /// On success every root satisfies
    /// `|p(root)| <= tol * max|c_k| * max(1, |root|)^degree`.
    ///
    /// [`root_bound`]: RealPolynomial::root_bound
    pub fn find_roots(&self, tol: f64) -> Result<Vec<Complex64>> {
        if !(tol > 0.0) {
            return Err(Error::InvalidInput(format!("root tolerance must be positive, got {tol}")));
        }
        let n = self.degree();
        if n == 0 {
            return Err(Error::InvalidInput(
                "cannot find roots of a constant polynomial".into(),
            ));
        }
        if n == 1 {
            return Ok(vec![Complex64::new(-self.coeffs[0] / self.coeffs[1], 0.0)]);
        }

        let radius = self.root_bound()?;
        // Offset keeps the start circle off the real axis, so no two guesses
        // are conjugate duplicates of a real root.
        let offset = 0.4;
        let mut z: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(radius, 2.0 * PI * k as f64 / n as f64 + offset))
            .collect();
        let mut frozen = vec![false; n];
        let abs_coeffs: Vec<f64> = self.coeffs.iter().map(|c| c.abs()).collect();

        for _ in 0..ROOT_ITERATION_CAP {
            if frozen.iter().all(|&f| f) {
                break;
            }
            for i in 0..n {
                if frozen[i] {
                    continue;
                }
                let (p, dp) = self.eval_with_derivative(z[i]);
                let noise = 16.0 * f64::EPSILON * horner_abs(&abs_coeffs, z[i].norm());
                if p.norm() <= noise {
                    frozen[i] = true;
                    continue;
                }
                let w = if dp.norm() == 0.0 {
                    // Stationary point of p: nudge off it.
                    Complex64::new(1e-8, 1e-8) * (1.0 + z[i].norm())
                } else {
                    let ratio = p / dp;
                    let repulsion: Complex64 = (0..n)
                        .filter(|&j| j != i)
                        .map(|j| (z[i] - z[j]).inv())
                        .sum();
                    ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion)
                };
                if !w.is_finite() {
                    continue;
                }
                z[i] -= w;
                if w.norm() <= 4.0 * f64::EPSILON * z[i].norm() {
                    frozen[i] = true;
                }
            }
        }

        let scale = self.max_abs_coeff();
        if z.iter().all(|&r| self.eval(r).norm() <= tol * scale * r.norm().max(1.0).powi(n as i32)) {
            Ok(z)
        } else {
            Err(Error::NumericFailure {
                coeffs: self.coeffs.clone(),
                iterations: ROOT_ITERATION_CAP,
            })
        }
    }
}

fn horner_abs(abs_coeffs: &[f64], r: f64) -> f64 {
    abs_coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c)
}

/// A group of roots lying within a common radius of each other.
#[derive(Debug, Clone, PartialEq)]
pub struct RootCluster {
    pub center: Complex64,
    pub members: Vec<Complex64>,
}

impl RootCluster {
    pub fn multiplicity(&self) -> usize {
        self.members.len()
    }
}

/// Groups roots whose pairwise chain distance is below `radius`
/// (single linkage). The center is the member mean.
pub fn cluster_roots(roots: &[Complex64], radius: f64) -> Vec<RootCluster> {
    let n = roots.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (roots[i] - roots[j]).norm() < radius {
                let (ri, rj) = (find(&mut label, i), find(&mut label, j));
                if ri != rj {
                    label[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }
    let mut clusters: Vec<(usize, Vec<Complex64>)> = Vec::new();
    for (i, &root) in roots.iter().enumerate() {
        let r = find(&mut label, i);
        match clusters.iter_mut().find(|(label, _)| *label == r) {
            Some((_, members)) => members.push(root),
            None => clusters.push((r, vec![root])),
        }
    }
    clusters
        .into_iter()
        .map(|(_, members)| {
            let center = members.iter().sum::<Complex64>() / members.len() as f64;
            RootCluster { center, members }
        })
        .collect()
}

impl RealPolynomial {
    /// Clusters `roots` of `self` like [`cluster_roots`], then sharpens each
    /// center of multiplicity `m > 1` by Newton on the `(m-1)`-th derivative,
    /// where a multiple root becomes simple.
    pub fn root_clusters(&self, roots: &[Complex64], radius: f64) -> Vec<RootCluster> {
        let mut clusters = cluster_roots(roots, radius);
        for cl in clusters.iter_mut().filter(|c| c.multiplicity() > 1) {
            let mut d = self.clone();
            for _ in 1..cl.multiplicity() {
                d = d.derivative();
            }
            let mut z = cl.center;
            for _ in 0..20 {
                let (v, dv) = d.eval_with_derivative(z);
                if dv.norm() == 0.0 {
                    break;
                }
                let step = v / dv;
                z -= step;
                if step.norm() <= 4.0 * f64::EPSILON * z.norm().max(1.0) {
                    break;
                }
            }
            if z.is_finite() && (z - cl.center).norm() < radius {
                cl.center = z;
            }
        }
        clusters
    }
}

impl TryFrom<Vec<f64>> for RealPolynomial {
    type Error = Error;

    fn try_from(coeffs: Vec<f64>) -> Result<Self> {
        Self::new(coeffs)
    }
}

impl From<RealPolynomial> for Vec<f64> {
    fn from(p: RealPolynomial) -> Self {
        p.coeffs
    }
}

impl fmt::Display for RealPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0.0 && !(self.is_zero() && k == 0) {
                continue;
            }
            if !first {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
            } else if c < 0.0 {
                write!(f, "-")?;
            }
            let mag = c.abs();
            match k {
                0 => write!(f, "{mag}")?,
                1 => write!(f, "{mag}*s")?,
                _ => write!(f, "{mag}*s^{k}")?,
            }
            first = false;
        }
        Ok(())
    }
}

impl Add for &RealPolynomial {
    type Output = RealPolynomial;

    fn add(self, rhs: &RealPolynomial) -> RealPolynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let coeffs: Vec<f64> = (0..n)
            .map(|k| self.coeffs.get(k).unwrap_or(&0.0) + rhs.coeffs.get(k).unwrap_or(&0.0))
            .collect();
        RealPolynomial::new(coeffs).expect("sum of finite coefficients")
    }
}

impl Neg for &RealPolynomial {
    type Output = RealPolynomial;

    fn neg(self) -> RealPolynomial {
        RealPolynomial {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

impl Sub for &RealPolynomial {
    type Output = RealPolynomial;

    fn sub(self, rhs: &RealPolynomial) -> RealPolynomial {
        self + &(-rhs)
    }
}

impl Mul for &RealPolynomial {
    type Output = RealPolynomial;

    fn mul(self, rhs: &RealPolynomial) -> RealPolynomial {
        let mut coeffs = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        RealPolynomial::new(coeffs).expect("product of finite coefficients")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(c: &[f64]) -> RealPolynomial {
        RealPolynomial::new(c.to_vec()).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn trims_trailing_zeros() {
        let q = p(&[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(q.degree(), 1);
        assert_eq!(p(&[0.0, 0.0]), RealPolynomial::zero());
        assert_eq!(p(&[]), RealPolynomial::zero());
        assert!(RealPolynomial::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn eval_examples() {
        assert_eq!(p(&[1.0, 1.0, 1.0]).eval(c(-1.0, 0.0)), c(1.0, 0.0));
        assert_eq!(p(&[3.5, -2.0, 7.0]).eval(c(0.0, 0.0)), c(3.5, 0.0));
        assert_eq!(p(&[1.0, 2.0, 1.0]).eval(c(-1.0, 0.0)), c(0.0, 0.0));
    }

    #[test]
    fn eval_at_real_point_has_zero_imaginary_part() {
        let q = p(&[0.3, -1.7, 2.2, -0.9, 4.1]);
        for x in [-3.0, -0.5, 0.0, 0.25, 1.9] {
            let v = q.eval(c(x, 0.0));
            assert_eq!(v.im, 0.0);
            assert!((v.re - q.eval_real(x)).abs() <= 1e-13 * v.re.abs().max(1.0));
        }
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(p(&[1.0, 1.0, 1.0]).derivative(), p(&[1.0, 2.0]));
        assert_eq!(p(&[0.0, 1.0]).derivative(), p(&[1.0]));
        assert_eq!(RealPolynomial::zero().derivative(), RealPolynomial::zero());
        assert_eq!(p(&[4.0]).derivative(), RealPolynomial::zero());
    }

    #[test]
    fn root_bound_examples() {
        assert_eq!(p(&[1.0, 2.0, 1.0]).root_bound().unwrap(), 3.0);
        assert_eq!(p(&[-5.0, 1.0]).root_bound().unwrap(), 6.0);
        assert_eq!(p(&[1.0, 0.0, 1.0]).root_bound().unwrap(), 2.0);
        assert!(p(&[2.0]).root_bound().is_err());
    }

    #[test]
    fn double_root_of_a_plus_b() {
        let roots = p(&[1.0, 2.0, 1.0]).find_roots(1e-12).unwrap();
        assert_eq!(roots.len(), 2);
        for r in &roots {
            assert!((r - c(-1.0, 0.0)).norm() < 1e-6, "{r}");
        }
        let clusters = p(&[1.0, 2.0, 1.0]).root_clusters(&roots, 1e-5);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].multiplicity(), 2);
        assert!((clusters[0].center - c(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn imaginary_pair() {
        let mut roots = p(&[1.0, 0.0, 1.0]).find_roots(1e-12).unwrap();
        roots.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((roots[0] - c(0.0, -1.0)).norm() < 1e-12);
        assert!((roots[1] - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn roots_from_factors() {
        // (s-1)(s-2)(s-3)
        let q = &(&p(&[-1.0, 1.0]) * &p(&[-2.0, 1.0])) * &p(&[-3.0, 1.0]);
        assert_eq!(q.coeffs(), &[-6.0, 11.0, -6.0, 1.0]);
        let tol = 1e-12;
        let mut roots = q.find_roots(tol).unwrap();
        roots.sort_by(|a, b| a.re.total_cmp(&b.re));
        for (r, want) in roots.iter().zip([1.0, 2.0, 3.0]) {
            assert!((r - c(want, 0.0)).norm() < 1e-9, "{r} vs {want}");
            assert!(q.eval(*r).norm() <= tol * q.max_abs_coeff() * r.norm().powi(3));
        }
    }

    #[test]
    fn find_roots_rejects_bad_input() {
        assert!(p(&[1.0]).find_roots(1e-10).is_err());
        assert!(p(&[1.0, 1.0]).find_roots(0.0).is_err());
    }

    #[test]
    fn linear_root() {
        assert_eq!(p(&[-5.0, 1.0]).find_roots(1e-12).unwrap(), vec![c(5.0, 0.0)]);
    }

    #[test]
    fn display_is_readable() {
        assert_eq!(p(&[1.0, -1.0, 2.0]).to_string(), "2*s^2 - 1*s + 1");
        assert_eq!(RealPolynomial::zero().to_string(), "0");
    }

    fn poly_strategy(max_degree: usize) -> impl Strategy<Value = RealPolynomial> {
        (1..=max_degree).prop_flat_map(|d| {
            (
                proptest::collection::vec(-1.0..1.0f64, d),
                prop_oneof![-1.0..-0.1f64, 0.1..1.0f64],
            )
                .prop_map(|(mut c, lead)| {
                    c.push(lead);
                    RealPolynomial::new(c).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn conjugate_symmetry(q in poly_strategy(12), re in -3.0..3.0f64, im in -3.0..3.0f64) {
            let s = c(re, im);
            let lhs = q.eval(s.conj());
            let rhs = q.eval(s).conj();
            prop_assert!((lhs - rhs).norm() <= 1e-15 * (1.0 + rhs.norm()));
        }

        #[test]
        fn second_derivative_degree(q in poly_strategy(10)) {
            let d2 = q.derivative().derivative();
            prop_assert_eq!(d2.degree(), q.degree().saturating_sub(2));
        }

        #[test]
        fn roots_reconstruct_monic_polynomial(q in poly_strategy(20)) {
            let tol = 1e-10;
            let roots = q.find_roots(tol).unwrap();
            prop_assert_eq!(roots.len(), q.degree());
            // prod (s - r_k) in complex arithmetic, ascending coefficients
            let mut prod = vec![Complex64::new(1.0, 0.0)];
            for r in &roots {
                let mut next = vec![Complex64::new(0.0, 0.0); prod.len() + 1];
                for (k, &pk) in prod.iter().enumerate() {
                    next[k + 1] += pk;
                    next[k] -= pk * r;
                }
                prod = next;
            }
            let lead = q.leading();
            for (k, &ck) in q.coeffs().iter().enumerate() {
                let want = ck / lead;
                let err = (prod[k] - want).norm();
                prop_assert!(err <= 1e3 * tol * want.abs().max(1.0),
                    "k={} got {} want {} err {:e}", k, prod[k], want, err);
            }
        }
    }
}
