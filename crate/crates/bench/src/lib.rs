//! Benchmark fixtures for the qpz workspace.

use qpz_core::QuasiPolynomial;

/// The second-order example `(s^2 + s + 1) + s e^{-hs}`.
pub fn second_order_fixture() -> QuasiPolynomial {
    QuasiPolynomial::from_coeffs(&[1.0, 1.0, 1.0], &[0.0, 1.0]).expect("valid fixture")
}
