//! Zeros of single-delay retarded quasi-polynomials
//! `f(s, h) = a(s) + b(s) e^{-hs}`, traced as the delay `h` sweeps from 0
//! to a final value inside the half-plane `Re(s) > sigma0`.
//!
//! The pipeline is:
//!
//! 1. [`crossing::find_crossings`] locates every delay at which a zero
//!    crosses `Re(s) = sigma0` and classifies it as entering or exiting.
//! 2. [`tracker::trace_all`] seeds the zeros of `a + b` at `h = 0`, integrates
//!    each trajectory with [`continuation::advance`], inserts zeros at
//!    entering crossings and drops zeros that leave the region.
//! 3. [`tracker::stability_report`] summarises the traced spectrum.
//!
//! [`oracle`] counts zeros by the argument principle and is independent of
//! the tracing path.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod crossing;
pub mod error;
pub mod oracle;
pub mod poly;
pub mod quasipoly;
pub mod tracker;

pub use continuation::{TraceConfig, TrajectorySample};
pub use crossing::{find_crossings, CrossingEvent, Region};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use oracle::{count_zeros, refine_zero, ContourRectangle};
pub use poly::RealPolynomial;
pub use quasipoly::QuasiPolynomial;
pub use tracker::{
    stability_report, trace_all, StabilityReport, TraceResult, Trajectory, TrajectoryOrigin,
    TrajectoryStatus, Verdict,
};
