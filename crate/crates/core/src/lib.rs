//! Numerical laboratory for trilinear oscillatory integral forms.
//!
//! The crate evaluates forms of the type
//!
//! ```text
//! T(f1, f2, f3) = ∫_{box} e^{iλφ(x1,x2,x3)} f1(x1) f2(x2) f3(x3) dx
//! S(f1, f2, f3) = ∫_{box} e^{iλψ(x,y)} Π f_j(φ_j(x,y)) dx dy
//! ```
//!
//! fits their decay in λ against the sharp exponents of known examples,
//! and measures the sublevel sets and geometric invariants (web curvature,
//! rank-one degeneracy) that control that decay.
//!
//! Module map:
//!
//! * [`phasekit`] : polynomial / log-polynomial phases with exact partials and
//!   the registry of named phases.
//! * [`witnesses`] : piecewise test functions (indicators, chirps, log-chirps,
//!   band-limited pieces) and the λ-adapted norm.
//! * [`oscquad`] : panel Gauss–Legendre evaluation of the forms plus a
//!   midpoint/Richardson reference integrator.
//! * [`decaylab`] : λ-ladders, witness rules and log-log slope fits.
//! * [`webgeom`] : 3-web curvature, the third-order degeneracy relation and
//!   the candidate-surface degeneracy score.
//! * [`microlocal`] : windowed Fourier decomposition into structured and
//!   pseudorandom parts.
//! * [`sublevel`] : sublevel-set systems, Monte Carlo measure, the
//!   multiprogression construction and negative-order Sobolev energies.

pub mod decaylab;
pub mod error;
pub mod microlocal;
pub mod numeric;
pub mod oscquad;
pub mod phasekit;
pub mod sublevel;
pub mod webgeom;
pub mod witnesses;

pub use error::{Error, Result};
pub use num_complex::Complex64;
