//! Spectral analysis of the almost Mathieu operator
//!
//! ```text
//! (H u)_n = u_{n+1} + u_{n-1} + 2 λ cos(2π(θ + n α)) u_n
//! ```
//!
//! and of the associated Schrödinger cocycles. The crate is organised
//! bottom-up:
//!
//! - [`linalg`]: unimodular 2×2 matrices, the Möbius action on the upper
//!   half-plane and the `φ`/Hilbert–Schmidt identities.
//! - [`dd`]: double-double arithmetic used for oracle cross-checks.
//! - [`arithmetic`]: continued fractions, `β(α)` estimates and resonances.
//! - [`cocycle`]: transfer matrices, Lyapunov exponents, rotation numbers.
//! - [`periodic`]: exact band theory for rational frequencies.
//! - [`eigen`] and [`bloch`]: a cyclic Jacobi eigensolver and the
//!   eigenvalue-counting IDS built on it.
//! - [`spectral`]: m-functions, Borel transforms, IDS tables, Thouless formula.
//! - [`regime`]: trigonometric-polynomial sampling and the rotation-average
//!   cancellation experiments.

// `!(x > 0.0)` style checks are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod arithmetic;
pub mod bloch;
pub mod cocycle;
pub mod dd;
pub mod eigen;
pub mod linalg;
pub mod periodic;
pub mod quad;
pub mod regime;
pub mod spectral;

pub use arithmetic::{ContinuedFraction, Frequency, NearRational, Rational};
pub use cocycle::SchrodingerCocycle;
pub use linalg::{HPoint, Interval, Mat2};
pub use periodic::BandSpectrum;

use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("boundary blowup: Möbius denominator vanished")]
    BoundaryBlowup,
    #[error("point is not in the upper half-plane (im = {0})")]
    NotInUpperHalfPlane(f64),
    #[error("matrix is not elliptic (|tr| = {0})")]
    NotElliptic(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("band resolution failure: found {found} of {expected} critical points; suspected collapsed gap near E = {suspect}")]
    BandResolution {
        expected: usize,
        found: usize,
        suspect: f64,
    },
    #[error("edge singularity at E = {0}")]
    EdgeSingularity(f64),
    #[error("energy {0} is outside every band")]
    OutsideBands(f64),
    #[error("contraction failure: m-function did not converge by depth {0}")]
    ContractionFailure(usize),
    #[error("degenerate pair: |m+ + m-| too small")]
    DegeneratePair,
    #[error("degenerate sample: all orbit samples vanish")]
    DegenerateSample,
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("elliptic shadowing undefined near band edges: E = {0} is outside the X set")]
    OutsideXSet(f64),
}

impl Error {
    /// Numerical failures (as opposed to bad input) map to a distinct CLI exit code.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::InvalidParameter(_) | Error::NotInUpperHalfPlane(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
