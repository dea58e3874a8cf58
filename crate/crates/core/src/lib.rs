//! Harmonic analysis on the complex unit sphere S^{2n-1} (n ≥ 3) and the
//! reconstruction of L² frame functions as quadratic forms `u ↦ ⟨u|Au⟩`.
//!
//! * [`measure`]: ν_n and Haar sampling, Monte Carlo, exact moments.
//! * [`polynomials`]: exact/floating bidegree-(p,q) polynomials.
//! * [`harmonics`]: harmonic subspaces H_{(p,q)}, zonal polynomials,
//!   representation matrices, characters and projections.
//! * [`frame`]: frame functions, weights, operator reconstruction and the
//!   additivity of the induced measure on projectors.

pub mod error;
pub mod exact;
pub mod frame;
pub mod harmonics;
pub mod measure;
pub mod polynomials;

pub use error::{Error, Result};
pub use exact::{Coefficient, GaussRational};
pub use frame::{FrameFunction, GleasonReport, OperatorMatrix, OrthonormalBasis};
pub use harmonics::{BiDegree, HarmonicSubspace, ZonalPolynomial};
pub use measure::{MCEstimate, McOptions, RngStream, SpherePoint, UnitaryMatrix};
pub use polynomials::{BiDegreePolynomial, ExactPolynomial, FloatPolynomial, MultiIndex, SpherePolynomial};
