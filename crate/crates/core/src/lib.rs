//! Exact multipoint formal-distribution calculus.
//!
//! This crate implements, in exact arithmetic over `Q(a_1, .., a_n)`:
//!
//! * the truncated adic completion of polynomials along a product of linear
//!   sections `phi(t) = (t - a_1) ... (t - a_n)`, with its localization,
//!   filtration by pole order, and the two distinguished module bases;
//! * residues, the dual pairing between the bases, and residue splitting into
//!   local contributions at substituted points;
//! * two- and three-variable series with orientation-tagged one-sided
//!   expansions of diagonal poles, diagonal restriction, contractions, and
//!   the exact Cauchy-kernel identity at finite truncation;
//! * coefficient algebras (a matrix smoke-test instance and a truncated
//!   infinite-dimensional Heisenberg instance with normal ordering);
//! * continuous fields valued in a coefficient algebra, their one-sided
//!   products, commutator product, locality order, local-field normal forms
//!   (finite jet modules along the diagonal), composition checks (unit,
//!   Jacobi-type cyclic sum, iterated-product compatibility), and generation
//!   of spanning layers from a set of primary fields;
//! * collision / substitution maps between section configurations and the
//!   Chinese-remainder factorization over disjoint section blocks, with their
//!   compatibility axioms.
//!
//! Everything is deterministic, windowed, and certified: operations that
//! would need coefficients beyond a guaranteed truncation window return a
//! `WindowTooSmall` error carrying the depth that would be needed instead of
//! silently truncating.

pub mod coeff;
pub mod factor;
pub mod fields;
pub mod report;
pub mod residue;
pub mod sample;
pub mod scalar;
pub mod sigma;
pub mod twovar;

pub use coeff::{CoeffAlgebra, Heisenberg, HeisenbergElem, MatrixAlgebra, MatrixElem};
pub use residue::{pairing, residue, residue_split};
pub use scalar::{parse_scalar, MPoly, Scalar, ScalarError, Substitution};
pub use sigma::{
    BasisIndex, BasisSign, DOperator, OneForm, PhiSeries, SigmaConfig, SigmaError, TPoly, Window,
};
