//! Numerical pseudo-Riemannian geometry toolkit.
//!
//! The crate builds metric models (quadric hypersurfaces, warped products,
//! explicit coordinate metrics), evaluates their curvature through exact
//! second-order jets of the metric entries, verifies the Obata equation
//! `Hess(w) = -kappa * w * g` and its first integral as machine-checkable
//! properties, and probes geodesic completeness quantitatively.

pub mod expr;
pub mod geodesic;
pub mod linalg;
pub mod manifold;
pub mod modelfile;
pub mod obata;
pub mod tensor;
