//! Laminates, piecewise-affine realizations and convex integration for
//! prescribed-Jacobian problems `det ∇v = J` (or `J1 <= det ∇v <= J2`)
//! below the critical exponent `p < d`.
//!
//! The pipeline, bottom up:
//!
//! - [`matrix`]: small dense kernel with a signed SVD.
//! - [`laminate`]: the Case I / Case II rank-one splitting calculus and the
//!   recursive builder of finite laminates supported (up to a `2^{-k}` bad
//!   mass) on `{det A = r}`.
//! - [`checks`]: Young-measure diagnostics (barycenter, moments, tightness,
//!   minors, Jensen checks).
//! - [`grid`], [`pamap`], [`realize`]: Kuhn simplicial grids, piecewise-affine
//!   maps and the realization of laminates as oscillating maps with fixed
//!   boundary values.
//! - [`integrator`]: the residual-driven convex-integration iteration and the
//!   prescribed-Jacobian boundary-value solver.
//! - [`experiments`], [`cli`]: experiment drivers and the command-line front
//!   end used by the `lamforge` binary.

pub mod checks;
pub mod cli;
pub mod constraint;
pub mod dyadic;
pub mod error;
pub mod experiments;
pub mod export;
pub mod grid;
pub mod integrator;
pub mod laminate;
pub mod matrix;
pub mod pamap;
pub mod realize;

pub use constraint::{clamp_rate, ConstraintSpec, Field, PointConstraint};
pub use dyadic::Dyadic;
pub use error::{Error, Result};
pub use laminate::{build_laminate, laminate_for_constraint, Depth, DiscreteLaminate, SplitCase, SplitStep};
pub use matrix::{Matrix, SignedSvd};
