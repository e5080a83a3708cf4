//! Adaptive multilevel stochastic Galerkin finite element approximation of
//! the parametric diffusion problem
//!
//! ```text
//!   -div(a(x, y) grad u(x, y)) = f(x)   in D,    u = 0 on the boundary of D,
//!   a(x, y) = a0(x) + sum_m a_m(x) y_m,  y_m uniform on [-1, 1].
//! ```
//!
//! Each Legendre chaos mode `mu` of the solution lives in its own Q1 finite
//! element space on a uniform square mesh with level `l^mu`. The energy error
//! is estimated implicitly by solving decoupled mean-coefficient problems on
//! a detail space (broken Q2 bubbles per mode plus Q1 functions on
//! neighbouring chaos modes), and the estimate components drive the choice
//! between refining meshes and activating new modes.
//!
//! Module map:
//! - [`chaos`]: multi-indices, Legendre triple products, neighbour sets.
//! - [`fem`]: mesh hierarchy, Q1/broken-Q2 spaces, assembly, sparse linear algebra.
//! - [`coeffs`]: affine coefficients for the benchmark problems, KL eigenpairs.
//! - [`system`]: block Galerkin operator, mean-based preconditioned CG.
//! - [`estimator`]: spatial and parametric error components.
//! - [`adapt`]: enrichment decisions and the adaptive loop.
//! - [`cli`]: run configuration, reporting, slope fitting.

pub mod adapt;
pub mod chaos;
pub mod cli;
pub mod coeffs;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod system;

pub use error::{Error, Result};
