//! Transport equations with random Lévy-path coefficients.
//!
//! The coefficient `c(x)` of `u_t + c(x) u_x = 0` is generated from a strictly
//! increasing Lévy path: the path is sampled on dyadic grids, each level
//! yields a layered (Goupillaud) medium whose characteristics are broken
//! lines, and the limit characteristics are obtained by step evaluation of
//! the finest path. For the stable-1/2 subordinator the law of the base
//! points of characteristics is available in closed integral form; the
//! modules below compute it and cross-check it by Monte Carlo.

// `!(a < b)` is how NaN inputs get rejected; quadrature nodes keep full digits.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod export;
pub mod goupillaud;
pub mod ig_analytics;
pub mod levy_paths;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;
pub mod transport;

pub use goupillaud::{CharQuery, GoupillaudMedium};
pub use levy_paths::{build_two_sided_path, DyadicGrid, LevyPathSample, PathError, ProcessSpec};
pub use quadrature::{QuadratureError, QuadratureResult, QuadratureSpec};
pub use rng::RngSeed;
pub use transport::{InitialDatum, SolutionField, WindowK};
