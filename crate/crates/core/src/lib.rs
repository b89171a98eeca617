//! Power-weighted shortest paths through random point clouds.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: domains (Euclidean box, flat torus) and sampling densities
//!   with their conformal cost `f^((1-p)/d)`.
//! * [`sampling`]: i.i.d. rejection sampling and homogeneous Poisson
//!   processes, plus thinning and tube restriction.
//! * [`pathengine`]: exact and certified-pruned shortest paths with edge
//!   weights `|u - v|^p`.
//! * [`geodesic`]: fast-marching Eikonal solver for the conformal distance
//!   `dist_p`.
//! * [`estimation`]: Monte-Carlo estimators built on top of the above.
//! * [`export`]: CSV / JSON-lines record output.
//!
//! Every random quantity is drawn from a counter-based ChaCha stream keyed by
//! `(seed, stream)`, see [`rng`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod export;
pub mod geodesic;
pub mod geometry;
pub mod pathengine;
pub mod rng;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{ConformalParams, DensityField, DomainKind, DomainSpec};
pub use pathengine::{Certificate, Mode, PathQuery, PathResult};
pub use sampling::{GeneratorTag, PointCloud};
