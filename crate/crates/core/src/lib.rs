//! Desk-scale laboratory for cover times of random walks on two-dimensional
//! lattices and their Gaussian free field counterparts.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`] builds the graphs (wired/free boxes, tori, boxes with an
//!   identified central disk) and the box/ball packings.
//! - [`exactsolve`] holds the deterministic numerics: Green functions,
//!   effective resistances, harmonic measures, the potential kernel and the
//!   closed-form approximations that are compared against them.
//! - [`walker`] is the continuous-time random walk engine with local-time,
//!   excursion and crossing accounting.
//! - [`gff`] samples discrete Gaussian free fields exactly.
//! - [`isomorphism`] checks the generalized second Ray-Knight identity and the
//!   compound-Poisson law of local times.
//! - [`stats`] contains the estimators and hypothesis checks.
//! - [`experiments`] composes everything into reproducible, config-driven runs.

pub mod error;
pub mod exactsolve;
pub mod experiments;
pub mod gff;
pub mod isomorphism;
pub mod lattice;
pub mod linalg;
pub mod rng;
pub mod stats;
pub mod walker;

pub use error::{Error, Result};
pub use lattice::{Boundary, GraphKind, LatticeGraph, Site, VertexId};
