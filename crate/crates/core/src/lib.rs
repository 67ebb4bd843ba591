//! Hierarchical-matrix (H-matrix) toolkit for finite-element stiffness
//! matrices.
//!
//! The crate covers the whole pipeline used in the rank-decay studies:
//!
//! * [`mesh`]: structured simplicial meshes of the unit square, unit cube and
//!   L-shaped domain with tagged boundary facets;
//! * [`fem`] and [`sparse`]: P1 Galerkin assembly of diffusion, convection,
//!   reaction and Robin terms, plus the stabilized pure-Neumann form;
//! * [`cluster`]: geometric bisection cluster trees, strong and weak
//!   admissibility and the far/near block partition;
//! * [`dense`] and [`norm`]: dense factorizations, truncated SVD and power
//!   iteration spectral norm estimates;
//! * [`hmatrix`]: blockwise low-rank compression, H-matvec, storage and the
//!   level-wise spectral norm bound;
//! * [`hfactor`]: Schur complements and H-LU / H-Cholesky factors;
//! * [`experiment`]: rank sweeps, decay-rate fits and CSV output.

pub mod cluster;
pub mod dense;
mod error;
pub mod experiment;
pub mod fem;
pub mod hfactor;
pub mod hmatrix;
pub mod mesh;
pub mod norm;
pub mod problem;
pub mod sparse;

pub use error::{Error, Result};
