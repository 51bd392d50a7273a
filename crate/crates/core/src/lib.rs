//! Discrete-to-continuum numerics for elastic lattice solids with voids.
//!
//! The crate implements the discrete energies of an atomistic model with
//! vacancies (spring elasticity, anisotropic perimeter, mesoscale curvature
//! regularization), the geometric classifications they rely on, the
//! constructive set surgeries used to pass to the continuum, and harnesses
//! that check the resulting identities, inequalities and convergence trends.

pub mod curvature;
pub mod elastic;
pub mod error;
pub mod gamma;
pub mod io;
pub mod lattice;
pub mod mesoscale;
pub mod rng;
pub mod surface;

pub use error::{Error, Result};
pub use lattice::{BoxUnion, Index, IndexBox, IndexSet, LatticeDomain, RealBox, VoidSet, VoxelSet};
