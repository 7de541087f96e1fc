//! Discrete nonlinear potential theory on weighted graphs.
//!
//! The crate builds lattice and general weighted graphs, solves p-harmonic
//! Dirichlet problems by convex minimization, computes variational
//! capacities and constructs capacity-normalized Green functions, both on
//! bounded domains and on expanding grids standing in for the whole space.
//!
//! ```
//! use greenpot::prelude::*;
//!
//! let g = build_grid(1, 11, 0.1)?;
//! let inner = VertexSet::from_ids(g.len(), [0]);
//! let outer = VertexSet::from_ids(g.len(), [10]);
//! let c = Condenser::new(&g, inner, outer, g.all())?;
//! let cap = capacity(&g, &c, &SolverConfig::new(2.0)?)?;
//! assert!((cap.finite().unwrap() - 1.0).abs() < 1e-12);
//! # Ok::<(), greenpot::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calculus;
pub mod capacity;
pub mod dirichlet;
pub mod error;
pub mod fit;
pub mod global;
pub mod green;
pub mod io;
pub mod report;
pub mod space;
pub mod verify;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::calculus::{
        comparability_ratio, energy_gradient, gradient, p_energy, sobolev_norm, GradientField, GradientMode,
        Plate, ScalarField,
    };
    pub use crate::capacity::{
        capacity, level_set_capacity, p_potential, Capacity, CapacityResult, Condenser, CondenserKind,
    };
    pub use crate::dirichlet::{
        harnack_ratio, oscillation_profile, residual, solve_dirichlet, DirichletProblem, SolverConfig,
    };
    pub use crate::error::{Error, Result};
    pub use crate::global::{green_global, GlobalGreenOptions, GlobalGreenResult};
    pub use crate::green::{green_compact, normalize_green, GreenOptions, GreenResult};
    pub use crate::space::{
        ball, build_grid, closed_ball, grid_vertex, sphere_band, MetricGraph, MetricKind, VertexId, VertexSet,
    };
}
