//! Rate-optimal antenna placement for a single-cell distributed massive-MIMO
//! uplink.
//!
//! The crate evaluates the exact per-user and cell-averaged uplink rates of a
//! deployment of antenna groups, optimizes deployments by multistart gradient
//! ascent and a logarithmic Lloyd alternation, provides the closed-form rate
//! predictors and bounds that the asymptotic analysis yields, and validates
//! the large-array rate limit with finite-antenna zero-forcing simulations.
//! Every Monte Carlo integral is driven by counter-derived RNG streams, so
//! results are reproducible for a given seed regardless of thread count.

pub mod asymptotics;
pub mod channel;
pub mod cli;
pub mod density;
pub mod error;
pub mod geometry;
mod mc;
pub mod placement;
pub mod rate;

pub use error::{Error, Result};
pub use geometry::{
    hex_lattice_deployment, lattice_sum_ratio, nearest_antenna, square_lattice_deployment,
    voronoi_partition_1d, Cell, Deployment, LatticeKind, LatticeSpec, Point,
};
pub use mc::Estimate;
