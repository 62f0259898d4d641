//! Simulation engine for one-dimensional activated random walks in the
//! site-wise instruction-stack representation.
//!
//! Instructions live on an [`InstructionTape`](tape::InstructionTape) that is a
//! pure function of its seed, so every stabilization can be replayed, and
//! several stabilizations can share one realization of the randomness.

pub mod chains;
pub mod experiments;
mod kernel;
pub mod lattice;
pub mod stabilizer;
pub mod stats;
pub mod tape;

pub use chains::{
    dd_step, ejector_coupling, ejector_identities, hockey_run, sample_stationary, spread_to_holes, ChainState,
    EjectorCouplingResult, HockeyTrajectory, HoleField,
};
pub use lattice::{Configuration, LatticeState, Odometer, Region, SegmentSpec, SiteSet};
pub use stabilizer::{
    force_walk_out, stabilize, stabilize_point_source, staged_stabilize, StabilizationReport,
    StabilizeError, TopplingPolicy, DEFAULT_FUEL,
};
pub use stats::EmpiricalDist;
pub use tape::{derive_replica_seed, Instruction, InstructionTape, ModelParams, Tape};
