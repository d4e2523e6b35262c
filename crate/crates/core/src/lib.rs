//! Voltage-stability location analysis for power grids.
//!
//! Builds a per-unit network model from MATPOWER-style or JSON case files,
//! solves AC power flow, stresses cases to the collapse point, and evaluates
//! a local per-bus stability index — the normalized distance between the
//! high- and low-voltage power-flow solutions at each bus — across snapshots,
//! sweeps, and scenario sets to rank voltage-stability-critical locations.

pub mod grid;
pub mod lci;
pub mod powerflow;
pub mod ybus;

pub use grid::{Branch, Bus, BusKind, Generator, GridCase, GridError, Snapshot};
pub use lci::{lci, two_bus_lci, two_bus_pmax, LciFlag, LciValue, TParams};
pub use powerflow::{
    scale_case, solve, stress_sweep, SolveOptions, StressPattern, SweepResult,
};
pub use ybus::{build_ybus, compute_injections, AdmittanceMatrix, NeighborView};
