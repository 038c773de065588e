//! Biased random-key genetic algorithm with a variable mutant population for
//! the vehicle routing problem with occasional drivers and time windows.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below fix the
//! scalar to `f64` (the default) or `f32`. Random-key genes are always `f64`.

pub mod decoder;
pub mod engine;
pub mod genetics;
pub mod instance;
pub mod ipr;
pub mod oracle;
pub mod scalar;
pub mod solution;
pub mod vnd;

pub use decoder::{DecoderContext, Decoded};
pub use engine::{solve, solve_observed, RunStats, SolveError, SolverParams, StopReason, Variant};
pub use genetics::{Chromosome, Population};
pub use instance::{generate_instance, parse_instance, GeneratorConfig, Instance, InstanceError, NetworkType};
pub use oracle::{exhaustive_solve, export_milp, OracleError, OracleResult};
pub use scalar::Scalar;
pub use solution::{check_feasible, evaluate_objective, DriverRef, Route, Solution};
pub use vnd::vnd;

pub type Instance64 = Instance<f64>;
pub type Instance32 = Instance<f32>;
pub type Solution64 = Solution<f64>;
pub type Solution32 = Solution<f32>;
pub type Route64 = Route<f64>;
pub type Route32 = Route<f32>;
