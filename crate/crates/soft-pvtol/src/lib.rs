//! Dynamics, control, and simulation of a planar VTOL aircraft with two
//! flexible rotor arms.
//!
//! Each arm is a single constant-curvature segment, so the vehicle is
//! described by five generalized coordinates: body position `(x_v, z_v)`,
//! pitch `theta`, and the two arm curvature angles `(q_l, q_r)`. The crate
//! provides:
//!
//! - [`kernels`]: singularity-safe evaluation of the scalar shape functions
//!   of curvature that appear throughout the model,
//! - [`dynamics`]: the 5-DOF inertia/Coriolis/gravity model, energies, and
//!   arc-tip kinematics,
//! - [`controller`]: a passivity-based tracking controller with Lyapunov
//!   diagnostics and an exponential decay-rate bound,
//! - [`allocation`]: the nonlinear map from commanded generalized forces to
//!   motor thrusts and desired arm curvatures,
//! - [`simulator`]: deterministic fixed-step closed-loop integration with
//!   energy auditing and CSV telemetry,
//! - [`config`]: plain `key = value` scenario files,
//! - [`verify`]: seeded numerical verification suites for the model's
//!   structural properties (positive definiteness, skew symmetry,
//!   passivity, form equivalence, ...).
//!
//! Batch verification uses data-parallel sampling via `rayon` when the
//! `parallel` feature (default) is enabled; disabling it yields a fully
//! sequential build with identical results.

pub mod allocation;
pub mod config;
pub mod controller;
pub mod dynamics;
pub mod kernels;
pub mod simulator;
pub mod verify;

/// 5-vector over the generalized coordinates `(x_v, z_v, theta, q_l, q_r)`.
pub type Vec5 = nalgebra::SVector<f64, 5>;
/// 5x5 matrix over the generalized coordinates.
pub type Mat5 = nalgebra::SMatrix<f64, 5, 5>;
/// Planar point/vector.
pub type Vec2 = nalgebra::Vector2<f64>;

pub use allocation::{AllocationSolution, SolverSettings, WrenchCommand};
pub use controller::{ArmRefFilter, Gains, ReferenceSample};
pub use dynamics::{ControlVector, GenState, PhysicalParams};
pub use kernels::{KernelConfig, KernelKind, KernelMode};
pub use simulator::{LogRecord, ReferenceKind, SimConfig};
