//! Simulator and library for federated learning over a wireless uplink with
//! limited resource blocks and per-client compute power.
//!
//! The training core is a dual-decomposed solver for regularized convex
//! losses, the scheduler is a Lyapunov drift-plus-penalty policy backed by an
//! exact LP solve with integer rounding, and imperfect CSI is handled by
//! per-link Gaussian-process channel prediction with a periodic kernel.
//!
//! Numeric code is generic over the scalar type via [`num::Real`]; the
//! simulation harness instantiates everything at `f64`.

pub mod compute;
pub mod datasets;
pub mod fl_dual;
pub mod gpr;
pub mod harness;
pub mod linalg;
pub mod lp;
pub mod lyapunov;
pub mod num;
pub mod policies;
pub mod seed;
pub mod wireless;

/// Scalar type used by the harness and CLI.
pub type Scalar = f64;

pub type ChannelBook = wireless::ChannelBook<Scalar>;
pub type ChannelParams = wireless::ChannelParams<Scalar>;
pub type ComputeParams = compute::ComputeParams<Scalar>;
pub type GprHyper = gpr::GprHyper<Scalar>;
pub type GprLinkModel = gpr::GprLinkModel<Scalar>;
pub type LpProblem = lp::LpProblem<Scalar>;
pub type LpSolution = lp::LpSolution<Scalar>;
pub type VirtualQueues = lyapunov::VirtualQueues<Scalar>;
pub type SlotInputs = lyapunov::SlotInputs<Scalar>;
pub type ScheduleDecision = lyapunov::ScheduleDecision<Scalar>;
pub type DualState = fl_dual::DualState<Scalar>;
pub type SystemConfig = harness::SystemConfig;
