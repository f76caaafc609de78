//! Closed-loop autotuning of a battery fast-charging MPC via Bayesian
//! optimization.
//!
//! The crate simulates lithium-ion fast charging with an R-RC
//! equivalent-circuit plant, controls it with a soft-constrained
//! finite-horizon MPC, and tunes controller parameters (a voltage
//! constraint backoff curve, or the prediction model's polarization
//! resistance curve) by maximizing a closed-loop objective with a Gaussian
//! process surrogate and Expected Improvement.
//!
//! Modules follow the pipeline:
//!
//! - [`spline`]: natural cubic splines behind every SOC-dependent curve;
//! - [`ecm`]: the equivalent-circuit cell model and parameter tables;
//! - [`ocp`]: the finite-horizon charging OCP solver and MPC policy;
//! - [`gp`]: Gaussian-process regression with marginal-likelihood fitting;
//! - [`bo`]: Expected Improvement acquisition and the sequential tuning loop;
//! - [`harness`]: closed-loop episodes, the global objective, model-plant
//!   mismatch, and the two case-study parameterizations;
//! - [`sampling`]: deterministic quasi-uniform sampling shared by the rest.

pub mod bo;
pub mod ecm;
pub mod gp;
pub mod harness;
pub mod ocp;
pub mod sampling;
pub mod spline;

pub use bo::{expected_improvement, propose_next, run_bo, BoRecord, BoSettings, BoTrace, ParamDomain};
pub use ecm::{CellConstants, CellParams, EcmState, PointParams};
pub use gp::{log_marginal_likelihood, GpDataset, GpHyperparams, GpModel};
pub use harness::{
    case_backoff, case_model, closed_loop_objective, make_mismatch, run_episode, CaseBuild,
    EpisodeResult, MismatchSpec,
};
pub use ocp::{ocp_cost, solve_ocp, MpcController, OcpConfig, OcpSolution, SolverStatus};
pub use spline::Spline;
