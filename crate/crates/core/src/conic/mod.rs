//! Self-contained dense optimization core sized for desk-scale problems:
//! a primal-dual interior-point SDP solver, a lifted trust-region solver
//! with rank-one recovery, sequential quadratic programming, and gradient
//! projection under unit-modulus constraints.

pub mod gradproj;
pub mod herm;
pub mod sdp;
pub mod sqp;
pub mod trust_region;

pub use gradproj::gradient_projection_unit_modulus;
pub use herm::HermVar;
pub use sdp::{solve_sdp, solve_sdp_warm, SdpBuilder, SdpProblem};
pub use sqp::{sqp_minimize, Constraint, SqpOptions, SqpProblem};
pub use trust_region::{solve_trust_region, TrustRegionBlock};

/// Terminal state of a solver run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    MaxIter,
    IllConditioned,
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolverStatus::Optimal => "optimal",
            SolverStatus::Infeasible => "infeasible",
            SolverStatus::MaxIter => "max_iter",
            SolverStatus::IllConditioned => "ill_conditioned",
        };
        f.write_str(s)
    }
}

/// Outcome summary attached to every solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolverStatus,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// (primal feasibility, dual feasibility, complementarity gap).
    pub kkt_residuals: (f64, f64, f64),
    pub iterations: usize,
}
