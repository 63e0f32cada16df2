//! Controller updates: backward recursion, KL-bounded steps on η, and the
//! learning loop that ties them to sampled rollouts.

pub mod backward;
pub mod dual;
pub mod kl;
pub mod session;

pub use backward::{backward_pass, BackwardPass, QExpansion, ValueExpansion};
pub use dual::{
    constrained_update, initialize_eta_for_pd, solve_at_eta, ConstrainedUpdate, DualState, LadderStep,
    PD_LADDER_FACTOR, PD_LADDER_LIMIT,
};
pub use kl::{modified_cost, trajectory_kl};
pub use session::{ilqg_outer_loop, IterationRecord, Outcome, SessionResult, SolverConfig};
