//! KL-constrained iterative LQG with local models learnt from rollouts, and a
//! simulated 7-joint arm to learn on.

pub mod arm;
pub mod error;
pub mod harness;
pub mod ilqg;
pub(crate) mod linalg;
pub mod model_fit;
pub mod oracles;
pub mod trajopt;

pub use error::{Error, Result};
