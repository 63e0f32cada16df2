//! One learning session on the simulated arm.
//!
//! ```text
//! cargo run --release --example arm_positioning -- [config.json] [seed]
//! ```

use kl_ilqg::harness::{run_session, SessionConfig};
use kl_ilqg::ilqg::Outcome;

fn main() -> kl_ilqg::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut config = match args.next() {
        Some(path) => SessionConfig::load(path)?,
        None => SessionConfig::default(),
    };
    if let Some(seed) = args.next() {
        config.seed = seed.parse().expect("seed must be an integer");
    }
    let result = run_session(&config)?;
    println!("start: {:.3} mm", result.initial_distance_mm.unwrap_or(f64::NAN));
    for r in &result.records {
        println!(
            "{:2}  {:10.4} mm  η {:8.1e}  ε {:8.1e}  {}",
            r.iteration,
            r.distance_mm.unwrap_or(f64::NAN),
            r.eta,
            r.epsilon,
            if r.accepted { "accepted" } else { "rejected" }
        );
    }
    match result.outcome {
        Outcome::Converged { iterations } => println!("below threshold after {iterations} iterations"),
        Outcome::Remaining { distance_mm } => {
            println!("{:.4} mm left", distance_mm.unwrap_or(f64::NAN))
        }
    }
    Ok(())
}
