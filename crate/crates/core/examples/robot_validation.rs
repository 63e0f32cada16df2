//! Simulated counterpart of the physical-robot session: the base joint starts
//! at 140° and the target sits behind and above the arm.

use kl_ilqg::harness::{run_session, SessionConfig};

fn main() -> kl_ilqg::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/robot_validation.json");
    let config = SessionConfig::load(path)?;
    let result = run_session(&config)?;
    for r in &result.records {
        println!("{:2}  {:.4} mm", r.iteration, r.distance_mm.unwrap_or(f64::NAN));
    }
    let last = result.trajectory.actions.last().expect("non-empty horizon");
    let deg: Vec<String> = last.iter().map(|a| format!("{:.3}", a.to_degrees())).collect();
    println!("final command [{}] deg", deg.join(", "));
    println!("converged: {}", result.converged());
    Ok(())
}
