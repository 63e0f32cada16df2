//! End-effector positions and task costs for a few joint configurations.

use kl_ilqg::arm::{ArmModel, CostParams};
use nalgebra::{DVector, Point3};

fn main() -> kl_ilqg::Result<()> {
    let arm = ArmModel::iiwa14();
    let cost = CostParams {
        v: 0.1,
        alpha: 1e-7,
        target: Point3::new(0.5, 0.5, 0.5),
        unit: 1e-3,
    };
    let poses_deg = [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [45.0, 30.0, 0.0, -60.0, 0.0, 45.0, 0.0],
        [140.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 130.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    ];
    println!("reach {:.3} m", arm.reach());
    for deg in poses_deg {
        let q = DVector::from_iterator(7, deg.iter().map(|d: &f64| d.to_radians()));
        let fk = arm.fk_position(&q)?;
        let d = (fk.position - cost.target).norm();
        println!(
            "{deg:?} -> [{:8.1} {:8.1} {:8.1}] mm  distance {:7.1} mm  cost {:.4e}{}",
            fk.position.x * 1e3,
            fk.position.y * 1e3,
            fk.position.z * 1e3,
            d * 1e3,
            cost.cost_at(d),
            if fk.clamped { "  (clamped)" } else { "" }
        );
    }
    Ok(())
}
