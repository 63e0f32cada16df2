//! A small corner of the parameter grid, two seeds per cell.

use kl_ilqg::harness::{run_sweep, write_sweep_csv, SweepConfig};

fn main() -> kl_ilqg::Result<()> {
    let config = SweepConfig {
        cov_ini: vec![1.0, 100.0],
        v: vec![0.1],
        alpha: vec![1e-7],
        eps_ini: vec![100.0, 10000.0],
        seeds: vec![0, 1],
        ..SweepConfig::default()
    };
    let cells = run_sweep(&config)?;
    write_sweep_csv(&cells, std::io::stdout().lock())
}
