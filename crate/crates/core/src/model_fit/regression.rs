//! Ridge least squares with an unpenalized intercept.
//!
//! Non-intercept columns are scaled to unit RMS before the penalty is applied,
//! so a fixed ridge means the same thing whether the exploration cloud is
//! a degree wide or a micro-radian wide. The system is solved by QR on the
//! augmented matrix `[X; √λ I]` rather than through the normal equations.

use nalgebra::DMatrix;

/// Relative pivot size below which the system is declared singular.
const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct RidgeFit {
    /// `(cols × outputs)` coefficients in the original column scale. Row 0 is
    /// the intercept.
    pub coefficients: DMatrix<f64>,
    /// Frobenius norm of the penalized coefficients in the unit-RMS scale,
    /// the quantity the ridge penalty shrinks.
    pub penalized_norm: f64,
}

/// Solves `min ‖X β − Y‖² + λ ‖D β₁..‖²` where column 0 of `design` is the
/// intercept and `D` rescales the other columns to unit RMS.
/// Returns `None` when the system is singular.
pub fn ridge_least_squares(design: &DMatrix<f64>, targets: &DMatrix<f64>, ridge: f64) -> Option<RidgeFit> {
    let (rows, cols) = design.shape();
    assert_eq!(rows, targets.nrows(), "design and targets disagree on row count");
    assert!(cols >= 1, "design needs at least the intercept column");

    let scales: Vec<f64> = (0..cols)
        .map(|j| {
            if j == 0 {
                return 1.0;
            }
            let rms = (design.column(j).norm_squared() / rows.max(1) as f64).sqrt();
            if rms > 0.0 && rms.is_finite() {
                rms
            } else {
                1.0
            }
        })
        .collect();

    let penalty = ridge.max(0.0).sqrt();
    let extra = cols - 1;
    let mut aug = DMatrix::zeros(rows + extra, cols);
    for j in 0..cols {
        for i in 0..rows {
            aug[(i, j)] = design[(i, j)] / scales[j];
        }
    }
    for j in 1..cols {
        aug[(rows + j - 1, j)] = penalty;
    }
    let mut rhs = DMatrix::zeros(rows + extra, targets.ncols());
    rhs.rows_mut(0, rows).copy_from(targets);

    let qr = aug.qr();
    let r = qr.r();
    let largest = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(largest > 0.0) || r.diagonal().iter().any(|v| v.abs() <= PIVOT_TOL * largest) {
        return None;
    }
    let qty = qr.q().transpose() * rhs;
    let scaled = r.solve_upper_triangular(&qty)?;

    let penalized_norm = scaled.rows(1, extra).norm();
    let mut coefficients = scaled;
    for j in 0..cols {
        let s = scales[j];
        coefficients.row_mut(j).iter_mut().for_each(|c| *c /= s);
    }
    if coefficients.iter().any(|c| !c.is_finite()) {
        return None;
    }
    Some(RidgeFit {
        coefficients,
        penalized_norm,
    })
}
