//! Central finite differences.
//!
//! One convention is used everywhere: the step along coordinate `i` is
//! `h * max(1, |x_i|)`, so the step is relative for large inputs and absolute
//! near zero.

use nalgebra::{DMatrix, DVector};

pub const DEFAULT_STEP: f64 = 1e-5;

/// `h * max(1, |x_i|)`.
pub fn scaled_step(h: f64, xi: f64) -> f64 {
    h * xi.abs().max(1.0)
}

/// Central-difference gradient of a scalar function.
pub fn gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut out = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let step = scaled_step(h, x[i]);
        probe[i] = x[i] + step;
        let up = f(&probe);
        probe[i] = x[i] - step;
        let down = f(&probe);
        probe[i] = x[i];
        out[i] = (up - down) / (2.0 * step);
    }
    out
}

/// Central-difference Jacobian of a vector function; column `j` is the
/// derivative along `x_j`.
pub fn jacobian(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let mut probe = x.clone();
    let mut columns = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let step = scaled_step(h, x[i]);
        probe[i] = x[i] + step;
        let up = f(&probe);
        probe[i] = x[i] - step;
        let down = f(&probe);
        probe[i] = x[i];
        columns.push((up - down) / (2.0 * step));
    }
    DMatrix::from_columns(&columns)
}

/// `‖a − b‖_F / max(‖a‖_F, ‖b‖_F)`, zero when both vanish.
pub fn relative_error<R, C, S1, S2>(
    a: &nalgebra::Matrix<f64, R, C, S1>,
    b: &nalgebra::Matrix<f64, R, C, S2>,
) -> f64
where
    R: nalgebra::Dim,
    C: nalgebra::Dim,
    S1: nalgebra::storage::Storage<f64, R, C>,
    S2: nalgebra::storage::Storage<f64, R, C>,
{
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        diff.sqrt() / scale
    }
}
