//! Seeded random generation for experiment instances.
//!
//! Every random draw goes through [`ChaCha8Rng`], whose stream is fixed by the
//! seed and identical on every platform. Gaussian samples use the ziggurat
//! sampler from `rand_distr`, which is also deterministic given the stream.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type ExperimentRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> ExperimentRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `rows x cols` matrix whose rows are drawn one after another, each row
/// i.i.d. standard normal.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

pub fn gaussian_vector(len: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Uniform samples in the axis-aligned box `center ± radius`.
pub fn uniform_in_box(center: &DVector<f64>, radius: f64, rng: &mut impl Rng) -> DVector<f64> {
    center.map(|c| c + radius * (2.0 * rng.random::<f64>() - 1.0))
}
