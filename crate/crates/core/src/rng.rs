//! Seeded sampling helpers. Every randomized routine takes an explicit seed
//! and draws from a ChaCha8 stream, so runs are reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Matrix, Vector};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform vector with entries in `[-scale, scale]`.
pub fn uniform_vector(rng: &mut SeededRng, dim: usize, scale: f64) -> Vector {
    Vector::from_fn(dim, |_, _| rng.random_range(-scale..=scale))
}

/// Uniform vector inside an axis-aligned box.
pub fn box_vector(rng: &mut SeededRng, lower: &[f64], upper: &[f64]) -> Vector {
    Vector::from_iterator(
        lower.len(),
        lower
            .iter()
            .zip(upper)
            .map(|(&lo, &hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo }),
    )
}

pub fn uniform_matrix(rng: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..=scale))
}
