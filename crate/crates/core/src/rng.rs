//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator. The key is
//! expanded from a user seed with `SeedableRng::seed_from_u64` (PCG32 key
//! schedule from `rand_core`), and independent draws (replicates, folds,
//! design vs. noise) are separated by the 64-bit ChaCha stream id, computed by
//! folding a list of indices through SplitMix64. Results therefore depend only
//! on `(seed, indices)`, never on thread scheduling.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for a path of indices.
pub fn stream_id(indices: &[u64]) -> u64 {
    indices.iter().fold(0x6C6F_7772_616E_6B00, |acc, &i| {
        splitmix64(acc ^ splitmix64(i))
    })
}

/// Generator for the sub-stream `indices` of `seed`.
pub fn stream(seed: u64, indices: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(indices));
    rng
}

/// `rows × cols` matrix of i.i.d. standard normals, filled row by row.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    DMatrix::from_row_slice(rows, cols, &data)
}
