//! Fixtures shared by the benchmarks in `benches/`.

use gcl_core::{GclConfig, Matrix, SynthConfig, SyntheticDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized to fit")
}

/// Scores with ties and labels holding both classes.
pub fn scored(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = (0..n).map(|_| f64::from(rng.random_range(0..1000u32))).collect();
    let labels = (0..n).map(|i| i % 7 == 0).collect();
    (scores, labels)
}

pub fn dataset(n_videos: usize) -> SyntheticDataset {
    let cfg = SynthConfig {
        n_videos,
        ..SynthConfig::default()
    };
    gcl_core::data::generate_synthetic(&cfg).expect("valid synth config")
}

pub fn config() -> GclConfig {
    GclConfig {
        lr: 1e-3,
        batch_size: 256,
        ..GclConfig::default()
    }
}
