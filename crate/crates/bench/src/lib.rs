//! Shared fixtures for the benchmarks.

use loglo_core::{Field, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_field(shape: [usize; 4], seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Field::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape).expect("valid shape")
}

/// The model size used for desk-scale training runs.
pub fn desk_model() -> ModelConfig {
    ModelConfig {
        width: 16,
        n_layers: 2,
        global_modes: (8, 8),
        patch_size: 8,
        ..ModelConfig::new(1, 1)
    }
}
