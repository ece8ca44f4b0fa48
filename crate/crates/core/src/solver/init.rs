use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SolverConfig;
use crate::error::{Error, Result};
use crate::model::{BlockWeights, CpBtdModel};
use crate::sptensor::SparseCountTensor;

/// Seeded, strictly positive starting point: normalized uniform factor
/// columns, uniform block weights, and usage near `total / (H·N)` with ±10%
/// jitter.
pub fn initialize(config: &SolverConfig, tensor: &SparseCountTensor) -> Result<CpBtdModel> {
    config.validate()?;
    if tensor.ndims() < 2 {
        return Err(Error::Validation(
            "tensor needs at least one factor mode and a replicate mode".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ranks = config.ranks();
    let r_total: usize = ranks.iter().sum();
    let factors = tensor.shape()[..tensor.n_factor_modes()]
        .iter()
        .map(|&size| {
            // 1 - U[0,1) lies in (0, 1], so every entry is positive.
            let mut f = Array2::from_shape_fn((size, r_total), |_| 1.0 - rng.random::<f64>());
            for mut col in f.columns_mut() {
                let s = col.sum();
                col.mapv_inplace(|v| v / s);
            }
            f
        })
        .collect();
    let n = tensor.n_replicates();
    let level = (tensor.total_count().max(1)) as f64 / (config.n_terms * n) as f64;
    let scores = Array2::from_shape_fn((config.n_terms, n), |_| {
        level * (1.0 + rng.random_range(-0.1..0.1))
    });
    CpBtdModel::from_parts(factors, BlockWeights::uniform(ranks)?, scores)
}
