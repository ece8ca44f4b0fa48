use std::collections::BTreeMap;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::CpBtdModel;
use crate::sptensor::{SparseCountTensor, DENSE_CELL_LIMIT};

fn with_rates(truth: &CpBtdModel, rates: &Array2<f64>) -> Result<CpBtdModel> {
    if rates.nrows() != truth.n_terms() {
        return Err(Error::DimensionMismatch(format!(
            "{} rate rows for {} terms",
            rates.nrows(),
            truth.n_terms()
        )));
    }
    CpBtdModel::from_parts(
        truth.factors().to_vec(),
        truth.weights().clone(),
        rates.clone(),
    )
}

fn poisson_draw(rng: &mut impl Rng, mean: f64) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let dist =
        Poisson::new(mean).map_err(|e| Error::Validation(format!("Poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

/// Superposition sampling: `J_{h,n} ~ Poisson(υ_{h,n})` events per term and
/// replicate, each placed by drawing a component from `ω_h` and then one
/// index per mode from that component's factor columns.
pub fn simulate(truth: &CpBtdModel, rates: &Array2<f64>, seed: u64) -> Result<SparseCountTensor> {
    let model = with_rates(truth, rates)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = model.weights();
    let invalid = |e: rand::distr::weighted::Error| Error::Validation(e.to_string());
    let mut cells: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    for h in 0..model.n_terms() {
        let usage = model.scores().row(h);
        if usage.iter().all(|&u| u == 0.0) {
            continue;
        }
        let pick_component = WeightedIndex::new(weights.block(h)).map_err(invalid)?;
        let pick_index: Vec<Vec<WeightedIndex<f64>>> = weights
            .block_range(h)
            .map(|r| {
                model
                    .factors()
                    .iter()
                    .map(|f| WeightedIndex::new(f.column(r)).map_err(invalid))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        for (n, &mean) in usage.iter().enumerate() {
            for _ in 0..poisson_draw(&mut rng, mean)? {
                let k = pick_component.sample(&mut rng);
                let mut idx: Vec<usize> =
                    pick_index[k].iter().map(|d| d.sample(&mut rng)).collect();
                idx.push(n);
                *cells.entry(idx).or_default() += 1;
            }
        }
    }
    SparseCountTensor::from_entries(model.tensor_shape(), cells)
}

/// Direct sampling `x ~ Poisson(λ)` at every cell. Dense, so guarded by the
/// same cell limit as dense reconstruction.
pub fn simulate_direct(
    truth: &CpBtdModel,
    rates: &Array2<f64>,
    seed: u64,
) -> Result<SparseCountTensor> {
    let model = with_rates(truth, rates)?;
    let shape = model.tensor_shape();
    let cells: u128 = shape.iter().map(|&s| s as u128).product();
    if cells > DENSE_CELL_LIMIT {
        return Err(Error::SizeGuard {
            cells,
            limit: DENSE_CELL_LIMIT,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = model.mode_sizes().to_vec();
    let mut entries = Vec::new();
    let mut cell = vec![0usize; sizes.len()];
    loop {
        for n in 0..model.n_replicates() {
            let count = poisson_draw(&mut rng, model.intensity_at(&cell, n))?;
            if count > 0 {
                let mut idx = cell.clone();
                idx.push(n);
                entries.push((idx, count));
            }
        }
        // odometer over the factor modes, last mode fastest
        let mut p = sizes.len();
        loop {
            if p == 0 {
                return SparseCountTensor::from_entries(shape, entries);
            }
            p -= 1;
            cell[p] += 1;
            if cell[p] < sizes[p] {
                break;
            }
            cell[p] = 0;
        }
    }
}
