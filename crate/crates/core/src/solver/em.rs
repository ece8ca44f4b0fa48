//! Expectation-maximization over latent per-component counts.
//!
//! Each count `x_j` splits multinomially over the rank-one components
//! `t = (r, h)` in proportion to their intensities `λ̃_{j,t}`. The M-step
//! then has closed forms for `Υ`, `Φ^(p)` and `Ω`. Memory is `O(nnz · ΣR_h)`.

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use super::gs::finish;
use super::init::initialize;
use super::{FitReport, SolverConfig, TraceRow, DEAD_MASS};
use crate::error::{Error, Result};
use crate::model::{CpBtdModel, DEFAULT_ACTIVITY_THRESHOLD};
use crate::sptensor::SparseCountTensor;

/// Expected latent counts, `nnz × ΣR_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    pub responsibilities: Array2<f64>,
}

impl EmState {
    /// Largest `|Σ_t z_{j,t} − x_j|` over nonzero cells.
    pub fn partition_error(&self, tensor: &SparseCountTensor) -> f64 {
        self.responsibilities
            .rows()
            .into_iter()
            .zip(tensor.counts())
            .map(|(row, &x)| (row.sum() - x as f64).abs())
            .fold(0.0, f64::max)
    }
}

fn check_memory(tensor: &SparseCountTensor, model: &CpBtdModel, cap: usize) -> Result<()> {
    let required = tensor.nnz().saturating_mul(model.n_components());
    if required > cap {
        return Err(Error::MemoryGuard { required, cap });
    }
    Ok(())
}

pub fn e_step(model: &CpBtdModel, tensor: &SparseCountTensor, cap: usize) -> Result<EmState> {
    model.check_compatible(tensor)?;
    check_memory(tensor, model, cap)?;
    let r_total = model.n_components();
    let weights = model.weights();
    let mut flat = vec![0.0; tensor.nnz() * r_total];
    flat.par_chunks_mut(r_total.max(1))
        .enumerate()
        .try_for_each(|(j, row)| {
            let idx = tensor.index(j);
            let n = tensor.replicate_of(j);
            let mut total = 0.0;
            for (r, slot) in row.iter_mut().enumerate() {
                let w = weights.values()[r];
                if w == 0.0 {
                    continue;
                }
                let mut v = model.scores()[[weights.term_of(r), n]] * w;
                for (p, f) in model.factors().iter().enumerate() {
                    v *= f[[idx[p] as usize, r]];
                }
                *slot = v;
                total += v;
            }
            if !(total > 0.0) {
                return Err(Error::InfeasibleRow { row: j });
            }
            let x = tensor.count(j) as f64;
            row.iter_mut().for_each(|v| *v = x * *v / total);
            Ok(())
        })?;
    let z = Array2::from_shape_vec((tensor.nnz(), r_total), flat).expect("row-major layout");
    Ok(EmState {
        responsibilities: z,
    })
}

/// Closed-form maximization given responsibilities.
pub fn m_step(
    model: &CpBtdModel,
    tensor: &SparseCountTensor,
    state: &EmState,
) -> Result<CpBtdModel> {
    let z = &state.responsibilities;
    if z.dim() != (tensor.nnz(), model.n_components()) {
        return Err(Error::DimensionMismatch(
            "responsibilities do not match the model".into(),
        ));
    }
    let weights = model.weights().clone();
    let (h_count, r_total, n_rep) = (model.n_terms(), model.n_components(), model.n_replicates());

    let mut per_mode: Vec<Array2<f64>> = model
        .mode_sizes()
        .iter()
        .map(|&i| Array2::zeros((i, r_total)))
        .collect();
    let mut per_usage = Array2::<f64>::zeros((h_count, n_rep));
    for (j, row) in z.rows().into_iter().enumerate() {
        let idx = tensor.index(j);
        let n = tensor.replicate_of(j);
        for (r, &v) in row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (p, acc) in per_mode.iter_mut().enumerate() {
                acc[[idx[p] as usize, r]] += v;
            }
            per_usage[[weights.term_of(r), n]] += v;
        }
    }
    let mass: Vec<f64> = (0..r_total).map(|r| per_mode[0].column(r).sum()).collect();

    // Explicit ratio form of the usage update; the denominator is one when
    // every active factor column and weight block is stochastic.
    let mut scores = per_usage;
    for h in 0..h_count {
        let denom: f64 = weights
            .block_range(h)
            .map(|r| {
                weights.values()[r]
                    * model
                        .factors()
                        .iter()
                        .map(|f| f.column(r).sum())
                        .product::<f64>()
            })
            .sum();
        let mut row = scores.row_mut(h);
        if denom > 0.0 {
            row.mapv_inplace(|v| v / denom);
        } else {
            row.fill(0.0);
        }
    }

    let mut factors = model.factors().to_vec();
    let mut values = weights.values().to_vec();
    for h in 0..h_count {
        let range = weights.block_range(h);
        let term_mass: f64 = range
            .clone()
            .map(|r| mass[r])
            .filter(|&m| m >= DEAD_MASS)
            .sum();
        for r in range {
            if term_mass == 0.0 || mass[r] < DEAD_MASS || values[r] == 0.0 {
                values[r] = 0.0;
                for f in factors.iter_mut() {
                    let uniform = 1.0 / f.nrows() as f64;
                    f.column_mut(r).fill(uniform);
                }
                continue;
            }
            values[r] = mass[r] / term_mass;
            for (f, acc) in factors.iter_mut().zip(&per_mode) {
                let col = acc.column(r);
                f.column_mut(r).assign(&col.mapv(|v| v / mass[r]));
            }
        }
        if term_mass == 0.0 {
            scores.row_mut(h).fill(0.0);
        }
    }
    let weights = crate::model::BlockWeights::new(weights.ranks().to_vec(), values)?;
    CpBtdModel::from_parts(factors, weights, scores)
}

/// EM from the seeded initialization. `β` is not used by this backend.
pub fn fit_em(
    tensor: &SparseCountTensor,
    config: &SolverConfig,
) -> Result<(CpBtdModel, FitReport)> {
    let init = initialize(config, tensor)?;
    fit_em_from(tensor, config, init)
}

pub fn fit_em_from(
    tensor: &SparseCountTensor,
    config: &SolverConfig,
    init: CpBtdModel,
) -> Result<(CpBtdModel, FitReport)> {
    let started = Instant::now();
    config.validate()?;
    if tensor.is_empty() {
        return Err(Error::Validation("tensor has no nonzero entries".into()));
    }
    init.check_compatible(tensor)?;
    check_memory(tensor, &init, config.em_memory_cap)?;
    let mut model = init;
    let mut objective = model.objective(tensor);
    let row = |iter, objective, model: &CpBtdModel| TraceRow {
        outer_iter: iter,
        objective,
        inner_iters_total: 0,
        effective_terms: model.effective_terms(DEFAULT_ACTIVITY_THRESHOLD),
    };
    let mut trace = vec![row(0, objective, &model)];
    let mut converged = false;
    for iter in 1..=config.max_outer {
        let state = e_step(&model, tensor, config.em_memory_cap)?;
        model = m_step(&model, tensor, &state)?;
        let next = model.objective(tensor);
        trace.push(row(iter, next, &model));
        if !next.is_finite() {
            let report = finish(trace, &model, false, 0.0, started);
            return Err(Error::Diverged {
                iteration: iter,
                report: Box::new(report),
                model: Box::new(model),
            });
        }
        let change = (objective - next).abs() / objective.abs().max(1.0);
        objective = next;
        if change < config.outer_tol {
            converged = true;
            break;
        }
    }
    let report = finish(trace, &model, converged, 0.0, started);
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::BetaRule;

    fn tensor() -> SparseCountTensor {
        SparseCountTensor::from_entries(
            vec![4, 3, 2],
            vec![
                (vec![0, 0, 0], 4u64),
                (vec![1, 2, 0], 1),
                (vec![3, 1, 1], 6),
                (vec![0, 2, 1], 2),
                (vec![2, 2, 1], 3),
            ],
        )
        .unwrap()
    }

    fn config(h: usize, r: usize) -> SolverConfig {
        SolverConfig {
            n_terms: h,
            rank: r,
            beta: BetaRule::Fixed(0.0),
            max_outer: 200,
            outer_tol: 1e-12,
            seed: 3,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn responsibilities_partition_counts() {
        let t = tensor();
        let m = initialize(&config(2, 2), &t).unwrap();
        let z = e_step(&m, &t, 1000).unwrap();
        assert!(z.partition_error(&t) < 1e-12);
    }

    #[test]
    fn rank_one_lands_on_marginals_in_one_step() {
        let t = tensor();
        let m = initialize(&config(1, 1), &t).unwrap();
        let z = e_step(&m, &t, 1000).unwrap();
        let next = m_step(&m, &t, &z).unwrap();
        let total = t.total_count() as f64;
        for p in 0..2 {
            let mut marginal = vec![0.0; t.shape()[p]];
            for (idx, c) in t.iter() {
                marginal[idx[p] as usize] += c as f64;
            }
            for (i, m) in marginal.iter().enumerate() {
                assert!((next.factors()[p][[i, 0]] - m / total).abs() < 1e-14);
            }
        }
        assert!((next.scores()[[0, 0]] - 5.0).abs() < 1e-12);
        assert!((next.scores()[[0, 1]] - 11.0).abs() < 1e-12);
    }

    #[test]
    fn likelihood_never_decreases() {
        let t = tensor();
        let (_, report) = fit_em(&t, &config(2, 2)).unwrap();
        assert!(report.worst_increase() <= 1e-10);
    }

    #[test]
    fn memory_guard() {
        let t = tensor();
        let cfg = SolverConfig {
            em_memory_cap: 3,
            ..config(2, 2)
        };
        assert!(matches!(
            fit_em(&t, &cfg),
            Err(Error::MemoryGuard {
                required: 20,
                cap: 3
            })
        ));
    }
}
