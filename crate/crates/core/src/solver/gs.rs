//! Block nonlinear Gauss-Seidel: `Υ` first, then each factor mode in order.
//!
//! The penalized objective is
//! `F = f + β Σ_h log(U_h + ε) + β Σ_r log(ω_r U_h + ε)` where `U_h` is the
//! usage row sum of term `h`. Each block holds the other blocks fixed and
//! linearizes the whole penalty in its own variables, so every inner MM sweep
//! decreases `F`.

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::init::initialize;
use super::mm::{solve_group, GroupPenalty, NoPenalty};
use super::{FitReport, SolverConfig, TraceRow, DEAD_MASS};
use crate::error::{Error, Result};
use crate::model::{CpBtdModel, DEFAULT_ACTIVITY_THRESHOLD};
use crate::sptensor::{design_for_mode_slice, design_for_replicate, ModeSlices, SparseCountTensor};

/// Read-only state shared by every block update of one fit.
pub struct FitContext<'a> {
    pub tensor: &'a SparseCountTensor,
    pub slices: ModeSlices,
    pub beta: f64,
    pub epsilon: f64,
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl<'a> FitContext<'a> {
    pub fn new(tensor: &'a SparseCountTensor, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            tensor,
            slices: ModeSlices::new(tensor),
            beta: config.beta.resolve(tensor.nnz()),
            epsilon: config.epsilon,
            inner_tol: config.inner_tol,
            max_inner: config.max_inner,
        })
    }
}

/// Penalty seen by the usage block: rows are live terms.
struct UsagePenalty {
    beta: f64,
    epsilon: f64,
    weights: Vec<Vec<f64>>,
}

impl GroupPenalty for UsagePenalty {
    fn value(&self, usage: &[f64]) -> f64 {
        let eps = self.epsilon;
        self.beta
            * usage
                .iter()
                .zip(&self.weights)
                .map(|(&u, w)| {
                    (u + eps).ln() + w.iter().map(|&wr| (wr * u + eps).ln()).sum::<f64>()
                })
                .sum::<f64>()
    }

    fn slopes(&self, usage: &[f64], out: &mut [f64]) {
        let eps = self.epsilon;
        for ((o, &u), w) in out.iter_mut().zip(usage).zip(&self.weights) {
            *o = self.beta
                * (1.0 / (u + eps) + w.iter().map(|&wr| wr / (wr * u + eps)).sum::<f64>());
        }
    }
}

/// Penalty seen by a factor-mode block: rows are live components, whose row
/// sums become the component masses; `group[k]` is the term of row `k`.
struct ModePenalty {
    beta: f64,
    epsilon: f64,
    group: Vec<usize>,
    n_groups: usize,
}

impl ModePenalty {
    fn group_sums(&self, mass: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_groups];
        for (&g, &m) in self.group.iter().zip(mass) {
            sums[g] += m;
        }
        sums
    }
}

impl GroupPenalty for ModePenalty {
    fn value(&self, mass: &[f64]) -> f64 {
        let eps = self.epsilon;
        let own: f64 = mass.iter().map(|&m| (m + eps).ln()).sum();
        let terms: f64 = self.group_sums(mass).iter().map(|&s| (s + eps).ln()).sum();
        self.beta * (own + terms)
    }

    fn slopes(&self, mass: &[f64], out: &mut [f64]) {
        let sums = self.group_sums(mass);
        for ((o, &m), &g) in out.iter_mut().zip(mass).zip(&self.group) {
            *o = self.beta * (1.0 / (m + self.epsilon) + 1.0 / (sums[g] + self.epsilon));
        }
    }
}

fn live_terms(model: &CpBtdModel, usage: &[f64]) -> Vec<usize> {
    (0..model.n_terms())
        .filter(|&h| model.is_term_active(h) && usage[h] > 0.0)
        .collect()
}

/// Parks a component at uniform factors with zero weight.
fn freeze_component(model: &mut CpBtdModel, r: usize) {
    model.weights_mut().values_mut()[r] = 0.0;
    for f in model.factors_mut() {
        let uniform = 1.0 / f.nrows() as f64;
        f.column_mut(r).fill(uniform);
    }
}

fn kill_term(model: &mut CpBtdModel, h: usize) {
    for r in model.weights().block_range(h) {
        freeze_component(model, r);
    }
    model.scores_mut().row_mut(h).fill(0.0);
}

/// Updates `Υ` with the factors held fixed; returns the inner iteration count.
pub fn update_scores(model: &mut CpBtdModel, ctx: &FitContext) -> Result<usize> {
    model.check_compatible(ctx.tensor)?;
    let usage = model.term_usage();
    let live = live_terms(model, &usage);
    if live.is_empty() {
        return Ok(0);
    }
    let n_rep = model.n_replicates();
    let designs = (0..n_rep)
        .into_par_iter()
        .map(|n| {
            design_for_replicate(ctx.tensor, &ctx.slices, n, model.factors(), model.weights())
                .map(|d| d.select_columns(&live))
        })
        .collect::<Result<Vec<_>>>()?;
    let counts: Vec<Vec<f64>> = designs.iter().map(|d| d.counts(ctx.tensor)).collect();
    let views: Vec<ArrayView2<f64>> = designs.iter().map(|d| d.values.view()).collect();
    let count_refs: Vec<&[f64]> = counts.iter().map(Vec::as_slice).collect();
    let start = model.scores().select(Axis(0), &live);

    let solution = if ctx.beta > 0.0 {
        let penalty = UsagePenalty {
            beta: ctx.beta,
            epsilon: ctx.epsilon,
            weights: live
                .iter()
                .map(|&h| {
                    model
                        .weights()
                        .block(h)
                        .iter()
                        .copied()
                        .filter(|&w| w > 0.0)
                        .collect()
                })
                .collect(),
        };
        solve_group(
            &views,
            &count_refs,
            start,
            &penalty,
            ctx.inner_tol,
            ctx.max_inner,
        )?
    } else {
        solve_group(
            &views,
            &count_refs,
            start,
            &NoPenalty,
            ctx.inner_tol,
            ctx.max_inner,
        )?
    };
    let scores = model.scores_mut();
    for (row, &h) in live.iter().enumerate() {
        scores.row_mut(h).assign(&solution.coefficients.row(row));
    }
    Ok(solution.iterations)
}

/// Updates factor mode `p` (0-based) and the block weights, rescaling `Υ` so
/// that the intensity is unchanged by the renormalization.
pub fn update_mode(model: &mut CpBtdModel, ctx: &FitContext, p: usize) -> Result<usize> {
    model.check_compatible(ctx.tensor)?;
    if p >= model.n_modes() {
        return Err(Error::OutOfRange {
            what: "mode",
            detail: format!("{} of {}", p + 1, model.n_modes()),
        });
    }
    let usage = model.term_usage();
    for (h, &u) in usage.iter().enumerate() {
        if u == 0.0 && model.is_term_active(h) {
            kill_term(model, h);
        }
    }
    let live_t = live_terms(model, &usage);
    let live: Vec<usize> = live_t
        .iter()
        .flat_map(|&h| model.weights().block_range(h))
        .filter(|&r| model.is_component_active(r))
        .collect();
    if live.is_empty() {
        return Ok(0);
    }
    let weights = model.weights().clone();
    let n_rep = model.n_replicates();

    let mut psi = Array2::zeros((n_rep, model.n_components()));
    for &r in &live {
        let h = weights.term_of(r);
        for n in 0..n_rep {
            psi[[n, r]] = model.scores()[[h, n]] / usage[h];
        }
    }
    let size = model.mode_sizes()[p];
    let designs = (0..size)
        .into_par_iter()
        .map(|m| {
            design_for_mode_slice(ctx.tensor, &ctx.slices, p, m, model.factors(), psi.view())
                .map(|d| d.select_columns(&live))
        })
        .collect::<Result<Vec<_>>>()?;
    let counts: Vec<Vec<f64>> = designs.iter().map(|d| d.counts(ctx.tensor)).collect();
    let views: Vec<ArrayView2<f64>> = designs.iter().map(|d| d.values.view()).collect();
    let count_refs: Vec<&[f64]> = counts.iter().map(Vec::as_slice).collect();

    let factor = &model.factors()[p];
    let start = Array2::from_shape_fn((live.len(), size), |(k, m)| {
        let r = live[k];
        factor[[m, r]] * weights.values()[r] * usage[weights.term_of(r)]
    });
    let solution = if ctx.beta > 0.0 {
        let group = live
            .iter()
            .map(|&r| {
                live_t
                    .binary_search(&weights.term_of(r))
                    .expect("live term")
            })
            .collect();
        let penalty = ModePenalty {
            beta: ctx.beta,
            epsilon: ctx.epsilon,
            group,
            n_groups: live_t.len(),
        };
        solve_group(
            &views,
            &count_refs,
            start,
            &penalty,
            ctx.inner_tol,
            ctx.max_inner,
        )?
    } else {
        solve_group(
            &views,
            &count_refs,
            start,
            &NoPenalty,
            ctx.inner_tol,
            ctx.max_inner,
        )?
    };

    let a = &solution.coefficients;
    let rho = a.sum_axis(Axis(1));
    for (k, &r) in live.iter().enumerate() {
        if rho[k] < DEAD_MASS {
            freeze_component(model, r);
        } else {
            let mut col = model.factors_mut()[p].column_mut(r);
            col.assign(&a.row(k));
            col.mapv_inplace(|v| v / rho[k]);
        }
    }
    for &h in &live_t {
        let mass: f64 = weights
            .block_range(h)
            .filter_map(|r| live.iter().position(|&l| l == r))
            .map(|k| rho[k])
            .filter(|&m| m >= DEAD_MASS)
            .sum();
        if mass == 0.0 {
            kill_term(model, h);
            continue;
        }
        for r in weights.block_range(h) {
            if model.is_component_active(r) {
                let k = live.iter().position(|&l| l == r).expect("live component");
                model.weights_mut().values_mut()[r] = rho[k] / mass;
            }
        }
        let scale = mass / usage[h];
        model.scores_mut().row_mut(h).mapv_inplace(|u| u * scale);
    }
    Ok(solution.iterations)
}

pub fn fit_block_gs(
    tensor: &SparseCountTensor,
    config: &SolverConfig,
) -> Result<(CpBtdModel, FitReport)> {
    let init = initialize(config, tensor)?;
    fit_block_gs_from(tensor, config, init)
}

/// Block Gauss-Seidel from a given starting model.
pub fn fit_block_gs_from(
    tensor: &SparseCountTensor,
    config: &SolverConfig,
    init: CpBtdModel,
) -> Result<(CpBtdModel, FitReport)> {
    let started = Instant::now();
    if tensor.is_empty() {
        return Err(Error::Validation("tensor has no nonzero entries".into()));
    }
    init.check_compatible(tensor)?;
    let ctx = FitContext::new(tensor, config)?;
    let mut model = init;
    let mut objective = model.penalized_objective(tensor, ctx.beta, ctx.epsilon);
    let row = |iter, objective, inner, model: &CpBtdModel| TraceRow {
        outer_iter: iter,
        objective,
        inner_iters_total: inner,
        effective_terms: model.effective_terms(DEFAULT_ACTIVITY_THRESHOLD),
    };
    let mut trace = vec![row(0, objective, 0, &model)];
    let mut converged = false;
    for iter in 1..=config.max_outer {
        let mut inner = update_scores(&mut model, &ctx)?;
        for p in 0..model.n_modes() {
            inner += update_mode(&mut model, &ctx, p)?;
        }
        let next = model.penalized_objective(tensor, ctx.beta, ctx.epsilon);
        trace.push(row(iter, next, inner, &model));
        if !next.is_finite() {
            let report = finish(trace, &model, false, ctx.beta, started);
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
    let report = finish(trace, &model, converged, ctx.beta, started);
    Ok((model, report))
}

pub(super) fn finish(
    trace: Vec<TraceRow>,
    model: &CpBtdModel,
    converged: bool,
    beta: f64,
    started: Instant,
) -> FitReport {
    FitReport {
        trace,
        effective_terms: model.effective_terms(DEFAULT_ACTIVITY_THRESHOLD),
        effective_ranks: (0..model.n_terms())
            .map(|h| model.effective_rank(h, DEFAULT_ACTIVITY_THRESHOLD))
            .collect(),
        converged,
        beta,
        elapsed: started.elapsed(),
    }
}
