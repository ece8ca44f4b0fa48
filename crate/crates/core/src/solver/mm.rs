//! Identity-link Poisson regression by majorize-minimize.
//!
//! For a design `A` (rows = positive observations) the objective is
//! `f(b) = Σ_k b_k − Σ_j x_j log (A b)_j`. The linear term assumes every full
//! design column sums to one; only the positive rows are ever materialized.
//! One MM step is `b_k ← b_k Σ_j a_jk x_j / (A b)_j / (1 + c_k)`, where `c_k`
//! is the slope of a concave penalty at the current iterate (zero without
//! shrinkage).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A concave penalty on the row sums of a coefficient matrix.
pub trait GroupPenalty: Sync {
    fn value(&self, row_sums: &[f64]) -> f64;
    /// Writes `∂ penalty / ∂ row_sum` at `row_sums` into `out`.
    fn slopes(&self, row_sums: &[f64], out: &mut [f64]);
    fn is_zero(&self) -> bool {
        false
    }
}

pub struct NoPenalty;

impl GroupPenalty for NoPenalty {
    fn value(&self, _: &[f64]) -> f64 {
        0.0
    }

    fn slopes(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// `β Σ_k log(ε + row_sum_k)`.
pub struct LogSumPenalty {
    pub beta: f64,
    pub epsilon: f64,
}

impl GroupPenalty for LogSumPenalty {
    fn value(&self, row_sums: &[f64]) -> f64 {
        self.beta
            * row_sums
                .iter()
                .map(|s| (s + self.epsilon).ln())
                .sum::<f64>()
    }

    fn slopes(&self, row_sums: &[f64], out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(row_sums) {
            *o = self.beta / (self.epsilon + s);
        }
    }

    fn is_zero(&self) -> bool {
        self.beta == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmSolution {
    pub coefficients: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Coefficients are `K × G`: one column per independent design.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSolution {
    pub coefficients: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `Σ_k b_k − Σ_j x_j log (A b)_j`; `+∞` if a positive count meets zero intensity.
pub fn poisson_objective(a: ArrayView2<f64>, x: &[f64], b: &[f64]) -> f64 {
    let lambda = a.dot(&ndarray::aview1(b));
    let mut data = 0.0;
    for (&l, &xj) in lambda.iter().zip(x) {
        if xj > 0.0 {
            if !(l > 0.0) {
                return f64::INFINITY;
            }
            data += xj * l.ln();
        }
    }
    b.iter().sum::<f64>() - data
}

/// Sum of per-column objectives plus the penalty on row sums of `b`.
pub fn group_objective(
    designs: &[ArrayView2<f64>],
    counts: &[&[f64]],
    b: &Array2<f64>,
    penalty: &dyn GroupPenalty,
) -> f64 {
    let data: f64 = designs
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(g, (a, x))| poisson_objective(a.view(), x, &b.column(g).to_vec()))
        .sum();
    let sums = b.sum_axis(Axis(1)).to_vec();
    data + penalty.value(&sums)
}

fn validate(a: ArrayView2<f64>, x: &[f64], k: usize) -> Result<()> {
    if a.ncols() != k || a.nrows() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "design is {}x{}, with {} counts and {k} coefficients",
            a.nrows(),
            a.ncols(),
            x.len()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression design or counts".into()));
    }
    if a.iter().any(|&v| v < 0.0) || x.iter().any(|&v| v < 0.0) {
        return Err(Error::Validation(
            "regression inputs must be nonnegative".into(),
        ));
    }
    for (row, (a_row, &xj)) in a.rows().into_iter().zip(x).enumerate() {
        if xj > 0.0 && a_row.iter().all(|&v| v == 0.0) {
            return Err(Error::InfeasibleRow { row });
        }
    }
    Ok(())
}

fn check_start(b0: &[f64]) -> Result<()> {
    if b0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("starting coefficients".into()));
    }
    if b0.iter().any(|&v| v <= 0.0) {
        return Err(Error::Validation(
            "starting coefficients must be strictly positive".into(),
        ));
    }
    Ok(())
}

/// One MM sweep on a single column; returns the largest relative change.
fn mm_step(a: ArrayView2<f64>, x: &[f64], b: &mut [f64], slopes: Option<&[f64]>) -> Result<f64> {
    let lambda = a.dot(&ndarray::aview1(b));
    let mut ratio = Array1::zeros(x.len());
    for (j, (&l, &xj)) in lambda.iter().zip(x).enumerate() {
        if xj > 0.0 {
            if !(l > 0.0) {
                return Err(Error::InfeasibleRow { row: j });
            }
            ratio[j] = xj / l;
        }
    }
    let grad = a.t().dot(&ratio);
    let mut change: f64 = 0.0;
    for (k, bk) in b.iter_mut().enumerate() {
        let shrink = slopes.map_or(1.0, |c| 1.0 + c[k]);
        let new = *bk * grad[k] / shrink;
        change = change.max((new - *bk).abs() / bk.abs().max(1.0));
        *bk = new;
    }
    Ok(change)
}

fn solve_column(
    a: ArrayView2<f64>,
    x: &[f64],
    b: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<(usize, bool)> {
    for it in 1..=max_iter {
        if mm_step(a, x, b, None)? < tol {
            return Ok((it, true));
        }
    }
    Ok((max_iter, max_iter == 0))
}

pub fn mm_poisson_regression(
    a: ArrayView2<f64>,
    x: &[f64],
    b0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<MmSolution> {
    validate(a, x, b0.len())?;
    check_start(b0)?;
    let mut b = b0.to_vec();
    let (iterations, converged) = solve_column(a, x, &mut b, tol, max_iter)?;
    Ok(MmSolution {
        coefficients: Array1::from(b),
        iterations,
        converged,
    })
}

/// Group-sparse regression: columns share the log-sum penalty
/// `β Σ_k log(ε + Σ_n b_kn)` through their row sums.
#[allow(clippy::too_many_arguments)]
pub fn mm_poisson_regression_group(
    designs: &[ArrayView2<f64>],
    counts: &[&[f64]],
    b0: &Array2<f64>,
    beta: f64,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> Result<GroupSolution> {
    check_start(&b0.iter().copied().collect::<Vec<_>>())?;
    if !(beta >= 0.0 && epsilon > 0.0) {
        return Err(Error::Validation("need beta >= 0 and epsilon > 0".into()));
    }
    solve_group(
        designs,
        counts,
        b0.clone(),
        &LogSumPenalty { beta, epsilon },
        tol,
        max_iter,
    )
}

/// MM over `G` designs sharing a penalty on coefficient row sums. Zero
/// coefficients are allowed and stay zero.
pub fn solve_group(
    designs: &[ArrayView2<f64>],
    counts: &[&[f64]],
    mut b: Array2<f64>,
    penalty: &dyn GroupPenalty,
    tol: f64,
    max_iter: usize,
) -> Result<GroupSolution> {
    let (k, g) = b.dim();
    if designs.len() != g || counts.len() != g {
        return Err(Error::DimensionMismatch(format!(
            "{} designs and {} count vectors for {g} coefficient columns",
            designs.len(),
            counts.len()
        )));
    }
    for (a, x) in designs.iter().zip(counts) {
        validate(a.view(), x, k)?;
    }
    if b.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::Validation(
            "coefficients must be finite and nonnegative".into(),
        ));
    }

    // Work column-major so each design owns a contiguous slice.
    let mut cols: Vec<Vec<f64>> = (0..g).map(|c| b.column(c).to_vec()).collect();
    let (iterations, converged) = if penalty.is_zero() {
        let results = cols
            .par_iter_mut()
            .zip(designs.par_iter().zip(counts.par_iter()))
            .map(|(col, (a, x))| solve_column(a.view(), x, col, tol, max_iter))
            .collect::<Result<Vec<_>>>()?;
        let iterations = results.iter().map(|r| r.0).max().unwrap_or(0);
        (iterations, results.iter().all(|r| r.1))
    } else {
        let mut slopes = vec![0.0; k];
        let mut sums = vec![0.0; k];
        let mut done = (max_iter, max_iter == 0);
        for it in 1..=max_iter {
            sums.iter_mut().enumerate().for_each(|(r, s)| {
                *s = cols.iter().map(|c| c[r]).sum();
            });
            penalty.slopes(&sums, &mut slopes);
            let change = cols
                .par_iter_mut()
                .zip(designs.par_iter().zip(counts.par_iter()))
                .map(|(col, (a, x))| mm_step(a.view(), x, col, Some(&slopes)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            if change < tol {
                done = (it, true);
                break;
            }
        }
        done
    };
    for (c, col) in cols.iter().enumerate() {
        b.column_mut(c).assign(&ndarray::aview1(col));
    }
    Ok(GroupSolution {
        coefficients: b,
        iterations,
        converged,
    })
}
