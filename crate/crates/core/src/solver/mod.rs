//! Fitting the CP-BTD model.
//!
//! [`fit_block_gs`] alternates closed-form majorize-minimize (MM) Poisson
//! regressions over the usage block `Υ` and each factor mode; [`fit_em`] is
//! an independent expectation-maximization backend used mainly as an oracle.

mod em;
mod gs;
mod init;
mod mm;

use std::fmt::Write as _;
use std::time::Duration;

pub use em::{e_step, fit_em, fit_em_from, m_step, EmState};
pub use gs::{fit_block_gs, fit_block_gs_from, update_mode, update_scores, FitContext};
pub use init::initialize;
pub use mm::{
    group_objective, mm_poisson_regression, mm_poisson_regression_group, poisson_objective,
    solve_group, GroupPenalty, GroupSolution, LogSumPenalty, MmSolution, NoPenalty,
};

use crate::error::{Error, Result};

/// Threshold below which a component's mass counts as dead.
pub const DEAD_MASS: f64 = 1e-300;

/// How the shrinkage strength `β` is chosen for a tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaRule {
    /// `β = c · J`, with `J` the number of positive observations entering a
    /// group subproblem. Both blocks see every nonzero once, so this is
    /// `c · nnz`.
    PerPositive(f64),
    /// An absolute `β`.
    Fixed(f64),
}

impl BetaRule {
    pub fn resolve(self, positives: usize) -> f64 {
        match self {
            BetaRule::PerPositive(c) => c * positives as f64,
            BetaRule::Fixed(b) => b,
        }
    }

    fn coefficient(self) -> f64 {
        match self {
            BetaRule::PerPositive(c) | BetaRule::Fixed(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Term budget `H`.
    pub n_terms: usize,
    /// Rank budget `R_h`, shared by every term.
    pub rank: usize,
    pub beta: BetaRule,
    /// Offset inside the log-sum penalty.
    pub epsilon: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Maximum relative coordinate change that ends an inner solve.
    pub inner_tol: f64,
    /// Relative objective change that ends the outer loop.
    pub outer_tol: f64,
    pub seed: u64,
    /// Largest number of EM responsibilities (`nnz · ΣR_h`) held in memory.
    pub em_memory_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_terms: 500,
            rank: 5,
            beta: BetaRule::PerPositive(0.001),
            epsilon: 1e-8,
            max_outer: 100,
            max_inner: 250,
            inner_tol: 1e-6,
            outer_tol: 1e-8,
            seed: 0,
            em_memory_cap: 50_000_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if self.n_terms == 0 {
            return fail("term budget must be at least 1");
        }
        if self.rank == 0 {
            return fail("rank budget must be at least 1");
        }
        let b = self.beta.coefficient();
        if !(b.is_finite() && b >= 0.0) {
            return fail("beta must be finite and nonnegative");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return fail("epsilon must be positive");
        }
        if !(self.inner_tol > 0.0 && self.outer_tol > 0.0) {
            return fail("tolerances must be positive");
        }
        Ok(())
    }

    pub fn ranks(&self) -> Vec<usize> {
        vec![self.rank; self.n_terms]
    }
}

/// One row of the objective trace. Row 0 describes the initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub objective: f64,
    pub inner_iters_total: usize,
    pub effective_terms: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub trace: Vec<TraceRow>,
    pub effective_terms: usize,
    pub effective_ranks: Vec<usize>,
    pub converged: bool,
    pub beta: f64,
    pub elapsed: Duration,
}

impl FitReport {
    pub fn objectives(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.objective).collect()
    }

    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.objective)
    }

    /// Largest increase between consecutive objective values.
    pub fn worst_increase(&self) -> f64 {
        self.trace
            .windows(2)
            .map(|w| w[1].objective - w[0].objective)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("outer_iter,objective,inner_iters_total,effective_H\n");
        for r in &self.trace {
            let _ = writeln!(
                s,
                "{},{:e},{},{}",
                r.outer_iter, r.objective, r.inner_iters_total, r.effective_terms
            );
        }
        s
    }
}
