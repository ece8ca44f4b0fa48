//! Multiresolution count tensors for replicated spatial origin-destination
//! networks, and a Poisson nonnegative CP block term decomposition (CP-BTD)
//! fitted by block Gauss-Seidel with majorize-minimize inner solvers.
//!
//! The pipeline runs
//! [`ingest`] (CSV events on a field) → [`mrencode`] (dyadic encoding into a
//! `4 × … × 4 × N` tensor) → [`solver`] (fit a [`CpBtdModel`]) →
//! [`analysis`] (motif ranking, scores, dissimilarities, simulation).

// Negated float comparisons deliberately treat NaN as failing the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod ingest;
pub mod model;
pub mod mrencode;
pub mod solver;
pub mod sptensor;

pub use error::{Error, Result};
pub use ingest::{AttackDirection, EventTable, FieldGeometry, PassEvent, Replicate};
pub use model::{BlockWeights, CpBtdModel, MotifView, ScoreSummary};
pub use mrencode::{BinaryCode, IndexMatrix, MultiIndex};
pub use solver::{BetaRule, FitReport, SolverConfig};
pub use sptensor::{DenseTensor, DesignSubmatrix, ModeSlices, SparseCountTensor};
