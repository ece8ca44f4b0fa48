//! The Poisson CP-BTD parameter set.
//!
//! Intensity of cell `i` in replicate `n`:
//!
//! ```text
//! λ(i, n) = Σ_h υ[h,n] Σ_{r ∈ h} ω[r] Π_p Φ^(p)[i_p, r]
//! ```
//!
//! Factor columns and each term's weight block are probability vectors. A
//! component whose weight is exactly zero is inactive: its factor columns are
//! parked at the uniform distribution and it contributes nothing.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::Range;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mrencode;
use crate::sptensor::SparseCountTensor;

/// Default threshold for counting effective ranks and terms.
pub const DEFAULT_ACTIVITY_THRESHOLD: f64 = 1e-10;

/// Tolerance on probability-vector sums accepted by [`CpBtdModel::from_parts`].
pub const STOCHASTIC_TOLERANCE: f64 = 1e-8;

/// Block-diagonal weight matrix `Ω`, stored as the concatenated `ω_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    ranks: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl BlockWeights {
    pub fn new(ranks: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if ranks.is_empty() || ranks.contains(&0) {
            return Err(Error::Validation(format!("invalid term ranks {ranks:?}")));
        }
        let mut offsets = Vec::with_capacity(ranks.len() + 1);
        offsets.push(0);
        for &r in &ranks {
            offsets.push(offsets.last().unwrap() + r);
        }
        if values.len() != *offsets.last().unwrap() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} components",
                values.len(),
                offsets.last().unwrap()
            )));
        }
        Ok(Self {
            ranks,
            offsets,
            values,
        })
    }

    /// Uniform `1/R_h` within every block.
    pub fn uniform(ranks: Vec<usize>) -> Result<Self> {
        let values = ranks
            .iter()
            .flat_map(|&r| std::iter::repeat_n(1.0 / r as f64, r))
            .collect();
        Self::new(ranks, values)
    }

    pub fn n_terms(&self) -> usize {
        self.ranks.len()
    }

    pub fn n_components(&self) -> usize {
        self.values.len()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn block_range(&self, h: usize) -> Range<usize> {
        self.offsets[h]..self.offsets[h + 1]
    }

    pub fn block(&self, h: usize) -> &[f64] {
        &self.values[self.block_range(h)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn term_of(&self, r: usize) -> usize {
        self.offsets.partition_point(|&o| o <= r) - 1
    }

    /// Dense `R × H` form of `Ω`.
    pub fn to_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n_components(), self.n_terms()));
        for h in 0..self.n_terms() {
            for r in self.block_range(h) {
                m[[r, h]] = self.values[r];
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpBtdModel {
    mode_sizes: Vec<usize>,
    factors: Vec<Array2<f64>>,
    weights: BlockWeights,
    scores: Array2<f64>,
}

/// Dense per-scale renderings of one motif.
#[derive(Debug, Clone, PartialEq)]
pub struct MotifView {
    pub term: usize,
    /// `scales[s-1]` is the `4^s × 4^s` origin-destination matrix at scale `s`.
    pub scales: Vec<Array2<f64>>,
    pub weights: Vec<f64>,
    pub effective_rank: usize,
}

impl MotifView {
    pub fn finest(&self) -> &Array2<f64> {
        self.scales.last().expect("a motif has at least one scale")
    }
}

/// Column-normalized scores `Θ` and per-replicate rates `η`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub theta: Array2<f64>,
    pub eta: Vec<f64>,
}

impl CpBtdModel {
    pub fn from_parts(
        factors: Vec<Array2<f64>>,
        weights: BlockWeights,
        scores: Array2<f64>,
    ) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Validation(
                "model needs at least one factor mode".into(),
            ));
        }
        let r_total = weights.n_components();
        for (p, f) in factors.iter().enumerate() {
            if f.ncols() != r_total || f.nrows() == 0 {
                return Err(Error::DimensionMismatch(format!(
                    "factor {} is {}x{}, expected I x {r_total}",
                    p + 1,
                    f.nrows(),
                    f.ncols()
                )));
            }
        }
        if scores.nrows() != weights.n_terms() || scores.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "scores are {}x{}, expected {} x N",
                scores.nrows(),
                scores.ncols(),
                weights.n_terms()
            )));
        }
        let bad = |v: &f64| !(v.is_finite() && *v >= 0.0);
        if factors.iter().any(|f| f.iter().any(bad))
            || weights.values.iter().any(bad)
            || scores.iter().any(bad)
        {
            return Err(Error::Validation(
                "parameters must be finite and nonnegative".into(),
            ));
        }
        for h in 0..weights.n_terms() {
            let sum: f64 = weights.block(h).iter().sum();
            if sum != 0.0 && (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                return Err(Error::Validation(format!(
                    "weights of term {} sum to {sum}",
                    h + 1
                )));
            }
        }
        for (p, f) in factors.iter().enumerate() {
            for r in 0..r_total {
                if weights.values[r] == 0.0 {
                    continue;
                }
                let sum = f.column(r).sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                    return Err(Error::Validation(format!(
                        "factor {} column {} sums to {sum}",
                        p + 1,
                        r + 1
                    )));
                }
            }
        }
        Ok(Self {
            mode_sizes: factors.iter().map(|f| f.nrows()).collect(),
            factors,
            weights,
            scores,
        })
    }

    pub fn mode_sizes(&self) -> &[usize] {
        &self.mode_sizes
    }

    pub fn n_modes(&self) -> usize {
        self.factors.len()
    }

    pub fn n_terms(&self) -> usize {
        self.weights.n_terms()
    }

    pub fn n_components(&self) -> usize {
        self.weights.n_components()
    }

    pub fn n_replicates(&self) -> usize {
        self.scores.ncols()
    }

    pub fn factors(&self) -> &[Array2<f64>] {
        &self.factors
    }

    pub fn weights(&self) -> &BlockWeights {
        &self.weights
    }

    /// `Υ`, `H × N`.
    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub(crate) fn factors_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.factors
    }

    pub(crate) fn weights_mut(&mut self) -> &mut BlockWeights {
        &mut self.weights
    }

    pub(crate) fn scores_mut(&mut self) -> &mut Array2<f64> {
        &mut self.scores
    }

    pub fn is_component_active(&self, r: usize) -> bool {
        self.weights.values[r] > 0.0
    }

    pub fn is_term_active(&self, h: usize) -> bool {
        self.weights.block(h).iter().any(|&w| w > 0.0)
    }

    /// Row sums of `Υ`.
    pub fn term_usage(&self) -> Vec<f64> {
        self.scores.rows().into_iter().map(|r| r.sum()).collect()
    }

    /// Shape of the tensor this model describes.
    pub fn tensor_shape(&self) -> Vec<usize> {
        let mut s = self.mode_sizes.clone();
        s.push(self.n_replicates());
        s
    }

    pub fn check_compatible(&self, tensor: &SparseCountTensor) -> Result<()> {
        if tensor.shape() != self.tensor_shape().as_slice() {
            return Err(Error::DimensionMismatch(format!(
                "model describes shape {:?}, tensor has {:?}",
                self.tensor_shape(),
                tensor.shape()
            )));
        }
        Ok(())
    }

    /// Intensity at a 0-based cell of replicate `n`.
    pub fn intensity_at(&self, cell: &[usize], n: usize) -> f64 {
        assert_eq!(cell.len(), self.n_modes(), "cell has wrong number of modes");
        self.intensity_with(|p| cell[p], n)
    }

    pub(crate) fn intensity_of_entry(&self, idx: &[u32]) -> f64 {
        self.intensity_with(|p| idx[p] as usize, idx[idx.len() - 1] as usize)
    }

    fn intensity_with(&self, cell: impl Fn(usize) -> usize, n: usize) -> f64 {
        let mut total = 0.0;
        for h in 0..self.n_terms() {
            let usage = self.scores[[h, n]];
            if usage == 0.0 {
                continue;
            }
            let mut motif = 0.0;
            for r in self.weights.block_range(h) {
                let mut prod = self.weights.values[r];
                for (p, f) in self.factors.iter().enumerate() {
                    prod *= f[[cell(p), r]];
                }
                motif += prod;
            }
            total += usage * motif;
        }
        total
    }

    /// `Σ_cells λ`, computed from the parameters without a dense pass.
    pub fn total_intensity(&self) -> f64 {
        let mut total = 0.0;
        for h in 0..self.n_terms() {
            let usage: f64 = self.scores.row(h).sum();
            let mass: f64 = self
                .weights
                .block_range(h)
                .map(|r| {
                    self.weights.values[r]
                        * self
                            .factors
                            .iter()
                            .map(|f| f.column(r).sum())
                            .product::<f64>()
                })
                .sum();
            total += usage * mass;
        }
        total
    }

    /// Generalized KL objective `Σ λ − Σ_{x>0} x log λ`. Returns `+∞` when a
    /// nonzero cell has zero intensity; see [`Self::first_zero_intensity`].
    pub fn objective(&self, tensor: &SparseCountTensor) -> f64 {
        let mut data_term = 0.0;
        for (idx, count) in tensor.iter() {
            let lambda = self.intensity_of_entry(idx);
            if !(lambda > 0.0) {
                return f64::INFINITY;
            }
            data_term += count as f64 * lambda.ln();
        }
        self.total_intensity() - data_term
    }

    /// Entry id of the first nonzero cell whose intensity is zero.
    pub fn first_zero_intensity(&self, tensor: &SparseCountTensor) -> Option<usize> {
        (0..tensor.nnz()).find(|&j| !(self.intensity_of_entry(tensor.index(j)) > 0.0))
    }

    /// Log-sum group penalty on term usage and component mass:
    /// `β Σ_h log(U_h + ε) + β Σ_r log(ω_r U_h + ε)`.
    pub fn penalty(&self, beta: f64, epsilon: f64) -> f64 {
        if beta == 0.0 {
            return 0.0;
        }
        let usage = self.term_usage();
        let mut total = 0.0;
        for (h, &u) in usage.iter().enumerate() {
            total += (u + epsilon).ln();
            for &w in self.weights.block(h) {
                total += (w * u + epsilon).ln();
            }
        }
        beta * total
    }

    pub fn penalized_objective(&self, tensor: &SparseCountTensor, beta: f64, epsilon: f64) -> f64 {
        self.objective(tensor) + self.penalty(beta, epsilon)
    }

    /// Number of scales when the factor modes are `2S` modes of size 4.
    pub fn scales(&self) -> Result<usize> {
        let p = self.n_modes();
        if !p.is_multiple_of(2) || self.mode_sizes.iter().any(|&i| i != 4) {
            return Err(Error::Validation(format!(
                "mode sizes {:?} are not a multiresolution layout",
                self.mode_sizes
            )));
        }
        Ok(p / 2)
    }

    /// `4^s × 4^s` origin-destination rendering of motif `h` at scale `s`
    /// (both 0-based `h`, 1-based `s`), built from the first `2s` modes.
    pub fn motif_at_scale(&self, h: usize, s: usize) -> Result<Array2<f64>> {
        let scales = self.scales()?;
        if h >= self.n_terms() {
            return Err(Error::OutOfRange {
                what: "term",
                detail: format!("{} of {}", h + 1, self.n_terms()),
            });
        }
        if s == 0 || s > scales {
            return Err(Error::OutOfRange {
                what: "scale",
                detail: format!("{s} not in 1..={scales}"),
            });
        }
        if !self.is_term_active(h) {
            return Err(Error::InactiveTerm { term: h + 1 });
        }
        let side = 1usize << (2 * s);
        let mut out = Array2::zeros((side, side));
        for r in self.weights.block_range(h) {
            let w = self.weights.values[r];
            if w == 0.0 {
                continue;
            }
            let mut origin = vec![1.0];
            let mut dest = vec![1.0];
            for level in 0..s {
                origin = refine(&origin, &self.factors[2 * level], r);
                dest = refine(&dest, &self.factors[2 * level + 1], r);
            }
            for (vo, &a) in origin.iter().enumerate() {
                for (vd, &b) in dest.iter().enumerate() {
                    out[[vo, vd]] += w * a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn motif_view(&self, h: usize, threshold: f64) -> Result<MotifView> {
        let scales = self.scales()?;
        let views = (1..=scales)
            .map(|s| self.motif_at_scale(h, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(MotifView {
            term: h,
            scales: views,
            weights: self.weights.block(h).to_vec(),
            effective_rank: self.effective_rank(h, threshold),
        })
    }

    /// `Θ = Υ diag(η)^{-1}` with `η` the column sums of `Υ`.
    pub fn normalize_scores(&self) -> Result<ScoreSummary> {
        let eta: Vec<f64> = self.scores.columns().into_iter().map(|c| c.sum()).collect();
        if let Some(n) = eta.iter().position(|&e| !(e > 0.0)) {
            return Err(Error::ZeroScoreColumn { replicate: n + 1 });
        }
        let mut theta = self.scores.clone();
        for (mut col, &e) in theta.columns_mut().into_iter().zip(&eta) {
            col.mapv_inplace(|v| v / e);
        }
        Ok(ScoreSummary { theta, eta })
    }

    /// Count of `ω_h` entries above `threshold`.
    pub fn effective_rank(&self, h: usize, threshold: f64) -> usize {
        self.weights
            .block(h)
            .iter()
            .filter(|&&w| w > threshold)
            .count()
    }

    /// Count of `Υ` row sums above `threshold`.
    pub fn effective_terms(&self, threshold: f64) -> usize {
        self.term_usage().iter().filter(|&&u| u > threshold).count()
    }

    /// Drops inactive components and terms.
    pub fn compact(&self) -> Result<Self> {
        let terms: Vec<usize> = (0..self.n_terms())
            .filter(|&h| self.is_term_active(h))
            .collect();
        if terms.is_empty() {
            return Err(Error::Validation("model has no active terms".into()));
        }
        let mut ranks = Vec::new();
        let mut comps = Vec::new();
        for &h in &terms {
            let live: Vec<usize> = self
                .weights
                .block_range(h)
                .filter(|&r| self.is_component_active(r))
                .collect();
            ranks.push(live.len());
            comps.extend(live);
        }
        let values = comps.iter().map(|&r| self.weights.values[r]).collect();
        let factors = self
            .factors
            .iter()
            .map(|f| f.select(ndarray::Axis(1), &comps))
            .collect();
        let scores = self.scores.select(ndarray::Axis(0), &terms);
        Self::from_parts(factors, BlockWeights::new(ranks, values)?, scores)
    }

    /// Writes the `cpbtd v1` text format. Matrices are column-major, one
    /// column per line; floats use shortest round-trip notation.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "cpbtd v1");
        let _ = writeln!(s, "P {}", self.n_modes());
        let _ = writeln!(
            s,
            "I {}",
            join(&mut self.mode_sizes.iter().map(|i| i.to_string()))
        );
        let _ = writeln!(s, "H {}", self.n_terms());
        let _ = writeln!(
            s,
            "R {}",
            join(&mut self.weights.ranks.iter().map(|r| r.to_string()))
        );
        let _ = writeln!(s, "N {}", self.n_replicates());
        for (p, f) in self.factors.iter().enumerate() {
            let _ = writeln!(s, "phi {} {}x{}", p + 1, f.nrows(), f.ncols());
            for col in f.columns() {
                let _ = writeln!(s, "{}", join(&mut col.iter().map(|v| format!("{v:e}"))));
            }
        }
        for h in 0..self.n_terms() {
            let block = self.weights.block(h);
            let _ = writeln!(s, "omega {} {}", h + 1, block.len());
            let _ = writeln!(s, "{}", join(&mut block.iter().map(|v| format!("{v:e}"))));
        }
        let _ = writeln!(s, "upsilon {}x{}", self.n_terms(), self.n_replicates());
        for col in self.scores.columns() {
            let _ = writeln!(s, "{}", join(&mut col.iter().map(|v| format!("{v:e}"))));
        }
        let _ = writeln!(s, "end");
        s
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut reader = LineReader {
            lines: input.lines(),
            line: 0,
        };
        reader.expect_tokens(&["cpbtd", "v1"])?;
        let p = reader.keyed_usizes("P")?;
        let sizes = reader.keyed_usizes("I")?;
        let h = reader.keyed_usizes("H")?;
        let ranks = reader.keyed_usizes("R")?;
        let n = reader.keyed_usizes("N")?;
        let (p, h, n) = (
            single(&reader, p)?,
            single(&reader, h)?,
            single(&reader, n)?,
        );
        if sizes.len() != p || ranks.len() != h {
            return Err(reader.error("header counts disagree"));
        }
        let r_total: usize = ranks.iter().sum();
        let mut factors = Vec::with_capacity(p);
        for (q, &rows) in sizes.iter().enumerate() {
            reader.expect_tokens(&["phi", &(q + 1).to_string(), &format!("{rows}x{r_total}")])?;
            let mut f = Array2::zeros((rows, r_total));
            for r in 0..r_total {
                let col = reader.floats(rows)?;
                f.column_mut(r).assign(&ndarray::Array1::from(col));
            }
            factors.push(f);
        }
        let mut values = Vec::with_capacity(r_total);
        for (t, &rank) in ranks.iter().enumerate() {
            reader.expect_tokens(&["omega", &(t + 1).to_string(), &rank.to_string()])?;
            values.extend(reader.floats(rank)?);
        }
        reader.expect_tokens(&["upsilon", &format!("{h}x{n}")])?;
        let mut scores = Array2::zeros((h, n));
        for c in 0..n {
            let col = reader.floats(h)?;
            scores.column_mut(c).assign(&ndarray::Array1::from(col));
        }
        reader.expect_tokens(&["end"])?;
        Self::from_parts(factors, BlockWeights::new(ranks, values)?, scores)
    }
}

fn refine(coarse: &[f64], factor: &Array2<f64>, r: usize) -> Vec<f64> {
    let col = factor.column(r);
    coarse
        .iter()
        .flat_map(|&a| col.iter().map(move |&b| a * b))
        .collect()
}

fn single(reader: &LineReader<impl BufRead>, v: Vec<usize>) -> Result<usize> {
    match v.as_slice() {
        [x] => Ok(*x),
        _ => Err(reader.error("expected a single value")),
    }
}

struct LineReader<R: BufRead> {
    lines: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> LineReader<R> {
    fn next_line(&mut self) -> Result<String> {
        loop {
            self.line += 1;
            match self.lines.next() {
                Some(l) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        return Ok(l);
                    }
                }
                None => return Err(self.error("unexpected end of model file")),
            }
        }
    }

    fn error(&self, message: &str) -> Error {
        Error::Parse {
            line: self.line,
            message: message.to_owned(),
        }
    }

    fn expect_tokens(&mut self, expected: &[&str]) -> Result<()> {
        let l = self.next_line()?;
        let got: Vec<&str> = l.split_whitespace().collect();
        if got != expected {
            return Err(self.error(&format!("expected `{}`, found `{l}`", expected.join(" "))));
        }
        Ok(())
    }

    fn keyed_usizes(&mut self, key: &str) -> Result<Vec<usize>> {
        let l = self.next_line()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(self.error(&format!("expected `{key}` line, found `{l}`")));
        }
        it.map(|t| {
            t.parse::<usize>()
                .map_err(|_| self.error(&format!("bad integer `{t}`")))
        })
        .collect()
    }

    fn floats(&mut self, count: usize) -> Result<Vec<f64>> {
        let l = self.next_line()?;
        let v = l
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| self.error(&format!("bad number `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if v.len() != count {
            return Err(self.error(&format!("expected {count} values, found {}", v.len())));
        }
        Ok(v)
    }
}

/// Scale-`(s−1)` matrix obtained by summing the 4×4 child blocks of a
/// scale-`s` origin-destination matrix.
pub fn aggregate_children(fine: &Array2<f64>) -> Array2<f64> {
    let side = fine.nrows() / 4;
    let mut coarse = Array2::zeros((side, side));
    for ((vo, vd), &v) in fine.indexed_iter() {
        coarse[[vo / 4, vd / 4]] += v;
    }
    coarse
}

/// Largest absolute deviation from the parent-child block-sum identity over
/// all scales of an active motif.
pub fn scale_consistency_error(model: &CpBtdModel, h: usize) -> Result<f64> {
    let scales = model.scales()?;
    let mut worst: f64 = 0.0;
    for s in 2..=scales {
        let fine = model.motif_at_scale(h, s)?;
        let coarse = model.motif_at_scale(h, s - 1)?;
        let agg = aggregate_children(&fine);
        for (a, b) in agg.iter().zip(coarse.iter()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// 0-based node index at scale `s` of per-scale 0-based codes.
pub fn node_of_codes(codes: &[usize]) -> usize {
    mrencode::recursive_node_index(&codes.iter().map(|c| c + 1).collect::<Vec<_>>()) - 1
}
