//! Coordinate-format count tensors and the sparse design-matrix gathers used
//! by the solver.
//!
//! The last mode of a [`SparseCountTensor`] is always the replicate mode.
//! Entries are kept in ascending lexicographic order with no duplicates and
//! strictly positive counts.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::model::{BlockWeights, CpBtdModel};

/// Upper bound on cells for dense materialization.
pub const DENSE_CELL_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseCountTensor {
    shape: Vec<usize>,
    /// `nnz × ndims` row-major 0-based indices.
    indices: Vec<u32>,
    counts: Vec<u64>,
}

impl SparseCountTensor {
    pub fn empty(shape: Vec<usize>) -> Result<Self> {
        Self::from_entries(shape, std::iter::empty::<(Vec<usize>, u64)>())
    }

    /// Builds a tensor from 0-based `(index, count)` pairs. Duplicate indices
    /// are summed and zero counts dropped.
    pub fn from_entries<I, V>(shape: Vec<usize>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (V, u64)>,
        V: AsRef<[usize]>,
    {
        if shape.is_empty() || shape.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
            return Err(Error::Validation(format!("invalid tensor shape {shape:?}")));
        }
        let m = shape.len();
        let mut indices = Vec::new();
        let mut counts = Vec::new();
        for (idx, count) in entries {
            let idx = idx.as_ref();
            if idx.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "index {idx:?} has {} modes, tensor has {m}",
                    idx.len()
                )));
            }
            for (k, (&i, &d)) in idx.iter().zip(&shape).enumerate() {
                if i >= d {
                    return Err(Error::OutOfRange {
                        what: "tensor index",
                        detail: format!("mode {} index {} >= {}", k + 1, i + 1, d),
                    });
                }
            }
            if count == 0 {
                continue;
            }
            indices.extend(idx.iter().map(|&i| i as u32));
            counts.push(count);
        }
        Ok(Self::canonical(shape, indices, counts))
    }

    fn canonical(shape: Vec<usize>, indices: Vec<u32>, counts: Vec<u64>) -> Self {
        let m = shape.len();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_unstable_by(|&a, &b| {
            indices[a * m..(a + 1) * m].cmp(&indices[b * m..(b + 1) * m])
        });
        let mut out_idx: Vec<u32> = Vec::with_capacity(indices.len());
        let mut out_cnt: Vec<u64> = Vec::with_capacity(counts.len());
        for j in order {
            let idx = &indices[j * m..(j + 1) * m];
            if let Some(last) = out_cnt.last_mut() {
                if &out_idx[out_idx.len() - m..] == idx {
                    *last += counts[j];
                    continue;
                }
            }
            out_idx.extend_from_slice(idx);
            out_cnt.push(counts[j]);
        }
        Self {
            shape,
            indices: out_idx,
            counts: out_cnt,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndims(&self) -> usize {
        self.shape.len()
    }

    /// Number of non-replicate modes.
    pub fn n_factor_modes(&self) -> usize {
        self.shape.len() - 1
    }

    pub fn n_replicates(&self) -> usize {
        *self.shape.last().expect("shape is nonempty")
    }

    pub fn nnz(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// 0-based index of entry `j`.
    #[allow(clippy::should_implement_trait)]
    pub fn index(&self, j: usize) -> &[u32] {
        let m = self.shape.len();
        &self.indices[j * m..(j + 1) * m]
    }

    pub fn count(&self, j: usize) -> u64 {
        self.counts[j]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn replicate_of(&self, j: usize) -> usize {
        let m = self.shape.len();
        self.indices[j * m + m - 1] as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], u64)> + '_ {
        self.indices
            .chunks_exact(self.shape.len())
            .zip(self.counts.iter().copied())
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn cell_count(&self) -> u128 {
        self.shape.iter().map(|&d| d as u128).product()
    }

    /// Fraction of cells that are zero, in percent.
    pub fn sparsity_percent(&self) -> f64 {
        100.0 * (1.0 - self.nnz() as f64 / self.cell_count() as f64)
    }

    /// Sums counts over the given modes, keeping the rest in order.
    pub fn sum_out_modes(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() || keep.iter().any(|&k| k >= self.ndims()) {
            return Err(Error::Validation(format!(
                "invalid mode selection {keep:?}"
            )));
        }
        let shape: Vec<usize> = keep.iter().map(|&k| self.shape[k]).collect();
        let mut indices = Vec::with_capacity(self.nnz() * keep.len());
        for (idx, _) in self.iter() {
            indices.extend(keep.iter().map(|&k| idx[k]));
        }
        Ok(Self::canonical(shape, indices, self.counts.clone()))
    }

    /// Writes the `mrtensor v1` text format (1-based indices).
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(32 + self.nnz() * (2 * self.ndims() + 4));
        let shape: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(
            s,
            "mrtensor v1 modes={} shape={} nnz={}",
            self.ndims(),
            shape.join(","),
            self.nnz()
        );
        for (idx, count) in self.iter() {
            for i in idx {
                let _ = write!(s, "{} ", i + 1);
            }
            let _ = writeln!(s, "{count}");
        }
        s
    }

    /// Reads the `mrtensor v1` text format.
    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty tensor file".into(),
        })??;
        let (modes, shape, nnz) = parse_header(&header)?;
        if shape.len() != modes {
            return Err(Error::Parse {
                line: 1,
                message: format!("modes={modes} but shape has {} entries", shape.len()),
            });
        }
        let mut entries = Vec::with_capacity(nnz);
        let mut prev: Option<Vec<usize>> = None;
        for (k, line) in lines.enumerate() {
            let line_no = k + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != modes + 1 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {} fields, found {}", modes + 1, fields.len()),
                });
            }
            let mut idx = Vec::with_capacity(modes);
            for f in &fields[..modes] {
                let v: usize = f.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad index `{f}`"),
                })?;
                if v == 0 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "indices are 1-based".into(),
                    });
                }
                idx.push(v - 1);
            }
            let count: u64 = fields[modes].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad count `{}`", fields[modes]),
            })?;
            if count == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "zero count in sparse listing".into(),
                });
            }
            if let Some(p) = &prev {
                if *p >= idx {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "entries not in ascending lexicographic order".into(),
                    });
                }
            }
            prev = Some(idx.clone());
            entries.push((idx, count));
        }
        if entries.len() != nnz {
            return Err(Error::Parse {
                line: 1,
                message: format!("header says nnz={nnz}, found {} entries", entries.len()),
            });
        }
        Self::from_entries(shape, entries)
    }
}

fn parse_header(header: &str) -> Result<(usize, Vec<usize>, usize)> {
    let bad = |message: String| Error::Parse { line: 1, message };
    let mut parts = header.split_whitespace();
    if parts.next() != Some("mrtensor") || parts.next() != Some("v1") {
        return Err(bad(format!(
            "expected `mrtensor v1` header, got `{header}`"
        )));
    }
    let mut modes = None;
    let mut shape = None;
    let mut nnz = None;
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header field `{part}`")))?;
        match key {
            "modes" => modes = value.parse().ok(),
            "shape" => {
                shape = value
                    .split(',')
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .ok()
            }
            "nnz" => nnz = value.parse().ok(),
            _ => return Err(bad(format!("unknown header field `{key}`"))),
        }
    }
    match (modes, shape, nnz) {
        (Some(m), Some(s), Some(n)) => Ok((m, s, n)),
        _ => Err(bad("header needs modes=, shape= and nnz=".into())),
    }
}

/// Entry ids bucketed by mode value, for every mode.
#[derive(Debug, Clone)]
pub struct ModeSlices {
    buckets: Vec<Vec<Vec<usize>>>,
}

impl ModeSlices {
    pub fn new(tensor: &SparseCountTensor) -> Self {
        let buckets = tensor
            .shape()
            .iter()
            .enumerate()
            .map(|(mode, &size)| {
                let mut b = vec![Vec::new(); size];
                for j in 0..tensor.nnz() {
                    b[tensor.index(j)[mode] as usize].push(j);
                }
                b
            })
            .collect();
        Self { buckets }
    }

    /// Entries with index `value` on `mode` (0-based).
    pub fn slice(&self, mode: usize, value: usize) -> &[usize] {
        &self.buckets[mode][value]
    }

    pub fn replicate(&self, n: usize) -> &[usize] {
        let last = self.buckets.len() - 1;
        &self.buckets[last][n]
    }
}

/// Rows of a Khatri-Rao design gathered at nonzero cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSubmatrix {
    pub values: Array2<f64>,
    /// Tensor entry id for each row.
    pub row_map: Vec<usize>,
}

impl DesignSubmatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn counts(&self, tensor: &SparseCountTensor) -> Vec<f64> {
        self.row_map
            .iter()
            .map(|&j| tensor.count(j) as f64)
            .collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut values = Array2::zeros((self.values.nrows(), cols.len()));
        for (c_new, &c) in cols.iter().enumerate() {
            values.column_mut(c_new).assign(&self.values.column(c));
        }
        Self {
            values,
            row_map: self.row_map.clone(),
        }
    }
}

fn check_factors(tensor: &SparseCountTensor, factors: &[Array2<f64>], width: usize) -> Result<()> {
    let p = tensor.n_factor_modes();
    if factors.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} factor matrices for {p} factor modes",
            factors.len()
        )));
    }
    for (q, f) in factors.iter().enumerate() {
        if f.nrows() != tensor.shape()[q] || f.ncols() != width {
            return Err(Error::DimensionMismatch(format!(
                "factor {} is {}x{}, expected {}x{width}",
                q + 1,
                f.nrows(),
                f.ncols(),
                tensor.shape()[q]
            )));
        }
    }
    Ok(())
}

/// `D^[n]`: for every nonzero of replicate `n`, the Hadamard product of the
/// factor rows it indexes, right-multiplied by the block weights. `J_n × H`.
pub fn design_for_replicate(
    tensor: &SparseCountTensor,
    slices: &ModeSlices,
    n: usize,
    factors: &[Array2<f64>],
    weights: &BlockWeights,
) -> Result<DesignSubmatrix> {
    check_factors(tensor, factors, weights.n_components())?;
    if n >= tensor.n_replicates() {
        return Err(Error::OutOfRange {
            what: "replicate",
            detail: format!("{} of {}", n + 1, tensor.n_replicates()),
        });
    }
    let rows = slices.replicate(n);
    let h_count = weights.n_terms();
    let mut values = Array2::zeros((rows.len(), h_count));
    for (row, &j) in rows.iter().enumerate() {
        let idx = tensor.index(j);
        for h in 0..h_count {
            let mut acc = 0.0;
            for r in weights.block_range(h) {
                let mut prod = weights.values()[r];
                for (q, f) in factors.iter().enumerate() {
                    prod *= f[[idx[q] as usize, r]];
                }
                acc += prod;
            }
            values[[row, h]] = acc;
        }
    }
    Ok(DesignSubmatrix {
        values,
        row_map: rows.to_vec(),
    })
}

/// `B^(p)_m`: for every nonzero with index `m` on factor mode `p`, the
/// Hadamard product of the other modes' factor rows and the row of `psi`
/// (`N × R`) for its replicate. `J_m × R`. `factors[p]` is not read.
pub fn design_for_mode_slice(
    tensor: &SparseCountTensor,
    slices: &ModeSlices,
    p: usize,
    m: usize,
    factors: &[Array2<f64>],
    psi: ArrayView2<f64>,
) -> Result<DesignSubmatrix> {
    let r_count = psi.ncols();
    check_factors(tensor, factors, r_count)?;
    if p >= tensor.n_factor_modes() || m >= tensor.shape()[p] {
        return Err(Error::OutOfRange {
            what: "mode slice",
            detail: format!("mode {} value {}", p + 1, m + 1),
        });
    }
    if psi.nrows() != tensor.n_replicates() {
        return Err(Error::DimensionMismatch(format!(
            "psi has {} rows for {} replicates",
            psi.nrows(),
            tensor.n_replicates()
        )));
    }
    let rows = slices.slice(p, m);
    let mut values = Array2::zeros((rows.len(), r_count));
    for (row, &j) in rows.iter().enumerate() {
        let idx = tensor.index(j);
        let n = tensor.replicate_of(j);
        for r in 0..r_count {
            let mut prod = psi[[n, r]];
            for (q, f) in factors.iter().enumerate() {
                if q != p {
                    prod *= f[[idx[q] as usize, r]];
                }
            }
            values[[row, r]] = prod;
        }
    }
    Ok(DesignSubmatrix {
        values,
        row_map: rows.to_vec(),
    })
}

/// Dense row-major tensor; the last index varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let cells: u128 = shape.iter().map(|&d| d as u128).product();
        if cells > DENSE_CELL_LIMIT {
            return Err(Error::SizeGuard {
                cells,
                limit: DENSE_CELL_LIMIT,
            });
        }
        Ok(Self {
            data: vec![0.0; cells as usize],
            shape,
        })
    }

    pub fn from_sparse(tensor: &SparseCountTensor) -> Result<Self> {
        let mut dense = Self::zeros(tensor.shape().to_vec())?;
        for (idx, count) in tensor.iter() {
            let off = dense.offset(idx.iter().map(|&i| i as usize));
            dense.data[off] = count as f64;
        }
        Ok(dense)
    }

    pub fn offset<I: IntoIterator<Item = usize>>(&self, idx: I) -> usize {
        idx.into_iter()
            .zip(&self.shape)
            .fold(0, |acc, (i, &d)| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx.iter().copied())]
    }
}

/// Full intensity tensor `Λ` (factor modes then replicate), built from
/// per-component Kronecker products of the factor columns.
pub fn dense_reconstruct(model: &CpBtdModel) -> Result<DenseTensor> {
    let mut shape = model.mode_sizes().to_vec();
    shape.push(model.n_replicates());
    let mut out = DenseTensor::zeros(shape)?;
    let n_count = model.n_replicates();
    let weights = model.weights();
    for r in 0..weights.n_components() {
        let h = weights.term_of(r);
        let mut kron = vec![1.0];
        for f in model.factors() {
            let col = f.column(r);
            kron = kron
                .iter()
                .flat_map(|&a| col.iter().map(move |&b| a * b))
                .collect();
        }
        let w = weights.values()[r];
        for (cell, &v) in kron.iter().enumerate() {
            for n in 0..n_count {
                out.data[cell * n_count + n] += w * model.scores()[[h, n]] * v;
            }
        }
    }
    Ok(out)
}
