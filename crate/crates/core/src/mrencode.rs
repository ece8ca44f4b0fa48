//! Dyadic multiresolution encoding.
//!
//! Each axis of the unit square is split into `2^S` intervals; a tile index
//! is written as an `S`-bit code, coarsest bit first. At every scale the x and
//! y bits of the origin fold into one code in `{1,2,3,4}` (x contributes the
//! low bit), likewise for the destination, giving a tensor with modes
//! `(i_1^o, i_1^d, …, i_S^o, i_S^d, n)`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ingest::EventTable;
use crate::sptensor::SparseCountTensor;

/// Largest supported scale count.
pub const MAX_SCALES: usize = 16;

/// Physical location modes of a pass: `x_o, y_o, x_d, y_d`.
pub const PHYSICAL_MODES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCode {
    bits: Vec<u8>,
}

impl BinaryCode {
    /// Bits, coarsest scale first.
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn scale_count(&self) -> usize {
        self.bits.len()
    }

    pub fn decode(&self) -> usize {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }
}

/// `S`-bit code of `i` with `i = Σ_s bits[s]·2^(S−s)`.
pub fn binary_code(i: usize, scales: usize) -> Result<BinaryCode> {
    check_scales(scales)?;
    if i >= 1 << scales {
        return Err(Error::OutOfRange {
            what: "tile index",
            detail: format!("{i} not below 2^{scales}"),
        });
    }
    let bits = (0..scales)
        .map(|s| ((i >> (scales - 1 - s)) & 1) as u8)
        .collect();
    Ok(BinaryCode { bits })
}

fn check_scales(scales: usize) -> Result<()> {
    if scales == 0 || scales > MAX_SCALES {
        return Err(Error::OutOfRange {
            what: "scale count",
            detail: format!("{scales} not in 1..={MAX_SCALES}"),
        });
    }
    Ok(())
}

/// `K × S` bit table of an event; row `k` is the code of physical mode `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMatrix {
    rows: [BinaryCode; PHYSICAL_MODES],
}

impl IndexMatrix {
    pub fn scale_count(&self) -> usize {
        self.rows[0].scale_count()
    }

    /// `b_{s,k}` with 0-based `k` and `s`.
    pub fn bit(&self, k: usize, s: usize) -> u8 {
        self.rows[k].bits[s]
    }

    /// Column `b_{s,1:K}`.
    pub fn column(&self, s: usize) -> [u8; PHYSICAL_MODES] {
        std::array::from_fn(|k| self.rows[k].bits[s])
    }

    pub fn row(&self, k: usize) -> &BinaryCode {
        &self.rows[k]
    }
}

pub fn encode_event(tiles: [usize; PHYSICAL_MODES], scales: usize) -> Result<IndexMatrix> {
    let rows = [
        binary_code(tiles[0], scales)?,
        binary_code(tiles[1], scales)?,
        binary_code(tiles[2], scales)?,
        binary_code(tiles[3], scales)?,
    ];
    Ok(IndexMatrix { rows })
}

/// Per-scale origin/destination pair codes in `{1,2,3,4}` plus a 1-based
/// replicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndex {
    pub pairs: Vec<(u8, u8)>,
    pub replicate: usize,
}

impl MultiIndex {
    /// 0-based tensor index `(i_1^o, i_1^d, …, i_S^o, i_S^d, n)`.
    pub fn tensor_index(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .pairs
            .iter()
            .flat_map(|&(o, d)| [o as usize - 1, d as usize - 1])
            .collect();
        idx.push(self.replicate - 1);
        idx
    }
}

/// Folds bit pairs with `i^o_s = b̃_{s,1} + 2(b̃_{s,2} − 1)` where `b̃ = b + 1`.
pub fn fold_to_multiindex(bits: &IndexMatrix, replicate: usize) -> MultiIndex {
    let pairs = (0..bits.scale_count())
        .map(|s| {
            let c = bits.column(s);
            let shifted = c.map(|b| b + 1);
            (
                shifted[0] + 2 * (shifted[1] - 1),
                shifted[2] + 2 * (shifted[3] - 1),
            )
        })
        .collect();
    MultiIndex { pairs, replicate }
}

/// Tile of a standardized coordinate at `2^scales` resolution.
pub fn tile_of(coord: f64, scales: usize) -> usize {
    let side = 1usize << scales;
    ((coord * side as f64).floor().max(0.0) as usize).min(side - 1)
}

fn event_index(coords: [f64; 4], replicate: usize, scales: usize) -> Vec<usize> {
    // Equivalent to encode_event + fold_to_multiindex, without allocation per bit row.
    let tiles = coords.map(|c| tile_of(c, scales));
    let mut idx = Vec::with_capacity(2 * scales + 1);
    for s in 0..scales {
        let bit = |t: usize| (t >> (scales - 1 - s)) & 1;
        idx.push(bit(tiles[0]) + 2 * bit(tiles[1]));
        idx.push(bit(tiles[2]) + 2 * bit(tiles[3]));
    }
    idx.push(replicate);
    idx
}

/// Multiresolution adjacency tensor of shape `4^(2S) × N`.
pub fn build_tensor(table: &EventTable, scales: usize) -> Result<SparseCountTensor> {
    check_scales(scales)?;
    let n = table.replicates().len();
    if n == 0 {
        return Err(Error::Validation("event table has no replicates".into()));
    }
    let mut shape = vec![4; 2 * scales];
    shape.push(n);
    SparseCountTensor::from_entries(
        shape,
        table
            .events()
            .iter()
            .map(|ev| (event_index(ev.coordinates(), ev.replicate, scales), 1u64)),
    )
}

/// Number of scales encoded by a multiresolution tensor.
pub fn scales_of(tensor: &SparseCountTensor) -> Result<usize> {
    let p = tensor.n_factor_modes();
    if p == 0 || !p.is_multiple_of(2) || tensor.shape()[..p].iter().any(|&d| d != 4) {
        return Err(Error::Validation(format!(
            "shape {:?} is not a multiresolution adjacency tensor",
            tensor.shape()
        )));
    }
    Ok(p / 2)
}

fn check_scale(tensor: &SparseCountTensor, s: usize) -> Result<usize> {
    let scales = scales_of(tensor)?;
    if s == 0 || s > scales {
        return Err(Error::OutOfRange {
            what: "scale",
            detail: format!("{s} not in 1..={scales}"),
        });
    }
    Ok(scales)
}

/// Sums out the modes of scales finer than `s`.
pub fn marginalize_to_scale(tensor: &SparseCountTensor, s: usize) -> Result<SparseCountTensor> {
    check_scale(tensor, s)?;
    let mut keep: Vec<usize> = (0..2 * s).collect();
    keep.push(tensor.ndims() - 1);
    tensor.sum_out_modes(&keep)
}

/// `v_s = i_s + 4(v_{s−1} − 1)` over 1-based per-scale codes; 1-based result.
pub fn recursive_node_index(codes: &[usize]) -> usize {
    codes.iter().fold(1, |v, &i| i + 4 * (v - 1))
}

/// Tile `(x, y)` at resolution `2^s` of a 0-based scale-`s` node index.
pub fn node_tile(node: usize, s: usize) -> (usize, usize) {
    let (mut x, mut y) = (0, 0);
    for level in 0..s {
        let digit = (node >> (2 * (s - 1 - level))) & 3;
        x = (x << 1) | (digit & 1);
        y = (y << 1) | (digit >> 1);
    }
    (x, y)
}

/// Dense `4^s × 4^s` origin-destination counts of replicate `n` (0-based).
pub fn adjacency_at_scale(tensor: &SparseCountTensor, n: usize, s: usize) -> Result<Array2<f64>> {
    check_scale(tensor, s)?;
    if n >= tensor.n_replicates() {
        return Err(Error::OutOfRange {
            what: "replicate",
            detail: format!("{} of {}", n + 1, tensor.n_replicates()),
        });
    }
    let side = 1usize << (2 * s);
    let mut adj = Array2::zeros((side, side));
    for (idx, count) in tensor.iter() {
        if idx[idx.len() - 1] as usize != n {
            continue;
        }
        let (mut vo, mut vd) = (0usize, 0usize);
        for level in 0..s {
            vo = 4 * vo + idx[2 * level] as usize;
            vd = 4 * vd + idx[2 * level + 1] as usize;
        }
        adj[[vo, vd]] += count as f64;
    }
    Ok(adj)
}
