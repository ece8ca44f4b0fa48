use crate::error::{Error, Result};
use crate::model::{CpBtdModel, MotifView, DEFAULT_ACTIVITY_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedMotif {
    pub term: usize,
    pub usage: f64,
}

/// Active terms by descending `Υ` row sum; equal sums keep index order.
pub fn rank_motifs(model: &CpBtdModel) -> Vec<RankedMotif> {
    let mut ranked: Vec<RankedMotif> = model
        .term_usage()
        .into_iter()
        .enumerate()
        .filter(|&(h, u)| u > DEFAULT_ACTIVITY_THRESHOLD && model.is_term_active(h))
        .map(|(term, usage)| RankedMotif { term, usage })
        .collect();
    ranked.sort_by(|a, b| b.usage.total_cmp(&a.usage));
    ranked
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// One fitted-to-truth pairing; indices refer to the input slices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotifMatch {
    pub fitted: usize,
    pub truth: usize,
    pub similarity: f64,
}

/// Greedy assignment by cosine similarity of the finest-scale motifs. Returns
/// `min(len)` pairs ordered by truth index.
pub fn match_motifs(fitted: &[MotifView], truth: &[MotifView]) -> Result<Vec<MotifMatch>> {
    let vec_of = |v: &MotifView| v.finest().iter().copied().collect::<Vec<f64>>();
    let f: Vec<Vec<f64>> = fitted.iter().map(vec_of).collect();
    let t: Vec<Vec<f64>> = truth.iter().map(vec_of).collect();
    if let (Some(a), Some(b)) = (f.first(), t.first()) {
        if f.iter().chain(&t).any(|v| v.len() != a.len()) || a.len() != b.len() {
            return Err(Error::DimensionMismatch(
                "motifs rendered at different scales".into(),
            ));
        }
    }
    let mut candidates = Vec::with_capacity(f.len() * t.len());
    for (i, a) in f.iter().enumerate() {
        for (k, b) in t.iter().enumerate() {
            candidates.push(MotifMatch {
                fitted: i,
                truth: k,
                similarity: cosine_similarity(a, b),
            });
        }
    }
    // Highest similarity first; ties go to the lower truth, then fitted index.
    candidates.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.truth.cmp(&b.truth))
            .then(a.fitted.cmp(&b.fitted))
    });
    let mut used_f = vec![false; f.len()];
    let mut used_t = vec![false; t.len()];
    let mut out = Vec::new();
    for c in candidates {
        if !used_f[c.fitted] && !used_t[c.truth] {
            used_f[c.fitted] = true;
            used_t[c.truth] = true;
            out.push(c);
        }
    }
    out.sort_by_key(|m| m.truth);
    Ok(out)
}
