//! Downstream analysis: Bray-Curtis dissimilarities between teams, motif
//! ranking and matching, synthetic data from a known model, and export of
//! motif renderings.

mod dissim;
mod motifs;
mod render;
mod simulate;

pub use dissim::{bray_curtis, dissimilarity_matrix, DissimilarityMatrix};
pub use motifs::{cosine_similarity, match_motifs, rank_motifs, MotifMatch, RankedMotif};
pub use render::{matrix_csv, motif_svg, SvgOptions, SVG_HEIGHT, SVG_WIDTH};
pub use simulate::{simulate, simulate_direct};
