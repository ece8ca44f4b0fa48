use std::fmt::Write as _;

use ndarray::Array2;

use crate::mrencode::node_tile;

pub const SVG_WIDTH: f64 = 1150.0;
pub const SVG_HEIGHT: f64 = 740.0;
const MARGIN: f64 = 25.0;

/// Plain numeric CSV, one matrix row per line.
pub fn matrix_csv(m: &Array2<f64>) -> String {
    let mut s = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvgOptions {
    pub top_k: usize,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self { top_k: 20 }
    }
}

fn tile_center(node: usize, s: usize) -> (f64, f64) {
    let side = (1usize << s) as f64;
    let (x, y) = node_tile(node, s);
    let w = SVG_WIDTH - 2.0 * MARGIN;
    let h = SVG_HEIGHT - 2.0 * MARGIN;
    // field y grows upward; SVG y grows downward
    (
        MARGIN + (x as f64 + 0.5) / side * w,
        SVG_HEIGHT - MARGIN - (y as f64 + 0.5) / side * h,
    )
}

/// Arrow diagram of a `4^s × 4^s` origin-destination matrix on the pitch.
/// Only the `top_k` heaviest edges are drawn; opacity is weight over the
/// heaviest weight. Every edge element carries `class="edge"`.
pub fn motif_svg(d: &Array2<f64>, s: usize, options: SvgOptions) -> String {
    let mut edges: Vec<(usize, usize, f64)> = d
        .indexed_iter()
        .filter(|(_, &w)| w > 0.0)
        .map(|((o, t), &w)| (o, t, w))
        .collect();
    edges.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    edges.truncate(options.top_k);
    let max = edges.first().map_or(1.0, |e| e.2);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r##"<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="6" markerHeight="6" orient="auto-start-reverse"><path d="M 0 0 L 10 5 L 0 10 z" fill="#b2182b"/></marker></defs>"##
    );
    let (w, h) = (SVG_WIDTH - 2.0 * MARGIN, SVG_HEIGHT - 2.0 * MARGIN);
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{w}" height="{h}" fill="#f4f8f1" stroke="#555" stroke-width="2"/>"##
    );
    let side = 1usize << s;
    for k in 1..side {
        let x = MARGIN + k as f64 / side as f64 * w;
        let y = MARGIN + k as f64 / side as f64 * h;
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{:.2}" stroke="#bbb" stroke-width="1"/>"##,
            MARGIN + h
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#bbb" stroke-width="1"/>"##,
            MARGIN + w
        );
    }
    for (o, t, weight) in edges {
        let opacity = weight / max;
        let (x1, y1) = tile_center(o, s);
        if o == t {
            let _ = writeln!(
                svg,
                r##"<circle class="edge" cx="{x1:.2}" cy="{y1:.2}" r="14" fill="none" stroke="#b2182b" stroke-width="4" stroke-opacity="{opacity:.4}"/>"##
            );
        } else {
            let (x2, y2) = tile_center(t, s);
            let _ = writeln!(
                svg,
                r##"<line class="edge" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#b2182b" stroke-width="4" stroke-opacity="{opacity:.4}" marker-end="url(#arrow)"/>"##
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_rows() {
        assert_eq!(
            matrix_csv(&array![[0.5, 0.0], [1.0, 0.25]]),
            "5e-1,0e0\n1e0,2.5e-1\n"
        );
    }

    #[test]
    fn edges_limited_and_scaled() {
        let mut d = Array2::zeros((4, 4));
        d[[0, 3]] = 0.8;
        d[[1, 1]] = 0.1;
        d[[2, 0]] = 0.1;
        let svg = motif_svg(&d, 1, SvgOptions { top_k: 2 });
        assert_eq!(svg.matches("class=\"edge\"").count(), 2);
        assert!(svg.contains("stroke-opacity=\"1.0000\""));
        assert!(svg.contains("stroke-opacity=\"0.1250\""));
        assert!(svg.contains(r#"viewBox="0 0 1150 740""#));
        let none = motif_svg(&Array2::zeros((4, 4)), 1, SvgOptions::default());
        assert_eq!(none.matches("class=\"edge\"").count(), 0);
    }

    #[test]
    fn tile_centres_follow_field_orientation() {
        // node 0 at scale 1 is the bottom-left tile, node 3 the top-right
        let (x0, y0) = tile_center(0, 1);
        let (x3, y3) = tile_center(3, 1);
        assert!(x0 < x3 && y0 > y3);
    }
}
