//! Static SVG figure emitters: sequence index plots, dendrograms, network
//! plots, and HMM transition graphs.
//!
//! Everything is plain string assembly with fixed 2-decimal coordinates and
//! colors assigned by alphabet order, so output is byte-stable across runs.

use std::fmt::Write as _;

use crate::clustering::{Dendrogram, Partition};
use crate::ena::EnaModel;
use crate::hmm::HmmModel;
use crate::scheme::{CodingScheme, MultichannelSequence};

/// Fixed color wheel; code `i` (flattened scheme order) gets `PALETTE[i % 20]`.
const PALETTE: [&str; 20] = [
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6",
    "#bcf60c", "#fabebe", "#008080", "#e6beff", "#9a6324", "#fffac8", "#800000", "#aaffc3",
    "#808000", "#ffd8b1", "#000075", "#808080",
];

pub fn code_color(code_index: usize) -> &'static str {
    PALETTE[code_index % PALETTE.len()]
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.2}\" height=\"{height:.2}\" \
         viewBox=\"0 0 {width:.2} {height:.2}\" font-family=\"sans-serif\">\n"
    );
}

fn rect(out: &mut String, x: f64, y: f64, w: f64, h: f64, fill: &str) {
    let _ = write!(
        out,
        "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>\n"
    );
}

fn line(out: &mut String, x1: f64, y1: f64, x2: f64, y2: f64, width: f64, stroke: &str) {
    let _ = write!(
        out,
        "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" \
         stroke=\"{stroke}\" stroke-width=\"{width:.2}\"/>\n"
    );
}

fn text(out: &mut String, x: f64, y: f64, size: f64, content: &str) {
    let _ = write!(
        out,
        "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size:.2}\">{}</text>\n",
        escape(content)
    );
}

fn circle(out: &mut String, cx: f64, cy: f64, r: f64, fill: &str, stroke: &str) {
    let _ = write!(
        out,
        "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"{fill}\" stroke=\"{stroke}\"/>\n"
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

// ---------------------------------------------------------------------------
// sequence index plot
// ---------------------------------------------------------------------------

const CELL_W: f64 = 6.0;
const ROW_H: f64 = 10.0;
const PANEL_GAP: f64 = 18.0;
const MARGIN: f64 = 10.0;
const LABEL_W: f64 = 90.0;

/// Per cluster, one panel per channel: one colored row per sequence along
/// the time axis, blank cells where no code was generated.
pub fn sequence_index_plot(
    seqs: &[MultichannelSequence],
    partition: &Partition,
    scheme: &CodingScheme,
) -> String {
    let max_len = seqs.iter().map(MultichannelSequence::len).max().unwrap_or(0);
    let legend_h = 16.0;
    let mut panels = 0usize;
    let mut rows = 0usize;
    for cluster in 1..=partition.k {
        let members = partition.members(cluster).len();
        if members == 0 {
            continue;
        }
        panels += scheme.n_channels();
        rows += members * scheme.n_channels();
    }
    let legend_w: f64 = scheme
        .channels()
        .iter()
        .flat_map(|ch| ch.codes.iter())
        .map(|code| 12.0 + 6.0 * code.len() as f64)
        .sum();
    let width = (MARGIN * 2.0 + LABEL_W + max_len as f64 * CELL_W)
        .max(MARGIN * 2.0 + legend_w)
        .max(320.0);
    let height =
        MARGIN * 2.0 + legend_h + rows as f64 * ROW_H + panels as f64 * PANEL_GAP;

    let mut out = String::new();
    svg_open(&mut out, width, height);
    rect(&mut out, 0.0, 0.0, width, height, "#ffffff");

    // legend: every code in alphabet order
    let mut lx = MARGIN;
    let mut code_index = 0usize;
    for ch in scheme.channels() {
        for code in &ch.codes {
            rect(&mut out, lx, MARGIN, 8.0, 8.0, code_color(code_index));
            text(&mut out, lx + 10.0, MARGIN + 8.0, 8.0, code);
            lx += 12.0 + 6.0 * code.len() as f64;
            code_index += 1;
        }
    }

    let mut y = MARGIN + legend_h;
    for cluster in 1..=partition.k {
        let members = partition.members(cluster);
        if members.is_empty() {
            continue;
        }
        let mut code_offset = 0usize;
        for (ci, channel) in scheme.channels().iter().enumerate() {
            y += PANEL_GAP;
            text(
                &mut out,
                MARGIN,
                y - 5.0,
                9.0,
                &format!("cluster {cluster} - {}", channel.name),
            );
            for label in &members {
                // partition labels without a matching sequence are skipped
                let Some(seq) = seqs.iter().find(|s| s.session_id == **label) else {
                    continue;
                };
                text(&mut out, MARGIN, y + ROW_H - 2.0, 7.0, label);
                for t in 0..seq.len() {
                    if let Some(k) = seq.state(ci, t) {
                        rect(
                            &mut out,
                            MARGIN + LABEL_W + t as f64 * CELL_W,
                            y,
                            CELL_W,
                            ROW_H - 1.0,
                            code_color(code_offset + k as usize),
                        );
                    }
                }
                y += ROW_H;
            }
            code_offset += channel.codes.len();
        }
    }
    out.push_str("</svg>\n");
    out
}

// ---------------------------------------------------------------------------
// dendrogram
// ---------------------------------------------------------------------------

/// Stepwise dendrogram with leaves along the x axis and merge height on y.
pub fn dendrogram_svg(dend: &Dendrogram) -> String {
    let n = dend.n_leaves();
    let width = 2.0 * MARGIN + (n as f64) * 40.0;
    let plot_h = 300.0;
    let label_h = 70.0;
    let height = 2.0 * MARGIN + plot_h + label_h;
    let max_h = dend.merges.last().map_or(1.0, |m| m.height.max(1e-12));

    // leaf order: left-to-right walk of the merge tree
    let order = leaf_order(dend);
    let mut leaf_x = vec![0.0; n];
    for (slot, &leaf) in order.iter().enumerate() {
        leaf_x[leaf] = MARGIN + 20.0 + slot as f64 * 40.0;
    }
    let y_of = |h: f64| MARGIN + plot_h - (h / max_h) * plot_h;

    let mut out = String::new();
    svg_open(&mut out, width, height);
    rect(&mut out, 0.0, 0.0, width, height, "#ffffff");

    // node -> (x, height)
    let mut pos: Vec<(f64, f64)> = (0..n).map(|i| (leaf_x[i], 0.0)).collect();
    for m in &dend.merges {
        let (xl, hl) = pos[m.left];
        let (xr, hr) = pos[m.right];
        let y = y_of(m.height);
        line(&mut out, xl, y_of(hl), xl, y, 1.0, "#333333");
        line(&mut out, xr, y_of(hr), xr, y, 1.0, "#333333");
        line(&mut out, xl, y, xr, y, 1.0, "#333333");
        pos.push(((xl + xr) / 2.0, m.height));
    }
    for (leaf, &x) in leaf_x.iter().enumerate() {
        let _ = write!(
            out,
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"8.00\" \
             transform=\"rotate(60 {x:.2} {:.2})\">{}</text>\n",
            MARGIN + plot_h + 12.0,
            MARGIN + plot_h + 12.0,
            escape(&dend.labels[leaf])
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Left-to-right leaf order of the merge tree.
fn leaf_order(dend: &Dendrogram) -> Vec<usize> {
    let n = dend.n_leaves();
    if n == 0 {
        return Vec::new();
    }
    if dend.merges.is_empty() {
        return (0..n).collect();
    }
    fn walk(node: usize, n: usize, dend: &Dendrogram, out: &mut Vec<usize>) {
        if node < n {
            out.push(node);
        } else {
            let m = &dend.merges[node - n];
            walk(m.left, n, dend, out);
            walk(m.right, n, dend, out);
        }
    }
    let mut out = Vec::with_capacity(n);
    walk(n + dend.merges.len() - 1, n, dend, &mut out);
    out
}

// ---------------------------------------------------------------------------
// ena network
// ---------------------------------------------------------------------------

/// One cluster's network: nodes at code loading positions, edge thickness
/// proportional to the mean connection weight, centroid marked.
pub fn ena_network_svg(model: &EnaModel, cluster: usize, threshold: f64) -> String {
    let size = 420.0;
    let mut out = String::new();
    svg_open(&mut out, size, size);
    rect(&mut out, 0.0, 0.0, size, size, "#ffffff");

    // code loading positions: sum of direction loadings over incident pairs
    let n_codes = model.codes.len();
    let mut px = vec![0.0f64; n_codes];
    let mut py = vec![0.0f64; n_codes];
    for (pi, &(a, b)) in model.pairs.iter().enumerate() {
        px[a] += model.directions[0][pi];
        py[a] += model.directions[1][pi];
        px[b] += model.directions[0][pi];
        py[b] += model.directions[1][pi];
    }
    let scale = px
        .iter()
        .chain(py.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-9);
    let to_xy = |x: f64, y: f64| {
        (
            size / 2.0 + x / scale * (size / 2.0 - 40.0),
            size / 2.0 - y / scale * (size / 2.0 - 40.0),
        )
    };

    if let Some(edge) = model.edges.get(&cluster) {
        for (pi, &(a, b)) in model.pairs.iter().enumerate() {
            let w = edge[pi];
            if w > threshold {
                let (x1, y1) = to_xy(px[a], py[a]);
                let (x2, y2) = to_xy(px[b], py[b]);
                line(&mut out, x1, y1, x2, y2, (w * 8.0).max(0.4), "#7799bb");
            }
        }
    }
    for (c, code) in model.codes.iter().enumerate() {
        let (x, y) = to_xy(px[c], py[c]);
        circle(&mut out, x, y, 3.0, code_color(c), "#333333");
        text(&mut out, x + 4.0, y - 3.0, 8.0, code);
    }
    if let Some(centroid) = model.centroids.get(&cluster) {
        let (x, y) = to_xy(centroid[0], centroid[1]);
        circle(&mut out, x, y, 5.0, "#cc0000", "#660000");
        text(&mut out, x + 6.0, y + 3.0, 8.0, &format!("centroid {cluster}"));
    }
    out.push_str("</svg>\n");
    out
}

// ---------------------------------------------------------------------------
// hmm transition graph
// ---------------------------------------------------------------------------

/// Directed transition graph with per-state emission bars. Transitions and
/// emission probabilities below 0.05 are not drawn.
pub fn hmm_graph_svg(model: &HmmModel, scheme: &CodingScheme) -> String {
    let s = model.n_states();
    let size = 460.0;
    let cx = size / 2.0;
    let cy = size / 2.0 - 20.0;
    let radius = size / 2.0 - 90.0;
    let mut out = String::new();
    svg_open(&mut out, size, size + 40.0);
    rect(&mut out, 0.0, 0.0, size, size + 40.0, "#ffffff");

    let pos = |i: usize| {
        let angle = std::f64::consts::TAU * i as f64 / s as f64 - std::f64::consts::FRAC_PI_2;
        (cx + radius * angle.cos(), cy + radius * angle.sin())
    };

    for x in 0..s {
        for y in 0..s {
            let p = model.transition[x][y];
            if p <= 0.05 || x == y {
                continue;
            }
            let (x1, y1) = pos(x);
            let (x2, y2) = pos(y);
            // shorten toward the target so the arrowhead is visible
            let dx = x2 - x1;
            let dy = y2 - y1;
            let len = (dx * dx + dy * dy).sqrt().max(1e-9);
            let (ex, ey) = (x2 - dx / len * 26.0, y2 - dy / len * 26.0);
            line(&mut out, x1, y1, ex, ey, p * 5.0, "#555555");
            circle(&mut out, ex, ey, 2.0, "#555555", "#555555");
        }
    }

    let flat_codes = scheme.all_codes();
    for x in 0..s {
        let (nx, ny) = pos(x);
        circle(&mut out, nx, ny, 22.0, "#f2f2f2", "#333333");
        // self-loop probability shown as the ring label
        text(&mut out, nx - 16.0, ny - 2.0, 8.0, &format!("S{}", x + 1));
        text(
            &mut out,
            nx - 16.0,
            ny + 8.0,
            7.0,
            &format!("self {:.2}", model.transition[x][x]),
        );

        // emission bars under each state: flattened channel alphabets
        let mut bx = nx - 20.0;
        let by = ny + 26.0;
        let mut flat_idx = 0usize;
        for table in model.emission.iter() {
            for (k, _) in table[x].iter().enumerate() {
                let p = table[x][k];
                if p > 0.05 {
                    rect(&mut out, bx, by, 3.0, p * 18.0, code_color(flat_idx));
                    bx += 3.5;
                }
                flat_idx += 1;
            }
        }
        let _ = flat_codes;
    }

    // legend along the bottom
    let mut lx = MARGIN;
    for (i, code) in flat_codes.iter().enumerate() {
        rect(&mut out, lx, size + 14.0, 7.0, 7.0, code_color(i));
        text(&mut out, lx + 9.0, size + 21.0, 7.0, code);
        lx += 11.0 + 5.5 * code.len() as f64;
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{ward_cluster, WardVariant};
    use crate::scheme::{build_sequences, CodedEvent, ConflictPolicy, Modality};
    use crate::seqdist::DistanceMatrix;

    fn ev(sid: &str, unit: u64, codes: &[&str]) -> CodedEvent {
        CodedEvent {
            session_id: sid.into(),
            unit_index: unit,
            actor_id: "a".into(),
            modality: Modality::Verbal,
            codes: codes.iter().map(|c| c.to_string()).collect(),
        }
    }

    #[test]
    fn single_sequence_plot_has_five_channel_rows() {
        let scheme = CodingScheme::default_scheme();
        let events = vec![ev("s1", 0, &["Int-C"]), ev("s1", 1, &["CM"]), ev("s1", 2, &["KS"])];
        let seqs = build_sequences(&events, &scheme, ConflictPolicy::Error).unwrap();
        let p = Partition::new(vec!["s1".into()], vec![1]).unwrap();
        let svg = sequence_index_plot(&seqs, &p, &scheme);
        assert_eq!(svg.matches("cluster 1 - ").count(), 5);
        // three colored cells for three coded positions
        assert_eq!(svg.matches("#e6194b").count(), 1 + 1); // legend + Int-C cell
    }

    #[test]
    fn all_missing_sequence_renders_blank_rows() {
        let scheme = CodingScheme::default_scheme();
        let events = vec![ev("s1", 0, &[]), ev("s1", 1, &[])];
        let seqs = build_sequences(&events, &scheme, ConflictPolicy::Error).unwrap();
        let p = Partition::new(vec!["s1".into()], vec![1]).unwrap();
        let svg = sequence_index_plot(&seqs, &p, &scheme);
        // legend swatches only: one rect per code plus the background
        let n_rects = svg.matches("<rect").count();
        assert_eq!(n_rects, 1 + scheme.n_codes());
    }

    #[test]
    fn plot_is_deterministic() {
        let scheme = CodingScheme::default_scheme();
        let events = vec![ev("s1", 0, &["Int-C", "KS"]), ev("s1", 1, &["CM"])];
        let seqs = build_sequences(&events, &scheme, ConflictPolicy::Error).unwrap();
        let p = Partition::new(vec!["s1".into()], vec![1]).unwrap();
        assert_eq!(
            sequence_index_plot(&seqs, &p, &scheme),
            sequence_index_plot(&seqs, &p, &scheme)
        );
    }

    #[test]
    fn dendrogram_svg_wellformed() {
        let d = DistanceMatrix::from_values(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.0, 1.0, 9.0, 1.0, 0.0, 8.0, 9.0, 8.0, 0.0],
        )
        .unwrap();
        let dend = ward_cluster(&d, WardVariant::WardD2).unwrap();
        let svg = dendrogram_svg(&dend);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains(">a<") && svg.contains(">b<") && svg.contains(">c<"));
    }

    #[test]
    fn ena_and_hmm_svgs_render() {
        let scheme = CodingScheme::default_scheme();
        let events = vec![
            ev("s1", 0, &["Int-C"]),
            ev("s1", 1, &["CM"]),
            ev("s2", 0, &["Int-B"]),
            ev("s2", 1, &["OB"]),
        ];
        let seqs = build_sequences(&events, &scheme, ConflictPolicy::Error).unwrap();
        let p = Partition::new(vec!["s1".into(), "s2".into()], vec![1, 2]).unwrap();
        let model = crate::ena::fit_ena(&seqs, &p, &scheme, 4).unwrap();
        let svg = ena_network_svg(&model, 1, 0.0);
        assert!(svg.contains("centroid 1"));

        let hmm = crate::hmm::HmmModel {
            initial: vec![0.5, 0.5],
            transition: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            emission: scheme
                .channels()
                .iter()
                .map(|ch| {
                    let m = ch.codes.len();
                    (0..2).map(|_| vec![1.0 / m as f64; m]).collect()
                })
                .collect(),
        };
        let svg = hmm_graph_svg(&hmm, &scheme);
        assert!(svg.contains("S1") && svg.contains("S2"));
    }
}
