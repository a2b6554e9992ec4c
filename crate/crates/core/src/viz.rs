//! SVG overlays of image graphs.

use std::collections::HashMap;
use std::fmt::Write as _;

use base64::Engine;
use image::ImageEncoder;

use crate::graph::ImageGraph;
use crate::imaging::GrayImage;

/// Per-node highlight scores keyed by node id.
pub type NodeScores = HashMap<usize, f64>;

/// Parses `graph_index,node_id,score` rows, keeping those for `graph_index`.
/// A header row and blank lines are skipped.
pub fn parse_attention_csv(text: &str, graph_index: usize) -> Result<NodeScores, String> {
    let mut scores = NodeScores::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("graph_index") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_err = || format!("line {}: expected graph_index,node_id,score", lineno + 1);
        if cols.len() != 3 {
            return Err(parse_err());
        }
        let g: usize = cols[0].parse().map_err(|_| parse_err())?;
        let node: usize = cols[1].parse().map_err(|_| parse_err())?;
        let score: f64 = cols[2].parse().map_err(|_| parse_err())?;
        if g == graph_index {
            scores.insert(node, score);
        }
    }
    Ok(scores)
}

fn png_data_uri(img: &GrayImage) -> String {
    let mut png = Vec::new();
    image::codecs::png::PngEncoder::new(&mut png)
        .write_image(img.as_slice(), img.width() as u32, img.height() as u32, image::ExtendedColorType::L8)
        .expect("in-memory PNG encoding");
    format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png))
}

/// Renders rectangles, edges and centers in id order. Coordinates are in
/// pixel units: pixel `(x, y)` covers `[x, x+1] x [y, y+1]`.
pub fn render_svg(g: &ImageGraph, background: Option<&GrayImage>, scores: Option<&NodeScores>) -> String {
    let scale = (512 / g.width.max(g.height)).max(1);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        g.width * scale,
        g.height * scale,
        g.width,
        g.height
    );
    match background {
        Some(img) => {
            let _ = writeln!(
                out,
                r#"<image x="0" y="0" width="{}" height="{}" style="image-rendering:pixelated" href="{}"/>"#,
                img.width(),
                img.height(),
                png_data_uri(img)
            );
        }
        None => {
            let _ = writeln!(out, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, g.width, g.height);
        }
    }

    let peak = scores
        .map(|s| s.values().copied().fold(0.0f64, f64::max))
        .filter(|&p| p > 0.0);
    let _ = writeln!(out, r#"<g id="regions" fill="none" stroke="steelblue" stroke-width="0.08">"#);
    for n in &g.nodes {
        let fill = match (scores.and_then(|s| s.get(&n.id)), peak) {
            (Some(&s), Some(p)) => format!(r#" fill="crimson" fill-opacity="{:.4}""#, (s / p).clamp(0.0, 1.0) * 0.6),
            _ => String::new(),
        };
        let _ = writeln!(
            out,
            r#"<rect id="n{}" x="{}" y="{}" width="{}" height="{}"{fill}/>"#,
            n.id,
            n.x0(),
            n.y0(),
            n.width(),
            n.height()
        );
    }
    out.push_str("</g>\n");

    let _ = writeln!(out, r#"<g id="edges" stroke="darkorange" stroke-width="0.05" stroke-opacity="0.7">"#);
    for &(i, j) in &g.edges {
        let (a, b) = (&g.nodes[i], &g.nodes[j]);
        let _ = writeln!(
            out,
            r#"<line x1="{}.5" y1="{}.5" x2="{}.5" y2="{}.5"/>"#,
            a.cx, a.cy, b.cx, b.cy
        );
    }
    out.push_str("</g>\n");

    let _ = writeln!(out, r#"<g id="centers" fill="black">"#);
    for n in &g.nodes {
        let _ = writeln!(out, r#"<circle cx="{}.5" cy="{}.5" r="0.18"/>"#, n.cx, n.cy);
    }
    out.push_str("</g>\n</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::granular::SearchParams;
    use crate::graph::build_graph;

    #[test]
    fn svg_lists_every_element() {
        let img = GrayImage::from_fn(10, 10, |x, _| if x < 5 { 0 } else { 200 }).unwrap();
        let g = build_graph(&img, &SearchParams::default()).unwrap();
        let svg = render_svg(&g, Some(&img), None);
        assert_eq!(svg.matches("<rect id=").count(), g.node_count());
        assert_eq!(svg.matches("<line ").count(), g.edge_count());
        assert_eq!(svg.matches("<circle ").count(), g.node_count());
        assert!(svg.contains("data:image/png;base64,"));
        assert_eq!(svg, render_svg(&g, Some(&img), None));
    }

    #[test]
    fn attention_rows() {
        let csv = "graph_index,node_id,score\n0,1,0.5\n0,2,0.25\n1,0,1.0\n";
        let s = parse_attention_csv(csv, 0).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[&1], 0.5);
        assert!(parse_attention_csv("0,1", 0).is_err());
    }
}
