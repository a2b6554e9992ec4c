//! Geometric and sampling operations applied directly to image graphs.
//!
//! None of these touch pixels. Rotations and flips move node centers,
//! downsampling merges neighbors, upsampling adds sub-rectangles of existing
//! nodes, and subgraph extraction crops and re-bases a region. Every
//! operation returns a new graph; when the input carries features they are
//! recomputed for the output.

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::granular::GranularRect;
use crate::graph::{rect_overlap, ImageGraph};

#[derive(Debug, Error, PartialEq)]
pub enum OpsError {
    #[error("cannot merge {steps} times in a graph with {nodes} nodes")]
    TooManyMerges { steps: usize, nodes: usize },
    #[error("no edge left to merge after {done} of {steps} steps")]
    NoMergeCandidate { done: usize, steps: usize },
    #[error("region ({x0},{y0})-({x1},{y1}) is not inside the {width}x{height} canvas")]
    RegionOutOfCanvas {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        width: usize,
        height: usize,
    },
    #[error("cannot upsample an empty graph")]
    EmptyGraph,
}

/// How flips map a coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlipConvention {
    /// `y -> (h - 1) - y`, keeps 0-indexed pixel centers on the grid.
    #[default]
    PixelGrid,
    /// `y -> h - y` literally; nodes mapped off the canvas are dropped.
    Raw,
}

/// One operation over a whole graph.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformSpec {
    Rotate { degrees: f64, center: (f64, f64) },
    FlipVertical,
    FlipHorizontal,
    Upsample { count: usize, seed: u64 },
    Downsample { steps: usize },
    Subgraph { x0: usize, y0: usize, x1: usize, y1: usize },
}

pub fn apply(g: &ImageGraph, spec: &TransformSpec) -> Result<ImageGraph, OpsError> {
    match *spec {
        TransformSpec::Rotate { degrees, center } => Ok(rotate(g, degrees, center)),
        TransformSpec::FlipVertical => Ok(flip_vertical(g)),
        TransformSpec::FlipHorizontal => Ok(flip_horizontal(g)),
        TransformSpec::Upsample { count, seed } => upsample(g, count, seed),
        TransformSpec::Downsample { steps } => downsample(g, steps),
        TransformSpec::Subgraph { x0, y0, x1, y1 } => extract_subgraph(g, (x0, y0, x1, y1)),
    }
}

/// Canvas center `((w-1)/2, (h-1)/2)` in pixel coordinates.
pub fn canvas_center(g: &ImageGraph) -> (f64, f64) {
    ((g.width as f64 - 1.0) / 2.0, (g.height as f64 - 1.0) / 2.0)
}

/// Builds the output graph from per-node placements; `None` drops a node
/// along with its edges, and survivors are renumbered in order.
fn relocate(g: &ImageGraph, width: usize, height: usize, placed: Vec<Option<GranularRect>>) -> ImageGraph {
    let mut remap = vec![usize::MAX; placed.len()];
    let mut nodes = Vec::with_capacity(placed.len());
    for (old, rect) in placed.into_iter().enumerate() {
        if let Some(rect) = rect {
            remap[old] = nodes.len();
            nodes.push(GranularRect { id: nodes.len(), ..rect });
        }
    }
    let edges = g
        .edges
        .iter()
        .filter_map(|&(i, j)| {
            let (a, b) = (remap[i], remap[j]);
            (a != usize::MAX && b != usize::MAX).then(|| (a.min(b), a.max(b)))
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    finish(g, width, height, nodes, edges)
}

fn finish(g: &ImageGraph, width: usize, height: usize, nodes: Vec<GranularRect>, edges: Vec<(usize, usize)>) -> ImageGraph {
    let mut out = ImageGraph {
        width,
        height,
        nodes,
        edges,
        features: None,
    };
    if g.features.is_some() {
        out.refresh_features();
    }
    out
}

/// Places a rounded center on the canvas, shrinking half-extents so the
/// rectangle stays inside. Returns `None` when the center is off-canvas.
fn place(rect: &GranularRect, x: f64, y: f64, rx: usize, ry: usize, width: usize, height: usize) -> Option<GranularRect> {
    let (x, y) = (x.round(), y.round());
    if x < 0.0 || y < 0.0 || x > (width - 1) as f64 || y > (height - 1) as f64 {
        return None;
    }
    let (cx, cy) = (x as usize, y as usize);
    Some(GranularRect {
        cx,
        cy,
        rx: rx.min(cx).min(width - 1 - cx),
        ry: ry.min(cy).min(height - 1 - cy),
        ..*rect
    })
}

/// `(cos, sin)` with exact values at multiples of 90 degrees.
fn exact_trig(degrees: f64) -> (f64, f64, bool) {
    let turned = degrees.rem_euclid(360.0);
    match turned {
        t if t == 0.0 => (1.0, 0.0, false),
        t if t == 90.0 => (0.0, 1.0, true),
        t if t == 180.0 => (-1.0, 0.0, false),
        t if t == 270.0 => (0.0, -1.0, true),
        t => {
            let r = t.to_radians();
            (r.cos(), r.sin(), false)
        }
    }
}

/// Rotates node centers about `center`:
/// `x' = (x - cx) cos t + (y - cy) sin t + cx`, `y' = (y - cy) cos t - (x - cx) sin t + cy`.
///
/// Quarter turns swap the half-extents; other angles keep rectangles axis
/// aligned with unchanged extents. The edge set is carried over.
pub fn rotate(g: &ImageGraph, degrees: f64, center: (f64, f64)) -> ImageGraph {
    let (cos, sin, quarter) = exact_trig(degrees);
    let (ccx, ccy) = center;
    let placed = g
        .nodes
        .iter()
        .map(|r| {
            let (dx, dy) = (r.cx as f64 - ccx, r.cy as f64 - ccy);
            let x = dx * cos + dy * sin + ccx;
            let y = dy * cos - dx * sin + ccy;
            let (rx, ry) = if quarter { (r.ry, r.rx) } else { (r.rx, r.ry) };
            place(r, x, y, rx, ry, g.width, g.height)
        })
        .collect();
    relocate(g, g.width, g.height, placed)
}

pub fn flip_vertical(g: &ImageGraph) -> ImageGraph {
    flip_vertical_with(g, FlipConvention::PixelGrid)
}

pub fn flip_horizontal(g: &ImageGraph) -> ImageGraph {
    flip_horizontal_with(g, FlipConvention::PixelGrid)
}

pub fn flip_vertical_with(g: &ImageGraph, convention: FlipConvention) -> ImageGraph {
    let top = match convention {
        FlipConvention::PixelGrid => g.height as f64 - 1.0,
        FlipConvention::Raw => g.height as f64,
    };
    let placed = g
        .nodes
        .iter()
        .map(|r| place(r, r.cx as f64, top - r.cy as f64, r.rx, r.ry, g.width, g.height))
        .collect();
    relocate(g, g.width, g.height, placed)
}

pub fn flip_horizontal_with(g: &ImageGraph, convention: FlipConvention) -> ImageGraph {
    let right = match convention {
        FlipConvention::PixelGrid => g.width as f64 - 1.0,
        FlipConvention::Raw => g.width as f64,
    };
    let placed = g
        .nodes
        .iter()
        .map(|r| place(r, right - r.cx as f64, r.cy as f64, r.rx, r.ry, g.width, g.height))
        .collect();
    relocate(g, g.width, g.height, placed)
}

/// Merges two nodes using pooled moments. Overlapping pixels are counted
/// once per parent.
pub fn merge_rects(a: &GranularRect, b: &GranularRect, width: usize, height: usize) -> GranularRect {
    let (na, nb) = (a.area() as f64, b.area() as f64);
    let n = na + nb;
    let mean = (na * a.v_mean + nb * b.v_mean) / n;
    let spread = a.v_mean - b.v_mean;
    let variance = (na * a.variance + nb * b.variance) / n + na * nb * spread * spread / (n * n);

    let cx = ((na * a.cx as f64 + nb * b.cx as f64) / n).round() as usize;
    let cy = ((na * a.cy as f64 + nb * b.cy as f64) / n).round() as usize;
    let (x0, x1) = (a.x0().min(b.x0()), a.x1().max(b.x1()));
    let (y0, y1) = (a.y0().min(b.y0()), a.y1().max(b.y1()));
    let rx = (cx - x0).max(x1 - cx).min(cx).min(width - 1 - cx);
    let ry = (cy - y0).max(y1 - cy).min(cy).min(height - 1 - cy);

    GranularRect {
        id: a.id.min(b.id),
        cx,
        cy,
        rx,
        ry,
        purity: (na * a.purity + nb * b.purity) / n,
        variance,
        v_mean: mean,
        v_min: a.v_min.min(b.v_min),
        v_max: a.v_max.max(b.v_max),
    }
}

/// Performs `steps` merges, each fusing the edge whose endpoint centers are
/// closest (ties to the lexicographically smallest pair). The merged node
/// takes the lower id's slot and inherits both neighborhoods.
pub fn downsample(g: &ImageGraph, steps: usize) -> Result<ImageGraph, OpsError> {
    if steps > 0 && steps >= g.node_count() {
        return Err(OpsError::TooManyMerges {
            steps,
            nodes: g.node_count(),
        });
    }
    let mut nodes = g.nodes.clone();
    let mut edges: BTreeSet<(usize, usize)> = g.edges.iter().copied().collect();

    for done in 0..steps {
        let dist = |&(i, j): &(usize, usize)| {
            let (a, b) = (&nodes[i], &nodes[j]);
            let dx = a.cx.abs_diff(b.cx) as u64;
            let dy = a.cy.abs_diff(b.cy) as u64;
            dx * dx + dy * dy
        };
        let &(keep, gone) = edges
            .iter()
            .min_by_key(|e| (dist(e), **e))
            .ok_or(OpsError::NoMergeCandidate { done, steps })?;

        nodes[keep] = merge_rects(&nodes[keep], &nodes[gone], g.width, g.height);
        nodes.remove(gone);
        let shift = |v: usize| {
            let v = if v == gone { keep } else { v };
            if v > gone {
                v - 1
            } else {
                v
            }
        };
        edges = edges
            .into_iter()
            .map(|(i, j)| (shift(i), shift(j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect();
    }
    for (id, node) in nodes.iter_mut().enumerate() {
        node.id = id;
    }
    Ok(finish(g, g.width, g.height, nodes, edges.into_iter().collect()))
}

/// Uniform integer in `[lo, hi]` from one 64-bit draw: `lo + (x * span) >> 64`.
fn uniform(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    let span = (hi - lo + 1) as u128;
    lo + ((u128::from(rng.next_u64()) * span) >> 64) as usize
}

/// Adds `count` nodes, each a random sub-rectangle of a uniformly chosen
/// existing node, inheriting the parent's statistics.
///
/// Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`; each new
/// node consumes five draws in the order parent, cx, cy, rx, ry.
pub fn upsample(g: &ImageGraph, count: usize, seed: u64) -> Result<ImageGraph, OpsError> {
    if count == 0 {
        return Ok(g.clone());
    }
    if g.nodes.is_empty() {
        return Err(OpsError::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = g.nodes.clone();
    let mut edges: BTreeSet<(usize, usize)> = g.edges.iter().copied().collect();

    for _ in 0..count {
        let parent = nodes[uniform(&mut rng, 0, nodes.len() - 1)];
        let cx = uniform(&mut rng, parent.x0(), parent.x1());
        let cy = uniform(&mut rng, parent.y0(), parent.y1());
        let rx = uniform(&mut rng, 0, (cx - parent.x0()).min(parent.x1() - cx));
        let ry = uniform(&mut rng, 0, (cy - parent.y0()).min(parent.y1() - cy));
        let child = GranularRect {
            id: nodes.len(),
            cx,
            cy,
            rx,
            ry,
            ..parent
        };
        edges.extend(
            nodes
                .iter()
                .filter(|other| rect_overlap(other, &child))
                .map(|other| (other.id, child.id)),
        );
        nodes.push(child);
    }
    Ok(finish(g, g.width, g.height, nodes, edges.into_iter().collect()))
}

/// Keeps nodes centered inside the inclusive region, clips them to it, and
/// moves the region's corner to the origin.
pub fn extract_subgraph(g: &ImageGraph, region: (usize, usize, usize, usize)) -> Result<ImageGraph, OpsError> {
    let (x0, y0, x1, y1) = region;
    if x0 > x1 || y0 > y1 || x1 >= g.width || y1 >= g.height {
        return Err(OpsError::RegionOutOfCanvas {
            x0,
            y0,
            x1,
            y1,
            width: g.width,
            height: g.height,
        });
    }
    let placed = g
        .nodes
        .iter()
        .map(|r| {
            let inside = (x0..=x1).contains(&r.cx) && (y0..=y1).contains(&r.cy);
            inside.then(|| GranularRect {
                cx: r.cx - x0,
                cy: r.cy - y0,
                rx: r.rx.min(r.cx - x0).min(x1 - r.cx),
                ry: r.ry.min(r.cy - y0).min(y1 - r.cy),
                ..*r
            })
        })
        .collect();
    Ok(relocate(g, x1 - x0 + 1, y1 - y0 + 1, placed))
}
