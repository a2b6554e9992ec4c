//! Scaling measurements on synthetic images.

use std::time::Instant;

use crate::granular::{GranularError, SearchParams};
use crate::graph::build_graph;
use crate::imaging::GrayImage;

/// Smooth diagonal ramp with a low-frequency ripple; the pattern scales
/// with the canvas so region shapes are comparable across sizes.
pub fn synthetic_gradient_image(size: usize) -> GrayImage {
    let s = size.max(2) as f64;
    GrayImage::from_fn(size, size, |x, y| {
        let (u, v) = (x as f64 / (s - 1.0), y as f64 / (s - 1.0));
        let ramp = 0.5 * (u + v);
        let ripple = 0.1 * (std::f64::consts::TAU * u).sin() * (std::f64::consts::TAU * v).cos();
        (255.0 * (0.8 * ramp + 0.1 + ripple)).round().clamp(0.0, 255.0) as u8
    })
    .expect("size is positive")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub pixels: usize,
    pub nodes: usize,
    pub edges: usize,
    pub seconds: Vec<f64>,
}

impl BenchRow {
    pub fn median(&self) -> f64 {
        let mut t = self.seconds.clone();
        t.sort_by(f64::total_cmp);
        let mid = t.len() / 2;
        if t.len() % 2 == 1 {
            t[mid]
        } else {
            0.5 * (t[mid - 1] + t[mid])
        }
    }

    pub fn min(&self) -> f64 {
        self.seconds.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of log(time) against log(pixels) over all trials.
    pub exponent: f64,
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

pub fn run(sizes: &[usize], trials: usize, params: &SearchParams) -> Result<BenchReport, GranularError> {
    params.validate()?;
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let img = synthetic_gradient_image(size);
        // warm-up run, also records the graph shape
        let g = build_graph(&img, params)?;
        let mut seconds = Vec::with_capacity(trials);
        for _ in 0..trials.max(1) {
            let start = Instant::now();
            let out = build_graph(&img, params)?;
            seconds.push(start.elapsed().as_secs_f64());
            debug_assert_eq!(out.node_count(), g.node_count());
        }
        rows.push(BenchRow {
            size,
            pixels: size * size,
            nodes: g.node_count(),
            edges: g.edge_count(),
            seconds,
        });
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .flat_map(|r| r.seconds.iter().map(move |&t| ((r.pixels as f64).ln(), t.max(1e-9).ln())))
        .collect();
    let exponent = if rows.len() >= 2 { fit_slope(&points) } else { f64::NAN };
    Ok(BenchReport { rows, exponent })
}
