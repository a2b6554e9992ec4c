//! Slow reference implementations used to check the production paths.
//!
//! Nothing in here calls into `imaging`, `granular` or `graph` algorithms:
//! pixel sets are materialized, statistics are recomputed from scratch on
//! every query, smoothing is a direct 2D convolution and growth re-evaluates
//! the whole rectangle on every attempt.

use std::fmt;

use crate::granular::{GranularRect, SearchParams, ThresholdSchedule};
use crate::imaging::GrayImage;

/// Pixel keys `(y << 32) | x` of a rectangle, ascending.
fn pixel_set(r: &GranularRect) -> Vec<u64> {
    let mut out = Vec::with_capacity(r.area());
    for y in r.cy - r.ry..=r.cy + r.ry {
        for x in r.cx - r.rx..=r.cx + r.rx {
            out.push(((y as u64) << 32) | x as u64);
        }
    }
    out
}

fn sorted_sets_intersect(a: &[u64], b: &[u64]) -> bool {
    match (a.first(), a.last(), b.first(), b.last()) {
        (Some(a_lo), Some(a_hi), Some(b_lo), Some(b_hi)) if a_hi >= b_lo && b_hi >= a_lo => {}
        _ => return false,
    }
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Every pair whose materialized pixel sets intersect, sorted.
pub fn brute_edges(rects: &[GranularRect]) -> Vec<(usize, usize)> {
    let sets: Vec<Vec<u64>> = rects.iter().map(pixel_set).collect();
    let mut edges = Vec::new();
    for i in 0..rects.len() {
        for j in i + 1..rects.len() {
            if sorted_sets_intersect(&sets[i], &sets[j]) {
                edges.push((i, j));
            }
        }
    }
    edges
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteStats {
    pub purity: f64,
    pub mean: f64,
    pub variance: f64,
    pub min: u8,
    pub max: u8,
}

/// Full recomputation over the rectangle's pixels.
pub fn brute_region_stats(img: &GrayImage, rect: &GranularRect, thr1: f64) -> BruteStats {
    let center = img.get(rect.cx, rect.cy);
    let values: Vec<u8> = pixel_set(rect)
        .into_iter()
        .map(|key| img.get((key & 0xffff_ffff) as usize, (key >> 32) as usize))
        .collect();
    let n = values.len() as i128;
    let abnormal = values
        .iter()
        .filter(|&&v| (f64::from(v) - f64::from(center)).abs() > thr1)
        .count();
    let total: i128 = values.iter().map(|&v| i128::from(v)).sum();
    // sum (n v - total)^2 / n^3 is the population variance, kept exact until
    // the final division.
    let scaled: i128 = values
        .iter()
        .map(|&v| {
            let d = n * i128::from(v) - total;
            d * d
        })
        .sum();
    BruteStats {
        purity: 1.0 - abnormal as f64 / values.len() as f64,
        mean: total as f64 / values.len() as f64,
        variance: scaled as f64 / (n * n * n) as f64,
        min: *values.iter().min().expect("rectangles are non-empty"),
        max: *values.iter().max().expect("rectangles are non-empty"),
    }
}

/// Gradient magnitudes via a direct 2D Gaussian and a literal Sobel stencil.
pub fn brute_gradient(img: &GrayImage, sigma: f64) -> Vec<f64> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel2d = Vec::new();
    let mut total = 0.0;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let k = (-((dx * dx) as f64) / (2.0 * sigma * sigma)).exp() * (-((dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            kernel2d.push((dx, dy, k));
            total += k;
        }
    }
    let clampx = |x: i64| x.max(0).min(w - 1);
    let clampy = |y: i64| y.max(0).min(h - 1);
    let mut smooth = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for &(dx, dy, k) in &kernel2d {
                acc += k / total * f64::from(img.get(clampx(x + dx) as usize, clampy(y + dy) as usize));
            }
            smooth[(y * w + x) as usize] = acc;
        }
    }
    const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
    let mut out = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let (mut gx, mut gy) = (0.0, 0.0);
            for (j, dy) in (-1..=1).enumerate() {
                for (i, dx) in (-1..=1).enumerate() {
                    let v = smooth[(clampy(y + dy) * w + clampx(x + dx)) as usize];
                    gx += SOBEL_X[j][i] * v;
                    gy += SOBEL_Y[j][i] * v;
                }
            }
            out[(y * w + x) as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Outcome of re-growing a region with full recomputation at each attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveGrowth {
    pub rx: usize,
    pub ry: usize,
    pub stats: BruteStats,
    pub threshold: f64,
}

pub fn naive_grow(img: &GrayImage, cx: usize, cy: usize, params: &SearchParams, start_threshold: f64) -> NaiveGrowth {
    let (w, h) = (img.width(), img.height());
    let probe = |rx: usize, ry: usize| {
        let r = GranularRect {
            id: 0,
            cx,
            cy,
            rx,
            ry,
            purity: 0.0,
            variance: 0.0,
            v_mean: 0.0,
            v_min: 0,
            v_max: 0,
        };
        brute_region_stats(img, &r, params.thr1)
    };
    let mut ext = [0usize, 0usize];
    let mut stopped = [false, false];
    let mut t = start_threshold;
    let mut turn = 0;
    while !(stopped[0] && stopped[1]) {
        let axis = turn % 2;
        turn += 1;
        if stopped[axis] {
            continue;
        }
        let mut trial = ext;
        trial[axis] += 1;
        let (c, limit) = if axis == 0 { (cx, w) } else { (cy, h) };
        if trial[axis] > c || c + trial[axis] > limit - 1 {
            stopped[axis] = true;
            continue;
        }
        let s = probe(trial[0], trial[1]);
        if s.purity < t || s.variance > params.var_thr {
            stopped[axis] = true;
        } else {
            ext = trial;
        }
        t *= params.growth;
    }
    NaiveGrowth {
        rx: ext[0],
        ry: ext[1],
        stats: probe(ext[0], ext[1]),
        threshold: t,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    IdOrder { index: usize, id: usize },
    OutOfBounds { id: usize },
    Stat { id: usize, field: &'static str, stored: f64, recomputed: f64 },
    SeedVisited { id: usize },
    SeedNotMinimal { id: usize, seed_gradient: f64, min_gradient: f64 },
    Replay { id: usize, stored: (usize, usize), replayed: (usize, usize) },
    Uncovered { pixels: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IdOrder { index, id } => write!(f, "rect at index {index} carries id {id}"),
            Violation::OutOfBounds { id } => write!(f, "rect {id}: leaves the image"),
            Violation::Stat { id, field, stored, recomputed } => {
                write!(f, "rect {id}: {field} stored {stored} but recomputed {recomputed}")
            }
            Violation::SeedVisited { id } => write!(f, "rect {id}: seed pixel was already visited"),
            Violation::SeedNotMinimal { id, seed_gradient, min_gradient } => write!(
                f,
                "rect {id}: seed gradient {seed_gradient} exceeds minimum unvisited gradient {min_gradient}"
            ),
            Violation::Replay { id, stored, replayed } => {
                write!(f, "rect {id}: extents {stored:?} but replay grows {replayed:?}")
            }
            Violation::Uncovered { pixels } => write!(f, "{pixels} pixels are not covered by any rect"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartitionReport {
    pub rects_checked: usize,
    pub violations: Vec<Violation>,
}

impl PartitionReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const STAT_TOLERANCE: f64 = 1e-9;

/// Checks a rect list against the partition contract: ids, bounds, stored
/// statistics, seed choice, growth replay and full coverage.
pub fn verify_partition(img: &GrayImage, params: &SearchParams, rects: &[GranularRect]) -> PartitionReport {
    let (w, h) = (img.width(), img.height());
    let mut violations = Vec::new();
    let gradient = brute_gradient(img, params.sigma);
    let mut by_gradient: Vec<usize> = (0..w * h).collect();
    by_gradient.sort_by(|&a, &b| gradient[a].partial_cmp(&gradient[b]).unwrap().then(a.cmp(&b)));
    let mut visited = vec![false; w * h];
    let mut cursor = 0;
    let mut threshold = params.p_thr;

    for (index, r) in rects.iter().enumerate() {
        if r.id != index {
            violations.push(Violation::IdOrder { index, id: r.id });
        }
        let id = r.id;
        let inside = r.cx >= r.rx && r.cy >= r.ry && r.cx + r.rx < w && r.cy + r.ry < h;
        if !inside {
            violations.push(Violation::OutOfBounds { id });
            continue;
        }

        let s = brute_region_stats(img, r, params.thr1);
        let mut check = |field, stored: f64, recomputed: f64| {
            if (stored - recomputed).abs() > STAT_TOLERANCE {
                violations.push(Violation::Stat { id, field, stored, recomputed });
            }
        };
        check("purity", r.purity, s.purity);
        check("variance", r.variance, s.variance);
        check("mean", r.v_mean, s.mean);
        check("min", f64::from(r.v_min), f64::from(s.min));
        check("max", f64::from(r.v_max), f64::from(s.max));

        let seed = r.cy * w + r.cx;
        if visited[seed] {
            violations.push(Violation::SeedVisited { id });
        } else {
            while cursor < by_gradient.len() && visited[by_gradient[cursor]] {
                cursor += 1;
            }
            let min_gradient = gradient[by_gradient[cursor]];
            if gradient[seed] > min_gradient + 1e-9 * (1.0 + min_gradient) {
                violations.push(Violation::SeedNotMinimal {
                    id,
                    seed_gradient: gradient[seed],
                    min_gradient,
                });
            }
        }

        let start = match params.schedule {
            ThresholdSchedule::PerRegion => params.p_thr,
            ThresholdSchedule::Global => threshold,
        };
        let replay = naive_grow(img, r.cx, r.cy, params, start);
        threshold = replay.threshold;
        if (replay.rx, replay.ry) != (r.rx, r.ry) {
            violations.push(Violation::Replay {
                id,
                stored: (r.rx, r.ry),
                replayed: (replay.rx, replay.ry),
            });
        }

        for y in r.cy - r.ry..=r.cy + r.ry {
            for x in r.cx - r.rx..=r.cx + r.rx {
                visited[y * w + x] = true;
            }
        }
    }

    let uncovered = visited.iter().filter(|&&v| !v).count();
    if uncovered > 0 {
        violations.push(Violation::Uncovered { pixels: uncovered });
    }
    PartitionReport {
        rects_checked: rects.len(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(id: usize, cx: usize, cy: usize, rx: usize, ry: usize) -> GranularRect {
        GranularRect {
            id,
            cx,
            cy,
            rx,
            ry,
            purity: 1.0,
            variance: 0.0,
            v_mean: 0.0,
            v_min: 0,
            v_max: 0,
        }
    }

    #[test]
    fn brute_edge_examples() {
        assert!(brute_edges(&[rect(0, 1, 1, 1, 1), rect(1, 5, 5, 1, 1)]).is_empty());
        assert_eq!(brute_edges(&[rect(0, 1, 1, 1, 1), rect(1, 3, 3, 1, 1)]), vec![(0, 1)]);
    }

    #[test]
    fn brute_stats_examples() {
        let img = GrayImage::from_fn(3, 3, |x, y| if (x, y) == (0, 0) || (x, y) == (2, 1) { 150 } else { 100 }).unwrap();
        let s = brute_region_stats(&img, &rect(0, 1, 1, 1, 1), 10.0);
        assert!((s.purity - 7.0 / 9.0).abs() < 1e-15);
        assert_eq!((s.min, s.max), (100, 150));
        let mean = (7.0 * 100.0 + 2.0 * 150.0) / 9.0;
        let var = (7.0 * (100.0f64 - mean).powi(2) + 2.0 * (150.0f64 - mean).powi(2)) / 9.0;
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.variance - var).abs() < 1e-9);

        let flat = GrayImage::filled(2, 2, 7).unwrap();
        let s = brute_region_stats(&flat, &rect(0, 0, 0, 0, 0), 0.0);
        assert_eq!((s.purity, s.mean, s.variance, s.min, s.max), (1.0, 7.0, 0.0, 7, 7));
    }

    #[test]
    fn naive_grow_constant_schedule() {
        let img = GrayImage::filled(28, 28, 0).unwrap();
        let p = SearchParams {
            p_thr: 0.95,
            growth: 1.005,
            thr1: 10.0,
            var_thr: 1e6,
            ..SearchParams::default()
        };
        let g = naive_grow(&img, 13, 13, &p, p.p_thr);
        assert_eq!((g.rx, g.ry), (6, 5));
    }

    #[test]
    fn detects_tampering() {
        let img = GrayImage::from_fn(12, 12, |x, y| ((x / 4) * 60 + (y / 6) * 30) as u8).unwrap();
        let params = SearchParams::default();
        let rects = crate::granular::partition(&img, &params).unwrap();
        assert!(verify_partition(&img, &params, &rects).is_clean());

        let mut inflated = rects.clone();
        let victim = inflated.iter().position(|r| r.fits(12, 12) && r.cx + r.rx + 1 < 12 && r.cx > r.rx).unwrap();
        inflated[victim].rx += 1;
        let report = verify_partition(&img, &params, &inflated);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Replay { id, .. } if *id == victim)));

        let missing: Vec<_> = rects[..rects.len() - 1].to_vec();
        let report = verify_partition(&img, &params, &missing);
        assert!(report.violations.iter().any(|v| matches!(v, Violation::Uncovered { pixels } if *pixels > 0)));
    }
}
