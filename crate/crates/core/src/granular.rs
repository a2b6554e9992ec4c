//! Gradient-seeded granular-rectangle partitioning.
//!
//! Seeds are visited in order of increasing smoothed gradient magnitude
//! (ties broken by row-major index). From each unvisited seed a rectangle is
//! grown one pixel at a time, alternating x and y, until both axes are
//! stopped by the image border or by the purity/variance gates. Every gated
//! attempt multiplies the purity threshold by `growth`, which bounds region
//! size even in perfectly flat areas.
//!
//! Region statistics are maintained incrementally: an axis step adds two
//! pixel strips, so growing a region costs time proportional to its final
//! area rather than the sum of all intermediate areas.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{self, GradientOperator, GrayImage, ImagingError};

#[derive(Debug, Error)]
pub enum GranularError {
    #[error("invalid search parameters: {0}")]
    InvalidParams(String),
    #[error("rectangle centered at ({cx},{cy}) with half-extents ({rx},{ry}) leaves the {width}x{height} image")]
    OutOfBounds {
        cx: usize,
        cy: usize,
        rx: usize,
        ry: usize,
        width: usize,
        height: usize,
    },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Whether the multiplicative purity threshold restarts for each region or
/// keeps growing across the whole image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSchedule {
    #[default]
    PerRegion,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Initial purity threshold, in (0, 1].
    pub p_thr: f64,
    /// Gray-level difference above which a pixel is abnormal.
    pub thr1: f64,
    /// Variance ceiling for an accepted region.
    pub var_thr: f64,
    /// Factor applied to the purity threshold after every gated attempt.
    pub growth: f64,
    /// Gaussian sigma used before computing gradients.
    pub sigma: f64,
    #[serde(default)]
    pub schedule: ThresholdSchedule,
    #[serde(default)]
    pub gradient: GradientOperator,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            p_thr: 0.85,
            thr1: 10.0,
            var_thr: 400.0,
            growth: 1.005,
            sigma: 1.0,
            schedule: ThresholdSchedule::PerRegion,
            gradient: GradientOperator::Sobel,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), GranularError> {
        let bad = |msg: String| Err(GranularError::InvalidParams(msg));
        if !(self.p_thr > 0.0 && self.p_thr <= 1.0) {
            return bad(format!("purity threshold {} not in (0, 1]", self.p_thr));
        }
        if !(self.thr1 >= 0.0 && self.thr1.is_finite()) {
            return bad(format!("thr1 {} must be a finite value >= 0", self.thr1));
        }
        if !(self.var_thr >= 0.0) {
            return bad(format!("variance threshold {} must be >= 0", self.var_thr));
        }
        if !(self.growth >= 1.0 && self.growth.is_finite()) {
            return bad(format!("growth factor {} must be a finite value >= 1", self.growth));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma {} must be positive", self.sigma));
        }
        Ok(())
    }
}

/// One structural block of the image: an axis-aligned pixel rectangle
/// `[cx-rx, cx+rx] x [cy-ry, cy+ry]` with its intensity statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GranularRect {
    pub id: usize,
    pub cx: usize,
    pub cy: usize,
    pub rx: usize,
    pub ry: usize,
    pub purity: f64,
    pub variance: f64,
    pub v_mean: f64,
    pub v_min: u8,
    pub v_max: u8,
}

impl GranularRect {
    #[inline]
    pub fn x0(&self) -> usize {
        self.cx - self.rx
    }

    #[inline]
    pub fn x1(&self) -> usize {
        self.cx + self.rx
    }

    #[inline]
    pub fn y0(&self) -> usize {
        self.cy - self.ry
    }

    #[inline]
    pub fn y1(&self) -> usize {
        self.cy + self.ry
    }

    pub fn width(&self) -> usize {
        2 * self.rx + 1
    }

    pub fn height(&self) -> usize {
        2 * self.ry + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x.abs_diff(self.cx) <= self.rx && y.abs_diff(self.cy) <= self.ry
    }

    /// True when the whole rectangle lies inside a `width x height` canvas.
    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.rx <= self.cx && self.ry <= self.cy && self.x1() < width && self.y1() < height
    }
}

/// Per-pixel visited flags; bits only ever go from unvisited to visited.
#[derive(Debug, Clone)]
pub struct VisitMask {
    width: usize,
    bits: Vec<bool>,
    remaining: usize,
}

impl VisitMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            bits: vec![false; width * height],
            remaining: width * height,
        }
    }

    pub fn is_visited(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    /// Marks every pixel of `rect`; returns how many were newly visited.
    pub fn mark(&mut self, rect: &GranularRect) -> usize {
        let mut fresh = 0;
        for y in rect.y0()..=rect.y1() {
            let row = y * self.width;
            for bit in &mut self.bits[row + rect.x0()..=row + rect.x1()] {
                if !*bit {
                    *bit = true;
                    fresh += 1;
                }
            }
        }
        self.remaining -= fresh;
        fresh
    }
}

/// Running moments and abnormal-pixel count of a rectangle, kept in exact
/// integer arithmetic.
#[derive(Debug, Clone, Copy)]
struct RegionAccumulator {
    count: u64,
    sum: u64,
    sum_sq: u64,
    abnormal: u64,
    min: u8,
    max: u8,
}

impl RegionAccumulator {
    const EMPTY: Self = Self {
        count: 0,
        sum: 0,
        sum_sq: 0,
        abnormal: 0,
        min: u8::MAX,
        max: u8::MIN,
    };

    #[inline]
    fn push(&mut self, value: u8, center: u8, thr1: f64) {
        let v = u64::from(value);
        self.count += 1;
        self.sum += v;
        self.sum_sq += v * v;
        if f64::from(value.abs_diff(center)) > thr1 {
            self.abnormal += 1;
        }
        self.min = self.min.min(value);
        self.max = self.max.max(value);
    }

    fn merged(&self, other: &Self) -> Self {
        Self {
            count: self.count + other.count,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
            abnormal: self.abnormal + other.abnormal,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    fn push_column(&mut self, img: &GrayImage, x: usize, y0: usize, y1: usize, center: u8, thr1: f64) {
        for y in y0..=y1 {
            self.push(img.get(x, y), center, thr1);
        }
    }

    fn push_row(&mut self, img: &GrayImage, y: usize, x0: usize, x1: usize, center: u8, thr1: f64) {
        let row = &img.as_slice()[y * img.width()..];
        for &v in &row[x0..=x1] {
            self.push(v, center, thr1);
        }
    }

    fn purity(&self) -> f64 {
        1.0 - self.abnormal as f64 / self.count as f64
    }

    fn mean(&self) -> f64 {
        self.sum as f64 / self.count as f64
    }

    fn variance(&self) -> f64 {
        let n = u128::from(self.count);
        let spread = n * u128::from(self.sum_sq) - u128::from(self.sum) * u128::from(self.sum);
        spread as f64 / (n * n) as f64
    }
}

fn check_bounds(img: &GrayImage, cx: usize, cy: usize, rx: usize, ry: usize) -> Result<(), GranularError> {
    let inside = rx <= cx && ry <= cy && cx + rx < img.width() && cy + ry < img.height();
    if inside {
        Ok(())
    } else {
        Err(GranularError::OutOfBounds {
            cx,
            cy,
            rx,
            ry,
            width: img.width(),
            height: img.height(),
        })
    }
}

fn accumulate(img: &GrayImage, cx: usize, cy: usize, rx: usize, ry: usize, thr1: f64) -> RegionAccumulator {
    let center = img.get(cx, cy);
    let mut acc = RegionAccumulator::EMPTY;
    for y in cy - ry..=cy + ry {
        acc.push_row(img, y, cx - rx, cx + rx, center, thr1);
    }
    acc
}

/// Fraction of pixels whose absolute difference from the center pixel is at
/// most `thr1`.
pub fn region_purity(img: &GrayImage, cx: usize, cy: usize, rx: usize, ry: usize, thr1: f64) -> Result<f64, GranularError> {
    check_bounds(img, cx, cy, rx, ry)?;
    Ok(accumulate(img, cx, cy, rx, ry, thr1).purity())
}

/// Population statistics of a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    pub mean: f64,
    pub variance: f64,
    pub min: u8,
    pub max: u8,
}

pub fn region_stats(img: &GrayImage, cx: usize, cy: usize, rx: usize, ry: usize) -> Result<RegionStats, GranularError> {
    check_bounds(img, cx, cy, rx, ry)?;
    let acc = accumulate(img, cx, cy, rx, ry, f64::INFINITY);
    Ok(RegionStats {
        mean: acc.mean(),
        variance: acc.variance(),
        min: acc.min,
        max: acc.max,
    })
}

/// Result of one region growth, including bookkeeping used by the partition
/// loop and by tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Growth {
    pub rect: GranularRect,
    /// Attempts that reached the purity/variance gate.
    pub gated_attempts: usize,
    /// Purity threshold after the last gated attempt.
    pub threshold: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Axis {
    X,
    Y,
}

/// Grows a rectangle from `(cx, cy)` starting at `params.p_thr`.
pub fn grow_region(img: &GrayImage, cx: usize, cy: usize, params: &SearchParams) -> Result<GranularRect, GranularError> {
    Ok(grow_region_from(img, cx, cy, params, params.p_thr)?.rect)
}

/// Grows a rectangle from `(cx, cy)` with an explicit starting threshold.
pub fn grow_region_from(
    img: &GrayImage,
    cx: usize,
    cy: usize,
    params: &SearchParams,
    start_threshold: f64,
) -> Result<Growth, GranularError> {
    check_bounds(img, cx, cy, 0, 0)?;
    let (w, h) = (img.width(), img.height());
    let center = img.get(cx, cy);
    let thr1 = params.thr1;

    let mut acc = RegionAccumulator::EMPTY;
    acc.push(center, center, thr1);
    let (mut rx, mut ry) = (0usize, 0usize);
    let mut threshold = start_threshold;
    let mut stopped_x = false;
    let mut stopped_y = false;
    let mut axis = Axis::X;
    let mut gated_attempts = 0;

    while !(stopped_x && stopped_y) {
        let current = axis;
        axis = match axis {
            Axis::X => Axis::Y,
            Axis::Y => Axis::X,
        };
        match current {
            Axis::X if !stopped_x => {
                let next = rx + 1;
                if next > cx || cx + next >= w {
                    stopped_x = true;
                    continue;
                }
                let mut strip = RegionAccumulator::EMPTY;
                strip.push_column(img, cx - next, cy - ry, cy + ry, center, thr1);
                strip.push_column(img, cx + next, cy - ry, cy + ry, center, thr1);
                let candidate = acc.merged(&strip);
                gated_attempts += 1;
                if candidate.purity() < threshold || candidate.variance() > params.var_thr {
                    stopped_x = true;
                } else {
                    acc = candidate;
                    rx = next;
                }
                threshold *= params.growth;
            }
            Axis::Y if !stopped_y => {
                let next = ry + 1;
                if next > cy || cy + next >= h {
                    stopped_y = true;
                    continue;
                }
                let mut strip = RegionAccumulator::EMPTY;
                strip.push_row(img, cy - next, cx - rx, cx + rx, center, thr1);
                strip.push_row(img, cy + next, cx - rx, cx + rx, center, thr1);
                let candidate = acc.merged(&strip);
                gated_attempts += 1;
                if candidate.purity() < threshold || candidate.variance() > params.var_thr {
                    stopped_y = true;
                } else {
                    acc = candidate;
                    ry = next;
                }
                threshold *= params.growth;
            }
            _ => {}
        }
    }

    Ok(Growth {
        rect: GranularRect {
            id: 0,
            cx,
            cy,
            rx,
            ry,
            purity: acc.purity(),
            variance: acc.variance(),
            v_mean: acc.mean(),
            v_min: acc.min,
            v_max: acc.max,
        },
        gated_attempts,
        threshold,
    })
}

/// Pixel indices ordered by (gradient magnitude, row-major index).
pub fn seed_order(img: &GrayImage, params: &SearchParams) -> Result<Vec<usize>, GranularError> {
    let smoothed = imaging::gaussian_smooth(img, params.sigma)?;
    let grad = imaging::gradient(&smoothed, params.gradient);
    let mags = grad.as_slice();
    let mut order: Vec<usize> = (0..mags.len()).collect();
    order.sort_unstable_by(|&a, &b| mags[a].total_cmp(&mags[b]).then(a.cmp(&b)));
    Ok(order)
}

/// Covers the image with granular rectangles, returned in id order.
pub fn partition(img: &GrayImage, params: &SearchParams) -> Result<Vec<GranularRect>, GranularError> {
    params.validate()?;
    let order = seed_order(img, params)?;
    let width = img.width();
    let mut mask = VisitMask::new(width, img.height());
    let mut rects = Vec::new();
    let mut threshold = params.p_thr;
    let mut cursor = 0;

    while mask.remaining() > 0 {
        while mask.is_visited(order[cursor]) {
            cursor += 1;
        }
        let seed = order[cursor];
        let start = match params.schedule {
            ThresholdSchedule::PerRegion => params.p_thr,
            ThresholdSchedule::Global => threshold,
        };
        let growth = grow_region_from(img, seed % width, seed / width, params, start)?;
        threshold = growth.threshold;
        let rect = GranularRect {
            id: rects.len(),
            ..growth.rect
        };
        mask.mark(&rect);
        rects.push(rect);
    }
    Ok(rects)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p_thr: f64, growth: f64) -> SearchParams {
        SearchParams {
            p_thr,
            growth,
            thr1: 10.0,
            var_thr: 1e6,
            ..SearchParams::default()
        }
    }

    #[test]
    fn purity_examples() {
        let flat = GrayImage::filled(5, 5, 42).unwrap();
        assert_eq!(region_purity(&flat, 2, 2, 2, 2, 0.0).unwrap(), 1.0);
        let img = GrayImage::from_fn(3, 3, |x, y| if (x, y) == (0, 0) || (x, y) == (2, 1) { 150 } else { 100 }).unwrap();
        assert_eq!(region_purity(&img, 1, 1, 0, 0, 10.0).unwrap(), 1.0);
        let p = region_purity(&img, 1, 1, 1, 1, 10.0).unwrap();
        assert!((p - (1.0 - 2.0 / 9.0)).abs() < 1e-12);
        assert!(matches!(region_purity(&img, 1, 1, 2, 0, 10.0), Err(GranularError::OutOfBounds { .. })));
    }

    #[test]
    fn purity_is_symmetric_in_sign() {
        let img = GrayImage::from_fn(3, 1, |x, _| [50, 100, 150][x]).unwrap();
        let p = region_purity(&img, 1, 0, 1, 0, 10.0).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn stats_examples() {
        let flat = GrayImage::filled(4, 4, 7).unwrap();
        let s = region_stats(&flat, 1, 1, 1, 1).unwrap();
        assert_eq!((s.mean, s.variance, s.min, s.max), (7.0, 0.0, 7, 7));

        let three = GrayImage::new(3, 1, vec![0, 255, 0]).unwrap();
        let s = region_stats(&three, 1, 0, 1, 0).unwrap();
        assert_eq!((s.mean, s.variance, s.min, s.max), (85.0, 14450.0, 0, 255));

        let single = region_stats(&three, 1, 0, 0, 0).unwrap();
        assert_eq!((single.mean, single.variance, single.min, single.max), (255.0, 0.0, 255, 255));
    }

    #[test]
    fn accumulator_two_pixel_moments() {
        // Centered rectangles always have odd area; check the even case on
        // the accumulator itself.
        let mut acc = RegionAccumulator::EMPTY;
        acc.push(0, 0, 10.0);
        acc.push(255, 0, 10.0);
        assert_eq!(acc.mean(), 127.5);
        assert_eq!(acc.variance(), 16256.25);
        assert_eq!((acc.min, acc.max), (0, 255));
        assert_eq!(acc.purity(), 0.5);
    }

    #[test]
    fn constant_image_schedule_bound() {
        let img = GrayImage::filled(28, 28, 128).unwrap();
        let g = grow_region_from(&img, 13, 13, &params(0.95, 1.005), 0.95).unwrap();
        assert_eq!((g.rect.rx, g.rect.ry), (6, 5));
        assert_eq!(g.gated_attempts, 13);
        assert_eq!(g.rect.purity, 1.0);
    }

    #[test]
    fn border_stops_growth_without_schedule() {
        let img = GrayImage::filled(5, 4, 3).unwrap();
        let r = grow_region(&img, 0, 0, &params(0.9, 1.0)).unwrap();
        assert_eq!((r.rx, r.ry), (0, 0));
        let r = grow_region(&img, 2, 1, &params(0.9, 1.0)).unwrap();
        assert_eq!((r.rx, r.ry), (2, 1));
        let one = GrayImage::filled(1, 1, 3).unwrap();
        let r = grow_region(&one, 0, 0, &params(0.9, 1.0)).unwrap();
        assert_eq!((r.rx, r.ry, r.purity), (0, 0, 1.0));
    }

    #[test]
    fn hard_edge_stops_x_axis() {
        // Edge two columns right of the center at x = 10.
        let img = GrayImage::from_fn(21, 21, |x, _| if x >= 12 { 200 } else { 20 }).unwrap();
        let p = SearchParams {
            p_thr: 0.99,
            thr1: 50.0,
            var_thr: 1e6,
            growth: 1.0,
            ..SearchParams::default()
        };
        let r = grow_region(&img, 10, 10, &p).unwrap();
        assert_eq!(r.rx, 1);
        assert_eq!(r.ry, 10);
        assert_eq!(r.purity, 1.0);
    }

    #[test]
    fn rejects_out_of_bounds_center() {
        let img = GrayImage::filled(3, 3, 0).unwrap();
        assert!(grow_region(&img, 3, 0, &SearchParams::default()).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(SearchParams::default().validate().is_ok());
        for bad in [
            SearchParams { p_thr: 0.0, ..Default::default() },
            SearchParams { p_thr: 1.1, ..Default::default() },
            SearchParams { growth: 0.99, ..Default::default() },
            SearchParams { thr1: -1.0, ..Default::default() },
            SearchParams { var_thr: -1.0, ..Default::default() },
            SearchParams { sigma: 0.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn partition_single_pixel_and_flat() {
        let one = GrayImage::filled(1, 1, 5).unwrap();
        let rects = partition(&one, &SearchParams::default()).unwrap();
        assert_eq!(rects.len(), 1);
        assert_eq!((rects[0].rx, rects[0].ry, rects[0].purity), (0, 0, 1.0));

        // All gradients zero: the first seed is pixel (0,0), which can not
        // grow (border on both axes). The next seed is (1,0), and so on.
        let flat = GrayImage::filled(8, 8, 60).unwrap();
        let p = SearchParams {
            p_thr: 0.9,
            growth: 1.0,
            var_thr: 1e9,
            ..SearchParams::default()
        };
        let rects = partition(&flat, &p).unwrap();
        let mut covered = [false; 64];
        for r in &rects {
            for y in r.y0()..=r.y1() {
                for x in r.x0()..=r.x1() {
                    covered[y * 8 + x] = true;
                }
            }
        }
        assert!(covered.iter().all(|&c| c));
        assert_eq!((rects[0].cx, rects[0].cy), (0, 0));
    }

    #[test]
    fn global_schedule_carries_threshold() {
        let img = GrayImage::from_fn(16, 16, |x, y| ((x * 13 + y * 7) % 40) as u8).unwrap();
        let per = partition(&img, &SearchParams::default()).unwrap();
        let global = partition(
            &img,
            &SearchParams {
                schedule: ThresholdSchedule::Global,
                ..SearchParams::default()
            },
        )
        .unwrap();
        // A threshold that only rises can only make regions smaller.
        assert!(global.len() >= per.len());
    }
}
