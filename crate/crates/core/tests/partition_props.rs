mod common;

use grig::granular::{grow_region, grow_region_from, partition, region_purity, region_stats, GranularRect, SearchParams, ThresholdSchedule};
use grig::imaging::{gaussian_smooth, gradient_magnitude, GrayImage};
use grig::oracle::{brute_gradient, brute_region_stats, naive_grow, verify_partition};
use proptest::prelude::*;

/// Small images mixing flat blocks, ramps and noise.
fn arb_image(max_side: usize) -> impl Strategy<Value = GrayImage> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        let noise = prop::collection::vec(any::<u8>(), w * h).boxed();
        let blocky = prop::collection::vec(prop::sample::select(vec![0u8, 3, 9, 40, 128, 200, 255]), w * h)
            .prop_map(move |mut v| {
                // Copy each 3x3 block's first value across the block.
                for y in 0..h {
                    for x in 0..w {
                        v[y * w + x] = v[(y / 3 * 3) * w + x / 3 * 3];
                    }
                }
                v
            })
            .boxed();
        let ramp = (any::<u8>(), 0u8..8, 0u8..8)
            .prop_map(move |(base, sx, sy)| {
                (0..w * h)
                    .map(|i| base.wrapping_add(sx.wrapping_mul((i % w) as u8)).wrapping_add(sy.wrapping_mul((i / w) as u8)))
                    .collect()
            })
            .boxed();
        prop_oneof![noise, blocky, ramp].prop_map(move |data| GrayImage::new(w, h, data).unwrap())
    })
}

fn arb_params() -> impl Strategy<Value = SearchParams> {
    (
        0.5f64..=1.0,
        0.0f64..40.0,
        prop::sample::select(vec![50.0, 400.0, 1e6]),
        1.0f64..1.02,
        0.5f64..2.0,
    )
        .prop_map(|(p_thr, thr1, var_thr, growth, sigma)| SearchParams {
            p_thr,
            thr1,
            var_thr,
            growth,
            sigma,
            ..SearchParams::default()
        })
}

fn covered(img: &GrayImage, rects: &[GranularRect]) -> Vec<bool> {
    let mut seen = vec![false; img.pixel_count()];
    for r in rects {
        for y in r.y0()..=r.y1() {
            for x in r.x0()..=r.x1() {
                seen[y * img.width() + x] = true;
            }
        }
    }
    seen
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn partition_passes_oracle_audit(img in arb_image(20), params in arb_params()) {
        let rects = partition(&img, &params).unwrap();
        let report = verify_partition(&img, &params, &rects);
        prop_assert!(report.is_clean(), "{:?}", report.violations);
        prop_assert!(covered(&img, &rects).into_iter().all(|c| c));
        prop_assert!(rects.iter().all(|r| r.fits(img.width(), img.height())));
    }

    #[test]
    fn global_schedule_passes_oracle_audit(img in arb_image(16), params in arb_params()) {
        let params = SearchParams { schedule: ThresholdSchedule::Global, ..params };
        let rects = partition(&img, &params).unwrap();
        let report = verify_partition(&img, &params, &rects);
        prop_assert!(report.is_clean(), "{:?}", report.violations);
    }

    #[test]
    fn partition_is_deterministic(img in arb_image(24), params in arb_params()) {
        prop_assert_eq!(partition(&img, &params).unwrap(), partition(&img, &params).unwrap());
    }

    #[test]
    fn incremental_stats_equal_recomputation(img in arb_image(20), params in arb_params(), cx in any::<prop::sample::Index>(), cy in any::<prop::sample::Index>()) {
        let (cx, cy) = (cx.index(img.width()), cy.index(img.height()));
        let r = grow_region(&img, cx, cy, &params).unwrap();
        let brute = brute_region_stats(&img, &r, params.thr1);
        prop_assert!((r.purity - brute.purity).abs() <= 1e-9);
        prop_assert!((r.variance - brute.variance).abs() <= 1e-9);
        prop_assert!((r.v_mean - brute.mean).abs() <= 1e-9);
        prop_assert_eq!((r.v_min, r.v_max), (brute.min, brute.max));
    }

    #[test]
    fn region_queries_match_brute_force(img in arb_image(20), thr1 in 0.0f64..64.0, picks in any::<[prop::sample::Index; 4]>()) {
        let (cx, cy) = (picks[0].index(img.width()), picks[1].index(img.height()));
        let rx = picks[2].index(cx.min(img.width() - 1 - cx) + 1);
        let ry = picks[3].index(cy.min(img.height() - 1 - cy) + 1);
        let r = common::rect(0, cx, cy, rx, ry);
        let brute = brute_region_stats(&img, &r, thr1);
        let stats = region_stats(&img, cx, cy, rx, ry).unwrap();
        prop_assert!((region_purity(&img, cx, cy, rx, ry, thr1).unwrap() - brute.purity).abs() <= 1e-9);
        prop_assert!((stats.mean - brute.mean).abs() <= 1e-9);
        prop_assert!((stats.variance - brute.variance).abs() <= 1e-9);
        prop_assert_eq!((stats.min, stats.max), (brute.min, brute.max));
    }

    #[test]
    fn growth_matches_naive_replay(img in arb_image(20), params in arb_params(), start in 0.3f64..1.1, cx in any::<prop::sample::Index>(), cy in any::<prop::sample::Index>()) {
        let (cx, cy) = (cx.index(img.width()), cy.index(img.height()));
        let fast = grow_region_from(&img, cx, cy, &params, start).unwrap();
        let naive = naive_grow(&img, cx, cy, &params, start);
        prop_assert_eq!((fast.rect.rx, fast.rect.ry), (naive.rx, naive.ry));
        prop_assert_eq!(fast.threshold, naive.threshold);
    }

    #[test]
    fn gated_attempts_are_bounded(img in arb_image(32), params in arb_params(), cx in any::<prop::sample::Index>(), cy in any::<prop::sample::Index>()) {
        prop_assume!(params.growth > 1.0);
        let l = (1.0 / params.p_thr).ln() / params.growth.ln();
        // At integral ratios one extra attempt can still pass at exactly t = 1.
        prop_assume!((l - l.round()).abs() > 1e-6);
        let (cx, cy) = (cx.index(img.width()), cy.index(img.height()));
        let g = grow_region_from(&img, cx, cy, &params, params.p_thr).unwrap();
        prop_assert!(g.gated_attempts as f64 <= l.ceil() + 2.0, "{} attempts, L = {}", g.gated_attempts, l);
    }

    #[test]
    fn gradient_matches_direct_convolution(img in arb_image(16), sigma in 0.4f64..2.5) {
        let fast = gradient_magnitude(&gaussian_smooth(&img, sigma).unwrap());
        let brute = brute_gradient(&img, sigma);
        for (a, b) in fast.as_slice().iter().zip(&brute) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn gradient_is_translation_equivariant(img in arb_image(24), sigma in 0.4f64..1.5) {
        let (w, h) = (img.width(), img.height());
        let shifted = GrayImage::from_fn(w + 1, h, |x, y| img.get(x.saturating_sub(1), y)).unwrap();
        let a = gradient_magnitude(&gaussian_smooth(&img, sigma).unwrap());
        let b = gradient_magnitude(&gaussian_smooth(&shifted, sigma).unwrap());
        // Far enough from the left and right borders that neither window is clamped.
        let margin = (3.0 * sigma).ceil() as usize + 1;
        for y in 0..h {
            for x in margin..w.saturating_sub(margin) {
                prop_assert_eq!(a.get(x, y), b.get(x + 1, y));
            }
        }
    }
}

#[test]
fn constant_image_growth_follows_schedule() {
    let img = GrayImage::filled(28, 28, 90).unwrap();
    let params = SearchParams {
        p_thr: 0.95,
        growth: 1.005,
        thr1: 10.0,
        var_thr: 1e6,
        ..SearchParams::default()
    };
    let naive = naive_grow(&img, 13, 13, &params, params.p_thr);
    let fast = grow_region_from(&img, 13, 13, &params, params.p_thr).unwrap();
    assert_eq!((naive.rx, naive.ry), (6, 5));
    assert_eq!((fast.rect.rx, fast.rect.ry), (naive.rx, naive.ry));
    assert_eq!(fast.gated_attempts, 13);
    assert_eq!(fast.rect.purity, 1.0);
}

#[test]
fn corner_growth_without_schedule_reaches_far_borders() {
    let params = SearchParams {
        growth: 1.0,
        var_thr: 1e6,
        ..SearchParams::default()
    };
    let img = GrayImage::filled(1, 1, 5).unwrap();
    let r = grow_region(&img, 0, 0, &params).unwrap();
    assert_eq!((r.rx, r.ry), (0, 0));

    // A centered rectangle anchored at a corner cannot grow at all.
    let img = GrayImage::filled(9, 7, 5).unwrap();
    assert_eq!(grow_region(&img, 0, 0, &params).unwrap().area(), 1);
    let r = grow_region(&img, 4, 3, &params).unwrap();
    assert_eq!((r.rx, r.ry), (4, 3));
    assert_eq!(naive_grow(&img, 4, 3, &params, params.p_thr).rx, 4);
}

#[test]
fn hard_edge_stops_horizontal_growth() {
    // Columns 0..=6 dark, 7.. bright; center column 5 sits two columns left of the edge.
    let img = GrayImage::from_fn(16, 21, |x, _| if x < 7 { 20 } else { 220 }).unwrap();
    let params = SearchParams {
        p_thr: 0.85,
        thr1: 50.0,
        var_thr: 1e6,
        growth: 1.0,
        ..SearchParams::default()
    };
    let fast = grow_region(&img, 5, 10, &params).unwrap();
    let naive = naive_grow(&img, 5, 10, &params, params.p_thr);
    assert_eq!(fast.rx, 1);
    assert_eq!(fast.ry, 10);
    assert_eq!((fast.rx, fast.ry), (naive.rx, naive.ry));
    assert_eq!(fast.v_max, 20);
}

#[test]
fn flat_image_is_covered_from_first_pixel() {
    let img = GrayImage::filled(8, 8, 17).unwrap();
    let params = SearchParams {
        p_thr: 0.9,
        growth: 1.0,
        var_thr: 1e6,
        ..SearchParams::default()
    };
    let rects = partition(&img, &params).unwrap();
    assert_eq!((rects[0].cx, rects[0].cy), (0, 0));
    assert!(verify_partition(&img, &params, &rects).is_clean());
    assert!(rects.iter().all(|r| r.variance == 0.0 && r.purity == 1.0));
}
