#![allow(dead_code)]

use std::path::PathBuf;

use grig::granular::GranularRect;
use grig::graph::{ImageGraph, FEATURE_DIM};
use grig::imaging::{self, GrayImage};
use grig::serialize::{GraphDataset, GraphRecord};
use proptest::prelude::*;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn mnist_images_path() -> PathBuf {
    data_dir().join("mnist-1k-images-idx3-ubyte.gz")
}

pub fn mnist_labels_path() -> PathBuf {
    data_dir().join("mnist-1k-labels-idx1-ubyte.gz")
}

/// 1,000 MNIST digits, 100 per class, classes interleaved.
pub fn mnist_fixture() -> Vec<(GrayImage, u8)> {
    let images = imaging::read_maybe_gz(&mnist_images_path()).expect("fixture images");
    let labels = imaging::read_maybe_gz(&mnist_labels_path()).expect("fixture labels");
    imaging::decode_mnist_idx(&images, &labels).expect("fixture decodes")
}

pub fn rect(id: usize, cx: usize, cy: usize, rx: usize, ry: usize) -> GranularRect {
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

/// A rectangle with consistent statistics somewhere inside `w x h`.
pub fn arb_rect(w: usize, h: usize, max_extent: usize) -> impl Strategy<Value = GranularRect> {
    (0..w, 0..h, 0..=max_extent, 0..=max_extent, any::<u8>(), any::<u8>(), 0.0f64..=1.0, 1u32..=1000, 0.0f64..16256.25)
        .prop_map(move |(cx, cy, rx, ry, a, b, t, p, variance)| {
            let rx = rx.min(cx).min(w - 1 - cx);
            let ry = ry.min(cy).min(h - 1 - cy);
            let (lo, hi) = (a.min(b), a.max(b));
            GranularRect {
                id: 0,
                cx,
                cy,
                rx,
                ry,
                purity: f64::from(p) / 1000.0,
                variance,
                v_mean: f64::from(lo) + t * f64::from(hi - lo),
                v_min: lo,
                v_max: hi,
            }
        })
}

pub fn arb_rects(max_count: usize, max_extent: usize) -> impl Strategy<Value = (usize, usize, Vec<GranularRect>)> {
    (1usize..=64, 1usize..=64).prop_flat_map(move |(w, h)| {
        prop::collection::vec(arb_rect(w, h, max_extent), 0..=max_count).prop_map(move |mut rects| {
            for (i, r) in rects.iter_mut().enumerate() {
                r.id = i;
            }
            (w, h, rects)
        })
    })
}

/// Graphs with arbitrary (not necessarily overlap-derived) ordered edges and
/// optional finite features.
pub fn arb_graph() -> impl Strategy<Value = ImageGraph> {
    arb_rects(24, 6).prop_flat_map(|(w, h, nodes)| {
        let n = nodes.len();
        let edges = if n >= 2 {
            prop::collection::btree_set((0..n, 0..n), 0..=3 * n)
                .prop_map(|set| {
                    let mut e: Vec<(usize, usize)> =
                        set.into_iter().filter(|(i, j)| i != j).map(|(i, j)| (i.min(j), i.max(j))).collect();
                    e.sort_unstable();
                    e.dedup();
                    e
                })
                .boxed()
        } else {
            Just(Vec::new()).boxed()
        };
        let features = prop::option::of(prop::collection::vec(prop::array::uniform10(-1e6f64..1e6), n..=n));
        (Just((w, h, nodes)), edges, features).prop_map(|((width, height, nodes), edges, features)| ImageGraph {
            width,
            height,
            nodes,
            edges,
            features,
        })
    })
}

pub fn arb_record(feature_dim: usize, class_count: u16) -> impl Strategy<Value = GraphRecord> {
    (0..class_count, 0usize..20).prop_flat_map(move |(label, nodes)| {
        let feats = prop::collection::vec(
            prop::num::f32::NORMAL | prop::num::f32::ZERO | prop::num::f32::SUBNORMAL,
            nodes * feature_dim,
        );
        let edges = if nodes >= 2 {
            prop::collection::vec((0..nodes as u32, 0..nodes as u32), 0..40)
                .prop_map(|pairs| pairs.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (a.min(b), a.max(b))).collect())
                .boxed()
        } else {
            Just(Vec::new()).boxed()
        };
        (feats, edges).prop_map(move |(features, edges)| GraphRecord {
            label,
            node_count: nodes,
            features,
            edges,
        })
    })
}

pub fn arb_dataset() -> impl Strategy<Value = GraphDataset> {
    (prop_oneof![Just(FEATURE_DIM), 1usize..16], 1u16..12).prop_flat_map(|(dim, classes)| {
        prop::collection::vec(arb_record(dim, classes), 0..8).prop_map(move |graphs| GraphDataset {
            feature_dim: dim as u16,
            class_count: classes,
            graphs,
        })
    })
}

/// Compares datasets with float features by bit pattern.
pub fn same_bits(a: &GraphDataset, b: &GraphDataset) -> bool {
    a.feature_dim == b.feature_dim
        && a.class_count == b.class_count
        && a.graphs.len() == b.graphs.len()
        && a.graphs.iter().zip(&b.graphs).all(|(x, y)| {
            x.label == y.label
                && x.node_count == y.node_count
                && x.edges == y.edges
                && x.features.len() == y.features.len()
                && x.features.iter().zip(&y.features).all(|(p, q)| p.to_bits() == q.to_bits())
        })
}
