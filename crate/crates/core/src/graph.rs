//! Image graphs: granular rectangles as nodes, pixel-sharing as edges, and a
//! fixed-width per-node feature vector.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::granular::{self, GranularError, GranularRect, SearchParams};
use crate::imaging::GrayImage;

pub const FEATURE_DIM: usize = 10;

/// Degrees above this value saturate the degree feature.
pub const DEGREE_CLAMP: usize = 32;

pub type Features = [f64; FEATURE_DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGraph {
    pub width: usize,
    pub height: usize,
    pub nodes: Vec<GranularRect>,
    /// Undirected edges `(i, j)` with `i < j`, sorted lexicographically.
    pub edges: Vec<(usize, usize)>,
    pub features: Option<Vec<Features>>,
}

impl ImageGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn compute_features(&self) -> Vec<Features> {
        self.nodes
            .iter()
            .zip(self.degrees())
            .map(|(rect, deg)| node_feature_vector(rect, deg, self.width, self.height))
            .collect()
    }

    /// Recomputes the feature matrix in place.
    pub fn refresh_features(&mut self) {
        self.features = Some(self.compute_features());
    }

    /// Feature rows, computed on the fly when the graph carries none.
    pub fn features_or_compute(&self) -> Vec<Features> {
        match &self.features {
            Some(f) => f.clone(),
            None => self.compute_features(),
        }
    }

    /// Average number of rectangles covering a pixel.
    pub fn coverage_redundancy(&self) -> f64 {
        let total: usize = self.nodes.iter().map(GranularRect::area).sum();
        total as f64 / (self.width * self.height) as f64
    }
}

/// True iff the two closed pixel rectangles share at least one pixel.
#[inline]
pub fn rect_overlap(a: &GranularRect, b: &GranularRect) -> bool {
    a.cx.abs_diff(b.cx) <= a.rx + b.rx && a.cy.abs_diff(b.cy) <= a.ry + b.ry
}

/// Stabbing index over compressed y coordinates: a segment tree whose nodes
/// hold the intervals they canonically cover. Removal is lazy; dead entries
/// are dropped the next time their node is visited.
struct StabbingTree {
    size: usize,
    buckets: Vec<Vec<usize>>,
}

impl StabbingTree {
    fn new(size: usize) -> Self {
        Self {
            size,
            buckets: vec![Vec::new(); 4 * size.max(1)],
        }
    }

    fn insert(&mut self, lo: usize, hi: usize, item: usize) {
        self.insert_at(1, 0, self.size - 1, lo, hi, item);
    }

    fn insert_at(&mut self, node: usize, start: usize, end: usize, lo: usize, hi: usize, item: usize) {
        if hi < start || end < lo {
            return;
        }
        if lo <= start && end <= hi {
            self.buckets[node].push(item);
            return;
        }
        let mid = (start + end) / 2;
        self.insert_at(2 * node, start, mid, lo, hi, item);
        self.insert_at(2 * node + 1, mid + 1, end, lo, hi, item);
    }

    fn stab(&mut self, point: usize, alive: &[bool], out: &mut Vec<usize>) {
        let (mut node, mut start, mut end) = (1, 0, self.size - 1);
        loop {
            let bucket = &mut self.buckets[node];
            bucket.retain(|&i| alive[i]);
            out.extend_from_slice(bucket);
            if start == end {
                break;
            }
            let mid = (start + end) / 2;
            if point <= mid {
                node *= 2;
                end = mid;
            } else {
                node = 2 * node + 1;
                start = mid + 1;
            }
        }
    }
}

/// All overlapping pairs, sorted lexicographically.
///
/// Sweeps rectangles by left edge. Active rectangles are retired once their
/// right edge falls behind the sweep. Among active ones, a y-interval
/// `[a, b]` meets the query `[c, d]` iff it contains `c` (answered by the
/// stabbing tree) or starts inside `(c, d]` (answered by an ordered set of
/// start points). The two cases are disjoint, so each pair is reported once.
pub fn build_edges(rects: &[GranularRect]) -> Vec<(usize, usize)> {
    if rects.len() < 2 {
        return Vec::new();
    }
    let mut ys: Vec<usize> = rects.iter().flat_map(|r| [r.y0(), r.y1()]).collect();
    ys.sort_unstable();
    ys.dedup();
    let rank = |y: usize| ys.binary_search(&y).expect("coordinate was indexed");

    let mut order: Vec<usize> = (0..rects.len()).collect();
    order.sort_unstable_by_key(|&i| (rects[i].x0(), i));

    let mut tree = StabbingTree::new(ys.len());
    let mut starts: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut retire: BinaryHeap<Reverse<(usize, usize)>> = BinaryHeap::new();
    let mut alive = vec![false; rects.len()];
    let mut hits = Vec::new();
    let mut edges = Vec::new();

    for &i in &order {
        let r = &rects[i];
        while let Some(&Reverse((x1, j))) = retire.peek() {
            if x1 >= r.x0() {
                break;
            }
            retire.pop();
            alive[j] = false;
            starts.remove(&(rank(rects[j].y0()), j));
        }

        let (lo, hi) = (rank(r.y0()), rank(r.y1()));
        hits.clear();
        tree.stab(lo, &alive, &mut hits);
        if hi > lo {
            hits.extend(starts.range((lo + 1, 0)..=(hi, usize::MAX)).map(|&(_, j)| j));
        }
        edges.extend(hits.iter().map(|&j| (i.min(j), i.max(j))));

        alive[i] = true;
        tree.insert(lo, hi, i);
        starts.insert((lo, i));
        retire.push(Reverse((r.x1(), i)));
    }
    edges.sort_unstable();
    edges
}

/// Fixed-width node descriptor:
/// `[cx/w, cy/h, width/w, height/h, mean/255, var/255^2, max/255, min/255, purity, min(deg, 32)/32]`.
pub fn node_feature_vector(rect: &GranularRect, degree: usize, width: usize, height: usize) -> Features {
    let (w, h) = (width as f64, height as f64);
    [
        rect.cx as f64 / w,
        rect.cy as f64 / h,
        rect.width() as f64 / w,
        rect.height() as f64 / h,
        rect.v_mean / 255.0,
        rect.variance / (255.0 * 255.0),
        f64::from(rect.v_max) / 255.0,
        f64::from(rect.v_min) / 255.0,
        rect.purity,
        degree.min(DEGREE_CLAMP) as f64 / DEGREE_CLAMP as f64,
    ]
}

/// Partition, connect and describe one image.
pub fn build_graph(img: &GrayImage, params: &SearchParams) -> Result<ImageGraph, GranularError> {
    let nodes = granular::partition(img, params)?;
    let edges = build_edges(&nodes);
    let mut graph = ImageGraph {
        width: img.width(),
        height: img.height(),
        nodes,
        edges,
        features: None,
    };
    graph.refresh_features();
    Ok(graph)
}
