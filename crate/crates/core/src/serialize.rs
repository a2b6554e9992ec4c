//! Persistence: canonical JSON for single graphs and the GRIG binary
//! container for labelled datasets.
//!
//! GRIG layout (all integers little-endian):
//!
//! ```text
//! header   "GRIG" | version u16 = 1 | feature_dim u16 | class_count u16 | reserved u16 = 0 | graph_count u32
//! graph    label u16 | node_count u32 | edge_count u32
//!          node_count * feature_dim f32 (row-major) | edge_count * (src u32, dst u32) with src < dst
//! trailer  CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Run metadata (source, parameters, timestamp) is kept out of the
//! checksummed bytes, in a JSON sidecar next to the container.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::granular::SearchParams;
use crate::graph::ImageGraph;

pub const GRIG_MAGIC: [u8; 4] = *b"GRIG";
pub const GRIG_VERSION: u16 = 1;
pub const GRIG_HEADER_LEN: usize = 16;
const CRC_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("malformed graph document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("node {index} has id {id}; ids must be 0..n in order")]
    NodeId { index: usize, id: usize },
    #[error("node {index} does not fit in the {width}x{height} canvas")]
    NodeOutOfBounds { index: usize, width: usize, height: usize },
    #[error("node {index} has inconsistent statistics: {reason}")]
    NodeStats { index: usize, reason: &'static str },
    #[error("edge {edge} references node {node}, but the graph has {nodes} nodes")]
    DanglingEdge { edge: usize, node: usize, nodes: usize },
    #[error("edge {edge} is not strictly ordered (i < j)")]
    EdgeOrder { edge: usize },
    #[error("edge {edge} is out of lexicographic order or duplicated")]
    EdgeSequence { edge: usize },
    #[error("feature matrix has {rows} rows for {nodes} nodes")]
    FeatureRows { rows: usize, nodes: usize },
    #[error("canvas must be at least 1x1, got {width}x{height}")]
    Canvas { width: usize, height: usize },
}

fn validate_graph(g: &ImageGraph) -> Result<(), JsonError> {
    if g.width == 0 || g.height == 0 {
        return Err(JsonError::Canvas {
            width: g.width,
            height: g.height,
        });
    }
    for (index, n) in g.nodes.iter().enumerate() {
        if n.id != index {
            return Err(JsonError::NodeId { index, id: n.id });
        }
        if !n.fits(g.width, g.height) {
            return Err(JsonError::NodeOutOfBounds {
                index,
                width: g.width,
                height: g.height,
            });
        }
        let reason = if !(n.purity > 0.0 && n.purity <= 1.0) {
            Some("purity outside (0, 1]")
        } else if !(n.variance >= 0.0) {
            Some("negative variance")
        } else if !(f64::from(n.v_min) <= n.v_mean && n.v_mean <= f64::from(n.v_max)) {
            Some("mean outside [min, max]")
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(JsonError::NodeStats { index, reason });
        }
    }
    let nodes = g.nodes.len();
    for (edge, &(i, j)) in g.edges.iter().enumerate() {
        for node in [i, j] {
            if node >= nodes {
                return Err(JsonError::DanglingEdge { edge, node, nodes });
            }
        }
        if i >= j {
            return Err(JsonError::EdgeOrder { edge });
        }
        if edge > 0 && g.edges[edge - 1] >= (i, j) {
            return Err(JsonError::EdgeSequence { edge });
        }
    }
    if let Some(f) = &g.features {
        if f.len() != nodes {
            return Err(JsonError::FeatureRows { rows: f.len(), nodes });
        }
    }
    Ok(())
}

pub fn graph_to_json(g: &ImageGraph) -> String {
    let mut text = serde_json::to_string_pretty(g).expect("graph serialization is infallible");
    text.push('\n');
    text
}

pub fn graph_from_json(text: &str) -> Result<ImageGraph, JsonError> {
    let g: ImageGraph = serde_json::from_str(text)?;
    validate_graph(&g)?;
    Ok(g)
}

#[derive(Debug, Error)]
pub enum GrigError {
    #[error("not a GRIG file (magic {0:02x?})")]
    BadMagic([u8; 4]),
    #[error("unsupported GRIG version {0}")]
    UnsupportedVersion(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("truncated GRIG data: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{0} unexpected bytes after the last graph")]
    TrailingBytes(usize),
    #[error("reserved header field is {0}, expected 0")]
    Reserved(u16),
    #[error("graph {graph}: {reason}")]
    Invariant { graph: usize, reason: String },
    #[error("dataset field overflows the format: {0}")]
    Overflow(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One labelled graph as stored in the container.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphRecord {
    pub label: u16,
    pub node_count: usize,
    /// `node_count * feature_dim` values, row-major.
    pub features: Vec<f32>,
    pub edges: Vec<(u32, u32)>,
}

impl GraphRecord {
    pub fn from_graph(g: &ImageGraph, label: u16) -> Self {
        let features = g
            .features_or_compute()
            .iter()
            .flat_map(|row| row.iter().map(|&v| v as f32))
            .collect();
        Self {
            label,
            node_count: g.node_count(),
            features,
            edges: g.edges.iter().map(|&(i, j)| (i as u32, j as u32)).collect(),
        }
    }

    pub fn feature_row(&self, node: usize, feature_dim: usize) -> &[f32] {
        &self.features[node * feature_dim..(node + 1) * feature_dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    pub feature_dim: u16,
    pub class_count: u16,
    pub graphs: Vec<GraphRecord>,
}

impl GraphDataset {
    pub fn new(feature_dim: u16, class_count: u16) -> Self {
        Self {
            feature_dim,
            class_count,
            graphs: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), GrigError> {
        let dim = usize::from(self.feature_dim);
        for (graph, rec) in self.graphs.iter().enumerate() {
            let fail = |reason: String| Err(GrigError::Invariant { graph, reason });
            if rec.label >= self.class_count {
                return fail(format!("label {} >= class count {}", rec.label, self.class_count));
            }
            if rec.features.len() != rec.node_count * dim {
                return fail(format!(
                    "{} feature values for {} nodes of dimension {dim}",
                    rec.features.len(),
                    rec.node_count
                ));
            }
            for (k, &(src, dst)) in rec.edges.iter().enumerate() {
                if src >= dst {
                    return fail(format!("edge {k} ({src}, {dst}) is not ordered src < dst"));
                }
                if dst as usize >= rec.node_count {
                    return fail(format!("edge {k} references node {dst} of {}", rec.node_count));
                }
            }
        }
        Ok(())
    }
}

/// Serializes a dataset into GRIG bytes, checksum included.
pub fn encode_dataset(ds: &GraphDataset) -> Result<Vec<u8>, GrigError> {
    ds.validate()?;
    let graph_count = u32::try_from(ds.graphs.len()).map_err(|_| GrigError::Overflow("graph count"))?;
    let mut buf = Vec::with_capacity(GRIG_HEADER_LEN + CRC_LEN);
    buf.extend_from_slice(&GRIG_MAGIC);
    buf.extend_from_slice(&GRIG_VERSION.to_le_bytes());
    buf.extend_from_slice(&ds.feature_dim.to_le_bytes());
    buf.extend_from_slice(&ds.class_count.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&graph_count.to_le_bytes());
    for rec in &ds.graphs {
        let nodes = u32::try_from(rec.node_count).map_err(|_| GrigError::Overflow("node count"))?;
        let edges = u32::try_from(rec.edges.len()).map_err(|_| GrigError::Overflow("edge count"))?;
        buf.extend_from_slice(&rec.label.to_le_bytes());
        buf.extend_from_slice(&nodes.to_le_bytes());
        buf.extend_from_slice(&edges.to_le_bytes());
        for v in &rec.features {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for &(src, dst) in &rec.edges {
            buf.extend_from_slice(&src.to_le_bytes());
            buf.extend_from_slice(&dst.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GrigError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(GrigError::Truncated {
            needed: self.pos.saturating_add(n),
            available: self.bytes.len(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, GrigError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, GrigError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses and fully validates GRIG bytes. Nothing is returned unless the
/// checksum and every invariant hold.
pub fn decode_dataset(bytes: &[u8]) -> Result<GraphDataset, GrigError> {
    if bytes.len() < GRIG_HEADER_LEN + CRC_LEN {
        if bytes.len() >= 4 && bytes[..4] != GRIG_MAGIC {
            return Err(GrigError::BadMagic([bytes[0], bytes[1], bytes[2], bytes[3]]));
        }
        return Err(GrigError::Truncated {
            needed: GRIG_HEADER_LEN + CRC_LEN,
            available: bytes.len(),
        });
    }
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic != GRIG_MAGIC {
        return Err(GrigError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != GRIG_VERSION {
        return Err(GrigError::UnsupportedVersion(version));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - CRC_LEN);
    let stored = u32::from_le_bytes([trailer[0], trailer[1], trailer[2], trailer[3]]);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(GrigError::Checksum { stored, computed });
    }

    let mut cur = Cursor { bytes: body, pos: 6 };
    let feature_dim = cur.u16()?;
    let class_count = cur.u16()?;
    let reserved = cur.u16()?;
    if reserved != 0 {
        return Err(GrigError::Reserved(reserved));
    }
    let graph_count = cur.u32()? as usize;
    let dim = usize::from(feature_dim);

    let mut graphs = Vec::with_capacity(graph_count.min(body.len() / 10));
    for _ in 0..graph_count {
        let label = cur.u16()?;
        let node_count = cur.u32()? as usize;
        let edge_count = cur.u32()? as usize;
        let raw = cur.take(node_count.saturating_mul(dim).saturating_mul(4))?;
        let features = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let raw = cur.take(edge_count.saturating_mul(8))?;
        let edges = raw
            .chunks_exact(8)
            .map(|b| {
                (
                    u32::from_le_bytes([b[0], b[1], b[2], b[3]]),
                    u32::from_le_bytes([b[4], b[5], b[6], b[7]]),
                )
            })
            .collect();
        graphs.push(GraphRecord {
            label,
            node_count,
            features,
            edges,
        });
    }
    if cur.pos != body.len() {
        return Err(GrigError::TrailingBytes(body.len() - cur.pos));
    }
    let ds = GraphDataset {
        feature_dim,
        class_count,
        graphs,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn write_dataset<W: Write>(ds: &GraphDataset, mut sink: W) -> Result<(), GrigError> {
    sink.write_all(&encode_dataset(ds)?)?;
    sink.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut source: R) -> Result<GraphDataset, GrigError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode_dataset(&bytes)
}

/// Provenance stored beside a GRIG file as `<file>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub source: String,
    pub format: String,
    pub params: SearchParams,
    /// Seconds since the Unix epoch.
    pub created: u64,
    #[serde(default)]
    pub image_width: Option<usize>,
    #[serde(default)]
    pub image_height: Option<usize>,
    #[serde(default)]
    pub class_names: Vec<String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn write_metadata(path: &Path, meta: &DatasetMetadata) -> io::Result<()> {
    let text = serde_json::to_string_pretty(meta).map_err(io::Error::other)?;
    fs::write(sidecar_path(path), text + "\n")
}

/// Reads the sidecar if one exists next to `path`.
pub fn read_metadata(path: &Path) -> io::Result<Option<DatasetMetadata>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(side)?;
    serde_json::from_str(&text).map(Some).map_err(io::Error::other)
}
