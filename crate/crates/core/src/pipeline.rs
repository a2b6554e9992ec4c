//! Dataset-level conversion and verification shared by the CLI and tests.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::granular::{self, GranularError, SearchParams};
use crate::graph::{build_edges, build_graph, ImageGraph, FEATURE_DIM};
use crate::imaging::{self, GrayImage, ImagingError};
use crate::oracle::{self, Violation};
use crate::serialize::{GraphDataset, GraphRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SourceFormat {
    Mnist,
    Cifar10,
    ImageDir,
}

impl SourceFormat {
    pub fn name(self) -> &'static str {
        match self {
            SourceFormat::Mnist => "mnist",
            SourceFormat::Cifar10 => "cifar10",
            SourceFormat::ImageDir => "image-dir",
        }
    }
}

/// Labelled grayscale images in record order.
#[derive(Debug, Clone)]
pub struct ImageSource {
    pub images: Vec<(GrayImage, u16)>,
    pub class_count: u16,
    pub class_names: Vec<String>,
}

impl ImageSource {
    /// Common image size, if every image shares one.
    pub fn uniform_size(&self) -> Option<(usize, usize)> {
        let (first, _) = self.images.first()?;
        let size = (first.width(), first.height());
        self.images
            .iter()
            .all(|(img, _)| (img.width(), img.height()) == size)
            .then_some(size)
    }
}

/// Guesses the IDX label file that pairs with an image file.
pub fn infer_label_path(images: &Path) -> Option<PathBuf> {
    let name = images.file_name()?.to_str()?;
    let swapped = name.replace("images-idx3", "labels-idx1").replace("images.idx3", "labels.idx1");
    (swapped != name).then(|| images.with_file_name(swapped))
}

pub fn load_source(
    format: SourceFormat,
    input: &Path,
    labels: Option<&Path>,
    limit: Option<usize>,
) -> Result<ImageSource, ImagingError> {
    let digits = || (0..10).map(|d: u8| d.to_string()).collect();
    let mut source = match format {
        SourceFormat::Mnist => {
            let label_path = labels.map(Path::to_path_buf).or_else(|| infer_label_path(input)).ok_or_else(|| {
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("no label file given for {}", input.display()),
                )
            })?;
            let image_bytes = imaging::read_maybe_gz(input)?;
            let label_bytes = imaging::read_maybe_gz(&label_path)?;
            let records = imaging::decode_mnist_idx(&image_bytes, &label_bytes)?;
            ImageSource {
                images: records.into_iter().map(|(img, l)| (img, u16::from(l))).collect(),
                class_count: 10,
                class_names: digits(),
            }
        }
        SourceFormat::Cifar10 => {
            let mut files = if input.is_dir() {
                let mut found: Vec<PathBuf> = std::fs::read_dir(input)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|e| e == "bin"))
                    .collect();
                found.sort();
                found
            } else {
                vec![input.to_path_buf()]
            };
            if files.is_empty() {
                return Err(ImagingError::EmptyDirectory(input.to_path_buf()));
            }
            let mut images = Vec::new();
            for file in files.drain(..) {
                let bytes = imaging::read_maybe_gz(&file)?;
                for (rgb, label) in imaging::decode_cifar10(&bytes)? {
                    images.push((imaging::to_grayscale(&rgb), u16::from(label)));
                }
            }
            ImageSource {
                images,
                class_count: 10,
                class_names: Vec::new(),
            }
        }
        SourceFormat::ImageDir => {
            let (names, images) = imaging::load_image_dir(input)?;
            ImageSource {
                images,
                class_count: names.len() as u16,
                class_names: names,
            }
        }
    };
    if let Some(limit) = limit {
        source.images.truncate(limit);
    }
    Ok(source)
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("failed to start worker pool")
}

/// Converts every image on `jobs` workers; output follows input order.
pub fn convert_images(
    images: &[(GrayImage, u16)],
    params: &SearchParams,
    jobs: usize,
) -> Result<Vec<GraphRecord>, GranularError> {
    params.validate()?;
    pool(jobs).install(|| {
        images
            .par_iter()
            .map(|(img, label)| build_graph(img, params).map(|g| GraphRecord::from_graph(&g, *label)))
            .collect()
    })
}

pub fn convert_source(source: &ImageSource, params: &SearchParams, jobs: usize) -> Result<GraphDataset, GranularError> {
    Ok(GraphDataset {
        feature_dim: FEATURE_DIM as u16,
        class_count: source.class_count,
        graphs: convert_images(&source.images, params, jobs)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordIssue {
    Partition(Violation),
    Label { stored: u16, source: u16 },
    Mismatch(&'static str),
    Edges { stored: usize, brute: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordReport {
    pub index: usize,
    pub rects: usize,
    pub issues: Vec<RecordIssue>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifySummary {
    pub graphs: usize,
    pub rects: usize,
    pub failures: Vec<RecordReport>,
}

impl VerifySummary {
    pub fn violation_count(&self) -> usize {
        self.failures.iter().map(|f| f.issues.len()).sum()
    }

    pub fn is_clean(&self) -> bool {
        self.failures.is_empty()
    }
}

fn verify_one(index: usize, img: &GrayImage, label: u16, stored: &GraphRecord, params: &SearchParams, feature_dim: usize) -> RecordReport {
    let mut issues = Vec::new();
    let rects = match granular::partition(img, params) {
        Ok(r) => r,
        Err(_) => {
            issues.push(RecordIssue::Mismatch("partition failed"));
            return RecordReport { index, rects: 0, issues };
        }
    };
    let report = oracle::verify_partition(img, params, &rects);
    issues.extend(report.violations.into_iter().map(RecordIssue::Partition));

    let brute = oracle::brute_edges(&rects);
    let edges = build_edges(&rects);
    if brute != edges {
        issues.push(RecordIssue::Edges {
            stored: edges.len(),
            brute: brute.len(),
        });
    }

    if stored.label != label {
        issues.push(RecordIssue::Label { stored: stored.label, source: label });
    }
    let graph = ImageGraph {
        width: img.width(),
        height: img.height(),
        nodes: rects,
        edges,
        features: None,
    };
    let rebuilt = GraphRecord::from_graph(&graph, label);
    if rebuilt.node_count != stored.node_count {
        issues.push(RecordIssue::Mismatch("node count"));
    } else if feature_dim != FEATURE_DIM || rebuilt.features.iter().zip(&stored.features).any(|(a, b)| a.to_bits() != b.to_bits()) {
        issues.push(RecordIssue::Mismatch("node features"));
    }
    let brute_edges: Vec<(u32, u32)> = brute.iter().map(|&(i, j)| (i as u32, j as u32)).collect();
    if brute_edges != stored.edges {
        issues.push(RecordIssue::Mismatch("edge list"));
    }
    RecordReport {
        index,
        rects: rebuilt.node_count,
        issues,
    }
}

/// Re-derives every stored graph with the oracles and compares.
pub fn verify_dataset(source: &ImageSource, ds: &GraphDataset, params: &SearchParams, jobs: usize) -> VerifySummary {
    let n = ds.graphs.len().min(source.images.len());
    let dim = usize::from(ds.feature_dim);
    let reports: Vec<RecordReport> = pool(jobs).install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let (img, label) = &source.images[i];
                verify_one(i, img, *label, &ds.graphs[i], params, dim)
            })
            .collect()
    });
    let mut summary = VerifySummary {
        graphs: n,
        rects: reports.iter().map(|r| r.rects).sum(),
        failures: reports.into_iter().filter(|r| !r.issues.is_empty()).collect(),
    };
    if ds.graphs.len() != source.images.len() && ds.graphs.len() > source.images.len() {
        summary.failures.push(RecordReport {
            index: source.images.len(),
            rects: 0,
            issues: vec![RecordIssue::Mismatch("dataset has more graphs than the image source")],
        });
    }
    summary
}
