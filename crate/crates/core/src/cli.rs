//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or invalid parameters, 3 I/O failure,
//! 4 malformed input data, 5 verification found violations.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::bench;
use crate::granular::{GranularError, SearchParams, ThresholdSchedule};
use crate::graph::build_graph;
use crate::imaging::{self, ImagingError};
use crate::ops::{self, FlipConvention, OpsError};
use crate::pipeline::{self, RecordIssue, SourceFormat};
use crate::serialize::{self, DatasetMetadata, GrigError, JsonError};
use crate::viz;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_FORMAT: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "grig", version, about = "Granular-rectangle image graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Default, Args)]
struct ParamArgs {
    /// Initial purity threshold in (0, 1] [default: 0.85]
    #[arg(long)]
    purity: Option<f64>,
    /// Gray-level difference marking a pixel abnormal [default: 10]
    #[arg(long)]
    thr1: Option<f64>,
    /// Variance ceiling for a region [default: 400]
    #[arg(long = "var-thr")]
    var_thr: Option<f64>,
    /// Purity threshold multiplier per attempt [default: 1.005]
    #[arg(long)]
    growth: Option<f64>,
    /// Gaussian sigma for gradient computation [default: 1.0]
    #[arg(long)]
    sigma: Option<f64>,
    /// Carry the purity threshold across regions instead of resetting it
    #[arg(long)]
    global_schedule: bool,
}

impl ParamArgs {
    fn resolve(&self, base: SearchParams) -> Result<SearchParams, CliError> {
        let params = SearchParams {
            p_thr: self.purity.unwrap_or(base.p_thr),
            thr1: self.thr1.unwrap_or(base.thr1),
            var_thr: self.var_thr.unwrap_or(base.var_thr),
            growth: self.growth.unwrap_or(base.growth),
            sigma: self.sigma.unwrap_or(base.sigma),
            schedule: if self.global_schedule {
                ThresholdSchedule::Global
            } else {
                base.schedule
            },
            gradient: base.gradient,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Args)]
struct SourceArgs {
    #[arg(long, value_enum)]
    format: SourceFormat,
    /// IDX image file, CIFAR-10 batch file or directory, or class-per-subdirectory image tree
    #[arg(long)]
    input: PathBuf,
    /// IDX label file (inferred from the image file name when omitted)
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Only use the first N records
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert an image dataset into a GRIG file
    Convert {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        /// Worker threads
        #[arg(long, env = "GRIG_JOBS", default_value_t = 1)]
        jobs: usize,
    },
    /// Convert one image into a JSON graph
    Graph {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Apply a geometric or sampling operation to a JSON graph
    #[command(group(ArgGroup::new("op").required(true).args(["rotate", "flip_h", "flip_v", "upsample", "downsample"])))]
    Transform {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rotation angle in degrees
        #[arg(long, allow_hyphen_values = true)]
        rotate: Option<f64>,
        /// Rotation center "X,Y" (defaults to the canvas center)
        #[arg(long, requires = "rotate", allow_hyphen_values = true)]
        center: Option<String>,
        #[arg(long)]
        flip_h: bool,
        #[arg(long)]
        flip_v: bool,
        /// Use the literal `h - y` / `w - x` flip, dropping nodes that leave the canvas
        #[arg(long)]
        raw_flip: bool,
        /// Add K random sub-rectangle nodes
        #[arg(long, requires = "seed")]
        upsample: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Merge K closest neighbor pairs
        #[arg(long)]
        downsample: Option<usize>,
    },
    /// Extract and re-base the part of a graph centered inside a region
    Subgraph {
        #[arg(long = "in")]
        input: PathBuf,
        /// Inclusive region "x0,y0,x1,y1"
        #[arg(long)]
        rect: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a JSON graph as SVG
    Viz {
        #[arg(long = "in")]
        input: PathBuf,
        /// Source image drawn underneath
        #[arg(long)]
        image: Option<PathBuf>,
        /// CSV of graph_index,node_id,score used to shade nodes
        #[arg(long)]
        attention: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        graph_index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a GRIG file
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Re-derive a GRIG file from its source with the reference oracles
    Verify {
        /// GRIG file to check
        #[arg(long = "in")]
        dataset: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, env = "GRIG_JOBS", default_value_t = 1)]
        jobs: usize,
    },
    /// Time conversion of synthetic images and fit the scaling exponent
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[command(flatten)]
        params: ParamArgs,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Format(_) => EXIT_FORMAT,
            CliError::Verification(_) => EXIT_VERIFY,
        }
    }
}

impl From<ImagingError> for CliError {
    fn from(e: ImagingError) -> Self {
        match e {
            ImagingError::Io(_) => CliError::Io(e.to_string()),
            ImagingError::InvalidSigma(_) => CliError::Usage(e.to_string()),
            _ => CliError::Format(e.to_string()),
        }
    }
}

impl From<GranularError> for CliError {
    fn from(e: GranularError) -> Self {
        match e {
            GranularError::Imaging(inner) => inner.into(),
            GranularError::InvalidParams(_) => CliError::Usage(e.to_string()),
            GranularError::OutOfBounds { .. } => CliError::Format(e.to_string()),
        }
    }
}

impl From<GrigError> for CliError {
    fn from(e: GrigError) -> Self {
        match e {
            GrigError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Format(e.to_string()),
        }
    }
}

impl From<JsonError> for CliError {
    fn from(e: JsonError) -> Self {
        CliError::Format(e.to_string())
    }
}

impl From<OpsError> for CliError {
    fn from(e: OpsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn parse_list<T: std::str::FromStr>(text: &str, n: usize, what: &str) -> Result<Vec<T>, CliError> {
    let items: Result<Vec<T>, _> = text.split(',').map(|s| s.trim().parse::<T>()).collect();
    match items {
        Ok(v) if v.len() == n => Ok(v),
        _ => Err(CliError::Usage(format!("{what} expects {n} comma-separated numbers, got {text:?}"))),
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn load_graph(path: &Path) -> Result<crate::graph::ImageGraph, CliError> {
    Ok(serialize::graph_from_json(&read_text(path)?)?)
}

fn write_graph(path: &Path, g: &crate::graph::ImageGraph) -> Result<(), CliError> {
    write_bytes(path, serialize::graph_to_json(g).as_bytes())
}

fn summarize(values: &mut [usize]) -> String {
    if values.is_empty() {
        return "n/a".into();
    }
    values.sort_unstable();
    let mean = values.iter().sum::<usize>() as f64 / values.len() as f64;
    format!(
        "min {} / median {} / mean {:.2} / max {}",
        values[0],
        values[values.len() / 2],
        mean,
        values[values.len() - 1]
    )
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Convert {
            source,
            out,
            params,
            jobs,
        } => {
            let params = params.resolve(SearchParams::default())?;
            let src = pipeline::load_source(source.format, &source.input, source.labels.as_deref(), source.limit)?;
            let ds = pipeline::convert_source(&src, &params, jobs)?;
            let file = fs::File::create(&out).map_err(io_err(&out))?;
            serialize::write_dataset(&ds, std::io::BufWriter::new(file))?;
            let size = src.uniform_size();
            let meta = DatasetMetadata {
                source: source.input.display().to_string(),
                format: source.format.name().to_string(),
                params,
                created: unix_now(),
                image_width: size.map(|s| s.0),
                image_height: size.map(|s| s.1),
                class_names: src.class_names,
            };
            serialize::write_metadata(&out, &meta).map_err(io_err(&out))?;
            println!("wrote {} graphs to {}", ds.graphs.len(), out.display());
            Ok(())
        }
        Command::Graph { input, out, params } => {
            let params = params.resolve(SearchParams::default())?;
            let img = imaging::load_image_file(&input)?;
            let g = build_graph(&img, &params)?;
            write_graph(&out, &g)?;
            println!("{} nodes, {} edges", g.node_count(), g.edge_count());
            Ok(())
        }
        Command::Transform {
            input,
            out,
            rotate,
            center,
            flip_h,
            flip_v,
            raw_flip,
            upsample,
            seed,
            downsample,
        } => {
            let g = load_graph(&input)?;
            let convention = if raw_flip {
                FlipConvention::Raw
            } else {
                FlipConvention::PixelGrid
            };
            let result = if let Some(degrees) = rotate {
                let center = match center {
                    Some(text) => {
                        let c: Vec<f64> = parse_list(&text, 2, "--center")?;
                        (c[0], c[1])
                    }
                    None => ops::canvas_center(&g),
                };
                ops::rotate(&g, degrees, center)
            } else if flip_h {
                ops::flip_horizontal_with(&g, convention)
            } else if flip_v {
                ops::flip_vertical_with(&g, convention)
            } else if let Some(k) = upsample {
                ops::upsample(&g, k, seed.unwrap_or(0))?
            } else if let Some(k) = downsample {
                ops::downsample(&g, k)?
            } else {
                unreachable!("clap requires one operation")
            };
            write_graph(&out, &result)
        }
        Command::Subgraph { input, rect, out } => {
            let g = load_graph(&input)?;
            let r: Vec<usize> = parse_list(&rect, 4, "--rect")?;
            let sub = ops::extract_subgraph(&g, (r[0], r[1], r[2], r[3]))?;
            write_graph(&out, &sub)
        }
        Command::Viz {
            input,
            image,
            attention,
            graph_index,
            out,
        } => {
            let g = load_graph(&input)?;
            let background = image.as_deref().map(imaging::load_image_file).transpose()?;
            if let Some(img) = &background {
                if (img.width(), img.height()) != (g.width, g.height) {
                    return Err(CliError::Usage(format!(
                        "image is {}x{} but the graph canvas is {}x{}",
                        img.width(),
                        img.height(),
                        g.width,
                        g.height
                    )));
                }
            }
            let scores = match attention {
                Some(path) => Some(viz::parse_attention_csv(&read_text(&path)?, graph_index).map_err(CliError::Format)?),
                None => None,
            };
            write_bytes(&out, viz::render_svg(&g, background.as_ref(), scores.as_ref()).as_bytes())
        }
        Command::Stats { input } => {
            let file = fs::File::open(&input).map_err(io_err(&input))?;
            let ds = serialize::read_dataset(std::io::BufReader::new(file))?;
            let meta = serialize::read_metadata(&input).map_err(io_err(&input))?;
            let dim = usize::from(ds.feature_dim);
            println!("graphs: {}", ds.graphs.len());
            println!("classes: {}  feature dim: {}", ds.class_count, ds.feature_dim);
            let mut per_class = vec![0usize; usize::from(ds.class_count)];
            for g in &ds.graphs {
                per_class[usize::from(g.label)] += 1;
            }
            println!("graphs per class: {per_class:?}");
            let mut nodes: Vec<usize> = ds.graphs.iter().map(|g| g.node_count).collect();
            let mut edges: Vec<usize> = ds.graphs.iter().map(|g| g.edges.len()).collect();
            println!("nodes per graph: {}", summarize(&mut nodes));
            println!("edges per graph: {}", summarize(&mut edges));
            if dim == crate::graph::FEATURE_DIM && !ds.graphs.is_empty() {
                // Entries 2 and 3 are the region's width and height as canvas fractions.
                let mut k_total = 0.0;
                let mut frac_total = 0.0;
                let mut counted = 0usize;
                for g in ds.graphs.iter().filter(|g| g.node_count > 0) {
                    let covered: f64 = (0..g.node_count)
                        .map(|n| {
                            let row = g.feature_row(n, dim);
                            f64::from(row[2]) * f64::from(row[3])
                        })
                        .sum();
                    k_total += covered;
                    frac_total += covered / g.node_count as f64;
                    counted += 1;
                }
                let k = k_total / counted.max(1) as f64;
                let frac = frac_total / counted.max(1) as f64;
                println!("mean regions per pixel (k): {k:.4}");
                match meta.as_ref().and_then(|m| Some(m.image_width? * m.image_height?)) {
                    Some(pixels) => println!("mean pixels per region: {:.2}", frac * pixels as f64),
                    None => println!("mean region size: {:.5} of the canvas", frac),
                }
            }
            Ok(())
        }
        Command::Verify {
            dataset,
            source,
            params,
            jobs,
        } => {
            let file = fs::File::open(&dataset).map_err(io_err(&dataset))?;
            let ds = serialize::read_dataset(std::io::BufReader::new(file))?;
            let meta = serialize::read_metadata(&dataset).map_err(io_err(&dataset))?;
            let base = meta.map(|m| m.params).unwrap_or_default();
            let params = params.resolve(base)?;
            let limit = source.limit.or(Some(ds.graphs.len()));
            let src = pipeline::load_source(source.format, &source.input, source.labels.as_deref(), limit)?;
            let summary = pipeline::verify_dataset(&src, &ds, &params, jobs);
            for failure in summary.failures.iter().take(50) {
                for issue in &failure.issues {
                    match issue {
                        RecordIssue::Partition(v) => eprintln!("graph {}: {v}", failure.index),
                        other => eprintln!("graph {}: {other:?}", failure.index),
                    }
                }
            }
            println!(
                "verified {} graphs ({} regions): {} violations",
                summary.graphs,
                summary.rects,
                summary.violation_count()
            );
            if summary.is_clean() {
                Ok(())
            } else {
                Err(CliError::Verification(format!(
                    "{} of {} graphs failed verification",
                    summary.failures.len(),
                    summary.graphs
                )))
            }
        }
        Command::Bench { sizes, trials, params } => {
            let params = params.resolve(SearchParams::default())?;
            if sizes.is_empty() || sizes.contains(&0) {
                return Err(CliError::Usage("--sizes must list positive sizes".into()));
            }
            let report = bench::run(&sizes, trials, &params)?;
            println!("{:>6} {:>9} {:>8} {:>8} {:>11} {:>11}", "size", "pixels", "nodes", "edges", "median ms", "min ms");
            for row in &report.rows {
                println!(
                    "{:>6} {:>9} {:>8} {:>8} {:>11.3} {:>11.3}",
                    row.size,
                    row.pixels,
                    row.nodes,
                    row.edges,
                    row.median() * 1e3,
                    row.min() * 1e3
                );
            }
            println!("fitted exponent (time ~ N^a): a = {:.3}", report.exponent);
            Ok(())
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
