//! Raster inputs: dataset decoders, luminance conversion, Gaussian smoothing
//! and Sobel gradient magnitude.
//!
//! Everything here is a pure function over immutable buffers. Borders are
//! handled by edge replication throughout.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use thiserror::Error;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("bad {what} magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        what: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("truncated {what}: need {expected} bytes, have {found}")]
    Truncated {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("invalid image dimensions {width}x{height} for {len} values")]
    Dimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("gaussian sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("no images found under {0}")]
    EmptyDirectory(PathBuf),
    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(ImagingError::Dimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ImagingError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self, ImagingError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }
}

/// Real-valued raster produced by smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(ImagingError::Dimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl From<&GrayImage> for FloatImage {
    fn from(img: &GrayImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|&v| f64::from(v)).collect(),
        }
    }
}

/// Interleaved 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[u8; 3]>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(ImagingError::Dimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from three channel planes (R plane, G plane, B plane).
    pub fn from_planes(width: usize, height: usize, planes: &[u8]) -> Result<Self, ImagingError> {
        let n = width * height;
        if planes.len() != 3 * n {
            return Err(ImagingError::Dimensions {
                width,
                height,
                len: planes.len() / 3,
            });
        }
        let data = (0..n)
            .map(|i| [planes[i], planes[n + i], planes[2 * n + i]])
            .collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.data
    }
}

/// Per-pixel gradient magnitudes, same shape as the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    width: usize,
    height: usize,
    magnitudes: Vec<f64>,
}

impl GradientMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.magnitudes[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.magnitudes
    }
}

/// Gradient operator used for seed ordering. Only Sobel exists today.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientOperator {
    #[default]
    Sobel,
}

pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let data = img
        .data
        .iter()
        .map(|&[r, g, b]| {
            let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Normalized 1D Gaussian weights with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>, ImagingError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ImagingError::InvalidSigma(sigma));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut weights: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_smooth(img: &GrayImage, sigma: f64) -> Result<FloatImage, ImagingError> {
    let kernel = gaussian_kernel(sigma)?;
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (img.width, img.height);

    let mut horizontal = vec![0.0; w * h];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, weight) in kernel.iter().enumerate() {
                let sx = clamp_index(x as isize + k as isize - radius, w);
                acc += weight * f64::from(row[sx]);
            }
            horizontal[y * w + x] = acc;
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, weight) in kernel.iter().enumerate() {
                let sy = clamp_index(y as isize + k as isize - radius, h);
                acc += weight * horizontal[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    Ok(FloatImage {
        width: w,
        height: h,
        data: out,
    })
}

/// 3x3 Sobel responses with replicated borders, combined as the L2 norm.
pub fn gradient_magnitude(img: &FloatImage) -> GradientMap {
    let (w, h) = (img.width, img.height);
    let at = |x: isize, y: isize| img.data[clamp_index(y, h) * w + clamp_index(x, w)];
    let mut magnitudes = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            magnitudes.push((gx * gx + gy * gy).sqrt());
        }
    }
    GradientMap {
        width: w,
        height: h,
        magnitudes,
    }
}

pub fn gradient(img: &FloatImage, operator: GradientOperator) -> GradientMap {
    match operator {
        GradientOperator::Sobel => gradient_magnitude(img),
    }
}

fn read_be_u32(bytes: &[u8], offset: usize, what: &'static str) -> Result<u32, ImagingError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(ImagingError::Truncated {
            what,
            expected: offset + 4,
            found: bytes.len(),
        })
}

/// Decodes an IDX image file and its label file into labelled images.
pub fn decode_mnist_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Vec<(GrayImage, u8)>, ImagingError> {
    let magic = read_be_u32(image_bytes, 0, "idx image header")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(ImagingError::BadMagic {
            what: "idx image",
            expected: IDX_IMAGE_MAGIC,
            found: magic,
        });
    }
    let magic = read_be_u32(label_bytes, 0, "idx label header")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(ImagingError::BadMagic {
            what: "idx label",
            expected: IDX_LABEL_MAGIC,
            found: magic,
        });
    }
    let count = read_be_u32(image_bytes, 4, "idx image header")? as usize;
    let rows = read_be_u32(image_bytes, 8, "idx image header")? as usize;
    let cols = read_be_u32(image_bytes, 12, "idx image header")? as usize;
    let label_count = read_be_u32(label_bytes, 4, "idx label header")? as usize;
    if count != label_count {
        return Err(ImagingError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let stride = rows * cols;
    let need = 16 + count * stride;
    if image_bytes.len() < need {
        return Err(ImagingError::Truncated {
            what: "idx image payload",
            expected: need,
            found: image_bytes.len(),
        });
    }
    if label_bytes.len() < 8 + count {
        return Err(ImagingError::Truncated {
            what: "idx label payload",
            expected: 8 + count,
            found: label_bytes.len(),
        });
    }

    let pixels = &image_bytes[16..need];
    let labels = &label_bytes[8..8 + count];
    if count == 0 {
        return Ok(Vec::new());
    }
    pixels
        .chunks_exact(stride)
        .zip(labels)
        .map(|(chunk, &label)| Ok((GrayImage::new(cols, rows, chunk.to_vec())?, label)))
        .collect()
}

/// Inverse of [`decode_mnist_idx`]; all images must share one shape.
pub fn encode_mnist_idx(records: &[(GrayImage, u8)]) -> Result<(Vec<u8>, Vec<u8>), ImagingError> {
    let (rows, cols) = records
        .first()
        .map(|(img, _)| (img.height, img.width))
        .unwrap_or((28, 28));
    let mut images = Vec::with_capacity(16 + records.len() * rows * cols);
    images.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    images.extend_from_slice(&(records.len() as u32).to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    let mut labels = Vec::with_capacity(8 + records.len());
    labels.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(records.len() as u32).to_be_bytes());
    for (img, label) in records {
        if img.height != rows || img.width != cols {
            return Err(ImagingError::Dimensions {
                width: img.width,
                height: img.height,
                len: img.data.len(),
            });
        }
        images.extend_from_slice(&img.data);
        labels.push(*label);
    }
    Ok((images, labels))
}

/// Decodes CIFAR-10 binary batches: 1 label byte then 3072 channel-planar bytes.
pub fn decode_cifar10(bytes: &[u8]) -> Result<Vec<(RgbImage, u8)>, ImagingError> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(ImagingError::Truncated {
            what: "cifar-10 record",
            expected: (bytes.len() / CIFAR_RECORD_LEN + 1) * CIFAR_RECORD_LEN,
            found: bytes.len(),
        });
    }
    bytes
        .chunks_exact(CIFAR_RECORD_LEN)
        .map(|rec| Ok((RgbImage::from_planes(CIFAR_SIDE, CIFAR_SIDE, &rec[1..])?, rec[0])))
        .collect()
}

/// Reads a file, transparently inflating it when it carries a gzip header.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, ImagingError> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Loads a PNG or PGM file and reduces it to luminance.
pub fn load_image_file(path: &Path) -> Result<GrayImage, ImagingError> {
    let decoded = image::open(path).map_err(|source| ImagingError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        image::DynamicImage::ImageLuma8(buf) => GrayImage::new(w, h, buf.into_raw()),
        other => {
            let rgb = other.into_rgb8();
            let data = rgb.pixels().map(|p| p.0).collect();
            Ok(to_grayscale(&RgbImage::new(w, h, data)?))
        }
    }
}

fn is_supported_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "pgm" | "ppm" | "pnm")
    )
}

/// Walks `root/<class>/<file>`; classes are numbered by sorted directory name,
/// files within a class are visited in sorted order.
pub fn load_image_dir(root: &Path) -> Result<(Vec<String>, Vec<(GrayImage, u16)>), ImagingError> {
    let mut classes: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();

    let mut names = Vec::with_capacity(classes.len());
    let mut records = Vec::new();
    for (label, dir) in classes.iter().enumerate() {
        names.push(dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_supported_image(p))
            .collect();
        files.sort();
        for file in files {
            records.push((load_image_file(&file)?, label as u16));
        }
    }
    if records.is_empty() {
        return Err(ImagingError::EmptyDirectory(root.to_path_buf()));
    }
    Ok((names, records))
}
