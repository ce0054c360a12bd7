//! Target signals as coordinate/attribute datasets.
//!
//! Every loader maps its sample positions onto an evenly spaced grid over
//! `[-1, 1]` per axis (row-major, singleton axes at 0) and normalizes the
//! attributes: images to `[0, 1]`, audio to `[-1, 1]`. [`SignalDataset::denormalize`]
//! inverts the attribute mapping back to the original quantization.

pub mod pnm;
pub mod wav;

use std::io::Cursor;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use pnm::Raster;
pub use wav::Pcm16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Image,
    Audio,
    Synthetic,
}

/// Original dimensions of the signal behind a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShapeMeta {
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
    Audio {
        samples: usize,
        sample_rate: u32,
    },
    Synthetic {
        dims: Vec<usize>,
    },
}

impl ShapeMeta {
    pub fn modality(&self) -> Modality {
        match self {
            ShapeMeta::Image { .. } => Modality::Image,
            ShapeMeta::Audio { .. } => Modality::Audio,
            ShapeMeta::Synthetic { .. } => Modality::Synthetic,
        }
    }

    fn len(&self) -> usize {
        match self {
            ShapeMeta::Image { height, width, .. } => height * width,
            ShapeMeta::Audio { samples, .. } => *samples,
            ShapeMeta::Synthetic { dims } => dims.iter().product(),
        }
    }
}

/// Raw-range values recovered by [`SignalDataset::denormalize`].
#[derive(Debug, Clone, PartialEq)]
pub enum RawSignal {
    Image(Raster),
    Audio(Pcm16),
    Synthetic(Array2<f64>),
}

/// `N` coordinate/attribute pairs `(x_i, y_i)` with `x_i` in `[-1, 1]^m`
/// and `y_i` in `R^n`.
#[derive(Debug, Clone)]
pub struct SignalDataset<T> {
    coords: Array2<T>,
    attrs: Array2<T>,
    shape: ShapeMeta,
}

impl<T: Scalar> SignalDataset<T> {
    /// Builds a dataset after checking the row counts, the coordinate range
    /// and consistency with `shape`.
    pub fn new(coords: Array2<T>, attrs: Array2<T>, shape: ShapeMeta) -> Result<Self> {
        let n = coords.nrows();
        if n == 0 {
            return Err(Error::EmptySignal);
        }
        if attrs.nrows() != n {
            return Err(Error::shape(format!("{n} attribute rows"), attrs.nrows()));
        }
        if shape.len() != n {
            return Err(Error::shape(format!("{} rows from shape metadata", shape.len()), n));
        }
        let one = T::one();
        if coords.iter().any(|c| c.is_nan() || c.abs() > one) {
            return Err(Error::Config("coordinates must lie in [-1, 1]".into()));
        }
        if attrs.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("attributes"));
        }
        match shape {
            ShapeMeta::Image { channels, .. } => {
                if attrs.ncols() != channels {
                    return Err(Error::shape(format!("{channels} channels"), attrs.ncols()));
                }
                if attrs.iter().any(|&a| a < T::zero() || a > one) {
                    return Err(Error::Config("image attributes must lie in [0, 1]".into()));
                }
            }
            ShapeMeta::Audio { .. } => {
                if coords.ncols() != 1 || attrs.ncols() != 1 {
                    return Err(Error::shape(
                        "1 coordinate and 1 attribute column",
                        format!("{}x{}", coords.ncols(), attrs.ncols()),
                    ));
                }
            }
            ShapeMeta::Synthetic { ref dims } => {
                if dims.len() != coords.ncols() {
                    return Err(Error::shape(
                        format!("{} coordinate columns", dims.len()),
                        coords.ncols(),
                    ));
                }
            }
        }
        Ok(Self { coords, attrs, shape })
    }

    /// Image from interleaved 8-bit samples.
    pub fn from_raster(raster: &Raster) -> Result<Self> {
        let Raster {
            width,
            height,
            channels,
            ref data,
        } = *raster;
        if width == 0 || height == 0 {
            return Err(Error::EmptySignal);
        }
        let scale = T::lit(255.0);
        let attrs = Array2::from_shape_fn((height * width, channels), |(i, c)| {
            T::lit(data[i * channels + c] as f64) / scale
        });
        let coords = make_grid(&[height, width])?;
        Self::new(
            coords,
            attrs,
            ShapeMeta::Image {
                height,
                width,
                channels,
            },
        )
    }

    pub fn from_pcm(pcm: &Pcm16) -> Result<Self> {
        if pcm.samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        let n = pcm.samples.len();
        let scale = T::lit(32768.0);
        let one = T::one();
        let attrs = Array2::from_shape_fn((n, 1), |(i, _)| {
            (T::lit(pcm.samples[i] as f64) / scale).max(-one).min(one)
        });
        Self::new(
            make_grid(&[n])?,
            attrs,
            ShapeMeta::Audio {
                samples: n,
                sample_rate: pcm.sample_rate,
            },
        )
    }

    /// Samples `f` on a grid over `[-1, 1]^dims.len()`.
    pub fn synthetic(dims: &[usize], out_dim: usize, f: impl Fn(&[T]) -> Vec<T>) -> Result<Self> {
        let coords = make_grid::<T>(dims)?;
        let mut attrs = Array2::zeros((coords.nrows(), out_dim));
        for (i, row) in coords.outer_iter().enumerate() {
            let x: Vec<T> = row.to_vec();
            let y = f(&x);
            if y.len() != out_dim {
                return Err(Error::shape(out_dim, y.len()));
            }
            attrs.row_mut(i).assign(&ndarray::ArrayView1::from(&y));
        }
        Self::new(coords, attrs, ShapeMeta::Synthetic { dims: dims.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn in_dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.attrs.ncols()
    }

    pub fn coords(&self) -> ArrayView2<'_, T> {
        self.coords.view()
    }

    pub fn attrs(&self) -> ArrayView2<'_, T> {
        self.attrs.view()
    }

    /// The pair `(x_i, y_i)` for a zero-based index.
    pub fn pair(&self, i: usize) -> (ndarray::ArrayView1<'_, T>, ndarray::ArrayView1<'_, T>) {
        (self.coords.row(i), self.attrs.row(i))
    }

    pub fn shape(&self) -> &ShapeMeta {
        &self.shape
    }

    pub fn modality(&self) -> Modality {
        self.shape.modality()
    }

    /// Maps model-space `values` (one row per coordinate) back to the raw
    /// range of the loader: 8-bit levels for images, 16-bit PCM for audio.
    /// Out-of-range values saturate.
    pub fn denormalize(&self, values: ArrayView2<'_, T>) -> Result<RawSignal> {
        if values.dim() != self.attrs.dim() {
            return Err(Error::shape(
                format!("{:?}", self.attrs.dim()),
                format!("{:?}", values.dim()),
            ));
        }
        Ok(match self.shape {
            ShapeMeta::Image {
                height,
                width,
                channels,
            } => RawSignal::Image(Raster {
                width,
                height,
                channels,
                data: values
                    .iter()
                    .map(|v| (v.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8)
                    .collect(),
            }),
            ShapeMeta::Audio { sample_rate, .. } => RawSignal::Audio(Pcm16 {
                sample_rate,
                samples: values
                    .iter()
                    .map(|v| (v.to_f64_lossy() * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
                    .collect(),
            }),
            ShapeMeta::Synthetic { .. } => RawSignal::Synthetic(values.mapv(|v| v.to_f64_lossy())),
        })
    }
}

/// Evenly spaced row-major grid over `[-1, 1]` per axis; the last axis varies
/// fastest and a single-sample axis sits at 0.
pub fn make_grid<T: Scalar>(dims: &[usize]) -> Result<Array2<T>> {
    if dims.is_empty() {
        return Err(Error::Config("grid needs at least one axis".into()));
    }
    if let Some(axis) = dims.iter().position(|&d| d == 0) {
        return Err(Error::Config(format!("grid axis {axis} has zero samples")));
    }
    let axes: Vec<Vec<T>> = dims.iter().map(|&d| linspace(d)).collect();
    let rows: usize = dims.iter().product();
    let mut grid = Array2::zeros((rows, dims.len()));
    for (r, mut row) in grid.outer_iter_mut().enumerate() {
        let mut rem = r;
        for axis in (0..dims.len()).rev() {
            row[axis] = axes[axis][rem % dims[axis]];
            rem /= dims[axis];
        }
    }
    Ok(grid)
}

fn linspace<T: Scalar>(count: usize) -> Vec<T> {
    if count == 1 {
        return vec![T::zero()];
    }
    let span = T::from_usize_lossy(count - 1);
    let two = T::lit(2.0);
    (0..count)
        .map(|k| -T::one() + two * T::from_usize_lossy(k) / span)
        .collect()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Decodes a binary PGM/PPM or 8-bit PNG.
pub fn read_raster(path: &Path) -> Result<Raster> {
    let bytes = read(path)?;
    if pnm::is_pnm(&bytes) {
        pnm::decode(&bytes, path)
    } else if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(&bytes, path)
    } else {
        Err(Error::decode(
            path,
            "unsupported raster format (expected P5/P6 PNM or PNG)",
        ))
    }
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<Raster> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| Error::decode(path, e.to_string()))?;
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedBitDepth(format!("PNG {depth:?}-bit samples")));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::decode(path, "PNG too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::decode(path, e.to_string()))?;
    let (width, height) = (info.width as usize, info.height as usize);
    if width == 0 || height == 0 {
        return Err(Error::decode(path, "zero-sized image"));
    }
    let (src_channels, channels) = match color {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => return Err(Error::decode(path, "palette was not expanded")),
    };
    let mut data = Vec::with_capacity(width * height * channels);
    for row in buf[..info.buffer_size()].chunks(info.line_size) {
        for px in row[..width * src_channels].chunks(src_channels) {
            data.extend_from_slice(&px[..channels]);
        }
    }
    Ok(Raster {
        width,
        height,
        channels,
        data,
    })
}

/// 8-bit luma with ITU-R BT.601 weights, rounded back to integer levels.
pub fn to_grayscale(raster: &Raster) -> Raster {
    if raster.channels == 1 {
        return raster.clone();
    }
    let data = raster
        .data
        .chunks(raster.channels)
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round() as u8)
        .collect();
    Raster {
        channels: 1,
        data,
        ..*raster
    }
}

/// Loads an image. With `grayscale` set, color input is reduced to one
/// luma channel; otherwise the file's native channel count is kept.
pub fn load_image<T: Scalar>(path: &Path, grayscale: bool) -> Result<SignalDataset<T>> {
    let mut raster = read_raster(path)?;
    if grayscale {
        raster = to_grayscale(&raster);
    }
    SignalDataset::from_raster(&raster)
}

/// Loads 16-bit PCM mono audio.
pub fn load_audio<T: Scalar>(path: &Path) -> Result<SignalDataset<T>> {
    let bytes = read(path)?;
    SignalDataset::from_pcm(&wav::decode(&bytes, path)?)
}

/// Writes a raw signal in its native container: PGM/PPM for images, WAV
/// for audio. Synthetic signals have no container.
pub fn write_raw(path: &Path, raw: &RawSignal) -> Result<()> {
    match raw {
        RawSignal::Image(r) => pnm::write(path, r),
        RawSignal::Audio(p) => wav::write(path, p),
        RawSignal::Synthetic(_) => Err(Error::Config("synthetic signals have no snapshot format".into())),
    }
}
