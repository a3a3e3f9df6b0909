//! Image and stack data model, disk I/O, averaging and histogram statistics.

mod filter;
mod ops;
mod stack;
mod stats;

pub use filter::{box_blur3, gaussian_blur, FloatImage};
pub use ops::{enface, group_average};
pub use stack::{frame_file_name, load_stack, load_tiff_stack, save_stack, Stack, StackMeta};
pub use stats::{histogram_stats, HistogramStats};

use thiserror::Error;

/// Axial resolution of the reference imaging system, micrometers per pixel row.
pub const DEFAULT_AXIAL_RES_UM_PER_PX: f64 = 0.836;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("no frames matched in {0}")]
    NoFrames(String),
    #[error("frame {index} is {found:?}, expected {expected:?}")]
    DimensionMismatch {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("failed to decode {path}: {reason}")]
    DecodeError { path: String, reason: String },
    #[error("frame file {0} has no numeric index")]
    MissingIndex(String),
    #[error("frame index {0} appears more than once")]
    DuplicateIndex(u64),
    #[error("{frames} frames cannot be split into groups of {group_size}")]
    GroupMismatch { frames: usize, group_size: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid stack metadata: {0}")]
    InvalidMeta(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid glob pattern: {0}")]
    Pattern(#[from] glob::PatternError),
}

/// Row-major 8-bit grayscale image.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidImage(format!(
                "zero-sized image {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(ImagingError::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Shift content down by `rows` (up when negative); exposed rows are zero.
    pub fn roll_rows(&self, rows: i64) -> Image {
        let mut out = Image::new(self.width, self.height);
        let h = self.height as i64;
        for y in 0..h {
            let src = y - rows;
            if (0..h).contains(&src) {
                let dst = y as usize * self.width;
                let s = src as usize * self.width;
                out.data[dst..dst + self.width].copy_from_slice(&self.data[s..s + self.width]);
            }
        }
        out
    }

    pub fn to_gray_image(&self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length matches dimensions")
    }

    pub fn from_gray_image(img: &image::GrayImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().clone(),
        }
    }
}

/// Round half-up and saturate into the 8-bit range.
#[inline]
pub fn clamp_round(v: f64) -> u8 {
    if v.is_nan() || v <= 0.0 {
        0
    } else if v >= 255.0 {
        255
    } else {
        (v + 0.5).floor() as u8
    }
}
