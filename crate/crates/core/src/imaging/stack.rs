use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Image, ImagingError, DEFAULT_AXIAL_RES_UM_PER_PX};
use crate::par;

pub const SIDECAR_NAME: &str = "stack.json";

/// Ordered sequence of equally sized B-scans.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    frames: Vec<Image>,
    axial_res_um_per_px: f64,
    source_labels: Vec<String>,
}

/// Contents of the `stack.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackMeta {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub axial_res_um_per_px: f64,
}

/// Canonical on-disk name of frame `index`.
pub fn frame_file_name(index: usize) -> String {
    format!("bscan_{index:04}.png")
}

impl Stack {
    pub fn new(frames: Vec<Image>) -> Result<Self, ImagingError> {
        let labels = (0..frames.len()).map(frame_file_name).collect();
        Self::with_labels(frames, DEFAULT_AXIAL_RES_UM_PER_PX, labels)
    }

    pub fn with_labels(
        frames: Vec<Image>,
        axial_res_um_per_px: f64,
        source_labels: Vec<String>,
    ) -> Result<Self, ImagingError> {
        let first = frames
            .first()
            .ok_or_else(|| ImagingError::NoFrames("empty frame list".into()))?;
        let expected = first.dims();
        if let Some((index, f)) = frames.iter().enumerate().find(|(_, f)| f.dims() != expected) {
            return Err(ImagingError::DimensionMismatch {
                index,
                expected,
                found: f.dims(),
            });
        }
        if !(axial_res_um_per_px > 0.0 && axial_res_um_per_px.is_finite()) {
            return Err(ImagingError::InvalidMeta(format!(
                "axial resolution must be positive, got {axial_res_um_per_px}"
            )));
        }
        if source_labels.len() != frames.len() {
            return Err(ImagingError::InvalidMeta(format!(
                "{} labels for {} frames",
                source_labels.len(),
                frames.len()
            )));
        }
        Ok(Self {
            frames,
            axial_res_um_per_px,
            source_labels,
        })
    }

    /// Same metadata and labels, new frames (must keep count and size).
    pub fn replace_frames(&self, frames: Vec<Image>) -> Result<Self, ImagingError> {
        Self::with_labels(frames, self.axial_res_um_per_px, self.source_labels.clone())
    }

    pub fn set_axial_res(&mut self, um_per_px: f64) -> Result<(), ImagingError> {
        if !(um_per_px > 0.0 && um_per_px.is_finite()) {
            return Err(ImagingError::InvalidMeta(format!(
                "axial resolution must be positive, got {um_per_px}"
            )));
        }
        self.axial_res_um_per_px = um_per_px;
        Ok(())
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Image> {
        self.frames
    }

    pub fn frame(&self, i: usize) -> &Image {
        &self.frames[i]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn axial_res_um_per_px(&self) -> f64 {
        self.axial_res_um_per_px
    }

    pub fn source_labels(&self) -> &[String] {
        &self.source_labels
    }

    pub fn meta(&self) -> StackMeta {
        StackMeta {
            width: self.width(),
            height: self.height(),
            frames: self.len(),
            axial_res_um_per_px: self.axial_res_um_per_px,
        }
    }
}

/// Trailing digit run of the file stem, e.g. `bscan_0042.png` -> 42.
fn file_index(name: &str) -> Option<u64> {
    let stem = name.rsplit_once('.').map_or(name, |(s, _)| s);
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

fn decode_gray(path: &Path) -> Result<Image, ImagingError> {
    let decode_err = |reason: String| ImagingError::DecodeError {
        path: path.display().to_string(),
        reason,
    };
    let img = image::open(path).map_err(|e| decode_err(e.to_string()))?;
    match img {
        image::DynamicImage::ImageLuma8(g) => Ok(Image::from_gray_image(&g)),
        other => Err(decode_err(format!(
            "expected 8-bit grayscale, found {:?}",
            other.color()
        ))),
    }
}

/// Load every file in `dir` whose name matches `pattern`, ordered by the
/// numeric index in the file name. A `stack.json` sidecar, when present,
/// supplies the axial resolution and is checked against the frames.
pub fn load_stack(dir: impl AsRef<Path>, pattern: &str) -> Result<Stack, ImagingError> {
    let dir = dir.as_ref();
    let pat = glob::Pattern::new(pattern)?;
    let mut entries = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == SIDECAR_NAME || !pat.matches(&name) {
            continue;
        }
        let index = file_index(&name).ok_or_else(|| ImagingError::MissingIndex(name.clone()))?;
        entries.push((index, name));
    }
    if entries.is_empty() {
        return Err(ImagingError::NoFrames(dir.display().to_string()));
    }
    entries.sort();
    if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(ImagingError::DuplicateIndex(w[0].0));
    }

    let decoded = par::map_indexed(&entries, |_, (_, name)| decode_gray(&dir.join(name)));
    let frames = decoded.into_iter().collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<String> = entries.into_iter().map(|(_, n)| n).collect();

    let sidecar = dir.join(SIDECAR_NAME);
    let res = if sidecar.is_file() {
        let meta: StackMeta = serde_json::from_reader(BufReader::new(fs::File::open(&sidecar)?))
            .map_err(|e| ImagingError::InvalidMeta(e.to_string()))?;
        let stack = Stack::with_labels(frames, meta.axial_res_um_per_px, labels)?;
        if meta.width != stack.width()
            || meta.height != stack.height()
            || meta.frames != stack.len()
        {
            return Err(ImagingError::InvalidMeta(format!(
                "sidecar describes {}x{}x{}, found {}x{}x{}",
                meta.width,
                meta.height,
                meta.frames,
                stack.width(),
                stack.height(),
                stack.len()
            )));
        }
        return Ok(stack);
    } else {
        DEFAULT_AXIAL_RES_UM_PER_PX
    };
    Stack::with_labels(frames, res, labels)
}

/// Write `bscan_%04d.png` frames plus the `stack.json` sidecar.
pub fn save_stack(stack: &Stack, dir: impl AsRef<Path>) -> Result<(), ImagingError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let results = par::map_indexed(stack.frames(), |i, frame| {
        frame
            .to_gray_image()
            .save_with_format(dir.join(frame_file_name(i)), image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => ImagingError::Io(io),
                other => ImagingError::Io(std::io::Error::other(other.to_string())),
            })
    });
    results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let json = serde_json::to_string_pretty(&stack.meta()).expect("meta serializes");
    fs::write(dir.join(SIDECAR_NAME), json + "\n")?;
    Ok(())
}

/// Read every page of a multi-page 8-bit grayscale TIFF.
pub fn load_tiff_stack(path: impl AsRef<Path>) -> Result<Stack, ImagingError> {
    use tiff::decoder::{Decoder, DecodingResult};
    use tiff::ColorType;

    let path = path.as_ref();
    let decode_err = |reason: String| ImagingError::DecodeError {
        path: path.display().to_string(),
        reason,
    };
    let file = BufReader::new(fs::File::open(path)?);
    let mut decoder = Decoder::new(file).map_err(|e| decode_err(e.to_string()))?;
    let mut frames = Vec::new();
    loop {
        let color = decoder.colortype().map_err(|e| decode_err(e.to_string()))?;
        if color != ColorType::Gray(8) {
            return Err(decode_err(format!("expected 8-bit grayscale, found {color:?}")));
        }
        let (w, h) = decoder.dimensions().map_err(|e| decode_err(e.to_string()))?;
        match decoder.read_image().map_err(|e| decode_err(e.to_string()))? {
            DecodingResult::U8(buf) => frames.push(Image::from_vec(w as usize, h as usize, buf)?),
            _ => return Err(decode_err("unexpected sample format".into())),
        }
        if !decoder.more_images() {
            break;
        }
        decoder.next_image().map_err(|e| decode_err(e.to_string()))?;
    }
    let label = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let labels = (0..frames.len()).map(|i| format!("{label}#{i}")).collect();
    Stack::with_labels(frames, DEFAULT_AXIAL_RES_UM_PER_PX, labels)
}
