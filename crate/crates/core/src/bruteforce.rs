//! Exhaustive click-position search: every grid position gets a click on
//! top of a frozen prefix and is scored, giving IoU / BIoU heatmaps and the
//! extrema over valid positions.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::Prefix;
use crate::clickgen::{is_valid_in, Click, Polarity, Protocol};
use crate::maskops::BinaryMask;
use crate::segmenters::{Image, Segmenter, SegmenterRequest};
use crate::{Error, Result};

/// Largest grid the automatic stride policy produces for big images.
pub const MAX_AUTO_CELLS: usize = 16_384;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Iou,
    Biou,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Iou => "iou",
            Channel::Biou => "biou",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellExtreme {
    pub value: f64,
    /// Pixel position of the click.
    pub x: usize,
    pub y: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub stride: usize,
    pub cols: usize,
    pub rows: usize,
    /// Row-major cell scores; `None` where the segmenter failed.
    pub iou: Vec<Option<f64>>,
    pub biou: Vec<Option<f64>>,
    pub valid: Vec<bool>,
    pub failures: Vec<(usize, String)>,
    pub iou_min: Option<CellExtreme>,
    pub iou_max: Option<CellExtreme>,
    pub biou_min: Option<CellExtreme>,
    pub biou_max: Option<CellExtreme>,
}

impl GridResult {
    pub fn values(&self, channel: Channel) -> &[Option<f64>] {
        match channel {
            Channel::Iou => &self.iou,
            Channel::Biou => &self.biou,
        }
    }

    pub fn cell_position(&self, cell: usize) -> (usize, usize) {
        ((cell % self.cols) * self.stride, (cell / self.cols) * self.stride)
    }

    /// `max - min` of the channel over valid cells.
    pub fn valid_spread(&self, channel: Channel) -> Option<f64> {
        let (lo, hi) = match channel {
            Channel::Iou => (self.iou_min, self.iou_max),
            Channel::Biou => (self.biou_min, self.biou_max),
        };
        Some(hi?.value - lo?.value)
    }
}

/// Stride 1 up to 128 px per side; otherwise the smallest stride keeping
/// the grid within [`MAX_AUTO_CELLS`].
pub fn auto_stride(width: usize, height: usize) -> usize {
    if width <= 128 && height <= 128 {
        return 1;
    }
    (1..)
        .find(|s| width.div_ceil(*s) * height.div_ceil(*s) <= MAX_AUTO_CELLS)
        .expect("a large enough stride always exists")
}

fn extrema(values: &[Option<f64>], valid: &[bool], grid: (usize, usize)) -> (Option<CellExtreme>, Option<CellExtreme>) {
    let (cols, stride) = grid;
    let mut lo: Option<CellExtreme> = None;
    let mut hi: Option<CellExtreme> = None;
    for (i, v) in values.iter().enumerate() {
        let Some(v) = *v else { continue };
        if !valid[i] {
            continue;
        }
        let cell = CellExtreme {
            value: v,
            x: (i % cols) * stride,
            y: (i / cols) * stride,
        };
        if lo.is_none_or(|l| v < l.value) {
            lo = Some(cell);
        }
        if hi.is_none_or(|h| v > h.value) {
            hi = Some(cell);
        }
    }
    (lo, hi)
}

/// Scores a click of `polarity` at every `stride`-th pixel on top of
/// `prefix`. All cells are evaluated; extrema only cover valid ones.
pub fn grid_search(
    segmenter: &dyn Segmenter,
    image: &Image,
    gt: &BinaryMask,
    prefix: &Prefix,
    polarity: Polarity,
    stride: usize,
    protocol: &Protocol,
) -> Result<GridResult> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    image.ensure_dims(gt.dims())?;
    let (w, h) = gt.dims();
    let (cols, rows) = (w.div_ceil(stride), h.div_ceil(stride));
    let regions = protocol.regions(&prefix.pred, gt)?;
    let radius = segmenter.disk().radius;
    let prev_mask = (!prefix.clicks.is_empty()).then_some(&prefix.pred);

    let cells: Vec<(bool, std::result::Result<(f64, f64), String>)> = (0..cols * rows)
        .into_par_iter()
        .map(|cell| {
            let click = Click {
                x: ((cell % cols) * stride) as f64,
                y: ((cell / cols) * stride) as f64,
                polarity,
                radius,
            };
            let mut clicks = prefix.clicks.clone();
            clicks.push(click);
            let scored = segmenter
                .predict(&SegmenterRequest {
                    image,
                    clicks: &clicks,
                    prev_mask,
                })
                .and_then(|pred| protocol.scores(&pred, gt))
                .map_err(|e| e.to_string());
            (is_valid_in(&click, &regions), scored)
        })
        .collect();

    let mut result = GridResult {
        stride,
        cols,
        rows,
        iou: Vec::with_capacity(cells.len()),
        biou: Vec::with_capacity(cells.len()),
        valid: Vec::with_capacity(cells.len()),
        failures: Vec::new(),
        iou_min: None,
        iou_max: None,
        biou_min: None,
        biou_max: None,
    };
    for (i, (valid, scored)) in cells.into_iter().enumerate() {
        result.valid.push(valid);
        match scored {
            Ok((iou, biou)) => {
                result.iou.push(Some(iou));
                result.biou.push(Some(biou));
            }
            Err(message) => {
                result.iou.push(None);
                result.biou.push(None);
                result.failures.push((i, message));
            }
        }
    }
    (result.iou_min, result.iou_max) = extrema(&result.iou, &result.valid, (cols, stride));
    (result.biou_min, result.biou_max) = extrema(&result.biou, &result.valid, (cols, stride));
    Ok(result)
}

/// `max - min`.
pub fn spread(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("spread of an empty set".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(hi - lo)
}

const RAMP: [(f64, [u8; 3]); 5] = [
    (0.0, [49, 54, 149]),
    (0.25, [116, 173, 209]),
    (0.5, [255, 255, 191]),
    (0.75, [244, 109, 67]),
    (1.0, [165, 0, 38]),
];

pub const RAMP_DESCRIPTION: &str = "piecewise-linear in RGB over value stops \
0.00=#313695 (coldest), 0.25=#74add1, 0.50=#ffffbf, 0.75=#f46d43, 1.00=#a50026 (warmest); \
values are clamped to [0, 1]; missing cells are #808080";

pub const MISSING_COLOR: [u8; 3] = [128, 128, 128];

/// Cold-to-warm color for a score in `[0, 1]`.
pub fn ramp_color(value: f64) -> [u8; 3] {
    let v = value.clamp(0.0, 1.0);
    for pair in RAMP.windows(2) {
        let ((a, ca), (b, cb)) = (pair[0], pair[1]);
        if v <= b {
            let t = (v - a) / (b - a);
            let mut out = [0u8; 3];
            for i in 0..3 {
                out[i] = (ca[i] as f64 + t * (cb[i] as f64 - ca[i] as f64)).round() as u8;
            }
            return out;
        }
    }
    RAMP[RAMP.len() - 1].1
}

/// Raw heatmap values stored next to the PNG.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub stride: usize,
    pub channel: Channel,
    pub ramp: String,
    pub values: Vec<Vec<Option<f64>>>,
    pub valid: Vec<Vec<bool>>,
}

impl Sidecar {
    pub fn from_grid(grid: &GridResult, channel: Channel) -> Self {
        let values = grid.values(channel);
        Sidecar {
            stride: grid.stride,
            channel,
            ramp: RAMP_DESCRIPTION.to_string(),
            values: values.chunks(grid.cols).map(|r| r.to_vec()).collect(),
            valid: grid.valid.chunks(grid.cols).map(|r| r.to_vec()).collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

/// Writes the channel as an 8-bit RGB PNG with one pixel per grid cell,
/// plus a JSON sidecar with the raw values.
pub fn write_heatmap(grid: &GridResult, channel: Channel, path: &Path) -> Result<()> {
    let values = grid.values(channel);
    let mut img = image::RgbImage::new(grid.cols as u32, grid.rows as u32);
    for (i, v) in values.iter().enumerate() {
        let color = v.map_or(MISSING_COLOR, ramp_color);
        img.put_pixel((i % grid.cols) as u32, (i / grid.cols) as u32, image::Rgb(color));
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.into(),
            message: e.to_string(),
        })?;
    let sidecar = serde_json::to_string_pretty(&Sidecar::from_grid(grid, channel))?;
    let side = sidecar_path(path);
    std::fs::write(&side, sidecar).map_err(|e| Error::io(&side, e))
}
