//! Clicks, trajectories, and the baseline click strategy.

mod external;

use serde::{Deserialize, Serialize};

use crate::attack::IterationRecord;
use crate::maskops::{
    boundary_iou, default_boundary_width, inner_squared_distance, iou, BinaryMask, Connectivity,
    ErrorKind, ErrorRegions, ProbMap, DEFAULT_THRESHOLD,
};
use crate::segmenters::{Image, Segmenter, SegmenterRequest};
use crate::{Error, Result};

pub use external::{load_external_clicks, parse_external_clicks, ClickGroup};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    /// Error kind a click of this polarity is meant to fix.
    pub fn target(self) -> ErrorKind {
        match self {
            Polarity::Positive => ErrorKind::FalseNegative,
            Polarity::Negative => ErrorKind::FalsePositive,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }
}

/// A click at sub-pixel position `(x, y)` (column, row).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Click {
    pub x: f64,
    pub y: f64,
    pub polarity: Polarity,
    pub radius: f64,
}

impl Click {
    /// Nearest integer pixel, if it lies inside a `width x height` image.
    pub fn pixel(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        let (x, y) = (self.x.round(), self.y.round());
        if !(x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64) {
            return None;
        }
        Some((x as usize, y as usize))
    }

    pub fn snapped(&self) -> Click {
        Click {
            x: self.x.round(),
            y: self.y.round(),
            ..*self
        }
    }
}

/// Binarization, connectivity and boundary band shared by every step of an
/// evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    pub threshold: f64,
    pub connectivity: Connectivity,
    /// Boundary IoU band width in pixels; `None` uses 2% of the diagonal.
    pub boundary_width: Option<f64>,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            threshold: DEFAULT_THRESHOLD,
            connectivity: Connectivity::Eight,
            boundary_width: None,
        }
    }
}

impl Protocol {
    pub fn regions(&self, pred: &ProbMap, gt: &BinaryMask) -> Result<ErrorRegions> {
        crate::maskops::error_regions(pred, gt, self.threshold, self.connectivity)
    }

    /// `(IoU, Boundary IoU)` of a prediction.
    pub fn scores(&self, pred: &ProbMap, gt: &BinaryMask) -> Result<(f64, f64)> {
        pred.ensure_dims(gt.dims())?;
        let bin = pred.threshold(self.threshold);
        let d = self
            .boundary_width
            .unwrap_or_else(|| default_boundary_width(gt.width(), gt.height()));
        Ok((iou(&bin, gt)?, boundary_iou(&bin, gt, d)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Baseline,
    Minimizing,
    Maximizing,
    External,
}

impl TrajectoryKind {
    pub fn short_name(self) -> &'static str {
        match self {
            TrajectoryKind::Baseline => "base",
            TrajectoryKind::Minimizing => "min",
            TrajectoryKind::Maximizing => "max",
            TrajectoryKind::External => "external",
        }
    }
}

/// Ordered clicks with the quality curve they induce.
///
/// `iou_curve` and `biou_curve` always have one entry per requested click.
/// When the prediction became error-free early, `clicks` is shorter and the
/// curves repeat their last value; `converged_at` holds the click count at
/// that point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub clicks: Vec<Click>,
    pub iou_curve: Vec<f64>,
    pub biou_curve: Vec<f64>,
    pub diagnostics: Vec<Vec<IterationRecord>>,
    pub converged_at: Option<usize>,
}

impl Trajectory {
    pub(crate) fn new(kind: TrajectoryKind) -> Self {
        Trajectory {
            kind,
            clicks: Vec::new(),
            iou_curve: Vec::new(),
            biou_curve: Vec::new(),
            diagnostics: Vec::new(),
            converged_at: None,
        }
    }

    /// Marks convergence and pads the curves to `k` entries. `initial` is
    /// used when no click was placed at all.
    pub(crate) fn pad_to(&mut self, k: usize, initial: (f64, f64)) {
        if self.converged_at.is_none() && self.iou_curve.len() < k {
            self.converged_at = Some(self.clicks.len());
        }
        let last = self
            .iou_curve
            .last()
            .copied()
            .zip(self.biou_curve.last().copied())
            .unwrap_or(initial);
        self.iou_curve.resize(k, last.0);
        self.biou_curve.resize(k, last.1);
    }
}

/// Next click of the baseline strategy: the point furthest from the
/// boundary of the largest error component. `Ok(None)` means there is no
/// error left to correct.
///
/// Ties on component area go to the component found first in row-major
/// order; ties on distance go to the smallest row, then smallest column.
pub fn baseline_click(
    pred: &ProbMap,
    gt: &BinaryMask,
    radius: f64,
    protocol: &Protocol,
) -> Result<Option<Click>> {
    let regions = protocol.regions(pred, gt)?;
    Ok(baseline_click_in(&regions, radius))
}

pub(crate) fn baseline_click_in(regions: &ErrorRegions, radius: f64) -> Option<Click> {
    let component = regions.largest()?;
    let mask = regions.component_mask(component.label);
    let width = mask.width();
    let sq = inner_squared_distance(&mask);
    // Row-major scan with strict comparison gives the (row, column) tie-break.
    let mut best = (f64::NEG_INFINITY, 0usize);
    for i in mask.indices() {
        if sq[i] > best.0 {
            best = (sq[i], i);
        }
    }
    let polarity = match component.kind {
        ErrorKind::FalseNegative => Polarity::Positive,
        ErrorKind::FalsePositive => Polarity::Negative,
    };
    Some(Click {
        x: (best.1 % width) as f64,
        y: (best.1 / width) as f64,
        polarity,
        radius,
    })
}

/// A positive click must land on a false negative, a negative click on a
/// false positive. Off-image clicks are invalid.
pub fn is_valid_click(click: &Click, pred: &ProbMap, gt: &BinaryMask, threshold: f64) -> bool {
    if pred.dims() != gt.dims() {
        return false;
    }
    let Some((x, y)) = click.pixel(gt.width(), gt.height()) else {
        return false;
    };
    let on = pred.get(x, y) >= threshold;
    match click.polarity {
        Polarity::Positive => gt.get(x, y) && !on,
        Polarity::Negative => on && !gt.get(x, y),
    }
}

pub(crate) fn is_valid_in(click: &Click, regions: &ErrorRegions) -> bool {
    let region = regions.region(click.polarity.target());
    click
        .pixel(region.width(), region.height())
        .is_some_and(|(x, y)| region.get(x, y))
}

/// Simulates `k` rounds of baseline clicking.
pub fn run_baseline_trajectory(
    segmenter: &dyn Segmenter,
    image: &Image,
    gt: &BinaryMask,
    k: usize,
    protocol: &Protocol,
) -> Result<Trajectory> {
    if k == 0 {
        return Err(Error::InvalidArgument("trajectory needs at least one click".into()));
    }
    image.ensure_dims(gt.dims())?;
    let radius = segmenter.disk().radius;
    let mut traj = Trajectory::new(TrajectoryKind::Baseline);
    let mut pred = ProbMap::zeros(gt.width(), gt.height());
    let initial = protocol.scores(&pred, gt)?;
    let mut prev: Option<ProbMap> = None;

    for round in 1..=k {
        let Some(click) = baseline_click(&pred, gt, radius, protocol)? else {
            break;
        };
        traj.clicks.push(click);
        let req = SegmenterRequest {
            image,
            clicks: &traj.clicks,
            prev_mask: prev.as_ref(),
        };
        pred = segmenter.predict(&req).map_err(|e| e.at_click(round))?;
        let (i, b) = protocol.scores(&pred, gt)?;
        traj.iou_curve.push(i);
        traj.biou_curve.push(b);
        prev = Some(pred.clone());
    }
    traj.pad_to(k, initial);
    Ok(traj)
}

#[cfg(test)]
mod tests;
