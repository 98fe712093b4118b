use serde::{Deserialize, Serialize};

use crate::clickgen::{Click, Polarity};
use crate::maskops::{outer_distance_transform, BinaryMask, DistanceMap, ErrorRegions, ProbMap};
use crate::render::Footprint;
use crate::{Error, Result};

/// Smoothing term of the soft Dice loss.
pub const DICE_SMOOTHING: f64 = 1.0;

/// Which way a trajectory pushes segmentation quality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    /// Sign applied to the Dice term: maximizing quality minimizes Dice loss.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Max => 1.0,
            Direction::Min => -1.0,
        }
    }

    /// Whether `candidate` beats `incumbent` by more than `tol`.
    pub fn improves(self, candidate: f64, incumbent: f64, tol: f64) -> bool {
        match self {
            Direction::Max => candidate > incumbent + tol,
            Direction::Min => candidate < incumbent - tol,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Min => "min",
            Direction::Max => "max",
        }
    }
}

/// `1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps)`.
pub fn dice_loss(pred: &ProbMap, gt: &BinaryMask) -> Result<f64> {
    pred.ensure_dims(gt.dims())?;
    Ok(dice_loss_and_grad(pred.data(), gt).0)
}

/// Dice loss and its gradient with respect to every prediction value.
pub(crate) fn dice_loss_and_grad(pred: &[f64], gt: &BinaryMask) -> (f64, Vec<f64>) {
    let (mut inter, mut sum_p, mut sum_g) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.iter().zip(gt.data()) {
        sum_p += p;
        if g {
            inter += p;
            sum_g += 1.0;
        }
    }
    let num = 2.0 * inter + DICE_SMOOTHING;
    let den = sum_p + sum_g + DICE_SMOOTHING;
    let grad = gt
        .data()
        .iter()
        .map(|&g| {
            let g = if g { 1.0 } else { 0.0 };
            -(2.0 * g * den - num) / (den * den)
        })
        .collect();
    (1.0 - num / den, grad)
}

/// Outer distance field of the region a click must land in, used by the
/// interaction location loss.
///
/// The loss is the soft-disk-weighted mean distance to the target region,
/// divided by the image diagonal:
/// `sum(m * D) / (sum(m) * diag)`.
#[derive(Clone, Debug)]
pub struct LocationField {
    distance: DistanceMap,
    diagonal: f64,
}

impl LocationField {
    pub fn new(region: &BinaryMask) -> Result<Self> {
        let distance = outer_distance_transform(region)?;
        let (w, h) = region.dims();
        Ok(LocationField {
            distance,
            diagonal: ((w * w + h * h) as f64).sqrt(),
        })
    }

    /// Field for clicks of `polarity`: FN region for positive, FP for negative.
    pub fn for_polarity(regions: &ErrorRegions, polarity: Polarity) -> Result<Self> {
        let region = regions.region(polarity.target());
        if region.is_empty() {
            return Err(Error::EmptyRegion(match polarity {
                Polarity::Positive => "no false negatives for a positive click",
                Polarity::Negative => "no false positives for a negative click",
            }));
        }
        Self::new(region)
    }

    pub fn diagonal(&self) -> f64 {
        self.diagonal
    }

    pub fn value(&self, click: &Click, sharpness: f64) -> Result<f64> {
        Ok(self.value_and_grad(click, sharpness)?.0)
    }

    pub fn value_and_grad(&self, click: &Click, sharpness: f64) -> Result<(f64, (f64, f64))> {
        let fp = Footprint::of(click, self.distance.width, self.distance.height, sharpness);
        let (mut num, mut mass) = (0.0, 0.0);
        let (mut dnum, mut dmass) = ((0.0, 0.0), (0.0, 0.0));
        for px in &fp.pixels {
            let d = self.distance.data[px.index];
            num += px.value * d;
            mass += px.value;
            dnum.0 += px.dx * d;
            dnum.1 += px.dy * d;
            dmass.0 += px.dx;
            dmass.1 += px.dy;
        }
        if !(mass > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "click at ({}, {}) does not cover the image",
                click.x, click.y
            )));
        }
        let scale = mass * mass * self.diagonal;
        Ok((
            num / (mass * self.diagonal),
            (
                (dnum.0 * mass - num * dmass.0) / scale,
                (dnum.1 * mass - num * dmass.1) / scale,
            ),
        ))
    }
}

pub fn interaction_location_loss(click: &Click, regions: &ErrorRegions, sharpness: f64) -> Result<f64> {
    LocationField::for_polarity(regions, click.polarity)?.value(click, sharpness)
}

/// `sign * dice + ill_weight * ILL(active)`.
pub fn total_loss(
    pred: &ProbMap,
    gt: &BinaryMask,
    active: &Click,
    regions: &ErrorRegions,
    direction: Direction,
    ill_weight: f64,
    sharpness: f64,
) -> Result<f64> {
    let dice = dice_loss(pred, gt)?;
    let ill = interaction_location_loss(active, regions, sharpness)?;
    Ok(direction.sign() * dice + ill_weight * ill)
}
