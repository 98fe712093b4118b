//! The segmenter contract and the built-in segmenters.
//!
//! A segmenter predicts a probability map from an image and a click list,
//! and reports the gradient of the signed Dice term with respect to one
//! click's coordinates. [`loss_gradient`] adds the interaction location
//! term on top, so disk-map models and raw-coordinate models (reached over
//! the bridge) share the same optimizer.

mod blob;
pub mod bridge;
mod oracle;
mod rugged;

use serde::{Deserialize, Serialize};

use crate::attack::{Direction, LocationField};
use crate::clickgen::Click;
use crate::maskops::{BinaryMask, ProbMap};
use crate::{Error, Result};

pub use blob::{BlobParams, BlobSegmenter};
pub use bridge::BridgeSegmenter;
pub use oracle::OracleSegmenter;
pub use rugged::RuggedSegmenter;

/// RGB raster with interleaved channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::InvalidArgument(format!(
                "image data length {} does not match {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Image::new(width, height, data).expect("dimensions are consistent")
    }

    pub fn uniform(width: usize, height: usize, value: f64) -> Self {
        Image::from_fn(width, height, |_, _| [value; 3])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Mean of the three channels per pixel.
    pub fn intensity(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|c| (c[0] + c[1] + c[2]) / 3.0)
            .collect()
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: self.dims(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SegmenterRequest<'a> {
    pub image: &'a Image,
    /// Clicks in interaction order.
    pub clicks: &'a [Click],
    /// The previous round's prediction, if any.
    pub prev_mask: Option<&'a ProbMap>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    DiskMaps,
    RawCoordinates,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmenterCapabilities {
    pub input_mode: InputMode,
    pub supports_gradients: bool,
    pub native_resolution: Option<usize>,
}

/// Click disk geometry at the segmenter's working resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiskProfile {
    pub radius: f64,
    pub sharpness: f64,
}

impl Default for DiskProfile {
    fn default() -> Self {
        DiskProfile {
            radius: 5.0,
            sharpness: crate::render::DEFAULT_SHARPNESS,
        }
    }
}

pub trait Segmenter: Send + Sync {
    fn capabilities(&self) -> SegmenterCapabilities;

    fn disk(&self) -> DiskProfile;

    fn predict(&self, req: &SegmenterRequest<'_>) -> Result<ProbMap>;

    /// Signed Dice loss `sign * dice(predict(req), gt)` and its gradient
    /// with respect to the coordinates of `req.clicks[active]`.
    fn dice_gradient(
        &self,
        req: &SegmenterRequest<'_>,
        gt: &BinaryMask,
        direction: Direction,
        active: usize,
    ) -> Result<(f64, (f64, f64))>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossGradient {
    /// `sign * dice + ill_weight * ill`.
    pub loss: f64,
    pub signed_dice: f64,
    pub ill: f64,
    pub grad: (f64, f64),
}

/// Total adversarial loss and its gradient with respect to the active
/// click. Fails before any model call on segmenters without gradients.
pub fn loss_gradient(
    segmenter: &dyn Segmenter,
    req: &SegmenterRequest<'_>,
    gt: &BinaryMask,
    direction: Direction,
    active: usize,
    ill_weight: f64,
    field: &LocationField,
) -> Result<LossGradient> {
    if !segmenter.capabilities().supports_gradients {
        return Err(Error::GradientsUnsupported);
    }
    let click = req.clicks.get(active).ok_or_else(|| {
        Error::InvalidArgument(format!("active click {active} out of range"))
    })?;
    let (signed_dice, dice_grad) = segmenter.dice_gradient(req, gt, direction, active)?;
    let (ill, ill_grad) = field.value_and_grad(click, segmenter.disk().sharpness)?;
    let grad = (
        dice_grad.0 + ill_weight * ill_grad.0,
        dice_grad.1 + ill_weight * ill_grad.1,
    );
    if !(grad.0.is_finite() && grad.1.is_finite() && signed_dice.is_finite()) {
        return Err(Error::NonFiniteGradient { click: active });
    }
    Ok(LossGradient {
        loss: signed_dice + ill_weight * ill,
        signed_dice,
        ill,
        grad,
    })
}

/// Segmenters that produce pre-sigmoid logits and can backpropagate a
/// logit-space gradient to click coordinates.
pub(crate) trait LogitModel: Send + Sync {
    type Cache;

    fn disk(&self) -> DiskProfile;

    fn logits(&self, image: &Image, clicks: &[Click]) -> Result<(Vec<f64>, Self::Cache)>;

    fn backprop(&self, image: &Image, clicks: &[Click], cache: &Self::Cache, dz: &[f64]) -> Result<Vec<(f64, f64)>>;
}

fn check_request(req: &SegmenterRequest<'_>) -> Result<()> {
    if req.clicks.is_empty() {
        return Err(Error::InvalidArgument("prediction needs at least one click".into()));
    }
    if let Some(prev) = req.prev_mask {
        prev.ensure_dims(req.image.dims())?;
    }
    Ok(())
}

pub(crate) fn logit_predict<M: LogitModel>(model: &M, req: &SegmenterRequest<'_>) -> Result<ProbMap> {
    check_request(req)?;
    let (z, _) = model.logits(req.image, req.clicks)?;
    ProbMap::from_vec(
        req.image.width(),
        req.image.height(),
        z.into_iter().map(crate::render::sigmoid).collect(),
    )
}

pub(crate) fn logit_dice_gradient<M: LogitModel>(
    model: &M,
    req: &SegmenterRequest<'_>,
    gt: &BinaryMask,
    direction: Direction,
    active: usize,
) -> Result<(f64, (f64, f64))> {
    check_request(req)?;
    req.image.ensure_dims(gt.dims())?;
    if active >= req.clicks.len() {
        return Err(Error::InvalidArgument(format!("active click {active} out of range")));
    }
    let (z, cache) = model.logits(req.image, req.clicks)?;
    let p: Vec<f64> = z.iter().map(|&v| crate::render::sigmoid(v)).collect();
    let (dice, dp) = crate::attack::dice_loss_and_grad(&p, gt);
    let s = direction.sign();
    let dz: Vec<f64> = dp
        .iter()
        .zip(&p)
        .map(|(&g, &pv)| s * g * pv * (1.0 - pv))
        .collect();
    let grads = model.backprop(req.image, req.clicks, &cache, &dz)?;
    Ok((s * dice, grads[active]))
}

/// Separable Gaussian blur with zero padding and a kernel truncated at 3σ.
/// The operator is self-adjoint, so it also maps gradients back.
pub(crate) fn gaussian_blur(data: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = x as i64 + k as i64 - r;
                if sx >= 0 && sx < width as i64 {
                    acc += kv * row[sx as usize];
                }
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = y as i64 + k as i64 - r;
                if sy >= 0 && sy < height as i64 {
                    acc += kv * tmp[sy as usize * width + x];
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Worst relative error between `dice_gradient` and central differences of
/// the signed Dice, over every click.
#[cfg(test)]
pub(crate) fn worst_fd_error(seg: &dyn Segmenter, image: &Image, clicks: &[Click], gt: &BinaryMask) -> f64 {
    let eps = 1e-5;
    let loss = |cs: &[Click], d: Direction| {
        let req = SegmenterRequest { image, clicks: cs, prev_mask: None };
        d.sign() * crate::attack::dice_loss(&seg.predict(&req).unwrap(), gt).unwrap()
    };
    let mut worst: f64 = 0.0;
    for d in [Direction::Min, Direction::Max] {
        for active in 0..clicks.len() {
            let req = SegmenterRequest { image, clicks, prev_mask: None };
            let (value, (gx, gy)) = seg.dice_gradient(&req, gt, d, active).unwrap();
            assert!((value - loss(clicks, d)).abs() < 1e-12);
            for (axis, analytic) in [(0, gx), (1, gy)] {
                let shifted = |h: f64| {
                    let mut cs = clicks.to_vec();
                    if axis == 0 {
                        cs[active].x += h;
                    } else {
                        cs[active].y += h;
                    }
                    loss(&cs, d)
                };
                let numeric = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
    }
    worst
}
