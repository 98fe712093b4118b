use super::{DiskProfile, InputMode, Segmenter, SegmenterCapabilities, SegmenterRequest};
use crate::attack::Direction;
use crate::clickgen::Polarity;
use crate::maskops::{BinaryMask, ProbMap};
use crate::{Error, Result};

/// Test double that returns the ground truth as soon as any positive click
/// lands on it, and an empty map otherwise. Its Dice gradient is zero.
#[derive(Clone, Debug)]
pub struct OracleSegmenter {
    gt: BinaryMask,
    disk: DiskProfile,
}

impl OracleSegmenter {
    pub fn new(gt: BinaryMask, disk: DiskProfile) -> Self {
        OracleSegmenter { gt, disk }
    }
}

impl Segmenter for OracleSegmenter {
    fn capabilities(&self) -> SegmenterCapabilities {
        SegmenterCapabilities {
            input_mode: InputMode::DiskMaps,
            supports_gradients: true,
            native_resolution: None,
        }
    }

    fn disk(&self) -> DiskProfile {
        self.disk
    }

    fn predict(&self, req: &SegmenterRequest<'_>) -> Result<ProbMap> {
        req.image.ensure_dims(self.gt.dims())?;
        if req.clicks.is_empty() {
            return Err(Error::InvalidArgument("prediction needs at least one click".into()));
        }
        let (w, h) = self.gt.dims();
        let hit = req.clicks.iter().any(|c| {
            c.polarity == Polarity::Positive
                && c.pixel(w, h).is_some_and(|(x, y)| self.gt.get(x, y))
        });
        Ok(if hit {
            ProbMap::from_mask(&self.gt)
        } else {
            ProbMap::zeros(w, h)
        })
    }

    fn dice_gradient(
        &self,
        req: &SegmenterRequest<'_>,
        gt: &BinaryMask,
        direction: Direction,
        active: usize,
    ) -> Result<(f64, (f64, f64))> {
        if active >= req.clicks.len() {
            return Err(Error::InvalidArgument(format!("active click {active} out of range")));
        }
        let pred = self.predict(req)?;
        let dice = crate::attack::dice_loss(&pred, gt)?;
        Ok((direction.sign() * dice, (0.0, 0.0)))
    }
}
