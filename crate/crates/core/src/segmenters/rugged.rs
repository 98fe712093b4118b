use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    logit_dice_gradient, logit_predict, DiskProfile, Image, LogitModel, Segmenter,
    SegmenterCapabilities, SegmenterRequest,
};
use crate::attack::Direction;
use crate::clickgen::Click;
use crate::maskops::{BinaryMask, ProbMap};
use crate::{Error, Result};

const WAVES: usize = 8;
/// Gaussian sigma of each click's share of the field, relative to the
/// image diagonal.
const ENVELOPE: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Wave {
    click_x: f64,
    click_y: f64,
    pixel_x: f64,
    pixel_y: f64,
    phase: f64,
}

/// Wraps a logit model and adds a smooth pseudo-random field to its logits:
///
/// `delta(p) = amplitude / (sqrt(8) n) * sum_c E_c(p) * sum_k sin(a_k . c + b_k . p + phi_k)`
///
/// over the `n` clicks and 8 waves, where `E_c` is a Gaussian around click
/// `c` with sigma a quarter of the image diagonal. The field depends on both
/// the click positions and the pixel, so small click moves reshuffle the
/// prediction the way real models do. It is strongest near the clicks and
/// fades as clicks accumulate.
#[derive(Clone, Debug)]
pub struct RuggedSegmenter<M> {
    base: M,
    amplitude: f64,
    waves: Vec<Wave>,
}

impl<M> RuggedSegmenter<M> {
    pub fn new(base: M, seed: u64, amplitude: f64) -> Result<Self> {
        if !(amplitude >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "amplitude must be non-negative, got {amplitude}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut freq = |lo: f64, hi: f64| {
            let v: f64 = rng.gen_range(lo..hi);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        };
        let mut waves = Vec::with_capacity(WAVES);
        for _ in 0..WAVES {
            waves.push(Wave {
                click_x: freq(0.3, 0.9),
                click_y: freq(0.3, 0.9),
                pixel_x: freq(0.1, 0.4),
                pixel_y: freq(0.1, 0.4),
                phase: 0.0,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        for w in &mut waves {
            w.phase = rng.gen_range(0.0..std::f64::consts::TAU);
        }
        Ok(RuggedSegmenter {
            base,
            amplitude,
            waves,
        })
    }

    pub fn base(&self) -> &M {
        &self.base
    }

    fn scale(&self, clicks: usize) -> f64 {
        self.amplitude / ((WAVES as f64).sqrt() * clicks.max(1) as f64)
    }
}

fn envelope_width(image: &Image) -> f64 {
    let (w, h) = image.dims();
    ENVELOPE * (w as f64).hypot(h as f64)
}

fn envelope(c: &Click, px: f64, py: f64, width: f64) -> f64 {
    let (dx, dy) = (px - c.x, py - c.y);
    (-(dx * dx + dy * dy) / (2.0 * width * width)).exp()
}

impl<M: LogitModel> LogitModel for RuggedSegmenter<M> {
    type Cache = M::Cache;

    fn disk(&self) -> DiskProfile {
        self.base.disk()
    }

    fn logits(&self, image: &Image, clicks: &[Click]) -> Result<(Vec<f64>, M::Cache)> {
        let (mut z, cache) = self.base.logits(image, clicks)?;
        if self.amplitude == 0.0 {
            return Ok((z, cache));
        }
        let w = image.width();
        let s = self.scale(clicks.len());
        let ew = envelope_width(image);
        for c in clicks {
            for wave in &self.waves {
                let base = wave.click_x * c.x + wave.click_y * c.y + wave.phase;
                for (i, v) in z.iter_mut().enumerate() {
                    let (px, py) = ((i % w) as f64, (i / w) as f64);
                    *v += s * envelope(c, px, py, ew) * (base + wave.pixel_x * px + wave.pixel_y * py).sin();
                }
            }
        }
        Ok((z, cache))
    }

    fn backprop(&self, image: &Image, clicks: &[Click], cache: &M::Cache, dz: &[f64]) -> Result<Vec<(f64, f64)>> {
        let mut grads = self.base.backprop(image, clicks, cache, dz)?;
        if self.amplitude == 0.0 {
            return Ok(grads);
        }
        let w = image.width();
        let s = self.scale(clicks.len());
        let ew = envelope_width(image);
        for (c, g) in clicks.iter().zip(grads.iter_mut()) {
            let l2 = ew * ew;
            for wave in &self.waves {
                let base = wave.click_x * c.x + wave.click_y * c.y + wave.phase;
                let (mut wave_grad, mut ex, mut ey) = (0.0, 0.0, 0.0);
                for (i, &d) in dz.iter().enumerate() {
                    let (px, py) = ((i % w) as f64, (i / w) as f64);
                    let e = d * envelope(c, px, py, ew);
                    let theta = base + wave.pixel_x * px + wave.pixel_y * py;
                    wave_grad += e * theta.cos();
                    let sin = e * theta.sin();
                    ex += sin * (px - c.x) / l2;
                    ey += sin * (py - c.y) / l2;
                }
                g.0 += s * (wave.click_x * wave_grad + ex);
                g.1 += s * (wave.click_y * wave_grad + ey);
            }
        }
        Ok(grads)
    }
}

impl<M: LogitModel + Segmenter> Segmenter for RuggedSegmenter<M> {
    fn capabilities(&self) -> SegmenterCapabilities {
        self.base.capabilities()
    }

    fn disk(&self) -> DiskProfile {
        LogitModel::disk(&self.base)
    }

    fn predict(&self, req: &SegmenterRequest<'_>) -> Result<ProbMap> {
        logit_predict(self, req)
    }

    fn dice_gradient(
        &self,
        req: &SegmenterRequest<'_>,
        gt: &BinaryMask,
        direction: Direction,
        active: usize,
    ) -> Result<(f64, (f64, f64))> {
        logit_dice_gradient(self, req, gt, direction, active)
    }
}
