use serde::{Deserialize, Serialize};

use super::{
    gaussian_blur, gaussian_kernel, logit_dice_gradient, logit_predict, DiskProfile, Image,
    InputMode, LogitModel, Segmenter, SegmenterCapabilities, SegmenterRequest,
};
use crate::attack::Direction;
use crate::clickgen::{Click, Polarity};
use crate::maskops::{BinaryMask, ProbMap};
use crate::render::{render_clicks, render_gradient, ClickMaps, MapGradient};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobParams {
    /// Gaussian blur applied to the click maps.
    pub sigma: f64,
    pub positive_weight: f64,
    pub negative_weight: f64,
    pub bias: f64,
    /// Weight of the intensity affinity term.
    pub affinity: f64,
    /// Affinity temperature.
    pub tau: f64,
    /// Spatial extent (Gaussian sigma) of each positive click's affinity.
    pub reach: f64,
    /// Saturation gain of the summed affinity.
    pub gain: f64,
    /// Gaussian sigma of the window a click samples its intensity from.
    pub probe: f64,
    #[serde(flatten)]
    pub disk: DiskProfile,
}

impl Default for BlobParams {
    fn default() -> Self {
        BlobParams {
            sigma: 2.0,
            positive_weight: 8.0,
            negative_weight: 8.0,
            bias: -4.0,
            affinity: 8.0,
            tau: 0.02,
            reach: 8.0,
            gain: 3.0,
            probe: 1.5,
            disk: DiskProfile::default(),
        }
    }
}

/// Analytic reference segmenter.
///
/// `p = sigmoid(w+ * blur(M+) - w- * blur(M-) + b + a * (1 - exp(-gain * T)))`
///
/// `M±` are the rendered click maps. `T = sum_i G_i * A_i` runs over the
/// positive clicks: `G_i` is a Gaussian of sigma `reach` centred on the
/// click and `A_i = exp(-(I - mu_i)^2 / tau)` rewards pixels whose
/// intensity is close to `mu_i`, the mean intensity in a Gaussian window of
/// sigma `probe` around the click.
#[derive(Clone, Debug)]
pub struct BlobSegmenter {
    params: BlobParams,
    kernel: Vec<f64>,
}

impl BlobSegmenter {
    pub fn new(params: BlobParams) -> Result<Self> {
        if !(params.sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "blur sigma must be positive, got {}",
                params.sigma
            )));
        }
        let positive = [
            params.tau,
            params.reach,
            params.gain,
            params.probe,
            params.disk.radius,
            params.disk.sharpness,
        ];
        if !positive.iter().all(|&v| v > 0.0) {
            return Err(Error::InvalidArgument(
                "tau, reach, gain, probe, radius and sharpness must be positive".into(),
            ));
        }
        Ok(BlobSegmenter {
            kernel: gaussian_kernel(params.sigma),
            params,
        })
    }

    pub fn params(&self) -> &BlobParams {
        &self.params
    }

    /// Probe-window mean intensity around a click, with its window.
    fn probe(&self, click: &Click, intensity: &[f64], w: usize, h: usize) -> Probe {
        let rho = self.params.probe;
        // Weights below ~1e-12 are dropped.
        let reach = 7.5 * rho;
        let x0 = (click.x - reach).floor().max(0.0) as usize;
        let y0 = (click.y - reach).floor().max(0.0) as usize;
        let x1 = ((click.x + reach).ceil().max(0.0) as usize).min(w - 1);
        let y1 = ((click.y + reach).ceil().max(0.0) as usize).min(h - 1);
        let mut pixels = Vec::new();
        let (mut sum, mut weighted) = (0.0, 0.0);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 - click.x, y as f64 - click.y);
                let d2 = dx * dx + dy * dy;
                if d2 > reach * reach {
                    continue;
                }
                let k = (-d2 / (2.0 * rho * rho)).exp();
                let i = y * w + x;
                sum += k;
                weighted += k * intensity[i];
                pixels.push((i, k, dx, dy));
            }
        }
        Probe {
            mean: if sum > 0.0 { weighted / sum } else { 0.0 },
            sum,
            pixels,
        }
    }
}

pub(crate) struct Probe {
    mean: f64,
    sum: f64,
    /// `(index, weight, px - cx, py - cy)`.
    pixels: Vec<(usize, f64, f64, f64)>,
}

pub(crate) struct BlobCache {
    maps: ClickMaps,
    intensity: Vec<f64>,
    /// Per click: its probe when positive.
    probes: Vec<Option<Probe>>,
    /// `exp(-gain * T)` per pixel.
    slack: Vec<f64>,
}

impl BlobSegmenter {
    fn spread(&self, click: &Click, px: f64, py: f64) -> f64 {
        let r = self.params.reach;
        let (dx, dy) = (px - click.x, py - click.y);
        (-(dx * dx + dy * dy) / (2.0 * r * r)).exp()
    }

    fn likeness(&self, intensity: f64, mean: f64) -> f64 {
        (-(intensity - mean) * (intensity - mean) / self.params.tau).exp()
    }
}

impl LogitModel for BlobSegmenter {
    type Cache = BlobCache;

    fn disk(&self) -> DiskProfile {
        self.params.disk
    }

    fn logits(&self, image: &Image, clicks: &[Click]) -> Result<(Vec<f64>, BlobCache)> {
        let (w, h) = image.dims();
        let p = &self.params;
        let maps = render_clicks(clicks, w, h, p.disk.sharpness)?;
        let bp = gaussian_blur(maps.positive.data(), w, h, &self.kernel);
        let bn = gaussian_blur(maps.negative.data(), w, h, &self.kernel);
        let intensity = image.intensity();

        let mut t = vec![0.0; w * h];
        let mut probes = Vec::with_capacity(clicks.len());
        for c in clicks {
            if c.polarity != Polarity::Positive {
                probes.push(None);
                continue;
            }
            let probe = self.probe(c, &intensity, w, h);
            if probe.sum > 0.0 {
                for (i, v) in t.iter_mut().enumerate() {
                    let (px, py) = ((i % w) as f64, (i / w) as f64);
                    *v += self.spread(c, px, py) * self.likeness(intensity[i], probe.mean);
                }
            }
            probes.push(Some(probe));
        }
        let slack: Vec<f64> = t.iter().map(|&v| (-p.gain * v).exp()).collect();

        let z = (0..w * h)
            .map(|i| {
                p.positive_weight * bp[i] - p.negative_weight * bn[i]
                    + p.bias
                    + p.affinity * (1.0 - slack[i])
            })
            .collect();
        Ok((
            z,
            BlobCache {
                maps,
                intensity,
                probes,
                slack,
            },
        ))
    }

    fn backprop(&self, image: &Image, clicks: &[Click], cache: &BlobCache, dz: &[f64]) -> Result<Vec<(f64, f64)>> {
        let (w, h) = image.dims();
        let p = &self.params;
        let scaled_pos: Vec<f64> = dz.iter().map(|g| p.positive_weight * g).collect();
        let scaled_neg: Vec<f64> = dz.iter().map(|g| -p.negative_weight * g).collect();
        let upstream = MapGradient {
            positive: gaussian_blur(&scaled_pos, w, h, &self.kernel),
            negative: gaussian_blur(&scaled_neg, w, h, &self.kernel),
        };
        let mut grads = render_gradient(&cache.maps, &upstream)?;

        // dL/dT per pixel.
        let dt: Vec<f64> = dz
            .iter()
            .zip(&cache.slack)
            .map(|(g, s)| g * p.affinity * p.gain * s)
            .collect();
        let r2 = p.reach * p.reach;
        for ((c, probe), g) in clicks.iter().zip(&cache.probes).zip(grads.iter_mut()) {
            let Some(probe) = probe else { continue };
            if probe.sum <= 0.0 {
                continue;
            }
            let (mut gx, mut gy, mut dmu) = (0.0, 0.0, 0.0);
            for (i, &d) in dt.iter().enumerate() {
                let (px, py) = ((i % w) as f64, (i / w) as f64);
                let spread = self.spread(c, px, py);
                let like = self.likeness(cache.intensity[i], probe.mean);
                let k = d * spread * like;
                gx += k * (px - c.x) / r2;
                gy += k * (py - c.y) / r2;
                dmu += k * 2.0 * (cache.intensity[i] - probe.mean) / p.tau;
            }
            // d mu / d c through the probe weights.
            let rho2 = p.probe * p.probe;
            let (mut mx, mut my) = (0.0, 0.0);
            for &(i, k, dx, dy) in &probe.pixels {
                let centered = k * (cache.intensity[i] - probe.mean) / probe.sum;
                mx += centered * dx / rho2;
                my += centered * dy / rho2;
            }
            g.0 += gx + dmu * mx;
            g.1 += gy + dmu * my;
        }
        Ok(grads)
    }
}

impl Segmenter for BlobSegmenter {
    fn capabilities(&self) -> SegmenterCapabilities {
        SegmenterCapabilities {
            input_mode: InputMode::DiskMaps,
            supports_gradients: true,
            native_resolution: None,
        }
    }

    fn disk(&self) -> DiskProfile {
        self.params.disk
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
