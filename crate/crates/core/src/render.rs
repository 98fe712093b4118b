//! Differentiable rasterization of clicks into soft disk maps.
//!
//! A click at `c` with radius `r` covers pixel `p` (pixel centers sit at
//! integer coordinates) with `sigmoid(s * (r - |p - c|))`. Clicks of the same
//! polarity combine by per-pixel maximum, so each pixel's value (and its
//! gradient) belongs to exactly one owning click.

use crate::clickgen::{Click, Polarity};
use crate::maskops::ProbMap;
use crate::{Error, Result};

pub const DEFAULT_SHARPNESS: f64 = 2.0;

/// Footprints extend `FOOTPRINT_MARGIN / sharpness` pixels past the radius.
/// At that distance the coverage is below 1e-13.
pub const FOOTPRINT_MARGIN: f64 = 30.0;

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootprintPixel {
    pub index: usize,
    pub value: f64,
    /// Derivative of `value` with respect to the click's x coordinate.
    pub dx: f64,
    pub dy: f64,
}

/// Soft coverage of one click over the pixels near it.
#[derive(Clone, Debug, PartialEq)]
pub struct Footprint {
    pub polarity: Polarity,
    pub pixels: Vec<FootprintPixel>,
}

impl Footprint {
    pub fn of(click: &Click, width: usize, height: usize, sharpness: f64) -> Self {
        let reach = click.radius + FOOTPRINT_MARGIN / sharpness;
        let x0 = (click.x - reach).floor().max(0.0);
        let y0 = (click.y - reach).floor().max(0.0);
        let x1 = (click.x + reach).ceil().min(width as f64 - 1.0);
        let y1 = (click.y + reach).ceil().min(height as f64 - 1.0);
        let mut pixels = Vec::new();
        if x0 <= x1 && y0 <= y1 {
            for py in y0 as usize..=y1 as usize {
                for px in x0 as usize..=x1 as usize {
                    let ex = px as f64 - click.x;
                    let ey = py as f64 - click.y;
                    let dist = (ex * ex + ey * ey).sqrt();
                    if dist > reach {
                        continue;
                    }
                    let value = sigmoid(sharpness * (click.radius - dist));
                    let (dx, dy) = if dist > 0.0 {
                        let k = value * (1.0 - value) * sharpness / dist;
                        (k * ex, k * ey)
                    } else {
                        (0.0, 0.0)
                    };
                    pixels.push(FootprintPixel {
                        index: py * width + px,
                        value,
                        dx,
                        dy,
                    });
                }
            }
        }
        Footprint {
            polarity: click.polarity,
            pixels,
        }
    }

    pub fn mass(&self) -> f64 {
        self.pixels.iter().map(|p| p.value).sum()
    }
}

const NO_OWNER: u32 = u32::MAX;

/// Rendered positive / negative click channels plus what is needed to
/// backpropagate through them.
#[derive(Clone, Debug)]
pub struct ClickMaps {
    pub positive: ProbMap,
    pub negative: ProbMap,
    pub footprints: Vec<Footprint>,
    owner_positive: Vec<u32>,
    owner_negative: Vec<u32>,
}

impl ClickMaps {
    pub fn width(&self) -> usize {
        self.positive.width()
    }

    pub fn height(&self) -> usize {
        self.positive.height()
    }
}

/// Gradient of a scalar with respect to both rendered channels.
#[derive(Clone, Debug, PartialEq)]
pub struct MapGradient {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl MapGradient {
    pub fn zeros(len: usize) -> Self {
        MapGradient {
            positive: vec![0.0; len],
            negative: vec![0.0; len],
        }
    }
}

pub fn render_clicks(clicks: &[Click], width: usize, height: usize, sharpness: f64) -> Result<ClickMaps> {
    if !(sharpness > 0.0) {
        return Err(Error::InvalidArgument(format!("sharpness must be positive, got {sharpness}")));
    }
    if let Some(c) = clicks.iter().find(|c| !(c.radius > 0.0)) {
        return Err(Error::InvalidArgument(format!("click radius must be positive, got {}", c.radius)));
    }
    let mut positive = ProbMap::zeros(width, height);
    let mut negative = ProbMap::zeros(width, height);
    let mut owner_positive = vec![NO_OWNER; width * height];
    let mut owner_negative = vec![NO_OWNER; width * height];
    let mut footprints = Vec::with_capacity(clicks.len());

    for (ci, click) in clicks.iter().enumerate() {
        let fp = Footprint::of(click, width, height, sharpness);
        let (map, owner) = match click.polarity {
            Polarity::Positive => (&mut positive, &mut owner_positive),
            Polarity::Negative => (&mut negative, &mut owner_negative),
        };
        let data = map.data_mut();
        for px in &fp.pixels {
            if owner[px.index] == NO_OWNER || px.value > data[px.index] {
                data[px.index] = px.value;
                owner[px.index] = ci as u32;
            }
        }
        footprints.push(fp);
    }

    Ok(ClickMaps {
        positive,
        negative,
        footprints,
        owner_positive,
        owner_negative,
    })
}

/// Chain rule from per-pixel map gradients to per-click `(dL/dx, dL/dy)`.
/// Pixels owned by another click of the same polarity contribute nothing.
pub fn render_gradient(maps: &ClickMaps, upstream: &MapGradient) -> Result<Vec<(f64, f64)>> {
    let n = maps.width() * maps.height();
    if upstream.positive.len() != n || upstream.negative.len() != n {
        return Err(Error::InvalidArgument(format!(
            "upstream gradient length {} / {} does not match map size {n}",
            upstream.positive.len(),
            upstream.negative.len()
        )));
    }
    Ok(maps
        .footprints
        .iter()
        .enumerate()
        .map(|(ci, fp)| {
            let (grad, owner) = match fp.polarity {
                Polarity::Positive => (&upstream.positive, &maps.owner_positive),
                Polarity::Negative => (&upstream.negative, &maps.owner_negative),
            };
            let mut g = (0.0, 0.0);
            for px in &fp.pixels {
                if owner[px.index] == ci as u32 {
                    g.0 += grad[px.index] * px.dx;
                    g.1 += grad[px.index] * px.dy;
                }
            }
            g
        })
        .collect())
}
