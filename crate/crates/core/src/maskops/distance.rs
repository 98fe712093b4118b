use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::{Error, Result};

/// Per-pixel Euclidean distances in pixel units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DistanceMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    fn from_squared(width: usize, height: usize, sq: Vec<f64>) -> Self {
        DistanceMap {
            width,
            height,
            data: sq.into_iter().map(f64::sqrt).collect(),
        }
    }
}

/// Lower envelope of the parabolas `(q - p)^2 + f[p]` over the finite
/// samples of `f`, evaluated at every integer `q`.
fn envelope_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: usize = 0;
    let mut any = false;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        if !any {
            any = true;
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            continue;
        }
        loop {
            let p = v[k];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    if !any {
        out.fill(f64::INFINITY);
        return;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest site.
/// Pixels are `INFINITY` when there are no sites at all.
///
/// Columns are resolved with a linear scan, rows with the lower envelope of
/// parabolas. All intermediate values are integers, so results are exact.
pub(crate) fn squared_distance_to_sites(width: usize, height: usize, sites: &[bool]) -> Vec<f64> {
    debug_assert_eq!(sites.len(), width * height);
    let mut cols = vec![f64::INFINITY; width * height];
    for x in 0..width {
        let mut last: Option<usize> = None;
        for y in 0..height {
            if sites[y * width + x] {
                last = Some(y);
            }
            if let Some(l) = last {
                let d = (y - l) as f64;
                cols[y * width + x] = d * d;
            }
        }
        last = None;
        for y in (0..height).rev() {
            if sites[y * width + x] {
                last = Some(y);
            }
            if let Some(l) = last {
                let d = (l - y) as f64;
                let idx = y * width + x;
                if d * d < cols[idx] {
                    cols[idx] = d * d;
                }
            }
        }
    }

    let mut out = vec![0.0; width * height];
    let mut v = vec![0usize; width];
    let mut z = vec![0.0f64; width + 1];
    for y in 0..height {
        let row = y * width..(y + 1) * width;
        envelope_1d(&cols[row.clone()], &mut out[row], &mut v, &mut z);
    }
    out
}

/// Squared distance from each region pixel to the nearest non-region pixel,
/// with everything beyond the image border counted as non-region.
pub(crate) fn inner_squared_distance(region: &BinaryMask) -> Vec<f64> {
    let (w, h) = region.dims();
    let (pw, ph) = (w + 2, h + 2);
    let mut sites = vec![true; pw * ph];
    for y in 0..h {
        for x in 0..w {
            sites[(y + 1) * pw + x + 1] = !region.get(x, y);
        }
    }
    let padded = squared_distance_to_sites(pw, ph, &sites);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = padded[(y + 1) * pw + x + 1];
        }
    }
    out
}

/// Distance from each pixel inside `region` to the nearest pixel outside it
/// (the image border counts as outside); zero outside the region.
pub fn inner_distance_transform(region: &BinaryMask) -> DistanceMap {
    DistanceMap::from_squared(region.width(), region.height(), inner_squared_distance(region))
}

/// Distance from each pixel to the nearest pixel of `region`; zero inside.
pub fn outer_distance_transform(region: &BinaryMask) -> Result<DistanceMap> {
    if region.is_empty() {
        return Err(Error::EmptyRegion("outer distance transform of an empty region"));
    }
    let sq = squared_distance_to_sites(region.width(), region.height(), region.data());
    Ok(DistanceMap::from_squared(region.width(), region.height(), sq))
}
