//! Seeded synthetic images: disks, rings, L-shapes and thin bars on
//! textured backgrounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Sample;
use crate::maskops::BinaryMask;
use crate::segmenters::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Disk,
    Ring,
    LShape,
    ThinBar,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Disk, Shape::Ring, Shape::LShape, Shape::ThinBar];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Disk => "disk",
            Shape::Ring => "ring",
            Shape::LShape => "lshape",
            Shape::ThinBar => "bar",
        }
    }
}

fn shape_mask(shape: Shape, size: usize, rng: &mut ChaCha8Rng) -> BinaryMask {
    let s = size as f64;
    let cx = s * rng.gen_range(0.35..0.65);
    let cy = s * rng.gen_range(0.35..0.65);
    match shape {
        Shape::Disk => {
            let r = s * rng.gen_range(0.15..0.3);
            BinaryMask::from_fn(size, size, |x, y| (x as f64 - cx).hypot(y as f64 - cy) <= r)
        }
        Shape::Ring => {
            let outer = s * rng.gen_range(0.22..0.34);
            let inner = outer - s * rng.gen_range(0.08..0.13);
            BinaryMask::from_fn(size, size, |x, y| {
                let d = (x as f64 - cx).hypot(y as f64 - cy);
                d <= outer && d >= inner
            })
        }
        Shape::LShape => {
            let arm = s * rng.gen_range(0.12..0.2);
            let len = s * rng.gen_range(0.4..0.6);
            let (x0, y0) = (cx - len / 2.0, cy - len / 2.0);
            let flip_x = rng.gen_bool(0.5);
            let flip_y = rng.gen_bool(0.5);
            BinaryMask::from_fn(size, size, |x, y| {
                let mut u = x as f64 - x0;
                let mut v = y as f64 - y0;
                if flip_x {
                    u = len - u;
                }
                if flip_y {
                    v = len - v;
                }
                let inside = (0.0..len).contains(&u) && (0.0..len).contains(&v);
                inside && (u < arm || v >= len - arm)
            })
        }
        Shape::ThinBar => {
            let half_len = s * rng.gen_range(0.25..0.4);
            let half_thick = rng.gen_range(1.0..2.2);
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let (c, sn) = (angle.cos(), angle.sin());
            BinaryMask::from_fn(size, size, |x, y| {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let along = dx * c + dy * sn;
                let across = -dx * sn + dy * c;
                along.abs() <= half_len && across.abs() <= half_thick
            })
        }
    }
}

fn textured_image(gt: &BinaryMask, rng: &mut ChaCha8Rng) -> Image {
    let fg_level: f64 = rng.gen_range(0.6..0.8);
    let bg_level: f64 = rng.gen_range(0.15..0.35);
    let tint: [f64; 3] = [rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08)];
    let (fx, fy, phase) = (rng.gen_range(0.2..0.6), rng.gen_range(0.2..0.6), rng.gen_range(0.0..6.28));
    let noise: Vec<f64> = (0..gt.width() * gt.height())
        .map(|_| rng.gen_range(-0.03..0.03))
        .collect();
    Image::from_fn(gt.width(), gt.height(), |x, y| {
        let texture = 0.06 * (fx * x as f64 + fy * y as f64 + phase).sin();
        let base = if gt.get(x, y) { fg_level } else { bg_level + texture };
        let n = noise[y * gt.width() + x];
        [
            (base + tint[0] + n).clamp(0.0, 1.0),
            (base + tint[1] + n).clamp(0.0, 1.0),
            (base + tint[2] + n).clamp(0.0, 1.0),
        ]
    })
}

/// `count` samples of `size x size`, shapes cycling through [`Shape::ALL`].
pub fn generate(count: usize, size: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let shape = Shape::ALL[i % Shape::ALL.len()];
            let gt = loop {
                let m = shape_mask(shape, size, &mut rng);
                if m.count() >= 4 {
                    break m;
                }
            };
            let image = textured_image(&gt, &mut rng);
            Sample {
                id: format!("{:03}_{}", i, shape.name()),
                image,
                gt,
            }
        })
        .collect()
}
