use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::BinaryMask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// Label raster where 0 is background and labels `1..=count` are assigned
/// in row-major order of each component's first pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Components {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    /// `areas[l - 1]` is the pixel count of label `l`.
    pub areas: Vec<usize>,
    /// Row-major index of the first pixel of each label.
    pub first_pixel: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.areas.len()
    }

    pub fn mask(&self, label: u32) -> BinaryMask {
        BinaryMask::from_vec(
            self.width,
            self.height,
            self.labels.iter().map(|&l| l == label).collect(),
        )
        .expect("dimensions come from a valid mask")
    }
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Components {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    let mut first_pixel = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..w * h {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        let label = areas.len() as u32 + 1;
        labels[start] = label;
        first_pixel.push(start);
        let mut area = 0;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.data()[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        areas.push(area);
    }

    Components {
        width: w,
        height: h,
        labels,
        areas,
        first_pixel,
    }
}
