use serde::{Deserialize, Serialize};

use super::{connected_components, BinaryMask, Connectivity, ProbMap};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    FalsePositive,
    FalseNegative,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorComponent {
    pub label: u32,
    pub kind: ErrorKind,
    pub area: usize,
    pub first_pixel: usize,
}

/// False-positive / false-negative split of a prediction against ground
/// truth, with connected components labeled over both.
#[derive(Clone, Debug)]
pub struct ErrorRegions {
    pub false_positive: BinaryMask,
    pub false_negative: BinaryMask,
    /// 0 for correct pixels, otherwise `components[label - 1]`.
    pub labels: Vec<u32>,
    pub components: Vec<ErrorComponent>,
}

impl ErrorRegions {
    /// Builds regions from an already binarized prediction. FP and FN
    /// components are labeled separately, then numbered by first pixel.
    pub fn from_masks(pred: &BinaryMask, gt: &BinaryMask, connectivity: Connectivity) -> Result<Self> {
        let false_positive = pred.and_not(gt)?;
        let false_negative = gt.and_not(pred)?;
        let fp = connected_components(&false_positive, connectivity);
        let fn_ = connected_components(&false_negative, connectivity);

        let mut parts: Vec<(usize, ErrorKind, u32, usize)> = Vec::new();
        for (i, (&first, &area)) in fp.first_pixel.iter().zip(&fp.areas).enumerate() {
            parts.push((first, ErrorKind::FalsePositive, i as u32 + 1, area));
        }
        for (i, (&first, &area)) in fn_.first_pixel.iter().zip(&fn_.areas).enumerate() {
            parts.push((first, ErrorKind::FalseNegative, i as u32 + 1, area));
        }
        parts.sort_by_key(|p| p.0);

        let mut fp_map = vec![0u32; fp.count() + 1];
        let mut fn_map = vec![0u32; fn_.count() + 1];
        let mut components = Vec::with_capacity(parts.len());
        for (new_label, &(first_pixel, kind, old, area)) in parts.iter().enumerate() {
            let label = new_label as u32 + 1;
            match kind {
                ErrorKind::FalsePositive => fp_map[old as usize] = label,
                ErrorKind::FalseNegative => fn_map[old as usize] = label,
            }
            components.push(ErrorComponent {
                label,
                kind,
                area,
                first_pixel,
            });
        }
        let labels = fp
            .labels
            .iter()
            .zip(&fn_.labels)
            .map(|(&a, &b)| if a != 0 { fp_map[a as usize] } else { fn_map[b as usize] })
            .collect();

        Ok(ErrorRegions {
            false_positive,
            false_negative,
            labels,
            components,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component_mask(&self, label: u32) -> BinaryMask {
        BinaryMask::from_vec(
            self.false_positive.width(),
            self.false_positive.height(),
            self.labels.iter().map(|&l| l == label).collect(),
        )
        .expect("dimensions come from a valid mask")
    }

    /// Largest component; ties go to the earliest label.
    pub fn largest(&self) -> Option<&ErrorComponent> {
        self.components
            .iter()
            .fold(None, |best: Option<&ErrorComponent>, c| match best {
                Some(b) if b.area >= c.area => Some(b),
                _ => Some(c),
            })
    }

    /// The region a click of the given error kind has to land in.
    pub fn region(&self, kind: ErrorKind) -> &BinaryMask {
        match kind {
            ErrorKind::FalsePositive => &self.false_positive,
            ErrorKind::FalseNegative => &self.false_negative,
        }
    }
}

pub fn error_regions(
    pred: &ProbMap,
    gt: &BinaryMask,
    threshold: f64,
    connectivity: Connectivity,
) -> Result<ErrorRegions> {
    pred.ensure_dims(gt.dims())?;
    ErrorRegions::from_masks(&pred.threshold(threshold), gt, connectivity)
}
