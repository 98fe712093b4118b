use super::{inner_squared_distance, BinaryMask};
use crate::{Error, Result};

/// Intersection over union. Two empty masks score 1.0.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Boundary band width used when none is configured: 2% of the image
/// diagonal, at least one pixel.
pub fn default_boundary_width(width: usize, height: usize) -> f64 {
    let diag = ((width * width + height * height) as f64).sqrt();
    (0.02 * diag).max(1.0)
}

/// Pixels of `mask` within Euclidean distance `d` of its boundary, i.e.
/// whose distance to the nearest non-mask pixel (border included) is `<= d`.
pub fn boundary_band(mask: &BinaryMask, d: f64) -> BinaryMask {
    let sq = inner_squared_distance(mask);
    let limit = d * d;
    BinaryMask::from_vec(
        mask.width(),
        mask.height(),
        mask.data()
            .iter()
            .zip(&sq)
            .map(|(&m, &s)| m && s <= limit)
            .collect(),
    )
    .expect("same dimensions as input")
}

/// Boundary IoU: IoU of the two masks' inner boundary bands of width `d`.
pub fn boundary_iou(a: &BinaryMask, b: &BinaryMask, d: f64) -> Result<f64> {
    a.ensure_same_dims(b)?;
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "boundary width must be positive, got {d}"
        )));
    }
    iou(&boundary_band(a, d), &boundary_band(b, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Erode-and-subtract by per-pixel search over the padded complement.
    fn naive_band(mask: &BinaryMask, d: f64) -> BinaryMask {
        let (w, h) = mask.dims();
        let reach = d.ceil() as i64 + 1;
        BinaryMask::from_fn(w, h, |x, y| {
            if !mask.get(x, y) {
                return false;
            }
            let (x, y) = (x as i64, y as i64);
            for qy in y - reach..=y + reach {
                for qx in x - reach..=x + reach {
                    let outside = qx < 0
                        || qy < 0
                        || qx >= w as i64
                        || qy >= h as i64
                        || !mask.get(qx as usize, qy as usize);
                    let sq = ((qx - x).pow(2) + (qy - y).pow(2)) as f64;
                    if outside && sq <= d * d {
                        return true;
                    }
                }
            }
            false
        })
    }

    fn naive_biou(a: &BinaryMask, b: &BinaryMask, d: f64) -> f64 {
        let (ba, bb) = (naive_band(a, d), naive_band(b, d));
        let mut inter = 0;
        let mut union = 0;
        for i in 0..ba.data().len() {
            inter += (ba.data()[i] && bb.data()[i]) as usize;
            union += (ba.data()[i] || bb.data()[i]) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    #[test]
    fn iou_cases() {
        let a = BinaryMask::from_fn(6, 6, |x, y| (1..5).contains(&x) && (1..5).contains(&y));
        let b = BinaryMask::from_fn(6, 6, |x, y| (2..4).contains(&x) && (2..4).contains(&y));
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.25);
        let c = BinaryMask::from_fn(6, 6, |x, _| x == 0);
        assert_eq!(iou(&a, &c).unwrap(), 0.0);
        assert_eq!(iou(&BinaryMask::new(3, 3), &BinaryMask::new(3, 3)).unwrap(), 1.0);
        assert!(iou(&a, &BinaryMask::new(5, 6)).is_err());
    }

    #[test]
    fn biou_cases() {
        let a = BinaryMask::from_fn(20, 20, |x, y| (3..15).contains(&x) && (5..17).contains(&y));
        let b = BinaryMask::from_fn(20, 20, |x, y| (4..16).contains(&x) && (5..12).contains(&y));
        assert_eq!(boundary_iou(&a, &a, 2.0).unwrap(), 1.0);
        let diag = (800f64).sqrt();
        assert_eq!(boundary_iou(&a, &b, diag).unwrap(), iou(&a, &b).unwrap());
        assert!(boundary_iou(&a, &b, 0.0).is_err());
        assert!(boundary_iou(&a, &b, -1.0).is_err());
        assert_eq!(default_boundary_width(10, 10), 1.0);
        assert!((default_boundary_width(300, 400) - 10.0).abs() < 1e-12);
    }

    fn pair_strategy() -> impl Strategy<Value = (BinaryMask, BinaryMask, f64)> {
        (1usize..=32, 1usize..=32, 0.5f64..6.0).prop_flat_map(|(w, h, d)| {
            let v = proptest::collection::vec(proptest::bool::weighted(0.6), w * h);
            (v.clone(), v).prop_map(move |(x, y)| {
                (
                    BinaryMask::from_vec(w, h, x).unwrap(),
                    BinaryMask::from_vec(w, h, y).unwrap(),
                    d,
                )
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn biou_matches_naive((a, b, d) in pair_strategy()) {
            let got = boundary_iou(&a, &b, d).unwrap();
            prop_assert!((got - naive_biou(&a, &b, d)).abs() <= 1e-9);
            prop_assert!(got <= 1.0);
            prop_assert_eq!(boundary_iou(&a, &a, d).unwrap(), 1.0);
        }

        #[test]
        fn iou_symmetric((a, b, _d) in pair_strategy()) {
            prop_assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
        }
    }
}
