use super::*;
use crate::attack::Direction;
use crate::segmenters::{BlobParams, BlobSegmenter, DiskProfile, InputMode, OracleSegmenter, SegmenterCapabilities};

fn square(size: usize, lo: usize, hi: usize) -> BinaryMask {
    BinaryMask::from_fn(size, size, |x, y| (lo..=hi).contains(&x) && (lo..=hi).contains(&y))
}

/// Always returns the same map, whatever the clicks.
struct Frozen(ProbMap);

impl Segmenter for Frozen {
    fn capabilities(&self) -> SegmenterCapabilities {
        SegmenterCapabilities {
            input_mode: InputMode::RawCoordinates,
            supports_gradients: false,
            native_resolution: None,
        }
    }
    fn disk(&self) -> DiskProfile {
        DiskProfile::default()
    }
    fn predict(&self, _: &SegmenterRequest<'_>) -> Result<ProbMap> {
        Ok(self.0.clone())
    }
    fn dice_gradient(&self, _: &SegmenterRequest<'_>, _: &BinaryMask, _: Direction, _: usize) -> Result<(f64, (f64, f64))> {
        Err(Error::GradientsUnsupported)
    }
}

#[test]
fn baseline_click_at_square_center() {
    let gt = square(32, 10, 20);
    let c = baseline_click(&ProbMap::zeros(32, 32), &gt, 5.0, &Protocol::default())
        .unwrap()
        .unwrap();
    assert_eq!((c.x, c.y, c.polarity), (15.0, 15.0, Polarity::Positive));
    assert_eq!(c.radius, 5.0);
}

#[test]
fn baseline_click_on_thin_ring_matches_brute_force_argmax() {
    let gt = BinaryMask::from_fn(32, 32, |x, y| {
        let r = ((x as f64 - 15.3).powi(2) + (y as f64 - 16.1).powi(2)).sqrt();
        (8.0..11.5).contains(&r)
    });
    // Distance from each ring pixel to the nearest pixel outside it, where
    // everything beyond the image border counts as outside.
    let mut best = (-1.0, 0, 0);
    for y in 0..32i64 {
        for x in 0..32i64 {
            if !gt.get(x as usize, y as usize) {
                continue;
            }
            let mut d = f64::INFINITY;
            for v in -1..=32i64 {
                for u in -1..=32i64 {
                    let inside = (0..32).contains(&u) && (0..32).contains(&v) && gt.get(u as usize, v as usize);
                    if !inside {
                        d = d.min((((u - x) * (u - x) + (v - y) * (v - y)) as f64).sqrt());
                    }
                }
            }
            if d > best.0 {
                best = (d, x, y);
            }
        }
    }
    let c = baseline_click(&ProbMap::zeros(32, 32), &gt, 5.0, &Protocol::default())
        .unwrap()
        .unwrap();
    assert_eq!((c.x, c.y), (best.1 as f64, best.2 as f64));
}

#[test]
fn larger_false_positive_wins() {
    // FN: 4x5 block inside gt. FP: 5x10 block outside gt.
    let gt = BinaryMask::from_fn(40, 40, |x, y| x < 20 && y < 20);
    let pred = ProbMap::from_mask(&BinaryMask::from_fn(40, 40, |x, y| {
        (x < 20 && y < 20 && !(x < 4 && y < 5)) || ((25..35).contains(&x) && (30..35).contains(&y))
    }));
    let c = baseline_click(&pred, &gt, 5.0, &Protocol::default()).unwrap().unwrap();
    assert_eq!(c.polarity, Polarity::Negative);
    let (x, y) = c.pixel(40, 40).unwrap();
    assert!((25..35).contains(&x) && (30..35).contains(&y));
    assert!(is_valid_click(&c, &pred, &gt, 0.5));
}

#[test]
fn no_errors_means_converged() {
    let gt = square(16, 3, 9);
    let pred = ProbMap::from_mask(&gt);
    assert!(baseline_click(&pred, &gt, 5.0, &Protocol::default()).unwrap().is_none());
}

#[test]
fn validity_rules() {
    let gt = square(16, 4, 11);
    let pred = ProbMap::from_mask(&BinaryMask::from_fn(16, 16, |x, y| x < 8 && y < 8));
    let at = |x, y, polarity| Click { x, y, polarity, radius: 5.0 };
    assert!(is_valid_click(&at(10.0, 10.0, Polarity::Positive), &pred, &gt, 0.5));
    assert!(!is_valid_click(&at(5.0, 5.0, Polarity::Positive), &pred, &gt, 0.5));
    assert!(is_valid_click(&at(1.0, 1.0, Polarity::Negative), &pred, &gt, 0.5));
    assert!(!is_valid_click(&at(10.0, 10.0, Polarity::Negative), &pred, &gt, 0.5));
    assert!(!is_valid_click(&at(-1.0, 10.0, Polarity::Positive), &pred, &gt, 0.5));
    assert!(!is_valid_click(&at(10.0, 16.0, Polarity::Positive), &pred, &gt, 0.5));
    // Rounds to the nearest pixel.
    assert!(is_valid_click(&at(9.6, 10.4, Polarity::Positive), &pred, &gt, 0.5));
    let regions = Protocol::default().regions(&pred, &gt).unwrap();
    for y in 0..16 {
        for x in 0..16 {
            for p in [Polarity::Positive, Polarity::Negative] {
                let c = at(x as f64, y as f64, p);
                assert_eq!(is_valid_in(&c, &regions), is_valid_click(&c, &pred, &gt, 0.5));
            }
        }
    }
}

#[test]
fn oracle_trajectory_is_perfect() {
    let gt = square(24, 6, 15);
    let seg = OracleSegmenter::new(gt.clone(), DiskProfile::default());
    let image = Image::uniform(24, 24, 0.5);
    let t = run_baseline_trajectory(&seg, &image, &gt, 10, &Protocol::default()).unwrap();
    assert_eq!(t.iou_curve, vec![1.0; 10]);
    assert_eq!(t.biou_curve, vec![1.0; 10]);
    assert_eq!(t.clicks.len(), 1);
    assert_eq!(t.converged_at, Some(1));
}

#[test]
fn frozen_prediction_repeats_the_same_click() {
    let gt = square(24, 4, 12);
    let seg = Frozen(ProbMap::zeros(24, 24));
    let t = run_baseline_trajectory(&seg, &Image::uniform(24, 24, 0.5), &gt, 6, &Protocol::default()).unwrap();
    assert_eq!(t.clicks.len(), 6);
    assert!(t.clicks.iter().all(|c| *c == t.clicks[0]));
    assert_eq!(t.iou_curve, vec![0.0; 6]);
    assert_eq!(t.converged_at, None);
}

#[test]
fn blob_trajectory_matches_manual_replay() {
    let gt = BinaryMask::from_fn(32, 32, |x, y| {
        (x as f64 - 14.0).powi(2) / 64.0 + (y as f64 - 17.0).powi(2) / 25.0 <= 1.0
    });
    let image = Image::from_fn(32, 32, |x, y| {
        let v = if gt.get(x, y) { 0.7 } else { 0.25 + 0.05 * ((x + y) % 3) as f64 };
        [v, v, v]
    });
    let seg = BlobSegmenter::new(BlobParams::default()).unwrap();
    let protocol = Protocol::default();
    let t = run_baseline_trajectory(&seg, &image, &gt, 5, &protocol).unwrap();

    let mut pred = ProbMap::zeros(32, 32);
    let mut clicks = Vec::new();
    for k in 0..5 {
        let Some(c) = baseline_click(&pred, &gt, 5.0, &protocol).unwrap() else {
            assert_eq!(t.converged_at, Some(k));
            break;
        };
        clicks.push(c);
        pred = seg
            .predict(&SegmenterRequest { image: &image, clicks: &clicks, prev_mask: None })
            .unwrap();
        let (i, b) = protocol.scores(&pred, &gt).unwrap();
        assert_eq!((t.iou_curve[k], t.biou_curve[k]), (i, b));
    }
    assert_eq!(t.clicks, clicks);
}

#[test]
fn zero_clicks_rejected() {
    let gt = square(8, 2, 5);
    let seg = OracleSegmenter::new(gt.clone(), DiskProfile::default());
    assert!(run_baseline_trajectory(&seg, &Image::uniform(8, 8, 0.0), &gt, 0, &Protocol::default()).is_err());
}

#[test]
fn predict_failures_carry_the_round() {
    let gt = square(16, 4, 11);
    let seg = OracleSegmenter::new(gt.clone(), DiskProfile::default());
    let err = run_baseline_trajectory(&seg, &Image::uniform(15, 16, 0.0), &gt, 3, &Protocol::default());
    assert!(err.is_err());
    let seg = OracleSegmenter::new(square(20, 4, 11), DiskProfile::default());
    match run_baseline_trajectory(&seg, &Image::uniform(16, 16, 0.0), &gt, 3, &Protocol::default()) {
        Err(Error::AtClick { click, .. }) => assert_eq!(click, 1),
        other => panic!("{other:?}"),
    }
}
