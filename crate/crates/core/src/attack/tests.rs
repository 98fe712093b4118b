use super::*;
use crate::clickgen::{is_valid_click, run_baseline_trajectory, Polarity};
use crate::harness::synthetic;
use crate::render::sigmoid;
use crate::segmenters::{BlobParams, BlobSegmenter, DiskProfile, OracleSegmenter, RuggedSegmenter};
use proptest::prelude::*;

fn at(x: f64, y: f64, polarity: Polarity) -> Click {
    Click { x, y, polarity, radius: 5.0 }
}

fn blob() -> BlobSegmenter {
    BlobSegmenter::new(BlobParams::default()).unwrap()
}

#[test]
fn learning_rate_examples() {
    assert!((learning_rate(400, 400, None) - 5.0).abs() < 1e-12);
    assert!((learning_rate(800, 800, None) - 10.0).abs() < 1e-12);
    assert_eq!(learning_rate(13, 999, Some(2.5)), 2.5);
}

#[test]
fn dice_examples() {
    let gt = BinaryMask::from_fn(4, 4, |x, _| x < 2);
    let exact = dice_loss(&ProbMap::from_mask(&gt), &gt).unwrap();
    assert!(exact.abs() < DICE_SMOOTHING / 8.0);
    let empty = dice_loss(&ProbMap::zeros(4, 4), &gt).unwrap();
    assert!((empty - (1.0 - 1.0 / 9.0)).abs() < 1e-12);
    let half = dice_loss(&ProbMap::filled(4, 4, 0.5), &gt).unwrap();
    assert!((half - (1.0 - 9.0 / 17.0)).abs() < 1e-12);
    assert!(dice_loss(&ProbMap::zeros(4, 5), &gt).is_err());
}

#[test]
fn dice_gradient_matches_finite_differences() {
    let gt = BinaryMask::from_fn(6, 5, |x, y| (x + 2 * y) % 3 == 0);
    let p: Vec<f64> = (0..30).map(|i| 0.1 + 0.8 * ((i * 7) % 11) as f64 / 11.0).collect();
    let (_, grad) = dice_loss_and_grad(&p, &gt);
    let h = 1e-6;
    for i in 0..p.len() {
        let mut a = p.clone();
        let mut b = p.clone();
        a[i] += h;
        b[i] -= h;
        let fd = (dice_loss_and_grad(&a, &gt).0 - dice_loss_and_grad(&b, &gt).0) / (2.0 * h);
        assert!((fd - grad[i]).abs() < 1e-8, "pixel {i}: {fd} vs {}", grad[i]);
    }
}

#[test]
fn direction_semantics() {
    assert_eq!(Direction::Max.sign(), 1.0);
    assert_eq!(Direction::Min.sign(), -1.0);
    assert!(Direction::Max.improves(0.6, 0.5, 1e-9));
    assert!(!Direction::Max.improves(0.5 + 1e-10, 0.5, 1e-9));
    assert!(Direction::Min.improves(0.4, 0.5, 1e-9));
    assert!(!Direction::Min.improves(0.5, 0.5, 1e-9));
}

#[test]
fn ill_is_zero_when_region_covers_everything() {
    let field = LocationField::new(&BinaryMask::full(32, 32)).unwrap();
    let (v, g) = field.value_and_grad(&at(16.0, 16.0, Polarity::Positive), 2.0).unwrap();
    assert_eq!(v, 0.0);
    assert_eq!(g, (0.0, 0.0));
}

#[test]
fn ill_grows_with_distance_from_region() {
    let region = BinaryMask::from_fn(48, 48, |x, y| x < 10 && y < 48);
    let field = LocationField::new(&region).unwrap();
    let mut last = field.value(&at(5.0, 24.0, Polarity::Positive), 2.0).unwrap();
    assert!(last < 1e-3);
    for x in [12.0, 18.0, 25.0, 33.0] {
        let v = field.value(&at(x, 24.0, Polarity::Positive), 2.0).unwrap();
        assert!(v > last);
        last = v;
    }
}

#[test]
fn ill_matches_per_pixel_summation() {
    let region = BinaryMask::from_fn(32, 32, |x, y| (x as i32 - 8).abs() + (y as i32 - 20).abs() <= 5);
    let field = LocationField::new(&region).unwrap();
    let click = at(19.3, 11.7, Polarity::Positive);
    let (mut num, mut mass) = (0.0, 0.0);
    for y in 0..32 {
        for x in 0..32 {
            let mut d = f64::INFINITY;
            for v in 0..32 {
                for u in 0..32 {
                    if region.get(u, v) {
                        let (du, dv) = (u as f64 - x as f64, v as f64 - y as f64);
                        d = d.min((du * du + dv * dv).sqrt());
                    }
                }
            }
            let dist = (x as f64 - click.x).hypot(y as f64 - click.y);
            let m = sigmoid(2.0 * (click.radius - dist));
            num += m * d;
            mass += m;
        }
    }
    let want = num / (mass * (32.0f64 * 32.0 * 2.0).sqrt());
    let got = field.value(&click, 2.0).unwrap();
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
}

#[test]
fn ill_gradient_matches_finite_differences() {
    let region = BinaryMask::from_fn(40, 40, |x, y| (x as f64 - 12.0).hypot(y as f64 - 25.0) < 6.0);
    let field = LocationField::new(&region).unwrap();
    for (x, y) in [(20.3, 14.8), (30.1, 30.6), (13.5, 24.2), (2.2, 37.9)] {
        let c = at(x, y, Polarity::Negative);
        let (_, g) = field.value_and_grad(&c, 2.0).unwrap();
        let h = 1e-5;
        let f = |dx: f64, dy: f64| field.value(&Click { x: x + dx, y: y + dy, ..c }, 2.0).unwrap();
        let fx = (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h);
        let fy = (f(0.0, h) - f(0.0, -h)) / (2.0 * h);
        let scale = fx.abs().max(fy.abs()).max(1e-8);
        assert!((fx - g.0).abs() / scale < 1e-5, "{fx} vs {}", g.0);
        assert!((fy - g.1).abs() / scale < 1e-5, "{fy} vs {}", g.1);
    }
}

#[test]
fn location_field_needs_a_region() {
    let gt = BinaryMask::from_fn(16, 16, |x, _| x < 8);
    let regions = Protocol::default().regions(&ProbMap::from_mask(&gt), &gt).unwrap();
    assert!(LocationField::for_polarity(&regions, Polarity::Positive).is_err());
    assert!(interaction_location_loss(&at(3.0, 3.0, Polarity::Negative), &regions, 2.0).is_err());
}

#[test]
fn total_loss_composition() {
    let gt = BinaryMask::from_fn(20, 20, |x, y| (4..14).contains(&x) && (5..15).contains(&y));
    let pred = ProbMap::from_vec(20, 20, (0..400).map(|i| ((i * 13) % 17) as f64 / 17.0).collect()).unwrap();
    let regions = Protocol::default().regions(&pred, &gt).unwrap();
    let click = at(9.0, 9.0, Polarity::Positive);
    let dice = dice_loss(&pred, &gt).unwrap();
    let ill = interaction_location_loss(&click, &regions, 2.0).unwrap();
    let max0 = total_loss(&pred, &gt, &click, &regions, Direction::Max, 0.0, 2.0).unwrap();
    let min0 = total_loss(&pred, &gt, &click, &regions, Direction::Min, 0.0, 2.0).unwrap();
    assert_eq!((max0, min0), (dice, -dice));
    let max = total_loss(&pred, &gt, &click, &regions, Direction::Max, 1000.0, 2.0).unwrap();
    let min = total_loss(&pred, &gt, &click, &regions, Direction::Min, 1000.0, 2.0).unwrap();
    assert!((max - (dice + 1000.0 * ill)).abs() < 1e-12);
    assert!(((max - min) - 2.0 * dice).abs() < 1e-12);
}

#[test]
fn dice_gradient_flips_with_direction() {
    let s = synthetic::generate(1, 32, 5).remove(0);
    let seg = blob();
    let clicks = [at(16.0, 16.0, Polarity::Positive)];
    let req = SegmenterRequest { image: &s.image, clicks: &clicks, prev_mask: None };
    let (lmax, gmax) = seg.dice_gradient(&req, &s.gt, Direction::Max, 0).unwrap();
    let (lmin, gmin) = seg.dice_gradient(&req, &s.gt, Direction::Min, 0).unwrap();
    assert_eq!((lmax, gmax.0, gmax.1), (-lmin, -gmin.0, -gmin.1));
}

#[test]
fn iteration_delta_examples() {
    let rec = |x: f64, y: f64| IterationRecord {
        iteration: 0,
        x,
        y,
        click_x: x,
        click_y: y,
        loss: 0.0,
        iou: 0.0,
        biou: 0.0,
        ill: 0.0,
        valid: true,
        accepted: false,
    };
    assert_eq!(iteration_deltas(&[rec(3.0, 4.0); 4], 10, 10).unwrap(), vec![0.0; 3]);
    let d = iteration_deltas(&[rec(10.0, 10.0), rec(11.0, 10.0)], 100, 80).unwrap();
    assert!((d[0] - 0.01).abs() < 1e-15);
    assert!(iteration_deltas(&[rec(0.0, 0.0)], 10, 10).is_err());
}

#[test]
fn config_validation() {
    assert!(AttackConfig::default().validate().is_ok());
    for bad in [
        AttackConfig { clicks: 0, ..Default::default() },
        AttackConfig { iterations: 0, ..Default::default() },
        AttackConfig { ill_margin: -0.1, ..Default::default() },
        AttackConfig { ill_weight: f64::NAN, ..Default::default() },
        AttackConfig { lr_override: Some(-1.0), ..Default::default() },
    ] {
        assert!(bad.validate().is_err());
    }
}

fn recheck(outcome: &ClickOutcome, direction: Direction, cfg: &AttackConfig, baseline_iou: f64, prefix: &Prefix, gt: &BinaryMask) {
    assert_eq!(outcome.records.len(), cfg.iterations);
    let mut incumbent = baseline_iou;
    for r in &outcome.records {
        let c = Click { x: r.click_x, y: r.click_y, polarity: outcome.click.polarity, radius: outcome.click.radius };
        assert_eq!(r.valid, is_valid_click(&c, &prefix.pred, gt, 0.5));
        let limit = (1.0 + cfg.ill_margin) * outcome.initial_ill + cfg.ill_slack / (gt.width() as f64).hypot(gt.height() as f64);
        let should = r.valid && direction.improves(r.iou, incumbent, cfg.improvement_tol) && r.ill <= limit;
        assert_eq!(r.accepted, should);
        if should {
            incumbent = r.iou;
        }
    }
    assert_eq!(outcome.iou, incumbent);
}

#[test]
fn optimize_click_brackets_the_baseline() {
    let protocol = Protocol::default();
    let cfg = AttackConfig::default();
    for s in synthetic::generate(4, 32, 11) {
        let seg = RuggedSegmenter::new(blob(), 3, 3.0).unwrap();
        let prefix = Prefix::empty(32, 32);
        let base = run_baseline_trajectory(&seg, &s.image, &s.gt, 1, &protocol).unwrap();
        let lo = optimize_click(&seg, &s.image, &s.gt, &prefix, Direction::Min, &cfg, &protocol).unwrap();
        let hi = optimize_click(&seg, &s.image, &s.gt, &prefix, Direction::Max, &cfg, &protocol).unwrap();
        assert!(lo.iou <= base.iou_curve[0] && base.iou_curve[0] <= hi.iou, "{}", s.id);
        recheck(&lo, Direction::Min, &cfg, base.iou_curve[0], &prefix, &s.gt);
        recheck(&hi, Direction::Max, &cfg, base.iou_curve[0], &prefix, &s.gt);
        assert!(is_valid_click(&lo.click, &prefix.pred, &s.gt, 0.5));
        assert!(is_valid_click(&hi.click, &prefix.pred, &s.gt, 0.5));
    }
}

#[test]
fn oracle_reaches_perfect_iou_in_both_directions() {
    let s = synthetic::generate(1, 32, 2).remove(0);
    let seg = OracleSegmenter::new(s.gt.clone(), DiskProfile::default());
    for d in [Direction::Min, Direction::Max] {
        let t = run_adversarial_trajectory(&seg, &s.image, &s.gt, d, &AttackConfig::default(), &Protocol::default()).unwrap();
        assert_eq!(t.iou_curve, vec![1.0; 10]);
        assert_eq!(t.converged_at, Some(1));
    }
}

#[test]
fn single_click_trajectory_equals_optimize_click() {
    let s = synthetic::generate(2, 32, 9).remove(1);
    let seg = blob();
    let cfg = AttackConfig { clicks: 1, ..Default::default() };
    let t = run_adversarial_trajectory(&seg, &s.image, &s.gt, Direction::Max, &cfg, &Protocol::default()).unwrap();
    let o = optimize_click(&seg, &s.image, &s.gt, &Prefix::empty(32, 32), Direction::Max, &cfg, &Protocol::default()).unwrap();
    assert_eq!(t.clicks, vec![o.click]);
    assert_eq!(t.iou_curve, vec![o.iou]);
    assert_eq!(t.diagnostics, vec![o.records]);
}

#[test]
fn all_rejected_degenerates_to_baseline() {
    // No IoU change can exceed 2, so every candidate is rejected while the
    // optimizer still moves.
    let cfg = AttackConfig { clicks: 4, improvement_tol: 2.0, ..Default::default() };
    let protocol = Protocol::default();
    for s in synthetic::generate(3, 32, 4) {
        let seg = RuggedSegmenter::new(blob(), 1, 3.0).unwrap();
        let base = run_baseline_trajectory(&seg, &s.image, &s.gt, 4, &protocol).unwrap();
        for d in [Direction::Min, Direction::Max] {
            let t = run_adversarial_trajectory(&seg, &s.image, &s.gt, d, &cfg, &protocol).unwrap();
            assert!(t.diagnostics.iter().flatten().all(|r| !r.accepted));
            assert_eq!(t.clicks, base.clicks);
            assert_eq!(t.iou_curve, base.iou_curve);
            assert_eq!(t.biou_curve, base.biou_curve);
        }
    }
}

#[test]
fn gradients_unsupported_fails_fast() {
    struct NoGrad(OracleSegmenter);
    impl Segmenter for NoGrad {
        fn capabilities(&self) -> crate::segmenters::SegmenterCapabilities {
            crate::segmenters::SegmenterCapabilities { supports_gradients: false, ..self.0.capabilities() }
        }
        fn disk(&self) -> DiskProfile {
            self.0.disk()
        }
        fn predict(&self, req: &SegmenterRequest<'_>) -> Result<ProbMap> {
            self.0.predict(req)
        }
        fn dice_gradient(&self, _: &SegmenterRequest<'_>, _: &BinaryMask, _: Direction, _: usize) -> Result<(f64, (f64, f64))> {
            panic!("must not be called")
        }
    }
    let s = synthetic::generate(1, 24, 1).remove(0);
    let seg = NoGrad(OracleSegmenter::new(BinaryMask::new(24, 24), DiskProfile::default()));
    let err = run_adversarial_trajectory(&seg, &s.image, &s.gt, Direction::Min, &AttackConfig::default(), &Protocol::default());
    match err {
        Err(Error::AtClick { click: 1, source }) => assert!(matches!(*source, Error::GradientsUnsupported)),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dice_loss_in_unit_interval(p in prop::collection::vec(0.0f64..=1.0, 16), g in prop::collection::vec(any::<bool>(), 16)) {
        let gt = BinaryMask::from_vec(4, 4, g).unwrap();
        let l = dice_loss(&ProbMap::from_vec(4, 4, p).unwrap(), &gt).unwrap();
        prop_assert!((0.0..=1.0).contains(&l));
    }
}
