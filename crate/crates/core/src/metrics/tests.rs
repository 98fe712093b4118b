use super::*;
use proptest::prelude::*;

fn pair(iou: f64, biou: f64) -> MetricPair {
    MetricPair { iou, biou }
}

fn image(id: &str, base: f64, min: f64, max: f64) -> PerImageReport {
    let mut auc = BTreeMap::new();
    auc.insert(TrajectoryKind::Baseline, pair(base, base));
    auc.insert(TrajectoryKind::Minimizing, pair(min, min));
    auc.insert(TrajectoryKind::Maximizing, pair(max, max));
    PerImageReport::new(id, auc)
}

fn row(dataset: &str, model: &str, metric: &str, kind: &str, value: f64) -> ScoreRow {
    ScoreRow {
        dataset: dataset.into(),
        model: model.into(),
        metric: metric.into(),
        kind: kind.into(),
        value,
    }
}

#[test]
fn auc_examples() {
    assert!((auc_at_10(&[0.8; 10]).unwrap() - 0.8).abs() < 1e-12);
    let linear: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    assert!((auc_at_10(&linear).unwrap() - 0.55).abs() < 1e-12);
    assert_eq!(auc_at_10(&[1.0; 10]).unwrap(), 1.0);
    assert!(auc_at_10(&[1.0; 9]).is_err());
    assert!(auc(&[]).is_err());
}

#[test]
fn robustness_d_examples() {
    assert!((robustness_d(93.56, 96.28) - 2.72).abs() < 1e-9);
    // Exact subtraction; a table built from rounded columns can show 1.57.
    assert!((robustness_d(94.57, 96.13) - 1.56).abs() < 1e-9);
    assert_eq!(robustness_d(0.4, 0.4), 0.0);
}

#[test]
fn aggregate_examples() {
    let one = aggregate("ds", "m", &[image("a", 0.5, 0.4, 0.9)]).unwrap();
    let s = one.summary[&Metric::Iou];
    assert!((s.base.unwrap() - 50.0).abs() < 1e-9);
    assert!((s.min.unwrap() - 40.0).abs() < 1e-9);
    assert!((s.max.unwrap() - 90.0).abs() < 1e-9);
    assert!((s.d.unwrap() - 50.0).abs() < 1e-9);

    let two = aggregate("ds", "m", &[image("a", 0.8, 0.8, 0.8), image("b", 0.6, 0.6, 0.6)]).unwrap();
    assert!((two.summary[&Metric::Biou].base.unwrap() - 70.0).abs() < 1e-9);
    assert!(aggregate("ds", "m", &[]).is_err());
}

#[test]
fn per_image_d_needs_both_directions() {
    let mut auc = BTreeMap::new();
    auc.insert(TrajectoryKind::Baseline, pair(0.5, 0.5));
    assert!(PerImageReport::new("x", auc).d.is_none());
    let full = image("y", 0.5, 0.25, 0.75);
    assert_eq!(full.d.unwrap(), pair(0.5, 0.5));
}

#[test]
fn report_csv_round_trip() {
    let report = aggregate("ds", "m", &[image("a", 0.5, 0.4, 0.9)]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("dataset,model,metric,kind,value\n"));
    std::fs::write(&path, buf).unwrap();
    assert_eq!(read_score_rows(&path).unwrap(), report.rows());
}

fn naive_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let below = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn spearman_examples() {
    let a = [1.0, 2.0, 3.0, 4.0];
    assert!((spearman(&a, &[10.0, 20.0, 30.0, 40.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!((spearman(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    let tied = [1.0, 2.0, 2.0, 3.0, 5.0, 5.0];
    let other = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
    let want = naive_pearson(&naive_ranks(&tied), &naive_ranks(&other));
    assert!((spearman(&tied, &other).unwrap() - want).abs() < 1e-12);
    assert_eq!(fractional_ranks(&tied), vec![1.0, 2.5, 2.5, 4.0, 5.5, 5.5]);
    assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    assert!(spearman(&[1.0], &[1.0]).is_err());
    assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
}

#[test]
fn three_model_cross_metric_matrix() {
    // iou-max: a < b < c; biou-max: b < a < c; biou-min: c < b < a.
    let rows = vec![
        row("ds", "a", "iou", "max", 0.1),
        row("ds", "b", "iou", "max", 0.2),
        row("ds", "c", "iou", "max", 0.3),
        row("ds", "a", "biou", "max", 0.5),
        row("ds", "b", "biou", "max", 0.4),
        row("ds", "c", "biou", "max", 0.6),
        row("ds", "a", "biou", "min", 0.9),
        row("ds", "b", "biou", "min", 0.8),
        row("ds", "c", "biou", "min", 0.7),
    ];
    let m = &correlation_matrix(&rows, CorrelationAxis::CrossMetric).unwrap()[0];
    assert_eq!(m.labels, ["biou-max", "biou-min", "iou-max"]);
    // Ranks: biou-max (2,1,3), biou-min (3,2,1), iou-max (1,2,3).
    // With n = 3, rho = 1 - 6 sum(d^2) / 24.
    let expected = [[1.0, -0.5, 0.5], [-0.5, 1.0, -1.0], [0.5, -1.0, 1.0]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((m.values[i][j] - expected[i][j]).abs() < 1e-12, "{i},{j}");
        }
    }
}

#[test]
fn cross_dataset_matrix_and_mismatch() {
    let mut rows = Vec::new();
    for (ds, vals) in [("d1", [0.1, 0.2, 0.3]), ("d2", [0.3, 0.2, 0.1]), ("d3", [0.1, 0.2, 0.3])] {
        for (model, v) in ["a", "b", "c"].iter().zip(vals) {
            rows.push(row(ds, model, "iou", "base", v));
        }
    }
    let ms = correlation_matrix(&rows, CorrelationAxis::CrossDataset).unwrap();
    assert_eq!(ms.len(), 1);
    assert_eq!(ms[0].labels, ["d1", "d2", "d3"]);
    assert!((ms[0].values[0][1] + 1.0).abs() < 1e-12);
    assert!((ms[0].values[0][2] - 1.0).abs() < 1e-12);

    rows.push(row("d1", "z", "iou", "base", 0.5));
    assert!(correlation_matrix(&rows, CorrelationAxis::CrossDataset).is_err());
}

#[test]
fn correlation_csv_layout() {
    let m = CorrelationMatrix {
        group: "g".into(),
        labels: vec!["x".into(), "y".into()],
        values: vec![vec![1.0, 0.5], vec![0.5, 1.0]],
    };
    let mut buf = Vec::new();
    write_correlation_csv(&[m], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "group,row,x,y\ng,x,1,0.5\ng,y,0.5,1\n");
}

proptest! {
    #[test]
    fn auc_is_monotone(base in prop::collection::vec(0.0f64..1.0, 10), bump in prop::collection::vec(0.0f64..0.5, 10)) {
        let hi: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| (a + b).min(1.0)).collect();
        prop_assert!(auc_at_10(&hi).unwrap() >= auc_at_10(&base).unwrap());
    }

    #[test]
    fn d_is_antisymmetric(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assert_eq!(robustness_d(a, b), -robustness_d(b, a));
    }

    #[test]
    fn spearman_invariant_under_increasing_transform(
        a in prop::collection::vec(-10.0f64..10.0, 3..12),
        seed in any::<u64>(),
    ) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * ((seed >> (i % 60)) & 1) as f64 - i as f64).collect();
        prop_assume!(fractional_ranks(&a).windows(2).any(|w| w[0] != w[1]));
        prop_assume!(fractional_ranks(&b).windows(2).any(|w| w[0] != w[1]));
        let r = spearman(&a, &b).unwrap();
        let ta: Vec<f64> = a.iter().map(|x| x.exp()).collect();
        let tb: Vec<f64> = b.iter().map(|x| 3.0 * x + 7.0).collect();
        prop_assert!((spearman(&ta, &tb).unwrap() - r).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&r));
    }

    #[test]
    fn aggregate_is_permutation_invariant(vals in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1..8)) {
        let imgs: Vec<PerImageReport> = vals.iter().enumerate()
            .map(|(i, &(b, lo, hi))| image(&i.to_string(), b, lo, hi)).collect();
        let mut rev = imgs.clone();
        rev.reverse();
        let a = aggregate("d", "m", &imgs).unwrap().summary;
        let b = aggregate("d", "m", &rev).unwrap().summary;
        for metric in [Metric::Iou, Metric::Biou] {
            let (x, y) = (a[&metric], b[&metric]);
            for (p, q) in [(x.base, y.base), (x.min, y.min), (x.max, y.max), (x.d, y.d)] {
                prop_assert!((p.unwrap() - q.unwrap()).abs() < 1e-9);
            }
        }
    }
}
