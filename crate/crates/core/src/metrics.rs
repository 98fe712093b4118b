//! Robustness metrics, dataset aggregation and rank correlations.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clickgen::TrajectoryKind;
use crate::{Error, Result};

/// Clicks covered by the AuC metric.
pub const AUC_CLICKS: usize = 10;

/// Normalized area under a per-click curve: the mean of its values.
pub fn auc(curve: &[f64]) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::InvalidArgument("empty metric curve".into()));
    }
    Ok(curve.iter().sum::<f64>() / curve.len() as f64)
}

pub fn auc_at_10(curve: &[f64]) -> Result<f64> {
    if curve.len() != AUC_CLICKS {
        return Err(Error::InvalidArgument(format!(
            "AuC@10 needs {AUC_CLICKS} values, got {}",
            curve.len()
        )));
    }
    auc(curve)
}

/// Gap between maximizing and minimizing AuC; smaller is more robust.
pub fn robustness_d(auc_min: f64, auc_max: f64) -> f64 {
    auc_max - auc_min
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Iou,
    Biou,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Iou => "iou",
            Metric::Biou => "biou",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub iou: f64,
    pub biou: f64,
}

impl MetricPair {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Iou => self.iou,
            Metric::Biou => self.biou,
        }
    }
}

/// AuC per trajectory kind for one image, as fractions in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerImageReport {
    pub image_id: String,
    pub auc: BTreeMap<TrajectoryKind, MetricPair>,
    pub d: Option<MetricPair>,
}

impl PerImageReport {
    pub fn new(image_id: impl Into<String>, auc: BTreeMap<TrajectoryKind, MetricPair>) -> Self {
        let d = match (
            auc.get(&TrajectoryKind::Minimizing),
            auc.get(&TrajectoryKind::Maximizing),
        ) {
            (Some(lo), Some(hi)) => Some(MetricPair {
                iou: robustness_d(lo.iou, hi.iou),
                biou: robustness_d(lo.biou, hi.biou),
            }),
            _ => None,
        };
        PerImageReport {
            image_id: image_id.into(),
            auc,
            d,
        }
    }
}

/// Dataset means in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub base: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub d: Option<f64>,
}

impl SummaryRow {
    fn entries(&self) -> [(&'static str, Option<f64>); 4] {
        [
            ("base", self.base),
            ("min", self.min),
            ("max", self.max),
            ("d", self.d),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub dataset: String,
    pub model: String,
    pub summary: BTreeMap<Metric, SummaryRow>,
    pub images: Vec<PerImageReport>,
}

/// Unweighted mean over images per kind and metric, scaled to percent. D is
/// taken from the aggregated Max and Min.
pub fn aggregate(dataset: &str, model: &str, per_image: &[PerImageReport]) -> Result<RobustnessReport> {
    if per_image.is_empty() {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    }
    let mut images = per_image.to_vec();
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let mean = |kind: TrajectoryKind, metric: Metric| -> Option<f64> {
        let vals: Vec<f64> = images
            .iter()
            .filter_map(|r| r.auc.get(&kind).map(|p| p.get(metric)))
            .collect();
        (!vals.is_empty()).then(|| 100.0 * vals.iter().sum::<f64>() / vals.len() as f64)
    };

    let mut summary = BTreeMap::new();
    for metric in [Metric::Iou, Metric::Biou] {
        let min = mean(TrajectoryKind::Minimizing, metric);
        let max = mean(TrajectoryKind::Maximizing, metric);
        summary.insert(
            metric,
            SummaryRow {
                base: mean(TrajectoryKind::Baseline, metric),
                min,
                max,
                d: min.zip(max).map(|(lo, hi)| robustness_d(lo, hi)),
            },
        );
    }
    Ok(RobustnessReport {
        dataset: dataset.to_string(),
        model: model.to_string(),
        summary,
        images,
    })
}

/// One line of a report CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub dataset: String,
    pub model: String,
    pub metric: String,
    pub kind: String,
    pub value: f64,
}

impl RobustnessReport {
    pub fn rows(&self) -> Vec<ScoreRow> {
        let mut rows = Vec::new();
        for (metric, row) in &self.summary {
            for (kind, value) in row.entries() {
                if let Some(value) = value {
                    rows.push(ScoreRow {
                        dataset: self.dataset.clone(),
                        model: self.model.clone(),
                        metric: metric.as_str().into(),
                        kind: kind.into(),
                        value,
                    });
                }
            }
        }
        rows
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("<report csv>", e))?;
        Ok(())
    }
}

pub fn read_score_rows(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Fractional ranks (1-based), ties share their average rank.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of fractional ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("need at least two observations".into()));
    }
    let (ra, rb) = (fractional_ranks(a), fractional_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::InvalidArgument("zero rank variance".into()));
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationAxis {
    /// Metric columns against each other, over models, within a dataset.
    CrossMetric,
    /// One metric's model ranking, dataset against dataset.
    CrossDataset,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    /// Dataset name (cross-metric) or metric column (cross-dataset).
    pub group: String,
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

fn column_label(row: &ScoreRow) -> String {
    format!("{}-{}", row.metric, row.kind)
}

fn matrix(group: String, labels: Vec<String>, columns: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    let n = labels.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        values[i][i] = 1.0;
        for j in i + 1..n {
            let r = spearman(&columns[i], &columns[j]).map_err(|e| {
                Error::InvalidArgument(format!("{group}: {} vs {}: {e}", labels[i], labels[j]))
            })?;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        group,
        labels,
        values,
    })
}

/// Spearman matrices over report rows.
pub fn correlation_matrix(rows: &[ScoreRow], axis: CorrelationAxis) -> Result<Vec<CorrelationMatrix>> {
    // dataset -> column -> model -> value
    let mut table: BTreeMap<&str, BTreeMap<String, BTreeMap<&str, f64>>> = BTreeMap::new();
    for r in rows {
        let prev = table
            .entry(&r.dataset)
            .or_default()
            .entry(column_label(r))
            .or_default()
            .insert(&r.model, r.value);
        if prev.is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate score for {}/{}/{}",
                r.dataset,
                r.model,
                column_label(r)
            )));
        }
    }

    let mut out = Vec::new();
    match axis {
        CorrelationAxis::CrossMetric => {
            for (dataset, cols) in &table {
                let models: BTreeSet<&str> = cols.values().flat_map(|m| m.keys().copied()).collect();
                if models.len() < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "{dataset}: need at least two models"
                    )));
                }
                let mut labels = Vec::new();
                let mut columns = Vec::new();
                for (label, by_model) in cols {
                    if by_model.len() != models.len() {
                        return Err(Error::InvalidArgument(format!(
                            "{dataset}: column {label} is missing models"
                        )));
                    }
                    labels.push(label.clone());
                    columns.push(by_model.values().copied().collect());
                }
                out.push(matrix(dataset.to_string(), labels, &columns)?);
            }
        }
        CorrelationAxis::CrossDataset => {
            if table.len() < 2 {
                return Err(Error::InvalidArgument("need at least two datasets".into()));
            }
            let column_sets: BTreeSet<Vec<&String>> =
                table.values().map(|c| c.keys().collect()).collect();
            if column_sets.len() != 1 {
                return Err(Error::InvalidArgument("datasets report different metric columns".into()));
            }
            let labels: Vec<String> = table.keys().map(|s| s.to_string()).collect();
            let first = table.values().next().expect("at least two datasets");
            for column in first.keys() {
                let mut reference: Option<Vec<&str>> = None;
                let mut columns = Vec::new();
                for (dataset, cols) in &table {
                    let by_model = &cols[column];
                    let models: Vec<&str> = by_model.keys().copied().collect();
                    match &reference {
                        None => reference = Some(models),
                        Some(r) if *r != models => {
                            return Err(Error::InvalidArgument(format!(
                                "mismatched model sets: {dataset} has {models:?}, expected {r:?}"
                            )))
                        }
                        _ => {}
                    }
                    columns.push(by_model.values().copied().collect());
                }
                if reference.as_ref().map_or(0, |r| r.len()) < 2 {
                    return Err(Error::InvalidArgument("need at least two models".into()));
                }
                out.push(matrix(column.clone(), labels.clone(), &columns)?);
            }
        }
    }
    Ok(out)
}

/// Writes matrices as `group,row,<labels...>` blocks.
pub fn write_correlation_csv(matrices: &[CorrelationMatrix], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    for m in matrices {
        let mut header = vec!["group".to_string(), "row".to_string()];
        header.extend(m.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in m.labels.iter().zip(&m.values) {
            let mut rec = vec![m.group.clone(), label.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("<correlation csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests;
