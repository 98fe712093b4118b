use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::dataset::{save_image_png, save_mask_png, DatasetManifest, ManifestEntry, Sample};
use super::{load_dataset, synthetic, RunConfig};
use crate::attack::{run_adversarial_trajectory, Direction, Prefix};
use crate::bruteforce::{auto_stride, grid_search, spread as value_spread, write_heatmap, Channel, GridResult};
use crate::clickgen::{
    baseline_click, is_valid_click, load_external_clicks, run_baseline_trajectory, Polarity,
    Trajectory, TrajectoryKind,
};
use crate::maskops::ProbMap;
use crate::metrics::{
    aggregate, auc, correlation_matrix, read_score_rows, write_correlation_csv, CorrelationAxis,
    CorrelationMatrix, MetricPair, PerImageReport, RobustnessReport,
};
use crate::segmenters::{Segmenter, SegmenterRequest};
use crate::{Error, Result};

/// A directory that is built under a temporary name and moved into place
/// only on success.
struct Staging {
    target: PathBuf,
    tmp: PathBuf,
    committed: bool,
}

fn sibling(target: &Path, tag: &str) -> PathBuf {
    let name = target
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.subsec_nanos());
    target.with_file_name(format!(".{name}.{tag}-{}-{nanos}", std::process::id()))
}

impl Staging {
    fn new(target: &Path) -> Result<Self> {
        if let Some(parent) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let tmp = sibling(target, "tmp");
        std::fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        Ok(Staging {
            target: target.to_path_buf(),
            tmp,
            committed: false,
        })
    }

    fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.tmp.join(rel)
    }

    fn write(&self, rel: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    }

    fn commit(mut self) -> Result<PathBuf> {
        let old = sibling(&self.target, "old");
        let had_old = self.target.exists();
        if had_old {
            std::fs::rename(&self.target, &old).map_err(|e| Error::io(&self.target, e))?;
        }
        std::fs::rename(&self.tmp, &self.target).map_err(|e| Error::io(&self.target, e))?;
        if had_old {
            let _ = std::fs::remove_dir_all(&old);
        }
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.tmp);
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn run_kind(segmenter: &dyn Segmenter, sample: &Sample, kind: TrajectoryKind, cfg: &RunConfig) -> Result<Trajectory> {
    let (image, gt) = (&sample.image, &sample.gt);
    match kind {
        TrajectoryKind::Baseline => {
            run_baseline_trajectory(segmenter, image, gt, cfg.attack.clicks, &cfg.protocol)
        }
        TrajectoryKind::Minimizing => {
            run_adversarial_trajectory(segmenter, image, gt, Direction::Min, &cfg.attack, &cfg.protocol)
        }
        TrajectoryKind::Maximizing => {
            run_adversarial_trajectory(segmenter, image, gt, Direction::Max, &cfg.attack, &cfg.protocol)
        }
        TrajectoryKind::External => Err(Error::Config("external trajectories are not simulated".into())),
    }
}

#[derive(Debug)]
pub struct EvaluateOutput {
    pub report: Option<RobustnessReport>,
    /// `(image id, message)` for every image excluded from the report.
    pub failures: Vec<(String, String)>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    config: &'a RunConfig,
    seed: u64,
    version: &'static str,
    started_unix: u64,
    wall_time_secs: f64,
    workers: usize,
    images: usize,
    failures: &'a [(String, String)],
}

/// Runs every requested trajectory kind on every dataset entry and writes
/// `report.csv`, `report.json`, per-image trajectories and `run_meta.json`.
pub fn evaluate(cfg: &RunConfig) -> Result<EvaluateOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let manifest = load_dataset(&cfg.dataset)?;
    let profile = cfg.profile()?;
    let workers = cfg.effective_workers();

    let (mut samples, load_failures) = manifest.load_all();
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    let mut failures: Vec<(String, String)> = load_failures
        .into_iter()
        .map(|(id, e)| (id, e.to_string()))
        .collect();

    let tasks: Vec<(usize, TrajectoryKind)> = (0..samples.len())
        .flat_map(|i| cfg.kinds.iter().map(move |&k| (i, k)))
        .collect();
    info!(
        "evaluating {} images x {} kinds on {workers} workers",
        samples.len(),
        cfg.kinds.len()
    );
    let results: Vec<Result<Trajectory>> = pool(workers)?.install(|| {
        tasks
            .par_iter()
            .map(|&(i, kind)| {
                let sample = &samples[i];
                let seg = profile.build(&sample.image, &sample.gt, cfg.seed)?;
                run_kind(seg.as_ref(), sample, kind, cfg)
            })
            .collect()
    });

    let staging = Staging::new(&cfg.out)?;
    let mut per_image = Vec::new();
    let mut results = results.into_iter();
    for sample in &samples {
        let mut trajectories = BTreeMap::new();
        let mut error = None;
        for &kind in &cfg.kinds {
            match results.next().expect("one result per task") {
                Ok(t) => {
                    trajectories.insert(kind, t);
                }
                Err(e) => error = Some(format!("{}: {e}", kind.short_name())),
            }
        }
        if let Some(message) = error {
            warn!("image {} failed: {message}", sample.id);
            failures.push((sample.id.clone(), message));
            continue;
        }
        let mut aucs = BTreeMap::new();
        for (kind, t) in &trajectories {
            staging.write(
                Path::new("trajectories")
                    .join(&sample.id)
                    .join(format!("{}.json", kind.short_name())),
                serde_json::to_vec_pretty(t)?,
            )?;
            aucs.insert(
                *kind,
                MetricPair {
                    iou: auc(&t.iou_curve)?,
                    biou: auc(&t.biou_curve)?,
                },
            );
        }
        per_image.push(PerImageReport::new(sample.id.clone(), aucs));
    }
    failures.sort();

    let report = if per_image.is_empty() {
        None
    } else {
        let report = aggregate(&manifest.name, &cfg.segmenter, &per_image)?;
        let mut csv = Vec::new();
        report.write_csv(&mut csv)?;
        staging.write("report.csv", csv)?;
        staging.write("report.json", serde_json::to_vec_pretty(&report)?)?;
        Some(report)
    };
    let meta = RunMetadata {
        config: cfg,
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        started_unix,
        wall_time_secs: started.elapsed().as_secs_f64(),
        workers,
        images: samples.len(),
        failures: &failures,
    };
    staging.write("run_meta.json", serde_json::to_vec_pretty(&meta)?)?;
    let out = staging.commit()?;
    Ok(EvaluateOutput {
        report,
        failures,
        out,
    })
}

fn load_sample(manifest: &DatasetManifest, image_id: &str) -> Result<Sample> {
    let index = manifest
        .find(image_id)
        .ok_or_else(|| Error::Config(format!("image {image_id:?} is not in the manifest")))?;
    manifest.load_entry(index)
}

#[derive(Debug)]
pub struct BruteforceOutput {
    pub grid: GridResult,
    pub files: Vec<PathBuf>,
}

/// First-click IoU / BIoU heatmaps for one image.
pub fn bruteforce(cfg: &RunConfig, image_id: &str, stride: Option<usize>) -> Result<BruteforceOutput> {
    cfg.validate()?;
    let manifest = load_dataset(&cfg.dataset)?;
    let sample = load_sample(&manifest, image_id)?;
    let seg = cfg.profile()?.build(&sample.image, &sample.gt, cfg.seed)?;
    let stride = stride.unwrap_or_else(|| auto_stride(sample.gt.width(), sample.gt.height()));
    let prefix = Prefix::empty(sample.gt.width(), sample.gt.height());
    let grid = pool(cfg.effective_workers())?.install(|| {
        grid_search(seg.as_ref(), &sample.image, &sample.gt, &prefix, Polarity::Positive, stride, &cfg.protocol)
    })?;
    if !grid.failures.is_empty() {
        warn!("{} grid cells failed", grid.failures.len());
    }

    let staging = Staging::new(&cfg.out)?;
    let mut names = Vec::new();
    for channel in [Channel::Iou, Channel::Biou] {
        let name = format!("{image_id}_{}.png", channel.as_str());
        write_heatmap(&grid, channel, &staging.path(&name))?;
        names.push(name);
    }
    let out = staging.commit()?;
    let files = names
        .iter()
        .flat_map(|n| {
            let png = out.join(n);
            [crate::bruteforce::sidecar_path(&png), png]
        })
        .collect();
    Ok(BruteforceOutput { grid, files })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpreadRow {
    pub image_id: String,
    pub clicks: usize,
    pub iou_min: f64,
    pub iou_max: f64,
    pub iou_spread: f64,
    pub biou_min: f64,
    pub biou_max: f64,
    pub biou_spread: f64,
    pub baseline_iou: f64,
    pub baseline_biou: f64,
}

#[derive(Serialize)]
struct SpreadClickRow<'a> {
    image_id: &'a str,
    index: usize,
    x: f64,
    y: f64,
    polarity: Polarity,
    valid: bool,
    iou: f64,
    biou: f64,
}

/// Scores every externally recorded click as a single first click, and
/// reports the per-image spread next to the baseline click's scores.
/// Writes `spread.csv` and `spread_clicks.csv`.
pub fn spread(cfg: &RunConfig, clicks_csv: &Path) -> Result<Vec<SpreadRow>> {
    cfg.validate()?;
    let manifest = load_dataset(&cfg.dataset)?;
    let profile = cfg.profile()?;
    let groups = load_external_clicks(clicks_csv, profile.params.disk.radius)?;
    let unknown: Vec<&str> = groups
        .iter()
        .filter(|g| manifest.find(&g.image_id).is_none())
        .map(|g| g.image_id.as_str())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown image ids: {}", unknown.join(", "))));
    }

    let mut rows = Vec::new();
    let mut click_csv = csv::Writer::from_writer(Vec::new());
    for group in &groups {
        let sample = load_sample(&manifest, &group.image_id)?;
        let seg = profile.build(&sample.image, &sample.gt, cfg.seed)?;
        let (w, h) = sample.gt.dims();
        let empty = ProbMap::zeros(w, h);
        let score = |click| -> Result<(f64, f64)> {
            let pred = seg.predict(&SegmenterRequest {
                image: &sample.image,
                clicks: &[click],
                prev_mask: None,
            })?;
            cfg.protocol.scores(&pred, &sample.gt)
        };
        let mut ious = Vec::new();
        let mut bious = Vec::new();
        for (index, click) in group.clicks.iter().enumerate() {
            let (i, b) = score(*click)?;
            click_csv.serialize(SpreadClickRow {
                image_id: &group.image_id,
                index,
                x: click.x,
                y: click.y,
                polarity: click.polarity,
                valid: is_valid_click(click, &empty, &sample.gt, cfg.protocol.threshold),
                iou: i,
                biou: b,
            })?;
            ious.push(i);
            bious.push(b);
        }
        let (baseline_iou, baseline_biou) = match baseline_click(&empty, &sample.gt, seg.disk().radius, &cfg.protocol)? {
            Some(c) => score(c)?,
            None => cfg.protocol.scores(&empty, &sample.gt)?,
        };
        let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        rows.push(SpreadRow {
            image_id: group.image_id.clone(),
            clicks: ious.len(),
            iou_min: lo(&ious),
            iou_max: hi(&ious),
            iou_spread: value_spread(&ious)?,
            biou_min: lo(&bious),
            biou_max: hi(&bious),
            biou_spread: value_spread(&bious)?,
            baseline_iou,
            baseline_biou,
        });
    }

    let staging = Staging::new(&cfg.out)?;
    let mut table = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        table.serialize(r)?;
    }
    let table = table.into_inner().map_err(|e| Error::io("spread.csv", e.into_error()))?;
    staging.write("spread.csv", table)?;
    let clicks = click_csv
        .into_inner()
        .map_err(|e| Error::io("spread_clicks.csv", e.into_error()))?;
    staging.write("spread_clicks.csv", clicks)?;
    staging.commit()?;
    Ok(rows)
}

/// Spearman matrices over report CSVs, written to `out` as one CSV.
pub fn correlate(report_paths: &[PathBuf], axis: CorrelationAxis, out: &Path) -> Result<Vec<CorrelationMatrix>> {
    let mut rows = Vec::new();
    for p in report_paths {
        rows.extend(read_score_rows(p)?);
    }
    let matrices = correlation_matrix(&rows, axis)?;
    let mut buf = Vec::new();
    write_correlation_csv(&matrices, &mut buf)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = sibling(out, "tmp");
    std::fs::write(&tmp, buf).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, out).map_err(|e| Error::io(out, e))?;
    Ok(matrices)
}

/// Writes a seeded synthetic dataset (PNGs plus `manifest.json`) to `dir`
/// and returns the manifest path.
pub fn gen_synthetic(dir: &Path, name: &str, count: usize, size: usize, seed: u64) -> Result<PathBuf> {
    if count == 0 || size < 8 {
        return Err(Error::InvalidArgument("need at least one image of at least 8x8".into()));
    }
    let staging = Staging::new(dir)?;
    std::fs::create_dir_all(staging.path("images")).map_err(|e| Error::io(staging.path("images"), e))?;
    std::fs::create_dir_all(staging.path("masks")).map_err(|e| Error::io(staging.path("masks"), e))?;
    let mut entries = Vec::new();
    for sample in synthetic::generate(count, size, seed) {
        let image = PathBuf::from("images").join(format!("{}.png", sample.id));
        let mask = PathBuf::from("masks").join(format!("{}.png", sample.id));
        save_image_png(&sample.image, &staging.path(&image))?;
        save_mask_png(&sample.gt, &staging.path(&mask))?;
        entries.push(ManifestEntry {
            image,
            mask,
            id: sample.id,
        });
    }
    let manifest = DatasetManifest {
        name: name.to_string(),
        entries,
        root: PathBuf::new(),
    };
    staging.write("manifest.json", serde_json::to_vec_pretty(&manifest)?)?;
    Ok(staging.commit()?.join("manifest.json"))
}
