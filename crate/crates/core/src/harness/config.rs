use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::AttackConfig;
use crate::clickgen::{Protocol, TrajectoryKind};
use crate::maskops::BinaryMask;
use crate::segmenters::{
    BlobParams, BlobSegmenter, BridgeSegmenter, Image, OracleSegmenter, RuggedSegmenter, Segmenter,
};
use crate::{Error, Result};

/// Environment variable consulted when no worker count is configured.
pub const WORKERS_ENV: &str = "CLICKSTORM_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmenterKind {
    Oracle,
    Blob,
    Rugged,
    Bridge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmenterProfile {
    pub kind: SegmenterKind,
    /// Blob parameters; the disk radius and sharpness apply to every kind.
    #[serde(default)]
    pub params: BlobParams,
    /// Rugged perturbation amplitude.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Rugged perturbation seed; the run seed when absent.
    #[serde(default)]
    pub noise_seed: Option<u64>,
    /// Bridge endpoint: `tcp://host:port` or `stdio:program arg...`.
    #[serde(default)]
    pub endpoint: Option<String>,
}

fn default_amplitude() -> f64 {
    3.0
}

impl SegmenterProfile {
    pub fn of_kind(kind: SegmenterKind) -> Self {
        SegmenterProfile {
            kind,
            params: BlobParams::default(),
            amplitude: default_amplitude(),
            noise_seed: None,
            endpoint: None,
        }
    }

    /// Instantiates the segmenter for one image.
    pub fn build(&self, image: &Image, gt: &BinaryMask, run_seed: u64) -> Result<Box<dyn Segmenter>> {
        let disk = self.params.disk;
        Ok(match self.kind {
            SegmenterKind::Oracle => Box::new(OracleSegmenter::new(gt.clone(), disk)),
            SegmenterKind::Blob => Box::new(BlobSegmenter::new(self.params)?),
            SegmenterKind::Rugged => Box::new(RuggedSegmenter::new(
                BlobSegmenter::new(self.params)?,
                self.noise_seed.unwrap_or(run_seed),
                self.amplitude,
            )?),
            SegmenterKind::Bridge => {
                let endpoint = self
                    .endpoint
                    .as_deref()
                    .ok_or_else(|| Error::Config("bridge profile needs an endpoint".into()))?;
                if let Some(addr) = endpoint.strip_prefix("tcp://") {
                    Box::new(BridgeSegmenter::connect_tcp(addr, image, disk)?)
                } else if let Some(cmd) = endpoint.strip_prefix("stdio:") {
                    let mut parts = cmd.split_whitespace().map(String::from);
                    let program = parts
                        .next()
                        .ok_or_else(|| Error::Config("empty stdio endpoint".into()))?;
                    let args: Vec<String> = parts.collect();
                    Box::new(BridgeSegmenter::spawn(&program, &args, image, disk)?)
                } else {
                    return Err(Error::Config(format!("unsupported endpoint {endpoint:?}")));
                }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: PathBuf,
    /// Name of the profile to run: a key of `profiles`, or one of the
    /// built-ins `oracle`, `blob`, `rugged`.
    pub segmenter: String,
    pub profiles: BTreeMap<String, SegmenterProfile>,
    pub attack: AttackConfig,
    pub protocol: Protocol,
    pub kinds: Vec<TrajectoryKind>,
    /// Worker threads; 0 defers to the environment, then to 1.
    pub workers: usize,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::from("manifest.json"),
            segmenter: "blob".into(),
            profiles: BTreeMap::new(),
            attack: AttackConfig::default(),
            protocol: Protocol::default(),
            kinds: vec![
                TrajectoryKind::Baseline,
                TrajectoryKind::Minimizing,
                TrajectoryKind::Maximizing,
            ],
            workers: 0,
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Reads a JSON config. A relative `dataset` path is taken relative to
    /// the config file; `out` stays relative to the working directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.dataset.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset = dir.join(&cfg.dataset);
            }
        }
        Ok(cfg)
    }

    pub fn profile(&self) -> Result<SegmenterProfile> {
        if let Some(p) = self.profiles.get(&self.segmenter) {
            return Ok(p.clone());
        }
        match self.segmenter.as_str() {
            "oracle" => Ok(SegmenterProfile::of_kind(SegmenterKind::Oracle)),
            "blob" => Ok(SegmenterProfile::of_kind(SegmenterKind::Blob)),
            "rugged" => Ok(SegmenterProfile::of_kind(SegmenterKind::Rugged)),
            other => Err(Error::Config(format!("undefined segmenter profile {other:?}"))),
        }
    }

    pub fn effective_workers(&self) -> usize {
        if self.workers > 0 {
            return self.workers;
        }
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.attack.validate()?;
        self.profile()?;
        if self.kinds.is_empty() {
            return Err(Error::Config("no trajectory kinds requested".into()));
        }
        if self.kinds.contains(&TrajectoryKind::External) {
            return Err(Error::Config("external trajectories come from click files, not runs".into()));
        }
        if !(self.protocol.threshold > 0.0 && self.protocol.threshold < 1.0) {
            return Err(Error::Config("threshold must be in (0, 1)".into()));
        }
        Ok(())
    }
}
