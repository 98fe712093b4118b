//! Losses and the constrained gradient optimizer that builds minimizing and
//! maximizing click trajectories.
//!
//! Each click starts at the baseline position and takes a fixed number of
//! Adam steps on `sign * dice + weight * ILL`. A step's click is accepted
//! only when it is a valid click, strictly improves IoU in the requested
//! direction, and keeps the interaction location loss within a margin of
//! the starting click's value. The best accepted click (or the baseline
//! click if none was accepted) is kept, and the next click is optimized on
//! top of it.

mod loss;

use serde::{Deserialize, Serialize};

use crate::clickgen::{baseline_click_in, is_valid_in, Click, Protocol, Trajectory, TrajectoryKind};
use crate::maskops::{BinaryMask, ProbMap};
use crate::segmenters::{loss_gradient, Image, Segmenter, SegmenterRequest};
use crate::{Error, Result};

pub(crate) use loss::dice_loss_and_grad;
pub use loss::{
    dice_loss, interaction_location_loss, total_loss, Direction, LocationField, DICE_SMOOTHING,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Clicks per trajectory.
    pub clicks: usize,
    /// Optimizer steps per click.
    pub iterations: usize,
    /// Weight of the interaction location loss.
    pub ill_weight: f64,
    /// Allowed relative ILL increase over the starting click.
    pub ill_margin: f64,
    /// Allowed absolute ILL increase, in pixels of mean distance.
    pub ill_slack: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lr_override: Option<f64>,
    /// IoU must improve by more than this to count.
    pub improvement_tol: f64,
    /// Evaluate candidates at the nearest integer pixel.
    pub snap_to_pixel: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            clicks: 10,
            iterations: 10,
            ill_weight: 1000.0,
            ill_margin: 0.05,
            ill_slack: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lr_override: None,
            improvement_tol: 1e-9,
            snap_to_pixel: true,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.clicks == 0 {
            return bad("clicks must be at least 1");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.ill_weight >= 0.0) {
            return bad("ill_weight must be non-negative");
        }
        if !(0.0..1.0).contains(&self.ill_margin) {
            return bad("ill_margin must be in [0, 1)");
        }
        if !(self.ill_slack >= 0.0) {
            return bad("ill_slack must be non-negative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must be in [0, 1)");
        }
        if let Some(lr) = self.lr_override {
            if !(lr >= 0.0) {
                return bad("lr_override must be non-negative");
            }
        }
        Ok(())
    }
}

/// One optimizer step of one click.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Optimizer iterate after the step.
    pub x: f64,
    pub y: f64,
    /// Position the candidate click was evaluated at.
    pub click_x: f64,
    pub click_y: f64,
    pub loss: f64,
    pub iou: f64,
    pub biou: f64,
    pub ill: f64,
    pub valid: bool,
    pub accepted: bool,
}

/// Learning rate scaled linearly with the image diagonal; 5.0 at 400x400.
pub fn learning_rate(height: usize, width: usize, lr_override: Option<f64>) -> f64 {
    if let Some(lr) = lr_override {
        return lr;
    }
    let diag = ((height * height + width * width) as f64).sqrt();
    5.0 * diag / (400.0 * std::f64::consts::SQRT_2)
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: [f64; 2],
    v: [f64; 2],
    t: i32,
}

impl Adam {
    fn new(lr: f64, cfg: &AttackConfig) -> Self {
        Adam {
            lr,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            m: [0.0; 2],
            v: [0.0; 2],
            t: 0,
        }
    }

    fn step(&mut self, pos: [f64; 2], grad: [f64; 2]) -> [f64; 2] {
        self.t += 1;
        let mut out = pos;
        for i in 0..2 {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / (1.0 - self.beta1.powi(self.t));
            let v_hat = self.v[i] / (1.0 - self.beta2.powi(self.t));
            out[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        out
    }
}

/// Frozen clicks and the prediction they produced.
#[derive(Clone, Debug)]
pub struct Prefix {
    pub clicks: Vec<Click>,
    pub pred: ProbMap,
}

impl Prefix {
    pub fn empty(width: usize, height: usize) -> Self {
        Prefix {
            clicks: Vec::new(),
            pred: ProbMap::zeros(width, height),
        }
    }

    fn prev_mask(&self) -> Option<&ProbMap> {
        (!self.clicks.is_empty()).then_some(&self.pred)
    }
}

#[derive(Clone, Debug)]
pub struct ClickOutcome {
    pub click: Click,
    pub pred: ProbMap,
    pub iou: f64,
    pub biou: f64,
    /// ILL of the starting (baseline) click.
    pub initial_ill: f64,
    pub records: Vec<IterationRecord>,
}

/// Optimizes the next click on top of `prefix`.
pub fn optimize_click(
    segmenter: &dyn Segmenter,
    image: &Image,
    gt: &BinaryMask,
    prefix: &Prefix,
    direction: Direction,
    cfg: &AttackConfig,
    protocol: &Protocol,
) -> Result<ClickOutcome> {
    cfg.validate()?;
    image.ensure_dims(gt.dims())?;
    let (w, h) = gt.dims();
    let disk = segmenter.disk();
    let regions = protocol.regions(&prefix.pred, gt)?;
    let init = baseline_click_in(&regions, disk.radius)
        .ok_or(Error::EmptyRegion("prediction has no errors left to correct"))?;
    let field = LocationField::for_polarity(&regions, init.polarity)?;

    let mut clicks = prefix.clicks.clone();
    clicks.push(init);
    let active = clicks.len() - 1;
    let prev_mask = prefix.prev_mask();
    let predict = |clicks: &[Click]| {
        segmenter.predict(&SegmenterRequest {
            image,
            clicks,
            prev_mask,
        })
    };

    let init_pred = predict(&clicks)?;
    let (init_iou, init_biou) = protocol.scores(&init_pred, gt)?;
    let initial_ill = field.value(&init, disk.sharpness)?;
    let ill_limit = (1.0 + cfg.ill_margin) * initial_ill + cfg.ill_slack / field.diagonal();

    let mut best = ClickOutcome {
        click: init,
        pred: init_pred,
        iou: init_iou,
        biou: init_biou,
        initial_ill,
        records: Vec::with_capacity(cfg.iterations),
    };
    let mut adam = Adam::new(learning_rate(h, w, cfg.lr_override), cfg);
    let mut pos = [init.x, init.y];
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);

    for iteration in 1..=cfg.iterations {
        clicks[active] = Click {
            x: pos[0],
            y: pos[1],
            ..init
        };
        let grad = loss_gradient(
            segmenter,
            &SegmenterRequest {
                image,
                clicks: &clicks,
                prev_mask,
            },
            gt,
            direction,
            active,
            cfg.ill_weight,
            &field,
        )?;
        pos = adam.step(pos, [grad.grad.0, grad.grad.1]);
        pos = [pos[0].clamp(0.0, max_x), pos[1].clamp(0.0, max_y)];

        let mut candidate = Click {
            x: pos[0],
            y: pos[1],
            ..init
        };
        if cfg.snap_to_pixel {
            candidate = candidate.snapped();
        }
        clicks[active] = candidate;
        let pred = predict(&clicks)?;
        let (iou, biou) = protocol.scores(&pred, gt)?;
        let ill = field.value(&candidate, disk.sharpness)?;
        let loss = direction.sign() * dice_loss(&pred, gt)? + cfg.ill_weight * ill;
        let valid = is_valid_in(&candidate, &regions);
        let accepted = valid && direction.improves(iou, best.iou, cfg.improvement_tol) && ill <= ill_limit;

        best.records.push(IterationRecord {
            iteration,
            x: pos[0],
            y: pos[1],
            click_x: candidate.x,
            click_y: candidate.y,
            loss,
            iou,
            biou,
            ill,
            valid,
            accepted,
        });
        if accepted {
            best.click = candidate;
            best.pred = pred;
            best.iou = iou;
            best.biou = biou;
        }
    }
    Ok(best)
}

/// Places `cfg.clicks` clicks greedily; click `i` is optimized with the
/// earlier clicks frozen at their chosen positions.
pub fn run_adversarial_trajectory(
    segmenter: &dyn Segmenter,
    image: &Image,
    gt: &BinaryMask,
    direction: Direction,
    cfg: &AttackConfig,
    protocol: &Protocol,
) -> Result<Trajectory> {
    cfg.validate()?;
    image.ensure_dims(gt.dims())?;
    let kind = match direction {
        Direction::Min => TrajectoryKind::Minimizing,
        Direction::Max => TrajectoryKind::Maximizing,
    };
    let mut traj = Trajectory::new(kind);
    let mut prefix = Prefix::empty(gt.width(), gt.height());
    let initial = protocol.scores(&prefix.pred, gt)?;

    for round in 1..=cfg.clicks {
        if protocol.regions(&prefix.pred, gt)?.is_empty() {
            break;
        }
        let outcome = optimize_click(segmenter, image, gt, &prefix, direction, cfg, protocol)
            .map_err(|e| e.at_click(round))?;
        prefix.clicks.push(outcome.click);
        prefix.pred = outcome.pred;
        traj.iou_curve.push(outcome.iou);
        traj.biou_curve.push(outcome.biou);
        traj.diagnostics.push(outcome.records);
    }
    traj.clicks = prefix.clicks;
    traj.pad_to(cfg.clicks, initial);
    Ok(traj)
}

/// Distance between consecutive optimizer iterates, normalized by the
/// larger image side.
pub fn iteration_deltas(records: &[IterationRecord], width: usize, height: usize) -> Result<Vec<f64>> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument("need at least two iteration records".into()));
    }
    let scale = width.max(height) as f64;
    Ok(records
        .windows(2)
        .map(|p| (p[1].x - p[0].x).hypot(p[1].y - p[0].y) / scale)
        .collect())
}

#[cfg(test)]
mod tests;
