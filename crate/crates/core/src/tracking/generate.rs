//! Synthetic two-frame instances with a planted ground truth.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{candidate_events, tracking_argmax, Assignment, Detection, TrackingInstance, DEFAULT_DETECTION_CAP};
use crate::error::{Error, Result};
use crate::problem::{DeltaSign, Space};
use crate::vector::Weights;

const MAX_ATTEMPTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingGenConfig {
    /// Inclusive range of left-frame cells.
    pub min_cells: usize,
    pub max_cells: usize,
    /// Upper bound on cells entering the right frame.
    pub max_appear: usize,
    pub p_divide: f64,
    pub p_disappear: f64,
    /// Side length of the square field.
    pub field: f64,
    /// Per-axis standard deviation of cell motion.
    pub step_sigma: f64,
    /// Distance of each daughter from the mother's position.
    pub division_offset: f64,
    /// Relative size jitter.
    pub size_noise: f64,
    pub gate_radius: f64,
    pub detection_cap: usize,
    pub delta_scale: f64,
}

impl Default for TrackingGenConfig {
    fn default() -> Self {
        TrackingGenConfig {
            min_cells: 2,
            max_cells: 4,
            max_appear: 1,
            p_divide: 0.25,
            p_disappear: 0.1,
            field: 8.0,
            step_sigma: 0.35,
            division_offset: 0.6,
            size_noise: 0.1,
            gate_radius: 2.0,
            detection_cap: DEFAULT_DETECTION_CAP,
            delta_scale: 1.0,
        }
    }
}

impl TrackingGenConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_cells <= self.max_cells
            && (0.0..=1.0).contains(&self.p_divide)
            && (0.0..=1.0).contains(&self.p_disappear)
            && self.p_divide + self.p_disappear <= 1.0
            && self.field > 0.0
            && self.step_sigma >= 0.0
            && self.division_offset >= 0.0
            && (0.0..1.0).contains(&self.size_noise)
            && self.gate_radius > 0.0
            && self.delta_scale > 0.0
            && self.min_cells <= self.detection_cap;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid tracking generator config {self:?}"
            )))
        }
    }
}

/// Weights under which the generator's ground truth is the unique best
/// assignment: moves and divisions are rewarded and penalized by distance
/// and size mismatch, appearing and disappearing cost a constant.
pub fn planted_tracking_weights() -> Weights {
    Weights::new(vec![
        3.0, -1.5, -4.0, // move
        3.0, -1.5, -4.0, // divide
        -1.0, 0.0, 0.0, // appear
        -1.0, 0.0, 0.0, // disappear
    ])
    .expect("finite")
}

enum Origin {
    Moved(usize),
    Daughter(usize),
    Appeared,
}

/// Samples a fully annotated instance and its ground-truth assignment.
///
/// The truth is drawn first, detections are placed around it, and draws are
/// rejected until the truth survives distance gating, fits under the
/// detection cap, and is the argmax under [`planted_tracking_weights`].
pub fn generate_instance(config: &TrackingGenConfig, seed: u64) -> Result<(TrackingInstance, Assignment)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted = planted_tracking_weights();
    for _ in 0..MAX_ATTEMPTS {
        if let Some(found) = attempt(config, &mut rng, &planted)? {
            return Ok(found);
        }
    }
    Err(Error::InvalidConfig(format!(
        "no valid tracking instance after {MAX_ATTEMPTS} draws"
    )))
}

fn attempt(
    config: &TrackingGenConfig,
    rng: &mut ChaCha8Rng,
    planted: &Weights,
) -> Result<Option<(TrackingInstance, Assignment)>> {
    let step = Normal::new(0.0, config.step_sigma).expect("valid sigma");
    let jitter = |rng: &mut ChaCha8Rng| 1.0 + config.size_noise * (2.0 * rng.random::<f64>() - 1.0);

    let n_left = rng.random_range(config.min_cells..=config.max_cells);
    let left: Vec<Detection> = (0..n_left)
        .map(|_| {
            let x = rng.random::<f64>() * config.field;
            let y = rng.random::<f64>() * config.field;
            Detection::new(x, y, jitter(rng))
        })
        .collect();

    let mut right: Vec<(Detection, Origin)> = Vec::new();
    for (l, cell) in left.iter().enumerate() {
        let u: f64 = rng.random();
        if u < config.p_divide {
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            let (dx, dy) = (
                theta.cos() * config.division_offset,
                theta.sin() * config.division_offset,
            );
            for s in [1.0, -1.0] {
                let x = cell.position[0] + s * dx + step.sample(rng);
                let y = cell.position[1] + s * dy + step.sample(rng);
                right.push((Detection::new(x, y, 0.5 * cell.size * jitter(rng)), Origin::Daughter(l)));
            }
        } else if u < config.p_divide + config.p_disappear {
            // no successor
        } else {
            let x = cell.position[0] + step.sample(rng);
            let y = cell.position[1] + step.sample(rng);
            right.push((Detection::new(x, y, cell.size * jitter(rng)), Origin::Moved(l)));
        }
    }
    let n_appear = rng.random_range(0..=config.max_appear);
    for _ in 0..n_appear {
        let x = rng.random::<f64>() * config.field;
        let y = rng.random::<f64>() * config.field;
        right.push((Detection::new(x, y, jitter(rng)), Origin::Appeared));
    }
    right.shuffle(rng);

    if left.len() + right.len() > config.detection_cap {
        return Ok(None);
    }

    let right_dets: Vec<Detection> = right.iter().map(|(d, _)| *d).collect();
    let kinds = candidate_events(&left, &right_dets, config.gate_radius);
    let mut truth_kinds = Vec::new();
    let mut daughters: Vec<Vec<usize>> = vec![Vec::new(); left.len()];
    let mut has_successor = vec![false; left.len()];
    for (r, (_, origin)) in right.iter().enumerate() {
        match *origin {
            Origin::Moved(l) => {
                has_successor[l] = true;
                truth_kinds.push(super::EventKind::Move { from: l, to: r });
            }
            Origin::Daughter(l) => {
                has_successor[l] = true;
                daughters[l].push(r);
            }
            Origin::Appeared => truth_kinds.push(super::EventKind::Appear { to: r }),
        }
    }
    for (l, ds) in daughters.iter().enumerate() {
        if let [a, b] = ds[..] {
            truth_kinds.push(super::EventKind::Divide {
                from: l,
                to: (a.min(b), a.max(b)),
            });
        }
    }
    for (l, &has) in has_successor.iter().enumerate() {
        if !has {
            truth_kinds.push(super::EventKind::Disappear { from: l });
        }
    }
    let Some(truth_idx) = truth_kinds
        .iter()
        .map(|t| kinds.iter().position(|k| k == t))
        .collect::<Option<Vec<usize>>>()
    else {
        return Ok(None);
    };

    let instance = TrackingInstance::new(left, right_dets, kinds, truth_idx.clone(), config.delta_scale)?
        .with_detection_cap(config.detection_cap);
    let truth = Assignment::from_realized(instance.events().len(), truth_idx);
    let best = tracking_argmax(&instance, planted, Space::Full, DeltaSign::Zero)?;
    if best.output != truth {
        return Ok(None);
    }
    Ok(Some((instance, truth)))
}
