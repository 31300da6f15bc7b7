//! The generic margin loss `|max_{Y^P} [f + Δ] - max_{Y^R} [f (- Δ)]|_+` and
//! the regularized objective built from it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::{Dataset, DeltaSign, InferenceProblem, Scored, Space};
use crate::vector::{FeatureVector, Weights};

/// Which penalty/reward subspace pair defines the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossKind {
    /// penalty over all outputs, reward over compatible outputs
    Hinge,
    /// penalty and reward both over all outputs
    Ramp,
    /// penalty over incompatible outputs, reward over all outputs
    Max,
    /// penalty over incompatible outputs, reward over compatible outputs
    Bridge,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Hinge, LossKind::Ramp, LossKind::Max, LossKind::Bridge];

    pub fn penalty_space(self) -> Space {
        match self {
            LossKind::Hinge | LossKind::Ramp => Space::Full,
            LossKind::Max | LossKind::Bridge => Space::Incompatible,
        }
    }

    pub fn reward_space(self) -> Space {
        match self {
            LossKind::Hinge | LossKind::Bridge => Space::Compatible,
            LossKind::Ramp | LossKind::Max => Space::Full,
        }
    }

    /// Whether the margin can go negative, i.e. the reward space is not
    /// contained in the penalty space.
    pub fn can_go_negative(self) -> bool {
        matches!(self, LossKind::Max | LossKind::Bridge)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Hinge => "hinge",
            LossKind::Ramp => "ramp",
            LossKind::Max => "max",
            LossKind::Bridge => "bridge",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hinge" => Ok(LossKind::Hinge),
            "ramp" => Ok(LossKind::Ramp),
            "max" => Ok(LossKind::Max),
            "bridge" => Ok(LossKind::Bridge),
            other => Err(Error::InvalidConfig(format!("unknown loss kind `{other}`"))),
        }
    }
}

/// A loss kind plus whether the task loss is also subtracted inside the
/// reward maximization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LossSpec {
    pub kind: LossKind,
    pub delta_in_reward: bool,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        LossSpec {
            kind,
            delta_in_reward: false,
        }
    }

    pub fn with_delta_in_reward(kind: LossKind) -> Self {
        LossSpec {
            kind,
            delta_in_reward: true,
        }
    }

    pub fn reward_sign(&self) -> DeltaSign {
        if self.delta_in_reward {
            DeltaSign::Minus
        } else {
            DeltaSign::Zero
        }
    }

    /// The six losses compared in the loss study, in reporting order.
    pub fn comparison_set() -> [LossSpec; 6] {
        [
            LossSpec::new(LossKind::Hinge),
            LossSpec::new(LossKind::Ramp),
            LossSpec::new(LossKind::Max),
            LossSpec::new(LossKind::Bridge),
            LossSpec::with_delta_in_reward(LossKind::Ramp),
            LossSpec::with_delta_in_reward(LossKind::Max),
        ]
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.delta_in_reward {
            write!(f, "{}-delta", self.kind)
        } else {
            write!(f, "{}", self.kind)
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    /// Accepts `bridge`, `ramp-delta`, `max+delta` and similar spellings.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        for suffix in ["-delta", "+delta", "_delta"] {
            if let Some(base) = s.strip_suffix(suffix) {
                return Ok(LossSpec::with_delta_in_reward(base.parse()?));
            }
        }
        Ok(LossSpec::new(s.parse()?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleLossReport {
    pub penalty_value: f64,
    pub reward_value: f64,
    /// `penalty_value - reward_value`, before clamping.
    pub margin: f64,
    pub loss: f64,
}

/// Both maximizers of the generic loss for one sample.
#[derive(Clone, Debug)]
pub struct SampleEvaluation<O> {
    pub penalty: Scored<O>,
    pub reward: Scored<O>,
}

impl<O> SampleEvaluation<O> {
    pub fn report(&self) -> SampleLossReport {
        let margin = self.penalty.value - self.reward.value;
        SampleLossReport {
            penalty_value: self.penalty.value,
            reward_value: self.reward.value,
            margin,
            loss: margin.max(0.0),
        }
    }
}

pub fn penalty_argmax<P: InferenceProblem>(problem: &P, w: &Weights, spec: &LossSpec) -> Result<Scored<P::Output>> {
    problem.argmax_augmented(w, spec.kind.penalty_space(), DeltaSign::Plus)
}

pub fn reward_argmax<P: InferenceProblem>(problem: &P, w: &Weights, spec: &LossSpec) -> Result<Scored<P::Output>> {
    problem.argmax_augmented(w, spec.kind.reward_space(), spec.reward_sign())
}

pub fn evaluate_sample<P: InferenceProblem>(
    problem: &P,
    w: &Weights,
    spec: &LossSpec,
) -> Result<SampleEvaluation<P::Output>> {
    w.check_dim(problem.feature_dim())?;
    Ok(SampleEvaluation {
        penalty: penalty_argmax(problem, w, spec)?,
        reward: reward_argmax(problem, w, spec)?,
    })
}

pub fn generic_loss<P: InferenceProblem>(problem: &P, w: &Weights, spec: &LossSpec) -> Result<SampleLossReport> {
    Ok(evaluate_sample(problem, w, spec)?.report())
}

/// A subgradient of the clamped loss at `w`: `φ(ŷ) - φ(ỹ)` for the two
/// maximizers, or zero when the margin is clamped away.
pub fn loss_subgradient<P: InferenceProblem>(problem: &P, evaluation: &SampleEvaluation<P::Output>) -> FeatureVector {
    if evaluation.report().margin <= 0.0 {
        return FeatureVector::zeros(problem.feature_dim());
    }
    let mut g = problem.features(&evaluation.penalty.output);
    g.add_scaled(&problem.features(&evaluation.reward.output), -1.0);
    g
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveValue {
    /// `λ ½‖w‖² + mean clamped loss`
    pub objective: f64,
    /// mean penalty maximum
    pub penalty: f64,
    /// mean reward maximum
    pub reward: f64,
}

/// Per-sample reports for a whole dataset, in dataset order.
pub fn dataset_reports<P: InferenceProblem>(
    dataset: &Dataset<P>,
    w: &Weights,
    spec: &LossSpec,
) -> Result<Vec<SampleLossReport>> {
    w.check_dim(dataset.feature_dim())?;
    dataset
        .instances()
        .par_iter()
        .map(|p| generic_loss(p, w, spec))
        .collect()
}

pub fn objective<P: InferenceProblem>(
    dataset: &Dataset<P>,
    w: &Weights,
    lambda: f64,
    spec: &LossSpec,
) -> Result<ObjectiveValue> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    let reports = dataset_reports(dataset, w, spec)?;
    Ok(objective_from_reports(&reports, w, lambda))
}

pub fn objective_from_reports(reports: &[SampleLossReport], w: &Weights, lambda: f64) -> ObjectiveValue {
    let n = reports.len() as f64;
    let (mut loss, mut penalty, mut reward) = (0.0, 0.0, 0.0);
    for r in reports {
        loss += r.loss;
        penalty += r.penalty_value;
        reward += r.reward_value;
    }
    ObjectiveValue {
        objective: 0.5 * lambda * w.norm_sq() + loss / n,
        penalty: penalty / n,
        reward: reward / n,
    }
}
