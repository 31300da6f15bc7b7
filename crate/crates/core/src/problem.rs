//! The capability set every structured problem exposes to the losses and
//! solvers, plus the subspace selectors induced by a partial annotation.

use std::fmt;

use crate::error::{Error, Result};
use crate::vector::{FeatureVector, Weights};

/// Output subspace selector.
///
/// A partial annotation splits the full output space into the outputs that
/// agree with every annotated component (`Compatible`) and the rest
/// (`Incompatible`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Space {
    Full,
    Compatible,
    Incompatible,
}

impl Space {
    pub const ALL: [Space; 3] = [Space::Full, Space::Compatible, Space::Incompatible];

    /// Whether an output with the given compatibility belongs to this space.
    pub fn admits(self, compatible: bool) -> bool {
        match self {
            Space::Full => true,
            Space::Compatible => compatible,
            Space::Incompatible => !compatible,
        }
    }
}

/// Sign with which the task loss enters a loss-augmented maximization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DeltaSign {
    Minus,
    Zero,
    Plus,
}

impl DeltaSign {
    pub const ALL: [DeltaSign; 3] = [DeltaSign::Minus, DeltaSign::Zero, DeltaSign::Plus];

    pub fn coeff(self) -> f64 {
        match self {
            DeltaSign::Minus => -1.0,
            DeltaSign::Zero => 0.0,
            DeltaSign::Plus => 1.0,
        }
    }
}

/// An output together with its (possibly loss-augmented) score.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored<O> {
    pub output: O,
    pub value: f64,
}

/// Everything the losses and solvers need from a concrete problem instance.
///
/// Scores are linear: `f(x, y; w) = <features(y), w>`. The task loss is the
/// number of violated annotated components times [`delta_scale`], so it
/// vanishes exactly on the compatible subspace.
///
/// Ties in [`argmax_augmented`] must resolve to the smallest output under
/// `Ord`, which makes every solver run reproducible bit for bit.
///
/// [`delta_scale`]: InferenceProblem::delta_scale
/// [`argmax_augmented`]: InferenceProblem::argmax_augmented
pub trait InferenceProblem: Sync {
    type Output: Clone + Ord + fmt::Debug + Send + Sync;

    fn feature_dim(&self) -> usize;

    fn features(&self, output: &Self::Output) -> FeatureVector;

    /// Task-loss weight per violated annotated component.
    fn delta_scale(&self) -> f64;

    /// Number of annotated components the output disagrees with.
    fn violations(&self, output: &Self::Output) -> usize;

    /// Number of annotated components.
    fn annotated_count(&self) -> usize;

    fn has_annotation(&self) -> bool {
        self.annotated_count() > 0
    }

    fn task_loss(&self, output: &Self::Output) -> f64 {
        self.delta_scale() * self.violations(output) as f64
    }

    fn is_compatible(&self, output: &Self::Output) -> bool {
        self.violations(output) == 0
    }

    /// Maximizes `<features(y), w> + sign * task_loss(y)` over `space`.
    ///
    /// The returned value must equal [`augmented_value`] of the returned
    /// output, so that it can be compared bit for bit against enumeration.
    fn argmax_augmented(&self, w: &Weights, space: Space, sign: DeltaSign) -> Result<Scored<Self::Output>>;

    /// Exhaustive listing of a subspace, for instances small enough to
    /// enumerate. `None` when the problem has no enumerator.
    fn enumerate(&self, _space: Space) -> Option<Result<Vec<Self::Output>>> {
        None
    }
}

/// `f(x, y; w) = <φ(x, y), w>`.
pub fn score<P: InferenceProblem>(problem: &P, output: &P::Output, w: &Weights) -> Result<f64> {
    w.check_dim(problem.feature_dim())?;
    Ok(problem.features(output).dot(w))
}

/// Score plus signed task loss, computed in the canonical order every
/// argmax implementation reports.
pub fn augmented_value<P: InferenceProblem + ?Sized>(
    problem: &P,
    output: &P::Output,
    w: &Weights,
    sign: DeltaSign,
) -> f64 {
    let base = problem.features(output).dot(w);
    match sign {
        DeltaSign::Zero => base,
        _ => base + sign.coeff() * problem.task_loss(output),
    }
}

/// A nonempty collection of instances sharing one feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<P> {
    instances: Vec<P>,
    feature_dim: usize,
}

impl<P: InferenceProblem> Dataset<P> {
    pub fn new(instances: Vec<P>) -> Result<Self> {
        let first = instances.first().ok_or(Error::EmptyDataset)?;
        let feature_dim = first.feature_dim();
        if let Some(bad) = instances.iter().find(|p| p.feature_dim() != feature_dim) {
            return Err(Error::DimensionMismatch {
                expected: feature_dim,
                found: bad.feature_dim(),
            });
        }
        Ok(Dataset { instances, feature_dim })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[P] {
        &self.instances
    }

    pub fn iter(&self) -> std::slice::Iter<'_, P> {
        self.instances.iter()
    }

    pub fn into_instances(self) -> Vec<P> {
        self.instances
    }
}

impl<'a, P> IntoIterator for &'a Dataset<P> {
    type Item = &'a P;
    type IntoIter = std::slice::Iter<'a, P>;

    fn into_iter(self) -> Self::IntoIter {
        self.instances.iter()
    }
}
