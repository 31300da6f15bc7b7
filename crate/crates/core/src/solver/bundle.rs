//! Affine lower bounds on the convex part and the bundle model built from them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::problem::{Dataset, InferenceProblem, Scored};
use crate::qp::{solve_simplex_qp_from, SimplexQp};
use crate::vector::{FeatureVector, Weights};

/// `w ↦ <a, w> + b`, tight at `anchor`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bound {
    pub a: FeatureVector,
    pub b: f64,
    pub anchor: Weights,
    /// The convex part evaluated at `anchor` by inference.
    pub anchor_value: f64,
    /// Samples whose reward branch was taken at the anchor.
    pub filtered: usize,
    anchor_norm_sq: f64,
}

impl Bound {
    pub fn new(a: FeatureVector, b: f64, anchor: Weights, anchor_value: f64) -> Self {
        let anchor_norm_sq = anchor.norm_sq();
        Bound {
            a,
            b,
            anchor,
            anchor_value,
            filtered: 0,
            anchor_norm_sq,
        }
    }

    pub fn value_at(&self, w: &Weights) -> f64 {
        self.a.dot(w) + self.b
    }

    /// `λ½‖w_j‖² + P̄(w_j) + <v, w_j>`: the linearized objective at the anchor.
    pub fn anchor_objective(&self, v: &FeatureVector, lambda: f64) -> f64 {
        0.5 * lambda * self.anchor_norm_sq + self.anchor_value + v.dot(&self.anchor)
    }
}

pub(crate) fn penalty_sides<P: InferenceProblem>(
    dataset: &Dataset<P>,
    w: &Weights,
    spec: &LossSpec,
) -> Result<Vec<Scored<P::Output>>> {
    w.check_dim(dataset.feature_dim())?;
    dataset
        .instances()
        .par_iter()
        .map(|p| crate::loss::penalty_argmax(p, w, spec))
        .collect()
}

pub(crate) fn reward_sides<P: InferenceProblem>(
    dataset: &Dataset<P>,
    w: &Weights,
    spec: &LossSpec,
) -> Result<Vec<Scored<P::Output>>> {
    w.check_dim(dataset.feature_dim())?;
    dataset
        .instances()
        .par_iter()
        .map(|p| crate::loss::reward_argmax(p, w, spec))
        .collect()
}

/// `v = -(1/N) Σ φ(ỹ_n)`, summed in dataset order.
pub(crate) fn v_from_rewards<P: InferenceProblem>(
    dataset: &Dataset<P>,
    rewards: &[Scored<P::Output>],
) -> FeatureVector {
    let mut v = FeatureVector::zeros(dataset.feature_dim());
    for (p, r) in dataset.iter().zip(rewards) {
        v.add_assign(&p.features(&r.output));
    }
    v.scale(-1.0 / dataset.len() as f64);
    v
}

/// Builds the bound at `w` from maximizers already computed there. `rewards`
/// is required for the kinds whose margin can go negative.
pub(crate) fn bound_from_sides<P: InferenceProblem>(
    dataset: &Dataset<P>,
    w: &Weights,
    spec: &LossSpec,
    penalties: &[Scored<P::Output>],
    rewards: Option<&[Scored<P::Output>]>,
) -> Result<Bound> {
    let filtering = spec.kind.can_go_negative();
    if filtering && rewards.is_none() {
        return Err(Error::InvalidConfig(format!("{spec} bounds need reward maximizers")));
    }
    let n = dataset.len() as f64;
    let reward_coeff = spec.reward_sign().coeff();
    let mut a = FeatureVector::zeros(dataset.feature_dim());
    let (mut b, mut value, mut filtered) = (0.0, 0.0, 0);
    for (i, (p, pen)) in dataset.iter().zip(penalties).enumerate() {
        let reward = rewards.map(|r| &r[i]);
        match reward {
            Some(rew) if filtering && pen.value - rew.value <= 0.0 => {
                a.add_assign(&p.features(&rew.output));
                b += reward_coeff * p.task_loss(&rew.output);
                value += rew.value;
                filtered += 1;
            }
            _ => {
                a.add_assign(&p.features(&pen.output));
                b += p.task_loss(&pen.output);
                value += pen.value;
            }
        }
    }
    a.scale(1.0 / n);
    let bound = Bound {
        a,
        b: b / n,
        anchor: w.clone(),
        anchor_value: value / n,
        filtered,
        anchor_norm_sq: w.norm_sq(),
    };
    if !bound.a.is_finite() || !bound.b.is_finite() || !bound.anchor_value.is_finite() {
        return Err(Error::NonFinite("bound"));
    }
    debug_assert!(
        (bound.value_at(w) - bound.anchor_value).abs() <= 1e-9 * bound.anchor_value.abs().max(1.0),
        "bound not tight at its anchor"
    );
    Ok(bound)
}

/// The linearization of the concave part at `w`.
pub fn compute_v<P: InferenceProblem>(dataset: &Dataset<P>, w: &Weights, spec: &LossSpec) -> Result<FeatureVector> {
    let rewards = reward_sides(dataset, w, spec)?;
    Ok(v_from_rewards(dataset, &rewards))
}

/// A fresh bound on the convex part, tight at `w`.
pub fn compute_bound<P: InferenceProblem>(dataset: &Dataset<P>, w: &Weights, spec: &LossSpec) -> Result<Bound> {
    let penalties = penalty_sides(dataset, w, spec)?;
    let rewards = if spec.kind.can_go_negative() {
        Some(reward_sides(dataset, w, spec)?)
    } else {
        None
    };
    bound_from_sides(dataset, w, spec, &penalties, rewards.as_deref())
}

/// Bounds plus their Gram matrix and the last dual solution.
#[derive(Clone, Debug, Default)]
pub struct Bundle {
    bounds: Vec<Bound>,
    gram: Vec<Vec<f64>>,
    warm: Vec<f64>,
}

impl Bundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn bounds(&self) -> &[Bound] {
        &self.bounds
    }

    pub fn has_anchor(&self, w: &Weights) -> bool {
        self.bounds.iter().any(|b| b.anchor == *w)
    }

    pub fn push(&mut self, bound: Bound) -> Result<()> {
        if let Some(first) = self.bounds.first() {
            if first.a.len() != bound.a.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.a.len(),
                    found: bound.a.len(),
                });
            }
        }
        let row: Vec<f64> = self
            .bounds
            .iter()
            .map(|other| other.a.dot_features(&bound.a))
            .chain(std::iter::once(bound.a.norm_sq()))
            .collect();
        for (g, &value) in self.gram.iter_mut().zip(&row) {
            g.push(value);
        }
        self.gram.push(row);
        self.bounds.push(bound);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.bounds.clear();
        self.gram.clear();
        self.warm.clear();
    }

    /// `max_j (<a_j, w> + b_j)`
    pub fn model_value(&self, w: &Weights) -> f64 {
        self.bounds
            .iter()
            .map(|b| b.value_at(w))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `λ½‖w‖² + <v, w> + max_j (<a_j, w> + b_j)`: the primal model objective.
    pub fn model_objective(&self, v: &FeatureVector, lambda: f64, w: &Weights) -> f64 {
        0.5 * lambda * w.norm_sq() + v.dot(w) + self.model_value(w)
    }

    /// Solves the model and keeps the dual solution for the next call.
    pub fn solve(&mut self, v: &FeatureVector, lambda: f64, tol: f64) -> Result<InnerSolution> {
        let warm = std::mem::take(&mut self.warm);
        let solution = inner_solve_from(self, v, lambda, Some(&warm), tol)?;
        self.warm = solution.alpha.clone();
        Ok(solution)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerSolution {
    /// Minimizer of the model.
    pub w: Weights,
    /// `min_w λ½‖w‖² + <v, w> + max_j (<a_j, w> + b_j)`
    pub approx_min: f64,
    pub alpha: Vec<f64>,
    pub qp_iterations: usize,
}

/// Minimizes `λ½‖w‖² + <v, w> + max_j (<a_j, w> + b_j)` through its dual,
/// `max_α -½ αᵀ(AᵀA/λ)α + (b - Aᵀv/λ)ᵀα` over the simplex.
pub fn inner_solve(bundle: &Bundle, v: &FeatureVector, lambda: f64) -> Result<InnerSolution> {
    inner_solve_from(bundle, v, lambda, None, crate::qp::DEFAULT_TOL)
}

pub fn inner_solve_from(
    bundle: &Bundle,
    v: &FeatureVector,
    lambda: f64,
    warm: Option<&[f64]>,
    tol: f64,
) -> Result<InnerSolution> {
    let k = bundle.len();
    if k == 0 {
        return Err(Error::InvalidConfig("cannot solve an empty bundle".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    let dim = bundle.bounds[0].a.len();
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    let hessian: Vec<f64> = bundle.gram.iter().flatten().map(|g| g / lambda).collect();
    let linear: Vec<f64> = bundle
        .bounds
        .iter()
        .map(|bd| bd.b - bd.a.dot_features(v) / lambda)
        .collect();
    let qp = SimplexQp::new(hessian, linear)?.with_tol(tol);
    let solution = solve_simplex_qp_from(&qp, warm.filter(|w| !w.is_empty()))?;

    let mut direction = v.clone();
    for (bd, &alpha) in bundle.bounds.iter().zip(&solution.alpha) {
        if alpha != 0.0 {
            direction.add_scaled(&bd.a, alpha);
        }
    }
    direction.scale(-1.0 / lambda);
    let w = Weights::new(direction.into_inner())?;
    Ok(InnerSolution {
        w,
        approx_min: solution.dual_value - v.norm_sq() / (2.0 * lambda),
        alpha: solution.alpha,
        qp_iterations: solution.iterations,
    })
}

/// The anchor with the smallest linearized objective (first on ties) and that value.
pub fn best_anchor(bundle: &Bundle, v: &FeatureVector, lambda: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, bd) in bundle.bounds.iter().enumerate() {
        let value = bd.anchor_objective(v, lambda);
        if best.is_none_or(|(_, b)| value < b) {
            best = Some((j, value));
        }
    }
    best
}

/// `min_j [λ½‖w_j‖² + P̄(w_j) + <v, w_j>] - approx_min`: how far the best
/// anchor can be from the minimizer of the linearized objective.
pub fn approximation_gap(bundle: &Bundle, v: &FeatureVector, lambda: f64, approx_min: f64) -> f64 {
    best_anchor(bundle, v, lambda).map_or(f64::INFINITY, |(_, best)| best - approx_min)
}
