//! CCCP training with a recycled cutting-plane bundle, plus the vanilla CCCP
//! and structured-perceptron baselines.
//!
//! The objective is split into a convex part `λ½‖w‖² + P̄(w)` and a concave
//! part `-R(w)`. Each outer (CCCP) iteration linearizes `-R` at the current
//! iterate, `v = -∂R(w_t)`, and minimizes `λ½‖w‖² + P̄(w) + <v, w>` with a
//! bundle of affine lower bounds on `P̄`. Because `P̄` does not depend on the
//! linearization point, bounds stay valid across outer iterations and can be
//! reused; the inner tolerance is tightened geometrically from `eps0` down to
//! `eps_min`.
//!
//! For the hinge and ramp kinds `P̄` is the mean penalty maximum. For the max
//! and bridge kinds, whose per-sample margin can go negative, `P̄` is the mean
//! of `max(penalty, reward)` per sample: at a point where a sample's margin
//! is not positive its penalty contribution is replaced by its reward
//! contribution, so the sample drops out of the linearized objective there
//! while every bound remains a global lower bound of a single convex function.

mod bundle;
mod cccp;
mod perceptron;

use std::io::{self, Write};

pub use bundle::{
    approximation_gap, best_anchor, compute_bound, compute_v, inner_solve, inner_solve_from, Bound, Bundle,
    InnerSolution,
};
pub use cccp::{train_cccp, train_vanilla_cccp, train_with_bundle};
pub use perceptron::{train_perceptron, PerceptronConfig};

use crate::error::{Error, Result};
use crate::loss::{LossKind, LossSpec};
use crate::vector::Weights;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Outer termination threshold on the objective decrease.
    pub eta: f64,
    pub eps0: f64,
    pub eps_min: f64,
    pub rho: f64,
    /// Starting point; zeros when `None`.
    pub w0: Option<Weights>,
    pub max_cccp_iters: usize,
    pub max_inner_iters: usize,
    pub loss: LossSpec,
    /// Keep bounds across outer iterations.
    pub recycle_bounds: bool,
    /// Tighten the inner tolerance geometrically instead of fixing it at `eps_min`.
    pub adaptive_precision: bool,
    /// Dual solver tolerance as a fraction of the current inner tolerance.
    pub qp_tol_ratio: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.01,
            eta: 1e-4,
            eps0: 1.0,
            eps_min: 1e-3,
            rho: 0.5,
            w0: None,
            max_cccp_iters: 100,
            max_inner_iters: 1000,
            loss: LossSpec::new(LossKind::Bridge),
            recycle_bounds: true,
            adaptive_precision: true,
            qp_tol_ratio: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn with_loss(mut self, loss: LossSpec) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_variant(mut self, recycle_bounds: bool, adaptive_precision: bool) -> Self {
        self.recycle_bounds = recycle_bounds;
        self.adaptive_precision = adaptive_precision;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("lambda", self.lambda)?;
        positive("eta", self.eta)?;
        positive("eps0", self.eps0)?;
        positive("eps_min", self.eps_min)?;
        positive("qp_tol_ratio", self.qp_tol_ratio)?;
        if self.qp_tol_ratio >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "qp_tol_ratio must be below 1, got {}",
                self.qp_tol_ratio
            )));
        }
        if self.eps_min > self.eps0 {
            return Err(Error::InvalidConfig(format!(
                "eps_min ({}) must not exceed eps0 ({})",
                self.eps_min, self.eps0
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        if self.max_cccp_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::InvalidConfig("iteration caps must be positive".into()));
        }
        Ok(())
    }

    /// Inner tolerance for the next outer iteration given the current one.
    pub fn next_epsilon(&self, current: f64) -> f64 {
        if self.adaptive_precision {
            (current * self.rho).max(self.eps_min)
        } else {
            self.eps_min
        }
    }
}

/// One outer iteration (CCCP step or perceptron pass).
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Inner tolerance in force; zero for the perceptron.
    pub epsilon: f64,
    /// Model solves for CCCP, weight updates for the perceptron.
    pub inner_iters: usize,
    /// Approximation gap after each model solve.
    pub gaps: Vec<f64>,
    pub inner_converged: bool,
    /// Cumulative number of bounds computed.
    pub bounds_total: usize,
    /// Cumulative number of loss-augmented inference calls.
    pub inference_calls: u64,
    /// Cumulative dual solver steps.
    pub qp_iterations: u64,
    /// True objective at the iterate this step produced (training task loss
    /// for the perceptron).
    pub objective: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub initial_objective: f64,
    pub iterations: Vec<IterationRecord>,
}

impl TrainTrace {
    pub fn bounds_total(&self) -> usize {
        self.iterations.last().map_or(0, |r| r.bounds_total)
    }

    pub fn inference_calls(&self) -> u64 {
        self.iterations.last().map_or(0, |r| r.inference_calls)
    }

    pub fn final_objective(&self) -> f64 {
        self.iterations.last().map_or(self.initial_objective, |r| r.objective)
    }

    pub fn wall_ms(&self) -> f64 {
        self.iterations.last().map_or(0.0, |r| r.wall_ms)
    }

    pub const CSV_HEADER: &'static str = "iter,inner_iters,bounds_total,inference_calls,objective,wall_ms";

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.iterations {
            writeln!(
                out,
                "{},{},{},{},{:.17e},{:.3}",
                r.iter, r.inner_iters, r.bounds_total, r.inference_calls, r.objective, r.wall_ms
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: Weights,
    pub trace: TrainTrace,
    /// False when an iteration cap stopped training.
    pub converged: bool,
}
