use std::time::Instant;

use log::debug;

use super::bundle::{best_anchor, bound_from_sides, penalty_sides, reward_sides, v_from_rewards, Bound, Bundle};
use super::{IterationRecord, SolverConfig, TrainOutcome, TrainTrace};
use crate::error::{Error, Result};
use crate::loss::{objective_from_reports, LossSpec, SampleLossReport};
use crate::problem::{Dataset, InferenceProblem, Scored};
use crate::vector::Weights;

/// CCCP with bound recycling and adaptive inner precision.
pub fn train_cccp<P: InferenceProblem>(dataset: &Dataset<P>, config: &SolverConfig) -> Result<TrainOutcome> {
    let config = config.clone().with_variant(true, true);
    Ok(train_with_bundle(dataset, &config)?.0)
}

/// CCCP that rebuilds its bundle every outer iteration and solves each
/// subproblem to `eps_min`.
pub fn train_vanilla_cccp<P: InferenceProblem>(dataset: &Dataset<P>, config: &SolverConfig) -> Result<TrainOutcome> {
    let config = config.clone().with_variant(false, false);
    Ok(train_with_bundle(dataset, &config)?.0)
}

/// Both maximizers at an outer iterate, its bound and its true objective.
struct Iterate<O> {
    w: Weights,
    rewards: Vec<Scored<O>>,
    bound: Bound,
    objective: f64,
}

/// Trains with the variant selected by `config.recycle_bounds` and
/// `config.adaptive_precision`, returning the final bundle as well.
///
/// Each outer iteration linearizes the concave part at `w_t`, then alternates
/// model solves and new bounds at the model minimizer until the approximation
/// gap drops to the current tolerance; the last model minimizer becomes
/// `w_{t+1}`. Training stops once the tolerance has reached `eps_min` and the
/// true objective changed by at most `eta`; if the iteration cap comes
/// first, the iterate with the smallest true objective is returned instead.
pub fn train_with_bundle<P: InferenceProblem>(
    dataset: &Dataset<P>,
    config: &SolverConfig,
) -> Result<(TrainOutcome, Bundle)> {
    config.validate()?;
    let start = Instant::now();
    let spec = config.loss;
    let n = dataset.len() as u64;
    let lambda = config.lambda;
    let extra_reward_calls = if spec.kind.can_go_negative() { n } else { 0 };

    let w0 = match &config.w0 {
        Some(w) => {
            w.check_dim(dataset.feature_dim())?;
            w.clone()
        }
        None => Weights::zeros(dataset.feature_dim()),
    };
    let mut current = evaluate(dataset, w0, &spec, lambda)?;
    let mut calls = 2 * n;

    let mut trace = TrainTrace {
        initial_objective: current.objective,
        iterations: Vec::new(),
    };
    let mut bundle = Bundle::new();
    let mut bounds_total = 0usize;
    let mut epsilon = config.eps0;
    let mut converged = false;
    let mut qp_iterations = 0u64;
    let mut best = (current.w.clone(), current.objective);

    for iter in 0..config.max_cccp_iters {
        epsilon = config.next_epsilon(epsilon);
        let v = v_from_rewards(dataset, &current.rewards);
        if !config.recycle_bounds {
            bundle.clear();
        }
        if !bundle.has_anchor(&current.w) {
            bundle.push(current.bound.clone())?;
            bounds_total += 1;
        }

        let mut gaps = Vec::new();
        let mut inner_converged = false;
        // every dual value is a lower bound on the model minimum, which only
        // grows as bounds are added, so the best one seen so far is kept
        let mut lower = f64::NEG_INFINITY;
        let next = loop {
            let solution = bundle.solve(&v, lambda, config.qp_tol_ratio * epsilon)?;
            qp_iterations += solution.qp_iterations as u64;
            let (_, best_value) = best_anchor(&bundle, &v, lambda).expect("bundle is nonempty");
            lower = lower.max(solution.approx_min);
            let gap = best_value - lower;
            gaps.push(gap);
            if gap <= epsilon {
                inner_converged = true;
                break solution.w;
            }
            if gaps.len() >= config.max_inner_iters || bundle.has_anchor(&solution.w) {
                break solution.w;
            }
            let penalties = penalty_sides(dataset, &solution.w, &spec)?;
            let rewards = if spec.kind.can_go_negative() {
                Some(reward_sides(dataset, &solution.w, &spec)?)
            } else {
                None
            };
            calls += n + extra_reward_calls;
            bundle.push(bound_from_sides(
                dataset,
                &solution.w,
                &spec,
                &penalties,
                rewards.as_deref(),
            )?)?;
            bounds_total += 1;
        };

        let previous = trace.final_objective();
        if next != current.w {
            current = evaluate(dataset, next, &spec, lambda)?;
            calls += 2 * n;
            if current.objective < best.1 {
                best = (current.w.clone(), current.objective);
            }
        }
        trace.iterations.push(IterationRecord {
            iter,
            epsilon,
            inner_iters: gaps.len(),
            gaps,
            inner_converged,
            bounds_total,
            inference_calls: calls,
            qp_iterations,
            objective: current.objective,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        debug!(
            "cccp iter {iter}: objective {:.9} eps {epsilon:.3e} bundle {} bounds {bounds_total}",
            current.objective,
            bundle.len()
        );
        // a rise is not convergence: the model minimizer can land above w_t
        let settled = !config.adaptive_precision || epsilon <= config.eps_min;
        if settled && (previous - current.objective).abs() <= config.eta {
            converged = true;
            break;
        }
    }

    let outcome = TrainOutcome {
        weights: if converged { current.w } else { best.0 },
        trace,
        converged,
    };
    Ok((outcome, bundle))
}

fn evaluate<P: InferenceProblem>(
    dataset: &Dataset<P>,
    w: Weights,
    spec: &LossSpec,
    lambda: f64,
) -> Result<Iterate<P::Output>> {
    let penalties = penalty_sides(dataset, &w, spec)?;
    let rewards = reward_sides(dataset, &w, spec)?;
    let bound = bound_from_sides(dataset, &w, spec, &penalties, Some(&rewards))?;
    let reports: Vec<SampleLossReport> = penalties
        .iter()
        .zip(&rewards)
        .map(|(p, r)| {
            let margin = p.value - r.value;
            SampleLossReport {
                penalty_value: p.value,
                reward_value: r.value,
                margin,
                loss: margin.max(0.0),
            }
        })
        .collect();
    let objective = objective_from_reports(&reports, &w, lambda).objective;
    if !objective.is_finite() {
        return Err(Error::NonFinite("objective"));
    }
    Ok(Iterate {
        w,
        rewards,
        bound,
        objective,
    })
}
