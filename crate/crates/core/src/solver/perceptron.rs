use std::time::Instant;

use super::{IterationRecord, TrainOutcome, TrainTrace};
use crate::error::{Error, Result};
use crate::problem::{Dataset, DeltaSign, InferenceProblem, Space};
use crate::vector::{FeatureVector, Weights};

#[derive(Clone, Debug, PartialEq)]
pub struct PerceptronConfig {
    pub max_passes: usize,
    /// Passes without a new best training loss before stopping.
    pub patience: usize,
    pub w0: Option<Weights>,
}

impl Default for PerceptronConfig {
    fn default() -> Self {
        PerceptronConfig {
            max_passes: 100,
            patience: 5,
            w0: None,
        }
    }
}

/// Structured perceptron on partial annotations: whenever the unconstrained
/// prediction violates the annotation, move toward the best compatible
/// output and away from the prediction.
///
/// Samples are visited in dataset order. Each trace record is one pass; its
/// objective is the total task loss of the predictions made during that pass
/// and `inner_iters` the number of updates.
pub fn train_perceptron<P: InferenceProblem>(dataset: &Dataset<P>, config: &PerceptronConfig) -> Result<TrainOutcome> {
    if config.max_passes == 0 || config.patience == 0 {
        return Err(Error::InvalidConfig(
            "perceptron passes and patience must be positive".into(),
        ));
    }
    let start = Instant::now();
    let dim = dataset.feature_dim();
    let mut w = match &config.w0 {
        Some(w) => {
            w.check_dim(dim)?;
            FeatureVector::from_vec(w.as_slice().to_vec())
        }
        None => FeatureVector::zeros(dim),
    };
    let mut trace = TrainTrace {
        initial_objective: f64::NAN,
        iterations: Vec::new(),
    };
    let mut calls = 0u64;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut converged = false;
    for pass in 0..config.max_passes {
        let mut pass_loss = 0.0;
        let mut updates = 0;
        for problem in dataset {
            let current = Weights::new(w.as_slice().to_vec())?;
            let predicted = problem.argmax_augmented(&current, Space::Full, DeltaSign::Zero)?;
            calls += 1;
            let loss = problem.task_loss(&predicted.output);
            if loss > 0.0 {
                let target = problem.argmax_augmented(&current, Space::Compatible, DeltaSign::Zero)?;
                calls += 1;
                w.add_assign(&problem.features(&target.output));
                w.add_scaled(&problem.features(&predicted.output), -1.0);
                updates += 1;
            }
            pass_loss += loss;
        }
        if pass == 0 {
            trace.initial_objective = pass_loss;
        }
        trace.iterations.push(IterationRecord {
            iter: pass,
            epsilon: 0.0,
            inner_iters: updates,
            gaps: Vec::new(),
            inner_converged: updates == 0,
            bounds_total: 0,
            inference_calls: calls,
            qp_iterations: 0,
            objective: pass_loss,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if pass_loss == 0.0 {
            converged = true;
            break;
        }
        if pass_loss < best {
            best = pass_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                converged = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        weights: Weights::new(w.into_inner())?,
        trace,
        converged,
    })
}
