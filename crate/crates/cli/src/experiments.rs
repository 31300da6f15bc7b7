//! The annotation sweep, the loss comparison and the optimizer lesion study.

use anyhow::Result;
use bridgelearn_core::chain::ChainInstance;
use bridgelearn_core::solver::{train_perceptron, train_with_bundle, IterationRecord, SolverConfig, TrainOutcome};
use bridgelearn_core::tracking::TrackingInstance;
use bridgelearn_core::{Dataset, LossKind, LossSpec, Weights};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ProblemKind};
use crate::data::{evaluate_test_loss, stratified_sample_annotations, Annotatable, Synth};
use crate::output::Table;
use crate::seed_stream;

/// Seed of the annotation sample in cell `cell`; streams below 1000 are
/// reserved for data synthesis.
pub fn cell_seed(master: u64, cell: usize) -> u64 {
    seed_stream(master, 1000 + cell as u64)
}

/// A finished training run evaluated on the test set.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub weights: Weights,
    pub test_loss_pct: f64,
    pub train_wall_ms: f64,
    pub inference_calls: u64,
    pub final_objective: f64,
    pub converged: bool,
    pub bounds_total: usize,
    pub iterations: Vec<IterationRecord>,
}

impl RunResult {
    fn new<P: Annotatable>(outcome: TrainOutcome, test: &Dataset<P>) -> Result<Self> {
        Ok(RunResult {
            test_loss_pct: evaluate_test_loss(&outcome.weights, test)?,
            train_wall_ms: outcome.trace.wall_ms(),
            inference_calls: outcome.trace.inference_calls(),
            final_objective: outcome.trace.final_objective(),
            converged: outcome.converged,
            bounds_total: outcome.trace.bounds_total(),
            iterations: outcome.trace.iterations,
            weights: outcome.weights,
        })
    }
}

/// Either a result or the message of the error that stopped the run.
pub type Cell = std::result::Result<RunResult, String>;

fn settle(result: Result<RunResult>, what: &str) -> Cell {
    result.map_err(|e| {
        log::warn!("{what} failed: {e:#}");
        format!("{e:#}")
    })
}

fn status(cell: &Cell) -> &'static str {
    if cell.is_ok() {
        "ok"
    } else {
        "failed"
    }
}

fn with_problem<T>(
    config: &ExperimentConfig,
    chain: impl FnOnce() -> Result<T>,
    tracking: impl FnOnce() -> Result<T>,
) -> Result<T> {
    config.validate()?;
    match config.problem {
        ProblemKind::Chain => chain(),
        ProblemKind::Tracking => tracking(),
    }
}

/// Trains with `solver` on the partially annotated sample of `cell`.
fn train_partial<P: Annotatable>(
    synth: &Synth<P>,
    fraction: f64,
    seed: u64,
    train: impl FnOnce(&Dataset<P>) -> Result<TrainOutcome>,
) -> Result<RunResult> {
    let mask = stratified_sample_annotations(&synth.train, fraction, seed)?;
    let partial = mask.apply(&synth.train)?;
    RunResult::new(train(&partial)?, &synth.test)
}

fn cccp<P: Annotatable>(solver: &SolverConfig) -> impl Fn(&Dataset<P>) -> Result<TrainOutcome> + '_ {
    move |data| Ok(train_with_bundle(data, solver)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Bridge,
    Perceptron,
    /// Hinge loss on the complete annotation.
    FullAnnotation,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Bridge, Method::Perceptron, Method::FullAnnotation];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bridge => "bridge-cccp",
            Method::Perceptron => "perceptron",
            Method::FullAnnotation => "full-structsvm",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub method: Method,
    pub fraction: f64,
    pub repeat: usize,
    pub cell: Cell,
}

/// Every fraction × repeat × method. The full-annotation baseline ignores
/// the fraction, so it is trained once and reported in every cell.
pub fn run_annotation_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    with_problem(
        config,
        || sweep(config, ChainInstance::synth(config, config.seed)?),
        || sweep(config, TrackingInstance::synth(config, config.seed)?),
    )
}

fn sweep<P: Annotatable>(config: &ExperimentConfig, synth: Synth<P>) -> Result<Vec<SweepRow>> {
    let bridge = config.solver.clone().with_loss(LossSpec::new(LossKind::Bridge));
    let full_config = config.solver.clone().with_loss(LossSpec::new(LossKind::Hinge));
    let full = settle(
        train_with_bundle(&synth.train, &full_config)
            .map_err(Into::into)
            .and_then(|(o, _)| RunResult::new(o, &synth.test)),
        "full-annotation baseline",
    );
    let cells: Vec<(f64, usize)> = config
        .fractions
        .iter()
        .flat_map(|&f| (0..config.repeats).map(move |r| (f, r)))
        .collect();
    let rows: Vec<Vec<SweepRow>> = cells
        .par_iter()
        .enumerate()
        .map(|(index, &(fraction, repeat))| {
            let seed = cell_seed(config.seed, index);
            let what = |m: Method| format!("{} at fraction {fraction}, repeat {repeat}", m.name());
            let bridge_cell = settle(
                train_partial(&synth, fraction, seed, cccp(&bridge)),
                &what(Method::Bridge),
            );
            let perceptron_cell = settle(
                train_partial(&synth, fraction, seed, |d| Ok(train_perceptron(d, &config.perceptron)?)),
                &what(Method::Perceptron),
            );
            [
                (Method::Bridge, bridge_cell),
                (Method::Perceptron, perceptron_cell),
                (Method::FullAnnotation, full.clone()),
            ]
            .into_iter()
            .map(|(method, cell)| SweepRow {
                method,
                fraction,
                repeat,
                cell,
            })
            .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut table = Table::new(&[
        "method",
        "fraction",
        "repeat",
        "test_loss_pct",
        "train_wall_ms",
        "inference_calls",
        "status",
    ]);
    for row in rows {
        let mut fields = vec![
            row.method.name().to_string(),
            row.fraction.to_string(),
            row.repeat.to_string(),
        ];
        fields.extend(run_fields(&row.cell));
        fields.push(status(&row.cell).into());
        table.push(fields);
    }
    table
}

fn run_fields(cell: &Cell) -> [String; 3] {
    match cell {
        Ok(r) => [
            r.test_loss_pct.to_string(),
            format!("{:.3}", r.train_wall_ms),
            r.inference_calls.to_string(),
        ],
        Err(_) => [String::new(), String::new(), String::new()],
    }
}

#[derive(Clone, Debug)]
pub struct ComparisonRow {
    pub loss: LossSpec,
    pub repeat: usize,
    pub cell: Cell,
}

/// Every configured loss on the same partial annotation of each repeat.
pub fn run_loss_comparison(config: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    with_problem(
        config,
        || compare(config, ChainInstance::synth(config, config.seed)?),
        || compare(config, TrackingInstance::synth(config, config.seed)?),
    )
}

fn compare<P: Annotatable>(config: &ExperimentConfig, synth: Synth<P>) -> Result<Vec<ComparisonRow>> {
    let cells: Vec<(usize, LossSpec)> = (0..config.repeats)
        .flat_map(|r| config.losses.iter().map(move |&l| (r, l)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(repeat, loss)| {
            let solver = config.solver.clone().with_loss(loss);
            let cell = settle(
                train_partial(&synth, config.fraction, cell_seed(config.seed, repeat), cccp(&solver)),
                &format!("{loss}, repeat {repeat}"),
            );
            ComparisonRow { loss, repeat, cell }
        })
        .collect())
}

pub fn comparison_table(rows: &[ComparisonRow]) -> Table {
    let mut table = Table::new(&[
        "loss",
        "repeat",
        "test_loss_pct",
        "train_wall_ms",
        "inference_calls",
        "final_objective",
        "status",
    ]);
    for row in rows {
        let mut fields = vec![row.loss.to_string(), row.repeat.to_string()];
        fields.extend(run_fields(&row.cell));
        fields.push(
            row.cell
                .as_ref()
                .map_or(String::new(), |r| r.final_objective.to_string()),
        );
        fields.push(status(&row.cell).into());
        table.push(fields);
    }
    table
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-loss mean ± std of test loss, wall time and inference calls over the
/// successful repeats, in the order the losses were configured.
pub fn comparison_summary(rows: &[ComparisonRow], losses: &[LossSpec]) -> Table {
    let mut table = Table::new(&[
        "loss",
        "runs",
        "failed",
        "mean_test_loss",
        "std_test_loss",
        "mean_train_wall_ms",
        "std_train_wall_ms",
        "mean_inference_calls",
    ]);
    for &loss in losses {
        let ok: Vec<&RunResult> = rows
            .iter()
            .filter(|r| r.loss == loss)
            .filter_map(|r| r.cell.as_ref().ok())
            .collect();
        let failed = rows.iter().filter(|r| r.loss == loss && r.cell.is_err()).count();
        let mut fields = vec![loss.to_string(), ok.len().to_string(), failed.to_string()];
        if ok.is_empty() {
            fields.extend(std::iter::repeat_n(String::new(), 5));
        } else {
            let (tm, ts) = mean_std(&ok.iter().map(|r| r.test_loss_pct).collect::<Vec<_>>());
            let (wm, ws) = mean_std(&ok.iter().map(|r| r.train_wall_ms).collect::<Vec<_>>());
            let (cm, _) = mean_std(&ok.iter().map(|r| r.inference_calls as f64).collect::<Vec<_>>());
            fields.extend([
                tm.to_string(),
                ts.to_string(),
                format!("{wm:.3}"),
                format!("{ws:.3}"),
                cm.to_string(),
            ]);
        }
        table.push(fields);
    }
    table
}

/// One corner of the {recycling} × {adaptive precision} grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub recycle_bounds: bool,
    pub adaptive_precision: bool,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::new(true, true),
        Variant::new(true, false),
        Variant::new(false, true),
        Variant::new(false, false),
    ];

    pub const fn new(recycle_bounds: bool, adaptive_precision: bool) -> Self {
        Variant {
            recycle_bounds,
            adaptive_precision,
        }
    }

    pub fn name(self) -> &'static str {
        match (self.recycle_bounds, self.adaptive_precision) {
            (true, true) => "recycle+adaptive",
            (true, false) => "recycle",
            (false, true) => "adaptive",
            (false, false) => "vanilla",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LesionRow {
    pub variant: Variant,
    pub repeat: usize,
    pub cell: Cell,
}

/// The four solver variants on the same partial annotation of each repeat,
/// with the configured loss.
pub fn run_lesion_study(config: &ExperimentConfig) -> Result<Vec<LesionRow>> {
    with_problem(
        config,
        || lesion(config, ChainInstance::synth(config, config.seed)?),
        || lesion(config, TrackingInstance::synth(config, config.seed)?),
    )
}

fn lesion<P: Annotatable>(config: &ExperimentConfig, synth: Synth<P>) -> Result<Vec<LesionRow>> {
    let cells: Vec<(usize, Variant)> = (0..config.repeats)
        .flat_map(|r| Variant::ALL.into_iter().map(move |v| (r, v)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(repeat, variant)| {
            let solver = config
                .solver
                .clone()
                .with_variant(variant.recycle_bounds, variant.adaptive_precision);
            let cell = settle(
                train_partial(&synth, config.fraction, cell_seed(config.seed, repeat), cccp(&solver)),
                &format!("{} solver, repeat {repeat}", variant.name()),
            );
            LesionRow { variant, repeat, cell }
        })
        .collect())
}

pub fn lesion_table(rows: &[LesionRow]) -> Table {
    let mut table = Table::new(&[
        "variant",
        "recycle_bounds",
        "adaptive_precision",
        "repeat",
        "final_objective",
        "bounds_total",
        "inference_calls",
        "cccp_iters",
        "converged",
        "test_loss_pct",
        "train_wall_ms",
        "status",
    ]);
    for row in rows {
        let v = row.variant;
        let mut fields = vec![
            v.name().to_string(),
            v.recycle_bounds.to_string(),
            v.adaptive_precision.to_string(),
            row.repeat.to_string(),
        ];
        match &row.cell {
            Ok(r) => fields.extend([
                r.final_objective.to_string(),
                r.bounds_total.to_string(),
                r.inference_calls.to_string(),
                r.iterations.len().to_string(),
                r.converged.to_string(),
                r.test_loss_pct.to_string(),
                format!("{:.3}", r.train_wall_ms),
            ]),
            Err(_) => fields.extend(std::iter::repeat_n(String::new(), 7)),
        }
        fields.push(status(&row.cell).into());
        table.push(fields);
    }
    table
}

/// Per-iteration convergence traces of every successful lesion run.
pub fn lesion_trace_table(rows: &[LesionRow]) -> Table {
    let mut table = Table::new(&[
        "variant",
        "repeat",
        "iter",
        "epsilon",
        "inner_iters",
        "bounds_total",
        "inference_calls",
        "objective",
        "wall_ms",
    ]);
    for row in rows {
        let Ok(r) = &row.cell else { continue };
        for it in &r.iterations {
            table.push(vec![
                row.variant.name().to_string(),
                row.repeat.to_string(),
                it.iter.to_string(),
                it.epsilon.to_string(),
                it.inner_iters.to_string(),
                it.bounds_total.to_string(),
                it.inference_calls.to_string(),
                it.objective.to_string(),
                format!("{:.3}", it.wall_ms),
            ]);
        }
    }
    table
}
