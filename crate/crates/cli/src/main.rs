use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bridgelearn::config::{ConfigError, ExperimentConfig, ProblemKind};
use bridgelearn::data::{
    evaluate_test_loss, read_dataset, stratified_sample_annotations, write_dataset, Annotatable, Synth,
};
use bridgelearn::experiments::{
    cell_seed, comparison_summary, comparison_table, lesion_table, lesion_trace_table, run_annotation_sweep,
    run_lesion_study, run_loss_comparison, sweep_table,
};
use bridgelearn::output::{read_rows, sibling, Meta, Table};
use bridgelearn_core::chain::ChainInstance;
use bridgelearn_core::solver::train_with_bundle;
use bridgelearn_core::tracking::TrackingInstance;
use bridgelearn_core::{Dataset, Weights};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bridgelearn",
    version,
    about = "Structured learning from partial annotations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training and test data.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Output directory for train.txt, test.txt, planted.csv and synth.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a partially annotated sample.
    Train {
        #[command(flatten)]
        common: Common,
        /// Fully annotated training data; synthesized when absent.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Output directory for weights.csv and trace.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Test loss of saved weights.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: PathBuf,
        /// Fully annotated test data; synthesized when absent.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bridge CCCP, perceptron and full annotation across fractions.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// All configured losses on identical partial annotations.
    CompareLosses {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solver with and without bound recycling and adaptive precision.
    Lesion {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    delta_in_reward: bool,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    eps_min: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Any other configuration key, as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("--set expects KEY=VALUE, got `{pair}`")))?;
            config.set(k, v)?;
        }
        let flags: [(&str, Option<String>); 10] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("problem", self.problem.clone()),
            ("loss", self.loss.clone()),
            ("fraction", self.fraction.map(|v| v.to_string())),
            ("repeats", self.repeats.map(|v| v.to_string())),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("eta", self.eta.map(|v| v.to_string())),
            ("eps0", self.eps0.map(|v| v.to_string())),
            ("eps_min", self.eps_min.map(|v| v.to_string())),
            ("rho", self.rho.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(value) = value {
                config.set(key, &value)?;
            }
        }
        if self.delta_in_reward {
            config.solver.loss.delta_in_reward = true;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Whether every cell succeeded.
type Outcome = Result<bool>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some cells failed; see the status column");
            ExitCode::from(1)
        }
        Err(e) if e.downcast_ref::<ConfigError>().is_some() => {
            eprintln!("{e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Synth { common, out } => {
            let config = common.resolve()?;
            dispatch(
                &config,
                |c| synth::<ChainInstance>(c, &out),
                |c| synth::<TrackingInstance>(c, &out),
            )
        }
        Command::Train { common, train, out } => {
            let config = common.resolve()?;
            let train = train.as_deref();
            dispatch(
                &config,
                |c| train_command::<ChainInstance>(c, train, &out),
                |c| train_command::<TrackingInstance>(c, train, &out),
            )
        }
        Command::Eval {
            common,
            weights,
            test,
            out,
        } => {
            let config = common.resolve()?;
            let test = test.as_deref();
            dispatch(
                &config,
                |c| eval_command::<ChainInstance>(c, &weights, test, &out),
                |c| eval_command::<TrackingInstance>(c, &weights, test, &out),
            )
        }
        Command::Sweep { common, out } => {
            let config = common.resolve()?;
            let rows = run_annotation_sweep(&config)?;
            sweep_table(&rows).write_file(&Meta::new("sweep", &config), &out)?;
            Ok(rows.iter().all(|r| r.cell.is_ok()))
        }
        Command::CompareLosses { common, out } => {
            let config = common.resolve()?;
            let rows = run_loss_comparison(&config)?;
            let meta = Meta::new("compare-losses", &config);
            comparison_table(&rows).write_file(&meta, &out)?;
            comparison_summary(&rows, &config.losses).write_file(&meta, &sibling(&out, "summary"))?;
            Ok(rows.iter().all(|r| r.cell.is_ok()))
        }
        Command::Lesion { common, out } => {
            let config = common.resolve()?;
            let rows = run_lesion_study(&config)?;
            let meta = Meta::new("lesion", &config);
            lesion_table(&rows).write_file(&meta, &out)?;
            lesion_trace_table(&rows).write_file(&meta, &sibling(&out, "trace"))?;
            Ok(rows.iter().all(|r| r.cell.is_ok()))
        }
    }
}

fn dispatch(
    config: &ExperimentConfig,
    chain: impl FnOnce(&ExperimentConfig) -> Outcome,
    tracking: impl FnOnce(&ExperimentConfig) -> Outcome,
) -> Outcome {
    match config.problem {
        ProblemKind::Chain => chain(config),
        ProblemKind::Tracking => tracking(config),
    }
}

fn load<P: Annotatable>(path: &Path) -> Result<Dataset<P>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_dataset(BufReader::new(file)).with_context(|| format!("cannot read {}", path.display()))
}

fn save<P: Annotatable>(dataset: &Dataset<P>, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    write_dataset(dataset, std::io::BufWriter::new(file))
}

fn weights_table(w: &Weights) -> Table {
    let mut table = Table::new(&["index", "value"]);
    for (i, v) in w.as_slice().iter().enumerate() {
        table.push(vec![i.to_string(), v.to_string()]);
    }
    table
}

fn synth<P: Annotatable>(config: &ExperimentConfig, out: &Path) -> Outcome {
    fs::create_dir_all(out)?;
    let Synth { train, test, planted } = P::synth(config, config.seed)?;
    save(&train, &out.join("train.txt"))?;
    save(&test, &out.join("test.txt"))?;
    let meta = Meta::new("synth", config);
    weights_table(&planted).write_file(&meta, &out.join("planted.csv"))?;
    let mut summary = Table::new(&["split", "instances", "components", "planted_test_loss_pct"]);
    for (name, data) in [("train", &train), ("test", &test)] {
        let components: usize = data.iter().map(|i| i.annotated_count()).sum();
        summary.push(vec![
            name.into(),
            data.len().to_string(),
            components.to_string(),
            evaluate_test_loss(&planted, data)?.to_string(),
        ]);
    }
    summary.write_file(&meta, &out.join("synth.csv"))?;
    Ok(true)
}

fn train_command<P: Annotatable>(config: &ExperimentConfig, train: Option<&Path>, out: &Path) -> Outcome {
    let truth = match train {
        Some(path) => load::<P>(path)?,
        None => P::synth(config, config.seed)?.train,
    };
    let mask = stratified_sample_annotations(&truth, config.fraction, cell_seed(config.seed, 0))?;
    let partial = mask.apply(&truth)?;
    let (outcome, _) = train_with_bundle(&partial, &config.solver)?;
    if !outcome.converged {
        log::warn!("iteration cap reached; saving the best iterate");
    }
    fs::create_dir_all(out)?;
    let meta = Meta::new("train", config);
    weights_table(&outcome.weights).write_file(&meta, &out.join("weights.csv"))?;
    let mut trace = Table::new(&[
        "iter",
        "epsilon",
        "inner_iters",
        "bounds_total",
        "inference_calls",
        "objective",
        "wall_ms",
    ]);
    for it in &outcome.trace.iterations {
        trace.push(vec![
            it.iter.to_string(),
            it.epsilon.to_string(),
            it.inner_iters.to_string(),
            it.bounds_total.to_string(),
            it.inference_calls.to_string(),
            it.objective.to_string(),
            format!("{:.3}", it.wall_ms),
        ]);
    }
    trace.write_file(&meta, &out.join("trace.csv"))?;
    Ok(true)
}

fn read_weights(path: &Path) -> Result<Weights> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let rows = read_rows(&text);
    let values = rows
        .iter()
        .skip(1)
        .map(|r| {
            r.get(1)
                .context("weights rows need an index and a value")?
                .parse::<f64>()
                .context("bad weight value")
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Weights::new(values)?)
}

fn eval_command<P: Annotatable>(config: &ExperimentConfig, weights: &Path, test: Option<&Path>, out: &Path) -> Outcome {
    let w = read_weights(weights)?;
    let test = match test {
        Some(path) => load::<P>(path)?,
        None => P::synth(config, config.seed)?.test,
    };
    let mut table = Table::new(&["instances", "test_loss_pct"]);
    table.push(vec![test.len().to_string(), evaluate_test_loss(&w, &test)?.to_string()]);
    table.write_file(&Meta::new("eval", config), out)?;
    Ok(true)
}
