use std::io::Cursor;
use std::process::Command;

use bridgelearn::config::{ExperimentConfig, ProblemKind};
use bridgelearn::data::{
    evaluate_test_loss, read_dataset, stratified_quotas, stratified_sample_annotations, write_dataset, Annotatable,
};
use bridgelearn::experiments::{run_annotation_sweep, sweep_table, Method};
use bridgelearn::output::read_rows;
use bridgelearn_core::chain::{ChainInstance, ChainModel};
use bridgelearn_core::solver::train_with_bundle;
use bridgelearn_core::tracking::TrackingInstance;
use bridgelearn_core::{Dataset, InferenceProblem, LossKind, LossSpec, Weights};
use proptest::prelude::*;

fn small_config() -> ExperimentConfig {
    let mut config = ExperimentConfig {
        train_size: 8,
        test_size: 20,
        fractions: vec![0.25, 1.0],
        repeats: 2,
        ..ExperimentConfig::default()
    };
    config.chain.length = 8;
    config
}

#[test]
fn quotas_cover_every_stratum() {
    // 8 moves and 2 divisions at 30%
    assert_eq!(stratified_quotas(&[8, 2], 3), vec![2, 1]);
    assert_eq!(stratified_quotas(&[8, 2], 10), vec![8, 2]);
    assert_eq!(stratified_quotas(&[5, 0, 5], 2), vec![1, 0, 1]);
    // fewer picks than strata: largest remainders win
    assert_eq!(stratified_quotas(&[6, 3, 1], 1), vec![1, 0, 0]);
}

proptest! {
    #[test]
    fn quotas_are_feasible(sizes in proptest::collection::vec(0usize..20, 1..6), frac in 0.0f64..=1.0) {
        let population: usize = sizes.iter().sum();
        let total = (frac * population as f64).round() as usize;
        let quotas = stratified_quotas(&sizes, total);
        prop_assert_eq!(quotas.iter().sum::<usize>(), total);
        prop_assert!(quotas.iter().zip(&sizes).all(|(q, n)| q <= n));
        let nonempty = sizes.iter().filter(|&&n| n > 0).count();
        if total >= nonempty {
            prop_assert!(quotas.iter().zip(&sizes).all(|(&q, &n)| n == 0 || q >= 1));
        }
    }
}

#[test]
fn full_fraction_keeps_the_complete_annotation() {
    let synth = ChainInstance::synth(&small_config(), 1).unwrap();
    let mask = stratified_sample_annotations(&synth.train, 1.0, 3).unwrap();
    assert_eq!(mask.apply(&synth.train).unwrap(), synth.train);

    let config = ExperimentConfig {
        problem: ProblemKind::Tracking,
        ..small_config()
    };
    let synth = TrackingInstance::synth(&config, 1).unwrap();
    let mask = stratified_sample_annotations(&synth.train, 1.0, 3).unwrap();
    assert_eq!(mask.apply(&synth.train).unwrap(), synth.train);
}

#[test]
fn masks_differ_across_seeds_but_not_in_size_or_coverage() {
    let synth = ChainInstance::synth(&small_config(), 2).unwrap();
    let first = stratified_sample_annotations(&synth.train, 0.3, 0).unwrap();
    let counts = first.stratum_counts(&synth.train).unwrap();
    assert_eq!(first.total(), (0.3f64 * 64.0).round() as usize);
    let mut distinct = 0;
    for seed in 1..20 {
        let mask = stratified_sample_annotations(&synth.train, 0.3, seed).unwrap();
        assert_eq!(mask.total(), first.total());
        assert_eq!(mask.stratum_counts(&synth.train).unwrap(), counts);
        distinct += (mask != first) as usize;
    }
    assert_eq!(distinct, 19);
    assert_eq!(stratified_sample_annotations(&synth.train, 0.3, 0).unwrap(), first);
}

#[test]
fn tracking_masks_skip_forced_events() {
    let config = ExperimentConfig {
        problem: ProblemKind::Tracking,
        ..small_config()
    };
    let synth = TrackingInstance::synth(&config, 4).unwrap();
    let mask = stratified_sample_annotations(&synth.train, 0.5, 0).unwrap();
    let partial = mask.apply(&synth.train).unwrap();
    for inst in &partial {
        let feasible = inst.feasible().unwrap();
        assert!(inst
            .annotated()
            .iter()
            .all(|&e| !feasible.iter().all(|y| y.contains(e))));
    }
}

#[test]
fn fraction_rounding_to_nothing_is_rejected() {
    let synth = ChainInstance::synth(&small_config(), 5).unwrap();
    let err = stratified_sample_annotations(&synth.train, 0.001, 0).unwrap_err();
    assert!(err.to_string().contains("rounds to zero"), "{err}");
    assert!(stratified_sample_annotations(&synth.train, 0.0, 0).is_err());
}

#[test]
fn test_loss_extremes() {
    let mut config = small_config();
    config.chain.noise = 0.0;
    let synth = ChainInstance::synth(&config, 6).unwrap();
    assert_eq!(evaluate_test_loss(&synth.planted, &synth.train).unwrap(), 0.0);

    // every label is 1 but the weights only reward label 0
    let inst = ChainInstance::new(2, vec![vec![1.0]; 3], vec![Some(1); 3], 1.0).unwrap();
    let w = Weights::new(vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let data = Dataset::new(vec![inst.clone(), inst]).unwrap();
    assert_eq!(evaluate_test_loss(&w, &data).unwrap(), 100.0);
}

#[test]
fn planted_tracking_weights_recover_the_truth() {
    let config = ExperimentConfig {
        problem: ProblemKind::Tracking,
        test_shift: 0.0,
        ..small_config()
    };
    let synth = TrackingInstance::synth(&config, 7).unwrap();
    assert_eq!(evaluate_test_loss(&synth.planted, &synth.test).unwrap(), 0.0);
}

#[test]
fn synthesis_is_deterministic_and_test_sets_are_complete() {
    let config = small_config();
    let a = ChainInstance::synth(&config, 8).unwrap();
    let b = ChainInstance::synth(&config, 8).unwrap();
    assert_eq!((&a.train, &a.test, &a.planted), (&b.train, &b.test, &b.planted));
    assert!(a.test.iter().all(ChainInstance::is_fully_annotated));
    let c = ChainInstance::synth(&config, 9).unwrap();
    assert_ne!(a.train, c.train);
    // planted weights come from the training generator
    let model = ChainModel::sample(&config.chain, bridgelearn::seed_stream(8, 0)).unwrap();
    assert_eq!(model.planted_weights(), a.planted);
}

fn round_trip<P: Annotatable + PartialEq + std::fmt::Debug>(data: &Dataset<P>) {
    let mut bytes = Vec::new();
    write_dataset(data, &mut bytes).unwrap();
    let back: Dataset<P> = read_dataset(Cursor::new(&bytes)).unwrap();
    assert_eq!(&back, data);
    let mut again = Vec::new();
    write_dataset(&back, &mut again).unwrap();
    assert_eq!(bytes, again);
}

#[test]
fn dataset_files_round_trip_exactly() {
    let synth = ChainInstance::synth(&small_config(), 10).unwrap();
    round_trip(&synth.train);
    let mask = stratified_sample_annotations(&synth.train, 0.4, 1).unwrap();
    round_trip(&mask.apply(&synth.train).unwrap());
    let config = ExperimentConfig {
        problem: ProblemKind::Tracking,
        ..small_config()
    };
    let tracking = TrackingInstance::synth(&config, 10).unwrap();
    round_trip(&tracking.train);
    round_trip(
        &stratified_sample_annotations(&tracking.train, 0.5, 2)
            .unwrap()
            .apply(&tracking.train)
            .unwrap(),
    );
}

#[test]
fn malformed_dataset_files_are_rejected() {
    let synth = ChainInstance::synth(&small_config(), 11).unwrap();
    let mut bytes = Vec::new();
    write_dataset(&synth.train, &mut bytes).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    assert!(read_dataset::<TrackingInstance, _>(Cursor::new(text.as_bytes())).is_err());
    let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
    assert!(read_dataset::<ChainInstance, _>(Cursor::new(truncated.as_bytes())).is_err());
    let garbled = text.replacen("chain 8", "chain 9", 1);
    assert!(read_dataset::<ChainInstance, _>(Cursor::new(garbled.as_bytes())).is_err());
}

#[test]
fn sweep_rows_and_the_full_annotation_arm() {
    let config = small_config();
    let rows = run_annotation_sweep(&config).unwrap();
    assert_eq!(rows.len(), config.fractions.len() * config.repeats * Method::ALL.len());
    for row in &rows {
        let r = row.cell.as_ref().unwrap();
        assert!((0.0..=100.0).contains(&r.test_loss_pct));
    }
    let table = sweep_table(&rows);
    assert_eq!(table.rows.len(), rows.len());

    let synth = ChainInstance::synth(&config, config.seed).unwrap();
    let hinge = config.solver.clone().with_loss(LossSpec::new(LossKind::Hinge));
    let (direct, _) = train_with_bundle(&synth.train, &hinge).unwrap();
    for row in rows.iter().filter(|r| r.method == Method::FullAnnotation) {
        assert_eq!(row.cell.as_ref().unwrap().weights, direct.weights);
    }
    // at full annotation, bridge training sees the same data as the baseline
    let bridge_full = rows
        .iter()
        .find(|r| r.method == Method::Bridge && r.fraction == 1.0)
        .unwrap();
    let full = rows.iter().find(|r| r.method == Method::FullAnnotation).unwrap();
    let (b, f) = (bridge_full.cell.as_ref().unwrap(), full.cell.as_ref().unwrap());
    assert!(
        (b.test_loss_pct - f.test_loss_pct).abs() <= 2.0,
        "{} vs {}",
        b.test_loss_pct,
        f.test_loss_pct
    );
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bridgelearn"))
}

const SMALL: [&str; 8] = [
    "--set",
    "train_size=6",
    "--set",
    "test_size=10",
    "--set",
    "chain_length=6",
    "--repeats",
    "1",
];

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let run = |extra: &[&str]| {
        bin()
            .arg("sweep")
            .args(SMALL)
            .args(extra)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap()
            .code()
    };
    assert_eq!(run(&["--set", "fractions=0.5"]), Some(0));
    assert_eq!(run(&["--lambda=-1"]), Some(2));
    assert_eq!(run(&["--set", "no_such_key=1"]), Some(2));
    assert_eq!(run(&["--set", "fractions=1.5"]), Some(2));
    // 0.01 of 36 positions rounds to zero, so those cells fail
    assert_eq!(run(&["--set", "fractions=0.01,0.5"]), Some(1));
    let rows = read_rows(&std::fs::read_to_string(&out).unwrap());
    let status = rows[0].iter().position(|h| h == "status").unwrap();
    let failed = rows[1..].iter().filter(|r| r[status] == "failed").count();
    assert_eq!(failed, 2);
    assert_eq!(rows.len() - 1, 2 * Method::ALL.len());
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(&config, "lambda = 0.5\nrho = 0.25\nfractions = 0.5\n").unwrap();
    let out = dir.path().join("sweep.csv");
    let status = bin()
        .arg("sweep")
        .args(SMALL)
        .arg("--config")
        .arg(&config)
        .args(["--lambda", "0.2"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# config: lambda = 0.2\n"));
    assert!(text.contains("# config: rho = 0.25\n"));
    assert!(text.contains("# config_hash = "));
    assert!(text.contains("# seed = 0\n"));
    assert!(text
        .lines()
        .any(|l| l == "method,fraction,repeat,test_loss_pct,train_wall_ms,inference_calls,status"));
}

#[test]
fn train_then_eval_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let ok = |cmd: &mut Command| assert!(cmd.status().unwrap().success());
    ok(bin().arg("synth").args(SMALL).arg("--out").arg(p.join("data")));
    ok(bin()
        .arg("train")
        .args(SMALL)
        .arg("--train")
        .arg(p.join("data/train.txt"))
        .arg("--out")
        .arg(p.join("model")));
    ok(bin()
        .arg("eval")
        .args(SMALL)
        .arg("--weights")
        .arg(p.join("model/weights.csv"))
        .arg("--test")
        .arg(p.join("data/test.txt"))
        .arg("--out")
        .arg(p.join("eval.csv")));
    let rows = read_rows(&std::fs::read_to_string(p.join("eval.csv")).unwrap());
    assert_eq!(rows[0], ["instances", "test_loss_pct"]);
    let loss: f64 = rows[1][1].parse().unwrap();
    assert!((0.0..=100.0).contains(&loss));

    // synthesizing in-process gives the same test set as the file
    let mut config = ExperimentConfig {
        train_size: 6,
        test_size: 10,
        ..ExperimentConfig::default()
    };
    config.chain.length = 6;
    let synth = ChainInstance::synth(&config, 0).unwrap();
    let file = std::fs::File::open(p.join("data/test.txt")).unwrap();
    let test: Dataset<ChainInstance> = read_dataset(std::io::BufReader::new(file)).unwrap();
    assert_eq!(test, synth.test);
    assert_eq!(test.iter().map(|i| i.annotated_count()).sum::<usize>(), 60);
}
