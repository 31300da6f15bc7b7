//! Random small instances and brute-force oracles shared by the test targets.
#![allow(dead_code)]

use bridgelearn_core::chain::{chain_enumerate, ChainGenConfig, ChainInstance, ChainModel, LabelSequence};
use bridgelearn_core::loss::evaluate_sample;
use bridgelearn_core::problem::augmented_value;
use bridgelearn_core::solver::{Bound, Bundle};
use bridgelearn_core::tracking::{
    candidate_events, enumerate_feasible, generate_instance, Assignment, Detection, TrackingGenConfig, TrackingInstance,
};
use bridgelearn_core::{Dataset, DeltaSign, FeatureVector, InferenceProblem, LossSpec, Scored, Space, Weights};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SPACES: [Space; 3] = [Space::Full, Space::Compatible, Space::Incompatible];
pub const SIGNS: [DeltaSign; 3] = [DeltaSign::Minus, DeltaSign::Zero, DeltaSign::Plus];

/// A chain with `K^L ≤ max_outputs`, random observations and a random
/// partial annotation that reveals at least one position.
pub fn random_chain(rng: &mut ChaCha8Rng, max_outputs: usize) -> ChainInstance {
    let k = rng.random_range(2..=4usize);
    let mut max_len = 1;
    while k.pow(max_len as u32 + 1) <= max_outputs {
        max_len += 1;
    }
    let len = rng.random_range(1..=max_len);
    let obs_dim = rng.random_range(1..=3);
    let observations = (0..len)
        .map(|_| (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut annotation: Vec<Option<usize>> = (0..len)
        .map(|_| rng.random_bool(0.5).then(|| rng.random_range(0..k)))
        .collect();
    if annotation.iter().all(Option::is_none) {
        let i = rng.random_range(0..len);
        annotation[i] = Some(rng.random_range(0..k));
    }
    let delta_scale = *[0.5, 1.0, 2.0].choose(rng).unwrap();
    ChainInstance::new(k, observations, annotation, delta_scale).unwrap()
}

pub fn random_weights(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Weights {
    Weights::new((0..dim).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// A tracking instance with at most `max_detections` detections whose
/// annotation is a random nonempty subset of one feasible assignment.
pub fn random_tracking(rng: &mut ChaCha8Rng, max_detections: usize) -> TrackingInstance {
    loop {
        let n_left = rng.random_range(0..=max_detections.min(3));
        let n_right = rng.random_range(0..=(max_detections - n_left).min(3));
        if n_left + n_right == 0 {
            continue;
        }
        let mut detection = || {
            Detection::new(
                rng.random_range(0.0..3.0),
                rng.random_range(0.0..3.0),
                rng.random_range(0.5..1.5),
            )
        };
        let left: Vec<Detection> = (0..n_left).map(|_| detection()).collect();
        let right: Vec<Detection> = (0..n_right).map(|_| detection()).collect();
        let kinds = candidate_events(&left, &right, 2.5);
        let bare = TrackingInstance::new(left, right, kinds, vec![], 1.0).unwrap();
        let feasible = enumerate_feasible(&bare).unwrap();
        let Some(truth) = feasible.choose(rng) else {
            continue;
        };
        // an event realized in every assignment cannot be violated
        let realized: Vec<usize> = truth
            .realized()
            .filter(|&e| !feasible.iter().all(|y| y.contains(e)))
            .collect();
        if realized.is_empty() {
            continue;
        }
        let mut annotated: Vec<usize> = realized.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        if annotated.is_empty() {
            annotated.push(*realized.choose(rng).unwrap());
        }
        let delta_scale = *[0.5, 1.0, 2.0].choose(rng).unwrap();
        let inst = bare.with_annotation(annotated).unwrap();
        return TrackingInstance::new(
            inst.left().to_vec(),
            inst.right().to_vec(),
            inst.event_kinds(),
            inst.annotated().to_vec(),
            delta_scale,
        )
        .unwrap();
    }
}

/// Every subset of the candidate events that covers each detection exactly
/// once on both sides, found by include/exclude recursion over events.
pub fn brute_force_assignments(inst: &TrackingInstance) -> Vec<Assignment> {
    fn visit(
        inst: &TrackingInstance,
        e: usize,
        left: &mut [u8],
        right: &mut [u8],
        chosen: &mut Vec<usize>,
        out: &mut Vec<Assignment>,
    ) {
        let events = inst.events();
        if e == events.len() {
            if left.iter().chain(right.iter()).all(|&c| c == 1) {
                out.push(Assignment::from_realized(events.len(), chosen.iter().copied()));
            }
            return;
        }
        visit(inst, e + 1, left, right, chosen, out);
        let kind = events[e].kind;
        let l = kind.left();
        let rs: Vec<usize> = kind.rights().collect();
        if l.is_some_and(|l| left[l] > 0) || rs.iter().any(|&r| right[r] > 0) {
            return;
        }
        if let Some(l) = l {
            left[l] += 1;
        }
        rs.iter().for_each(|&r| right[r] += 1);
        chosen.push(e);
        visit(inst, e + 1, left, right, chosen, out);
        chosen.pop();
        rs.iter().for_each(|&r| right[r] -= 1);
        if let Some(l) = l {
            left[l] -= 1;
        }
    }
    let mut left = vec![0u8; inst.left().len()];
    let mut right = vec![0u8; inst.right().len()];
    let mut out = Vec::new();
    visit(inst, 0, &mut left, &mut right, &mut Vec::new(), &mut out);
    out.sort();
    out
}

/// The first maximizer of the augmented score in the given (sorted) list.
pub fn best_of<P: InferenceProblem>(
    problem: &P,
    outputs: impl IntoIterator<Item = P::Output>,
    w: &Weights,
    sign: DeltaSign,
) -> Option<Scored<P::Output>> {
    let mut best: Option<Scored<P::Output>> = None;
    for y in outputs {
        let value = augmented_value(problem, &y, w, sign);
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(Scored { output: y, value });
        }
    }
    best
}

pub fn chain_oracle(inst: &ChainInstance, w: &Weights, space: Space, sign: DeltaSign) -> Option<Scored<LabelSequence>> {
    best_of(inst, chain_enumerate(inst, space, 1 << 20).unwrap(), w, sign)
}

pub fn tracking_oracle(
    inst: &TrackingInstance,
    w: &Weights,
    space: Space,
    sign: DeltaSign,
) -> Option<Scored<Assignment>> {
    let outputs = brute_force_assignments(inst)
        .into_iter()
        .filter(|y| space.admits(inst.annotated().iter().all(|&e| y.contains(e))));
    best_of(inst, outputs, w, sign)
}

/// Chains from a random sticky model with each position revealed with
/// probability `fraction` (at least one per chain).
pub fn partial_chain_dataset(seed: u64, n: usize, length: usize, fraction: f64) -> Dataset<ChainInstance> {
    let config = ChainGenConfig {
        length,
        label_count: 3,
        emission_dim: 2,
        ..ChainGenConfig::default()
    };
    let model = ChainModel::sample(&config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let instances = model
        .sample_instances(n, seed + 1)
        .unwrap()
        .into_iter()
        .map(|(inst, truth)| {
            let mut mask: Vec<Option<usize>> = truth
                .labels()
                .iter()
                .map(|&y| rng.random_bool(fraction).then_some(y))
                .collect();
            if mask.iter().all(Option::is_none) {
                let i = rng.random_range(0..length);
                mask[i] = Some(truth.labels()[i]);
            }
            inst.with_annotation(mask).unwrap()
        })
        .collect();
    Dataset::new(instances).unwrap()
}

/// Generated tracking instances, each annotated with a random half of its
/// non-forced true events; instances without any are skipped.
pub fn partial_tracking_dataset(seed: u64, n: usize) -> Dataset<TrackingInstance> {
    let config = TrackingGenConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::new();
    let mut draw = 0;
    while instances.len() < n {
        draw += 1;
        let (inst, truth) = generate_instance(&config, seed * 10_000 + draw).unwrap();
        let feasible = enumerate_feasible(&inst).unwrap();
        let free: Vec<usize> = truth
            .realized()
            .filter(|&e| !feasible.iter().all(|y| y.contains(e)))
            .collect();
        if free.is_empty() {
            continue;
        }
        let mut annotated: Vec<usize> = free.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        if annotated.is_empty() {
            annotated.push(*free.choose(&mut rng).unwrap());
        }
        instances.push(inst.with_annotation(annotated).unwrap());
    }
    Dataset::new(instances).unwrap()
}

pub fn random_features(rng: &mut ChaCha8Rng, dim: usize) -> FeatureVector {
    FeatureVector::from_vec((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
}

pub fn random_bundle(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> Bundle {
    let mut bundle = Bundle::new();
    for _ in 0..k {
        let a = random_features(rng, dim);
        let anchor = random_weights(rng, dim, 1.0);
        let b = rng.random_range(-1.0..1.0);
        let value = a.dot(&anchor) + b;
        bundle.push(Bound::new(a, b, anchor, value)).unwrap();
    }
    bundle
}

/// Rebuilds a bound from fresh maximizers at its anchor, branch by branch.
pub fn independent_offset<P: InferenceProblem>(
    data: &Dataset<P>,
    bound: &Bound,
    spec: &LossSpec,
) -> (FeatureVector, f64) {
    let n = data.len() as f64;
    let mut a = FeatureVector::zeros(data.feature_dim());
    let mut b = 0.0;
    for p in data {
        let e = evaluate_sample(p, &bound.anchor, spec).unwrap();
        if spec.kind.can_go_negative() && e.report().margin <= 0.0 {
            a.add_assign(&p.features(&e.reward.output));
            b += spec.reward_sign().coeff() * p.task_loss(&e.reward.output);
        } else {
            a.add_assign(&p.features(&e.penalty.output));
            b += p.task_loss(&e.penalty.output);
        }
    }
    a.scale(1.0 / n);
    (a, b / n)
}

/// `mean max(P_n, R_n)`, the convex part the bounds lower-bound.
pub fn convex_part<P: InferenceProblem>(data: &Dataset<P>, w: &Weights, spec: &LossSpec) -> f64 {
    let total: f64 = data
        .iter()
        .map(|p| {
            let r = evaluate_sample(p, w, spec).unwrap().report();
            if spec.kind.can_go_negative() {
                r.penalty_value.max(r.reward_value)
            } else {
                r.penalty_value
            }
        })
        .sum();
    total / data.len() as f64
}
