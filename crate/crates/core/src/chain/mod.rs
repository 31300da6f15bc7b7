//! Partially labeled label sequences with exact loss-augmented inference.
//!
//! Feature layout for `K` labels and observation dimension `d`:
//! `[unary block of label 0 | ... | unary block of label K-1 | K×K transition indicators]`,
//! where the unary block of label `k` receives the observation vector of every
//! position labelled `k`, and transition `(a, b)` counts adjacent pairs.
//!
//! The incompatible subspace is the union over annotated positions `i` of
//! `{y : y_i != annotation_i}`; its maximum is the best of one constrained
//! dynamic program per annotated position.

mod generate;

pub use generate::{ChainGenConfig, ChainModel};

use crate::error::{Error, Result};
use crate::problem::{augmented_value, DeltaSign, InferenceProblem, Scored, Space};
use crate::vector::{FeatureVector, Weights};

pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelSequence(pub Vec<usize>);

impl LabelSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }
}

pub fn chain_feature_dim(label_count: usize, obs_dim: usize) -> usize {
    label_count * obs_dim + label_count * label_count
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainInstance {
    label_count: usize,
    obs_dim: usize,
    /// row-major `len × obs_dim`
    observations: Vec<f64>,
    annotation: Vec<Option<usize>>,
    delta_scale: f64,
}

impl ChainInstance {
    pub fn new(
        label_count: usize,
        observations: Vec<Vec<f64>>,
        annotation: Vec<Option<usize>>,
        delta_scale: f64,
    ) -> Result<Self> {
        let len = observations.len();
        if len == 0 {
            return Err(Error::InvalidInstance("chain length must be at least 1".into()));
        }
        if label_count < 2 {
            return Err(Error::InvalidInstance(format!(
                "chain needs at least 2 labels, got {label_count}"
            )));
        }
        if annotation.len() != len {
            return Err(Error::InvalidInstance(format!(
                "annotation covers {} positions, chain has {len}",
                annotation.len()
            )));
        }
        if !(delta_scale > 0.0 && delta_scale.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "delta_scale must be positive, got {delta_scale}"
            )));
        }
        let obs_dim = observations[0].len();
        let mut flat = Vec::with_capacity(len * obs_dim);
        for row in &observations {
            if row.len() != obs_dim {
                return Err(Error::DimensionMismatch {
                    expected: obs_dim,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("chain observations"));
        }
        if let Some(bad) = annotation.iter().flatten().find(|&&a| a >= label_count) {
            return Err(Error::InvalidInstance(format!(
                "annotated label {bad} out of range for {label_count} labels"
            )));
        }
        Ok(ChainInstance {
            label_count,
            obs_dim,
            observations: flat,
            annotation,
            delta_scale,
        })
    }

    /// Same observations, different annotation.
    pub fn with_annotation(&self, annotation: Vec<Option<usize>>) -> Result<Self> {
        ChainInstance::new(self.label_count, self.observation_rows(), annotation, self.delta_scale)
    }

    pub fn len(&self) -> usize {
        self.annotation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotation.is_empty()
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn observation(&self, position: usize) -> &[f64] {
        &self.observations[position * self.obs_dim..(position + 1) * self.obs_dim]
    }

    pub fn observation_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.observation(i).to_vec()).collect()
    }

    pub fn annotation(&self) -> &[Option<usize>] {
        &self.annotation
    }

    pub fn annotated_positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.annotation
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|a| (i, a)))
    }

    pub fn is_fully_annotated(&self) -> bool {
        self.annotation.iter().all(Option::is_some)
    }

    /// The annotation as a label sequence, if every position is annotated.
    pub fn full_labels(&self) -> Option<LabelSequence> {
        self.annotation
            .iter()
            .copied()
            .collect::<Option<Vec<_>>>()
            .map(LabelSequence)
    }

    fn unary_offset(&self, label: usize) -> usize {
        label * self.obs_dim
    }

    fn transition_index(&self, from: usize, to: usize) -> usize {
        self.label_count * self.obs_dim + from * self.label_count + to
    }

    fn unary_score(&self, w: &Weights, position: usize, label: usize) -> f64 {
        let off = self.unary_offset(label);
        crate::vector::dot(self.observation(position), &w.as_slice()[off..off + self.obs_dim])
    }

    fn check_output(&self, y: &LabelSequence) -> Result<()> {
        if y.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: y.len(),
            });
        }
        if let Some(&bad) = y.0.iter().find(|&&k| k >= self.label_count) {
            return Err(Error::InvalidInstance(format!("label {bad} out of range")));
        }
        Ok(())
    }

    /// Max-sum over sequences whose labels satisfy `allowed(position, label)`,
    /// with `bonus` added at annotated positions for labels that disagree with
    /// the annotation. Returns the lexicographically smallest maximizer.
    fn constrained_viterbi<F>(&self, w: &Weights, bonus: f64, allowed: F) -> Option<LabelSequence>
    where
        F: Fn(usize, usize) -> bool,
    {
        let len = self.len();
        let k = self.label_count;
        let trans: Vec<f64> = (0..k * k).map(|ab| w[self.transition_index(ab / k, ab % k)]).collect();
        let node = |i: usize, label: usize| -> f64 {
            if !allowed(i, label) {
                return f64::NEG_INFINITY;
            }
            let mut s = self.unary_score(w, i, label);
            if matches!(self.annotation[i], Some(a) if a != label) {
                s += bonus;
            }
            s
        };

        // best[i][a]: best score of positions i.. given label a at position i
        let mut best = vec![f64::NEG_INFINITY; len * k];
        for a in 0..k {
            best[(len - 1) * k + a] = node(len - 1, a);
        }
        for i in (0..len - 1).rev() {
            for a in 0..k {
                let here = node(i, a);
                if here == f64::NEG_INFINITY {
                    continue;
                }
                let tail = (0..k)
                    .map(|b| trans[a * k + b] + best[(i + 1) * k + b])
                    .fold(f64::NEG_INFINITY, f64::max);
                best[i * k + a] = here + tail;
            }
        }

        let first = first_argmax((0..k).map(|a| best[a]))?;
        let mut labels = Vec::with_capacity(len);
        labels.push(first);
        for i in 1..len {
            let prev = labels[i - 1];
            let next = first_argmax((0..k).map(|b| trans[prev * k + b] + best[i * k + b]))?;
            labels.push(next);
        }
        Some(LabelSequence(labels))
    }
}

/// Index of the first maximal finite element.
fn first_argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if v == f64::NEG_INFINITY {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Exact loss-augmented argmax over a subspace of label sequences.
pub fn chain_argmax(
    instance: &ChainInstance,
    w: &Weights,
    space: Space,
    sign: DeltaSign,
) -> Result<Scored<LabelSequence>> {
    w.check_dim(instance.feature_dim())?;
    let bonus = sign.coeff() * instance.delta_scale;
    let ann = &instance.annotation;
    let output = match space {
        Space::Full => instance.constrained_viterbi(w, bonus, |_, _| true),
        Space::Compatible => instance.constrained_viterbi(w, bonus, |i, k| ann[i].is_none_or(|a| a == k)),
        Space::Incompatible => {
            if !instance.has_annotation() {
                return Err(Error::DegenerateSample {
                    space,
                    reason: "chain has no annotated position".into(),
                });
            }
            let mut best: Option<Scored<LabelSequence>> = None;
            for (pos, label) in instance.annotated_positions() {
                let Some(y) = instance.constrained_viterbi(w, bonus, |i, k| i != pos || k != label) else {
                    continue;
                };
                let value = augmented_value(instance, &y, w, sign);
                let better = match &best {
                    None => true,
                    Some(b) => value > b.value || (value == b.value && y < b.output),
                };
                if better {
                    best = Some(Scored { output: y, value });
                }
            }
            best.map(|s| s.output)
        }
    };
    let output = output.ok_or_else(|| Error::DegenerateSample {
        space,
        reason: "no sequence satisfies the constraints".into(),
    })?;
    let value = augmented_value(instance, &output, w, sign);
    Ok(Scored { output, value })
}

/// Every sequence of the selected space, in lexicographic order.
pub fn chain_enumerate(instance: &ChainInstance, space: Space, cap: usize) -> Result<Vec<LabelSequence>> {
    let k = instance.label_count;
    let len = instance.len();
    let total = (k as f64).powi(len as i32);
    if total > cap as f64 {
        return Err(Error::EnumerationCap { size: total, cap });
    }
    let mut out = Vec::new();
    let mut labels = vec![0usize; len];
    loop {
        let y = LabelSequence(labels.clone());
        if space.admits(instance.is_compatible(&y)) {
            out.push(y);
        }
        // odometer, last position fastest
        let mut i = len;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
        }
    }
}

impl InferenceProblem for ChainInstance {
    type Output = LabelSequence;

    fn feature_dim(&self) -> usize {
        chain_feature_dim(self.label_count, self.obs_dim)
    }

    fn features(&self, y: &LabelSequence) -> FeatureVector {
        debug_assert!(self.check_output(y).is_ok());
        let mut phi = FeatureVector::zeros(self.feature_dim());
        let out = phi.as_mut_slice();
        for (i, &label) in y.0.iter().enumerate() {
            let off = self.unary_offset(label);
            for (slot, x) in out[off..off + self.obs_dim].iter_mut().zip(self.observation(i)) {
                *slot += x;
            }
            if i > 0 {
                out[self.transition_index(y.0[i - 1], label)] += 1.0;
            }
        }
        phi
    }

    fn delta_scale(&self) -> f64 {
        self.delta_scale
    }

    fn violations(&self, y: &LabelSequence) -> usize {
        self.annotated_positions().filter(|&(i, a)| y.0[i] != a).count()
    }

    fn annotated_count(&self) -> usize {
        self.annotation.iter().filter(|a| a.is_some()).count()
    }

    fn argmax_augmented(&self, w: &Weights, space: Space, sign: DeltaSign) -> Result<Scored<LabelSequence>> {
        chain_argmax(self, w, space, sign)
    }

    fn enumerate(&self, space: Space) -> Option<Result<Vec<LabelSequence>>> {
        Some(chain_enumerate(self, space, DEFAULT_ENUMERATION_CAP))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::score;

    /// L = 2, K = 2, one-hot position observations, so the unary weight of
    /// (position i, label k) sits at `w[k * 2 + i]`.
    fn two_by_two(annotation: Vec<Option<usize>>) -> (ChainInstance, Weights) {
        let obs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let inst = ChainInstance::new(2, obs, annotation, 1.0).unwrap();
        // s1 = (0, 1), s2 = (0, 0.5), zero transitions
        let w = Weights::new(vec![0.0, 0.0, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
        (inst, w)
    }

    #[test]
    fn score_of_unary_only_chain() {
        let (inst, w) = two_by_two(vec![None, None]);
        let y = LabelSequence(vec![0, 1]);
        assert_eq!(score(&inst, &y, &w).unwrap(), 0.5);
        assert_eq!(score(&inst, &y, &Weights::zeros(8)).unwrap(), 0.0);
        assert!(score(&inst, &y, &Weights::zeros(7)).is_err());
    }

    #[test]
    fn argmax_examples() {
        let (inst, w) = two_by_two(vec![None, None]);
        let full = chain_argmax(&inst, &w, Space::Full, DeltaSign::Zero).unwrap();
        assert_eq!(full.output, LabelSequence(vec![1, 1]));
        assert_eq!(full.value, 1.5);

        let (inst, w) = two_by_two(vec![Some(0), None]);
        let compat = chain_argmax(&inst, &w, Space::Compatible, DeltaSign::Zero).unwrap();
        assert_eq!(compat.output, LabelSequence(vec![0, 1]));
        assert_eq!(compat.value, 0.5);

        let incompat = chain_argmax(&inst, &w, Space::Incompatible, DeltaSign::Plus).unwrap();
        assert_eq!(incompat.output, LabelSequence(vec![1, 1]));
        assert_eq!(incompat.value, 2.5);
    }

    #[test]
    fn incompatible_without_annotation_is_degenerate() {
        let (inst, w) = two_by_two(vec![None, None]);
        let err = chain_argmax(&inst, &w, Space::Incompatible, DeltaSign::Plus).unwrap_err();
        assert!(matches!(err, Error::DegenerateSample { .. }));
    }

    #[test]
    fn zero_weights_tie_break_lexicographically() {
        let (inst, _) = two_by_two(vec![Some(1), None]);
        let w = Weights::zeros(8);
        let full = chain_argmax(&inst, &w, Space::Full, DeltaSign::Zero).unwrap();
        assert_eq!(full.output, LabelSequence(vec![0, 0]));
        let compat = chain_argmax(&inst, &w, Space::Compatible, DeltaSign::Zero).unwrap();
        assert_eq!(compat.output, LabelSequence(vec![1, 0]));
    }

    #[test]
    fn enumeration_counts() {
        let (inst, _) = two_by_two(vec![None, None]);
        assert_eq!(chain_enumerate(&inst, Space::Full, 100).unwrap().len(), 4);
        assert_eq!(chain_enumerate(&inst, Space::Compatible, 100).unwrap().len(), 4);
        assert_eq!(chain_enumerate(&inst, Space::Incompatible, 100).unwrap().len(), 0);

        let (inst, _) = two_by_two(vec![Some(0), None]);
        assert_eq!(chain_enumerate(&inst, Space::Compatible, 100).unwrap().len(), 2);
        assert_eq!(chain_enumerate(&inst, Space::Incompatible, 100).unwrap().len(), 2);

        let obs = vec![vec![0.0]; 3];
        let inst = ChainInstance::new(2, obs, vec![Some(0), None, Some(1)], 1.0).unwrap();
        assert_eq!(chain_enumerate(&inst, Space::Compatible, 100).unwrap().len(), 2);
        assert_eq!(chain_enumerate(&inst, Space::Incompatible, 100).unwrap().len(), 6);
    }

    #[test]
    fn enumeration_is_lexicographic_and_capped() {
        let (inst, _) = two_by_two(vec![None, None]);
        let all = chain_enumerate(&inst, Space::Full, 100).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
        assert!(matches!(
            chain_enumerate(&inst, Space::Full, 3),
            Err(Error::EnumerationCap { .. })
        ));
    }

    #[test]
    fn fully_annotated_compatible_returns_annotation() {
        let obs = vec![vec![0.3, -1.0], vec![2.0, 0.1], vec![-0.7, 0.4]];
        let inst = ChainInstance::new(3, obs, vec![Some(2), Some(0), Some(1)], 1.0).unwrap();
        let w = Weights::new((0..inst.feature_dim()).map(|i| (i as f64).sin()).collect()).unwrap();
        let best = chain_argmax(&inst, &w, Space::Compatible, DeltaSign::Plus).unwrap();
        let truth = inst.full_labels().unwrap();
        assert_eq!(best.output, truth);
        assert_eq!(best.value, score(&inst, &truth, &w).unwrap());
    }

    #[test]
    fn rejects_malformed_instances() {
        assert!(ChainInstance::new(1, vec![vec![0.0]], vec![None], 1.0).is_err());
        assert!(ChainInstance::new(2, vec![], vec![], 1.0).is_err());
        assert!(ChainInstance::new(2, vec![vec![0.0]], vec![Some(2)], 1.0).is_err());
        assert!(ChainInstance::new(2, vec![vec![0.0]], vec![None], 0.0).is_err());
        assert!(ChainInstance::new(2, vec![vec![0.0], vec![0.0, 1.0]], vec![None, None], 1.0).is_err());
        assert!(ChainInstance::new(2, vec![vec![f64::NAN]], vec![None], 1.0).is_err());
    }
}
