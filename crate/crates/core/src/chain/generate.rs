//! Synthetic label sequences from a sticky Gaussian hidden Markov model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{chain_feature_dim, ChainInstance, LabelSequence};
use crate::error::{Error, Result};
use crate::vector::Weights;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainGenConfig {
    pub label_count: usize,
    pub length: usize,
    /// Dimension of the emitted observations; a constant bias feature is
    /// appended to each.
    pub emission_dim: usize,
    /// Probability of keeping the previous label.
    pub stay_prob: f64,
    /// Standard deviation of the label means around the origin.
    pub mean_spread: f64,
    /// Emission noise standard deviation.
    pub noise: f64,
    pub delta_scale: f64,
}

impl Default for ChainGenConfig {
    fn default() -> Self {
        ChainGenConfig {
            label_count: 4,
            length: 20,
            emission_dim: 4,
            stay_prob: 0.8,
            mean_spread: 1.0,
            noise: 1.0,
            delta_scale: 1.0,
        }
    }
}

impl ChainGenConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.label_count >= 2
            && self.length >= 1
            && self.emission_dim >= 1
            && (0.0..=1.0).contains(&self.stay_prob)
            && self.mean_spread > 0.0
            && self.noise >= 0.0
            && self.noise.is_finite()
            && self.delta_scale > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid chain generator config {self:?}")))
        }
    }

    /// Observation dimension of generated instances (emission plus bias).
    pub fn obs_dim(&self) -> usize {
        self.emission_dim + 1
    }

    pub fn feature_dim(&self) -> usize {
        chain_feature_dim(self.label_count, self.obs_dim())
    }
}

/// Generator parameters: one emission mean per label and a sticky transition
/// matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainModel {
    pub config: ChainGenConfig,
    pub means: Vec<Vec<f64>>,
}

impl ChainModel {
    pub fn sample(config: &ChainGenConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spread = Normal::new(0.0, config.mean_spread).expect("valid spread");
        let means = (0..config.label_count)
            .map(|_| (0..config.emission_dim).map(|_| spread.sample(&mut rng)).collect())
            .collect();
        Ok(ChainModel {
            config: config.clone(),
            means,
        })
    }

    /// The same model with every mean moved by isotropic Gaussian noise of
    /// standard deviation `shift`.
    pub fn shifted(&self, shift: f64, seed: u64) -> Result<Self> {
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidConfig(format!("shift must be nonnegative, got {shift}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = self
            .means
            .iter()
            .map(|m| {
                m.iter()
                    .map(|&x| x + shift * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Ok(ChainModel {
            config: self.config.clone(),
            means,
        })
    }

    pub fn transition_prob(&self, from: usize, to: usize) -> f64 {
        let k = self.config.label_count as f64;
        if from == to {
            self.config.stay_prob
        } else {
            (1.0 - self.config.stay_prob) / (k - 1.0)
        }
    }

    /// Noise-scaled log-posterior weights: label `k` scores `<μ_k, x> - ½‖μ_k‖²`
    /// per position and transitions score `σ² log A`, so inference with these
    /// weights is the model's MAP decoder.
    pub fn planted_weights(&self) -> Weights {
        let k = self.config.label_count;
        let obs = self.config.obs_dim();
        let var = self.config.noise * self.config.noise;
        let mut w = vec![0.0; self.config.feature_dim()];
        for (label, mean) in self.means.iter().enumerate() {
            let block = &mut w[label * obs..(label + 1) * obs];
            block[..mean.len()].copy_from_slice(mean);
            block[mean.len()] = -0.5 * mean.iter().map(|m| m * m).sum::<f64>();
        }
        for a in 0..k {
            for b in 0..k {
                let p = self.transition_prob(a, b);
                // an impossible transition gets a large finite penalty
                w[k * obs + a * k + b] = var * if p > 0.0 { p.ln() } else { -1e3 };
            }
        }
        Weights::new(w).expect("finite planted weights")
    }

    /// Draws one fully annotated instance and its label sequence.
    pub fn sample_instance(&self, rng: &mut ChaCha8Rng) -> Result<(ChainInstance, LabelSequence)> {
        let cfg = &self.config;
        let k = cfg.label_count;
        let mut labels = Vec::with_capacity(cfg.length);
        let mut current = rng.random_range(0..k);
        for i in 0..cfg.length {
            if i > 0 && rng.random::<f64>() >= cfg.stay_prob {
                let other = rng.random_range(0..k - 1);
                current = if other >= current { other + 1 } else { other };
            }
            labels.push(current);
        }
        let observations = labels
            .iter()
            .map(|&y| {
                let mut row: Vec<f64> = self.means[y]
                    .iter()
                    .map(|&m| m + cfg.noise * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                row.push(1.0);
                row
            })
            .collect();
        let annotation = labels.iter().map(|&y| Some(y)).collect();
        let instance = ChainInstance::new(k, observations, annotation, cfg.delta_scale)?;
        Ok((instance, LabelSequence(labels)))
    }

    pub fn sample_instances(&self, count: usize, seed: u64) -> Result<Vec<(ChainInstance, LabelSequence)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample_instance(&mut rng)).collect()
    }
}
