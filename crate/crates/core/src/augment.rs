//! Cross-domain mixup between the current batch and the memory batch.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::Sample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixupConfig {
    /// Concentration of the symmetric Beta distribution λ is drawn from.
    pub theta: f64,
    pub enabled: bool,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            theta: 0.8,
            enabled: true,
        }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "mixup theta must be positive, got {}",
                self.theta
            )));
        }
        Ok(())
    }

    pub fn lambda_distribution(&self) -> Result<Beta<f64>> {
        self.validate()?;
        Beta::new(self.theta, self.theta)
            .map_err(|e| Error::InvalidConfig(format!("mixup theta {}: {e}", self.theta)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch {
    pub features: Tensor,
    pub soft_labels: Tensor,
    pub lambdas: Vec<f64>,
    /// Partner index into the concatenation `current ++ memory`.
    pub partners: Vec<usize>,
}

/// `(λ xi + (1-λ) xj, λ onehot(yi) + (1-λ) onehot(yj))`.
pub fn mix_pair(
    xi: &[f64],
    yi: usize,
    xj: &[f64],
    yj: usize,
    lambda: f64,
    num_classes: usize,
) -> (Vec<f64>, Vec<f64>) {
    let features = xi
        .iter()
        .zip(xj)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    let mut label = vec![0.0; num_classes];
    label[yi] += lambda;
    label[yj] += 1.0 - lambda;
    (features, label)
}

/// One mixed sample per current-batch entry. Each draws its own λ and a
/// partner uniformly from `current ∪ memory`.
pub fn mix(
    current: &[Sample],
    memory: &[Sample],
    num_classes: usize,
    config: &MixupConfig,
    rng: &mut impl Rng,
) -> Result<MixedBatch> {
    if current.is_empty() {
        return Err(Error::InvalidInput(
            "mixup needs a nonempty current batch".into(),
        ));
    }
    if let Some(s) = current
        .iter()
        .chain(memory)
        .find(|s| s.label >= num_classes)
    {
        return Err(Error::InvalidInput(format!(
            "label {} out of range for {num_classes} classes",
            s.label
        )));
    }
    let beta = config.lambda_distribution()?;
    let pool = current.len() + memory.len();
    let partner = |j: usize| {
        if j < current.len() {
            &current[j]
        } else {
            &memory[j - current.len()]
        }
    };

    let mut feats = Vec::with_capacity(current.len());
    let mut labels = Vec::with_capacity(current.len());
    let mut lambdas = Vec::with_capacity(current.len());
    let mut partners = Vec::with_capacity(current.len());
    for s in current {
        let lambda = beta.sample(rng);
        let j = rng.random_range(0..pool);
        let other = partner(j);
        let (x, y) = mix_pair(
            &s.features,
            s.label,
            &other.features,
            other.label,
            lambda,
            num_classes,
        );
        feats.push(x);
        labels.push(y);
        lambdas.push(lambda);
        partners.push(j);
    }
    Ok(MixedBatch {
        features: Tensor::from_rows(&feats)?,
        soft_labels: Tensor::from_rows(&labels)?,
        lambdas,
        partners,
    })
}
