//! Bayesian linear probit regression with a factorized Gaussian posterior.
//!
//! The likelihood of a binary outcome `y ∈ {-1, +1}` given features `b` and
//! weights `W` is `Φ(y·bᵀW/β)`. After each observation the exact posterior is
//! projected back onto a diagonal Gaussian by matching per-coordinate first
//! and second moments, which gives the closed-form update in
//! [`GaussianPosterior::update`].

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::probit::{phi_cdf, v_correction, w_correction};

/// Diagonal Gaussian over a weight vector, plus the probit scale `β`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianPosterior {
    mean: Vec<f64>,
    variance: Vec<f64>,
    beta: f64,
}

/// One labelled impression for a page model.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: FeatureVector,
    /// `true` when the short- or long-term reward was 1.
    pub label: bool,
}

impl Observation {
    pub fn new(features: FeatureVector, label: bool) -> Self {
        Self { features, label }
    }
}

impl GaussianPosterior {
    /// Prior with every weight at `Normal(prior_mean, prior_var)`.
    pub fn new(dim: usize, prior_mean: f64, prior_var: f64, beta: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument { name: "dim", reason: "a model needs at least one weight".into() });
        }
        if !(prior_var > 0.0 && prior_var.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "prior_var",
                reason: format!("must be positive and finite, got {prior_var}"),
            });
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "beta",
                reason: format!("must be positive and finite, got {beta}"),
            });
        }
        if !prior_mean.is_finite() {
            return Err(Error::InvalidArgument {
                name: "prior_mean",
                reason: format!("must be finite, got {prior_mean}"),
            });
        }
        Ok(Self { mean: alloc::vec![prior_mean; dim], variance: alloc::vec![prior_var; dim], beta })
    }

    /// Rebuild a posterior from a snapshot.
    pub fn from_parts(mean: Vec<f64>, variance: Vec<f64>, beta: f64) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), found: variance.len() });
        }
        if mean.is_empty() {
            return Err(Error::InvalidArgument { name: "dim", reason: "a model needs at least one weight".into() });
        }
        if variance.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument {
                name: "variance",
                reason: "every variance must be positive and finite".into(),
            });
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "beta",
                reason: format!("must be positive and finite, got {beta}"),
            });
        }
        Ok(Self { mean, variance, beta })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Draw `W_j ~ Normal(mean_j, variance_j)` independently for every weight.
    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        self.sample_weights_into(rng, &mut out);
        out
    }

    /// Like [`sample_weights`](Self::sample_weights) but reuses `out`.
    pub fn sample_weights_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.mean.iter().zip(&self.variance).map(|(&m, &v)| {
            let z: f64 = StandardNormal.sample(rng);
            m + libm::sqrt(v) * z
        }));
    }

    /// `Φ(bᵀw/β)` for a weight draw `w`.
    pub fn predict_success(&self, weights: &[f64], features: &FeatureVector) -> Result<f64> {
        if weights.len() != features.len() {
            return Err(Error::DimensionMismatch { expected: weights.len(), found: features.len() });
        }
        Ok(probit_success(self.beta, weights, features.values()))
    }

    /// Moment-matching update with a single observation.
    ///
    /// With `Σ² = β² + Σ b_j²ν_j` and `t = y·bᵀμ/Σ`:
    /// `μ_j += y·b_j·(ν_j/Σ)·v(t)` and `ν_j *= 1 - (b_j²ν_j/Σ²)·w(t)`.
    pub fn update(&mut self, obs: &Observation) -> Result<()> {
        let b = obs.features.values();
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: b.len() });
        }
        let y = if obs.label { 1.0 } else { -1.0 };
        let mut total_var = self.beta * self.beta;
        let mut mean_utility = 0.0;
        for ((&bj, &mj), &vj) in b.iter().zip(&self.mean).zip(&self.variance) {
            total_var += bj * bj * vj;
            mean_utility += bj * mj;
        }
        let sigma = libm::sqrt(total_var);
        let t = y * mean_utility / sigma;
        let v = v_correction(t);
        let w = w_correction(t);
        for ((&bj, mj), vj) in b.iter().zip(&mut self.mean).zip(&mut self.variance) {
            if bj == 0.0 {
                continue;
            }
            *mj += y * bj * (*vj / sigma) * v;
            *vj *= 1.0 - (bj * bj * *vj / total_var) * w;
        }
        Ok(())
    }

    /// Sequential fold of [`update`](Self::update) in the given order.
    ///
    /// Dimensions are checked up front, so a bad batch leaves the posterior
    /// untouched.
    pub fn update_batch<'a, I>(&mut self, batch: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a Observation>,
        I::IntoIter: Clone,
    {
        let iter = batch.into_iter();
        if let Some(bad) = iter.clone().find(|o| o.features.len() != self.dim()) {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: bad.features.len() });
        }
        for obs in iter {
            self.update(obs)?;
        }
        Ok(())
    }
}

/// `Φ(bᵀw/β)` without dimension checks.
#[inline]
pub(crate) fn probit_success(beta: f64, weights: &[f64], features: &[f64]) -> f64 {
    let u: f64 = weights.iter().zip(features).map(|(w, b)| w * b).sum();
    phi_cdf(u / beta)
}
