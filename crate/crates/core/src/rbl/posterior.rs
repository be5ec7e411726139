use serde::{Deserialize, Serialize};

use crate::customer::ClassId;
use crate::error::{Error, Result};

/// Class probabilities of one customer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    pub customer: String,
    pub classes: Vec<ClassId>,
    pub probabilities: Vec<f64>,
    pub iterations: usize,
    /// Probabilities after every update, starting with the prior.
    pub history: Vec<Vec<f64>>,
}

impl PosteriorState {
    pub fn uniform(customer: impl Into<String>, classes: Vec<ClassId>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("no candidate classes"));
        }
        let p = vec![1.0 / classes.len() as f64; classes.len()];
        Ok(Self {
            customer: customer.into(),
            classes,
            history: vec![p.clone()],
            probabilities: p,
            iterations: 0,
        })
    }

    /// Index of the most probable class; the first one on ties.
    pub fn best(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_probability(&self) -> f64 {
        self.probabilities[self.best()]
    }
}

/// Diagonal inverse-variance weighting of residual components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phi {
    pub diagonal: Vec<f64>,
}

impl Phi {
    pub fn identity(n: usize) -> Self {
        Self { diagonal: vec![1.0; n] }
    }

    /// `r^T Phi r`.
    pub fn quadratic(&self, r: &[f64]) -> f64 {
        r.iter().zip(&self.diagonal).map(|(v, w)| w * v * v).sum()
    }
}

/// Inverse sample variances of residual components; `samples[s][k]` is
/// component `k` of sample `s`.
pub fn estimate_phi(samples: &[Vec<f64>], variance_floor: f64) -> Result<Phi> {
    if samples.len() < 2 {
        return Err(Error::invalid("at least two residual samples required"));
    }
    let dim = samples[0].len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim) {
        return Err(Error::invalid("residual samples must share a nonzero length"));
    }
    let n = samples.len() as f64;
    let diagonal = (0..dim)
        .map(|k| {
            let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.0 / var.max(variance_floor)
        })
        .collect();
    Ok(Phi { diagonal })
}

/// Multiplies each class probability by `exp(-r_i^T Phi r_i / 2)` and
/// renormalizes, shifting log-likelihoods by their maximum first.
pub fn update_posterior(state: &PosteriorState, residuals: &[Vec<f64>], phi: &Phi) -> Result<PosteriorState> {
    if residuals.len() != state.classes.len() {
        return Err(Error::invalid(format!(
            "{} residual vectors for {} classes",
            residuals.len(),
            state.classes.len()
        )));
    }
    if residuals.iter().any(|r| r.len() != phi.diagonal.len()) {
        return Err(Error::invalid("residual length does not match the weighting"));
    }
    let log_like: Vec<f64> = residuals.iter().map(|r| -0.5 * phi.quadratic(r)).collect();
    if log_like.iter().any(|l| l.is_nan()) {
        return Err(Error::Numerical("non-finite residual".into()));
    }
    let shift = log_like
        .iter()
        .zip(&state.probabilities)
        .filter(|(_, &p)| p > 0.0)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(shift.is_finite(), "posterior has no support");
    let mut p: Vec<f64> = log_like
        .iter()
        .zip(&state.probabilities)
        .map(|(l, &prior)| if prior > 0.0 { (l - shift).exp() * prior } else { 0.0 })
        .collect();
    let total: f64 = p.iter().sum();
    assert!(total > 0.0, "every likelihood underflowed");
    p.iter_mut().for_each(|v| *v /= total);
    let mut next = state.clone();
    next.history.push(p.clone());
    next.probabilities = p;
    next.iterations += 1;
    Ok(next)
}
