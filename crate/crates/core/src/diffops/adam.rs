use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tensor::{lit, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.99
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

/// Snapshot of the optimizer: step count and first/second moments keyed by
/// parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub first: ParamSet<T>,
    pub second: ParamSet<T>,
}

/// Adam with bias correction. Moments are created lazily per parameter name.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    moments: IndexMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: IndexMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Exports the moments, shaped like `params`; parameters never updated get
    /// zero moments.
    pub fn state(&self, params: &ParamSet<T>) -> Result<AdamState<T>> {
        let mut first = ParamSet::new();
        let mut second = ParamSet::new();
        for (name, p) in params.iter() {
            let (m, v) = match self.moments.get(name) {
                Some((m, v)) => (m.clone(), v.clone()),
                None => (vec![T::zero(); p.numel()], vec![T::zero(); p.numel()]),
            };
            first.insert(name, Tensor::from_vec(p.shape(), m)?)?;
            second.insert(name, Tensor::from_vec(p.shape(), v)?)?;
        }
        Ok(AdamState {
            step: self.step,
            first,
            second,
        })
    }

    /// Resumes from a snapshot taken with [`Adam::state`].
    pub fn from_state(config: AdamConfig, state: &AdamState<T>) -> Result<Self> {
        state.first.check_compatible(&state.second)?;
        let moments = state
            .first
            .iter()
            .map(|(name, m)| {
                let v = state.second.get(name)?;
                Ok((name.to_owned(), (m.data().to_vec(), v.data().to_vec())))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            step: state.step,
            moments,
        })
    }

    /// Applies one update to every parameter that has a gradient in `grads`.
    ///
    /// Fails without touching any parameter if a gradient is not finite.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) -> Result<()> {
        for (name, g) in grads.iter() {
            let p = params.get(name)?;
            if p.shape() != g.shape() {
                return Err(Error::Parameter {
                    name: name.into(),
                    reason: format!("gradient shape {:?} vs {:?}", g.shape(), p.shape()),
                });
            }
            if !g.all_finite() {
                return Err(Error::NonFinite { name: name.into() });
            }
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = lit::<T>(1.0 - c.beta1.powi(t));
        let bc2 = lit::<T>(1.0 - c.beta2.powi(t));
        let (b1, b2) = (lit::<T>(c.beta1), lit::<T>(c.beta2));
        let (lr, eps) = (lit::<T>(c.lr), lit::<T>(c.eps));
        let one = T::one();
        for (name, g) in grads.iter() {
            let p = params.get_mut(name)?;
            let (m, v) = self
                .moments
                .entry(name.to_owned())
                .or_insert_with(|| (vec![T::zero(); g.numel()], vec![T::zero(); g.numel()]));
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
