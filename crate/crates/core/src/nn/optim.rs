use serde::{Deserialize, Serialize};

use super::{NnError, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    AdamW,
}

/// Optimizer hyperparameters. `weight_decay`, the betas and `epsilon` are
/// only read by AdamW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adamw(0.1)
    }
}

impl OptimizerConfig {
    pub fn sgd() -> Self {
        Self { kind: OptimizerKind::Sgd, weight_decay: 0.0, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn adamw(weight_decay: f64) -> Self {
        Self { kind: OptimizerKind::AdamW, weight_decay, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::InvalidSpec(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Per-parameter optimizer memory. Moments exist only for AdamW.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    pub first_moment: Option<ParamSet>,
    pub second_moment: Option<ParamSet>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ParamSet) -> Self {
        let (first_moment, second_moment) = match config.kind {
            OptimizerKind::Sgd => (None, None),
            OptimizerKind::AdamW => (Some(params.zeros_like()), Some(params.zeros_like())),
        };
        Self { config, step: 0, first_moment, second_moment }
    }

    /// Scalars carried by this state: both moment sets plus the step counter.
    pub fn payload_len(&self) -> usize {
        let moments: usize = [&self.first_moment, &self.second_moment]
            .iter()
            .filter_map(|m| m.as_ref())
            .map(ParamSet::scalar_count)
            .sum();
        moments + 1
    }

    /// In-place update of `params`.
    pub fn apply(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64) -> Result<(), NnError> {
        params.check_compatible(grads)?;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.scalars_mut().zip(grads.scalars()) {
                    *p -= lr * g;
                }
                self.step += 1;
                Ok(())
            }
            OptimizerKind::AdamW => self.adamw_in_place(params, grads, lr),
        }
    }

    fn adamw_in_place(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64) -> Result<(), NnError> {
        let OptimizerConfig { weight_decay, beta1, beta2, epsilon, .. } = self.config;
        let (Some(m), Some(v)) = (self.first_moment.as_mut(), self.second_moment.as_mut()) else {
            return Err(NnError::Mismatch("AdamW state has no moment buffers".into()));
        };
        m.check_compatible(params)?;
        v.check_compatible(params)?;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;
        for (((p, g), m), v) in params.scalars_mut().zip(grads.scalars()).zip(m.scalars_mut()).zip(v.scalars_mut()) {
            *p *= decay;
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// `θ − lr·g` for every entry.
pub fn sgd_step(params: &ParamSet, grads: &ParamSet, lr: f64) -> Result<ParamSet, NnError> {
    params.check_compatible(grads)?;
    let mut out = params.clone();
    for (p, g) in out.scalars_mut().zip(grads.scalars()) {
        *p -= lr * g;
    }
    Ok(out)
}

/// One AdamW step with decoupled weight decay and bias-corrected moments.
pub fn adamw_step(
    params: &ParamSet,
    grads: &ParamSet,
    state: &OptimizerState,
    lr: f64,
) -> Result<(ParamSet, OptimizerState), NnError> {
    if state.config.kind != OptimizerKind::AdamW {
        return Err(NnError::Mismatch("adamw_step called with a non-AdamW state".into()));
    }
    let mut p = params.clone();
    let mut s = state.clone();
    s.adamw_in_place(&mut p, grads, lr)?;
    Ok((p, s))
}

/// Step decay: `base_lr · gamma^floor(round / period)`, rounds counted from 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrPolicy {
    pub base_lr: f64,
    #[serde(default = "LrPolicy::default_gamma")]
    pub gamma: f64,
    #[serde(default = "LrPolicy::default_period")]
    pub period: u32,
}

impl LrPolicy {
    fn default_gamma() -> f64 {
        0.5
    }

    fn default_period() -> u32 {
        10
    }

    pub fn step_decay(base_lr: f64, gamma: f64, period: u32) -> Self {
        Self { base_lr, gamma, period }
    }

    pub fn constant(lr: f64) -> Self {
        Self { base_lr: lr, gamma: 1.0, period: 1 }
    }

    pub fn at_round(&self, round: u32) -> f64 {
        self.base_lr * self.gamma.powi((round / self.period) as i32)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.base_lr > 0.0 && self.gamma > 0.0 && self.gamma <= 1.0 && self.period > 0 {
            Ok(())
        } else {
            Err(NnError::InvalidSpec(format!("invalid learning-rate policy {self:?}")))
        }
    }
}

pub fn lr_at_round(policy: &LrPolicy, round: u32) -> f64 {
    policy.at_round(round)
}
