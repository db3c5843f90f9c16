//! First-order ascent optimizers over complex and real parameters.
//!
//! Everything here maximizes: the update is *added* to the parameters. Complex
//! optimizers consume the conjugate Wirtinger gradient `dL/dconj(theta)`.

use crate::complex::C64;
use crate::error::{check_len, Error, Result};

/// `Re(alpha) > 0`, or exactly zero (a frozen run).
fn learning_rate_ok(alpha: C64) -> bool {
    alpha.im.is_finite() && (alpha.re > 0.0 || alpha == C64::new(0.0, 0.0))
}

/// Complex steepest ascent: `velocity = momentum * velocity + 2 alpha dL/dconj(theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsaConfig {
    pub alpha: C64,
    pub momentum: f64,
}

impl Default for CsaConfig {
    fn default() -> Self {
        Self {
            alpha: C64::new(0.01, 0.0),
            momentum: 0.0,
        }
    }
}

impl CsaConfig {
    pub fn validate(&self) -> Result<()> {
        if !learning_rate_ok(self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "CSA learning rate must have a positive real part, got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

pub fn csa_step(param: &mut [C64], grad_conj: &[C64], config: &CsaConfig, velocity: &mut [C64]) -> Result<()> {
    check_len("csa_step gradient", param.len(), grad_conj.len())?;
    check_len("csa_step velocity", param.len(), velocity.len())?;
    let scale = 2.0 * config.alpha;
    for ((p, g), v) in param.iter_mut().zip(grad_conj).zip(velocity.iter_mut()) {
        *v = config.momentum * *v + scale * g;
        *p += *v;
    }
    Ok(())
}

/// Complex adaptive momentum.
///
/// With `sqrt_v` off (the default) the step is
/// `2 alpha (1 - beta2^l)/(1 - beta1^l) * m / (v + eps)`, i.e. the second
/// moment is used without a square root. `sqrt_v` switches to the conventional
/// `m_hat / (sqrt(v_hat) + eps)` form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CAdamConfig {
    pub alpha: C64,
    pub beta1: C64,
    pub beta2: C64,
    pub eps: f64,
    pub sqrt_v: bool,
}

impl Default for CAdamConfig {
    fn default() -> Self {
        Self {
            alpha: C64::new(0.001, 0.0),
            beta1: C64::new(0.9, 0.0),
            beta2: C64::new(0.999, 0.0),
            eps: 1e-8,
            sqrt_v: false,
        }
    }
}

impl CAdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !learning_rate_ok(self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "CAdam learning rate must have a positive real part, got {}",
                self.alpha
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            let m = b.norm();
            if !(m > 0.0 && m < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must satisfy 0 < |{name}| < 1, got {b}"
                )));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig("eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CAdamState {
    pub m: Vec<C64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl CAdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![C64::new(0.0, 0.0); len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

pub fn cadam_step(param: &mut [C64], grad_conj: &[C64], config: &CAdamConfig, state: &mut CAdamState) -> Result<()> {
    check_len("cadam_step gradient", param.len(), grad_conj.len())?;
    check_len("cadam_step m", param.len(), state.m.len())?;
    check_len("cadam_step v", param.len(), state.v.len())?;
    state.step += 1;
    let l = state.step.min(i32::MAX as u64) as i32;
    let one = C64::new(1.0, 0.0);
    let c1 = one - config.beta1.powi(l);
    let c2 = one - config.beta2.powi(l);
    let one_minus_b1 = one - config.beta1;
    let one_minus_b2 = one - config.beta2;
    let two_alpha = 2.0 * config.alpha;

    if config.sqrt_v {
        let v_corr = c2.norm();
        for i in 0..param.len() {
            let g = grad_conj[i];
            state.m[i] = config.beta1 * state.m[i] + one_minus_b1 * g;
            state.v[i] = (config.beta2 * state.v[i] + one_minus_b2 * g.norm_sqr()).re;
            let m_hat = state.m[i] / c1;
            let v_hat = state.v[i] / v_corr;
            param[i] += two_alpha * m_hat / (v_hat.sqrt() + config.eps);
        }
    } else {
        let ratio = two_alpha * c2 / c1;
        for i in 0..param.len() {
            let g = grad_conj[i];
            state.m[i] = config.beta1 * state.m[i] + one_minus_b1 * g;
            // v stays real for real beta2; the real part is kept otherwise.
            state.v[i] = (config.beta2 * state.v[i] + one_minus_b2 * g.norm_sqr()).re;
            param[i] += ratio * state.m[i] / (state.v[i] + config.eps);
        }
    }
    Ok(())
}

/// Real steepest ascent with optional momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaConfig {
    pub alpha: f64,
    pub momentum: f64,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            momentum: 0.0,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidConfig("SA learning rate must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

pub fn real_sa_step(param: &mut [f64], grad: &[f64], config: &SaConfig, velocity: &mut [f64]) -> Result<()> {
    check_len("real_sa_step gradient", param.len(), grad.len())?;
    check_len("real_sa_step velocity", param.len(), velocity.len())?;
    for ((p, g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = config.momentum * *v + config.alpha * g;
        *p += *v;
    }
    Ok(())
}

/// Conventional Adam (`m_hat / (sqrt(v_hat) + eps)`), used for the real baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidConfig("Adam learning rate must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig("eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

pub fn real_adam_step(param: &mut [f64], grad: &[f64], config: &AdamConfig, state: &mut AdamState) -> Result<()> {
    check_len("real_adam_step gradient", param.len(), grad.len())?;
    check_len("real_adam_step m", param.len(), state.m.len())?;
    check_len("real_adam_step v", param.len(), state.v.len())?;
    state.step += 1;
    let l = state.step.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - config.beta1.powi(l);
    let c2 = 1.0 - config.beta2.powi(l);
    for i in 0..param.len() {
        let g = grad[i];
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        param[i] += config.alpha * m_hat / (v_hat.sqrt() + config.eps);
    }
    Ok(())
}

/// Optimizer selection shared by the CRBM and GB-RBM trainers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerConfig {
    Csa(CsaConfig),
    CAdam(CAdamConfig),
    Sa(SaConfig),
    Adam(AdamConfig),
}

impl OptimizerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerConfig::Csa(_) => "csa",
            OptimizerConfig::CAdam(_) => "cadam",
            OptimizerConfig::Sa(_) => "sa",
            OptimizerConfig::Adam(_) => "adam",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OptimizerConfig::Csa(c) => c.validate(),
            OptimizerConfig::CAdam(c) => c.validate(),
            OptimizerConfig::Sa(c) => c.validate(),
            OptimizerConfig::Adam(c) => c.validate(),
        }
    }
}

/// Optimizer with its running state, over a flat complex parameter vector.
#[derive(Debug, Clone)]
pub(crate) enum ComplexOptimizer {
    Csa { config: CsaConfig, velocity: Vec<C64> },
    CAdam { config: CAdamConfig, state: CAdamState },
}

impl ComplexOptimizer {
    pub(crate) fn new(config: &OptimizerConfig, len: usize) -> Result<Self> {
        config.validate()?;
        match *config {
            OptimizerConfig::Csa(config) => Ok(ComplexOptimizer::Csa {
                config,
                velocity: vec![C64::new(0.0, 0.0); len],
            }),
            OptimizerConfig::CAdam(config) => Ok(ComplexOptimizer::CAdam {
                config,
                state: CAdamState::new(len),
            }),
            other => Err(Error::InvalidConfig(format!(
                "optimizer `{}` is real-valued; the CRBM needs csa or cadam",
                other.name()
            ))),
        }
    }

    pub(crate) fn step(&mut self, param: &mut [C64], grad_conj: &[C64]) -> Result<()> {
        match self {
            ComplexOptimizer::Csa { config, velocity } => csa_step(param, grad_conj, config, velocity),
            ComplexOptimizer::CAdam { config, state } => cadam_step(param, grad_conj, config, state),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum RealOptimizer {
    Sa { config: SaConfig, velocity: Vec<f64> },
    Adam { config: AdamConfig, state: AdamState },
}

impl RealOptimizer {
    pub(crate) fn new(config: &OptimizerConfig, len: usize) -> Result<Self> {
        config.validate()?;
        match *config {
            OptimizerConfig::Sa(config) => Ok(RealOptimizer::Sa {
                config,
                velocity: vec![0.0; len],
            }),
            OptimizerConfig::Adam(config) => Ok(RealOptimizer::Adam {
                config,
                state: AdamState::new(len),
            }),
            other => Err(Error::InvalidConfig(format!(
                "optimizer `{}` is complex-valued; the GB-RBM needs sa or adam",
                other.name()
            ))),
        }
    }

    pub(crate) fn step(&mut self, param: &mut [f64], grad: &[f64]) -> Result<()> {
        match self {
            RealOptimizer::Sa { config, velocity } => real_sa_step(param, grad, config, velocity),
            RealOptimizer::Adam { config, state } => real_adam_step(param, grad, config, state),
        }
    }
}
