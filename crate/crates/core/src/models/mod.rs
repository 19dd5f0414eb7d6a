//! Choice probability kernels for the four model families, their
//! unconstrained parameterizations, and the share log-likelihood.

mod ctc;
mod likelihood;
mod mnl;
mod nml;
mod rcl;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketData, VehicleProfile};

pub use ctc::CtcParams;
pub use likelihood::{log_likelihood, LogLikelihood, Likelihood};
pub use mnl::MnlParams;
pub use nml::{NmlParams, DEFAULT_LAMBDA_MAX};
pub use rcl::{RclDraws, RclModel, RclParams};

/// Number of taste coefficients shared by every family (price, fuel, acceleration, constant).
pub const TASTE_DIM: usize = 4;

/// Expected profit per capita and its derivatives. `price`, `mpg` and
/// `accel` are derivatives through utility with margins held fixed;
/// `margin[j]` is the derivative with respect to vehicle `j`'s margin,
/// which equals its choice probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfitGradient {
    pub value: f64,
    pub price: Vec<f64>,
    pub mpg: Vec<f64>,
    pub accel: Vec<f64>,
    pub margin: Vec<f64>,
}

impl ProfitGradient {
    pub(crate) fn zeros(n: usize) -> Self {
        Self {
            value: 0.0,
            price: vec![0.0; n],
            mpg: vec![0.0; n],
            accel: vec![0.0; n],
            margin: vec![0.0; n],
        }
    }
}

/// Anything that maps a vehicle list to choice probabilities.
pub trait ChoiceKernel: Sync {
    fn n_styles(&self) -> usize;

    /// Probabilities for `vehicles` in order, followed by the outside good.
    fn probabilities(&self, vehicles: &[VehicleProfile]) -> Vec<f64>;

    /// Natural logarithms of [`probabilities`](Self::probabilities), kept
    /// finite where a probability is too small to represent.
    fn log_probabilities(&self, vehicles: &[VehicleProfile]) -> Vec<f64> {
        self.probabilities(vehicles).into_iter().map(f64::ln).collect()
    }

    /// Expected profit `Σ_j P_j m_j` for per-vehicle margins `m`.
    fn profit(&self, vehicles: &[VehicleProfile], margins: &[f64]) -> ProfitGradient;
}

/// Model family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelFamily {
    Mnl,
    Rcl,
    Nml,
    Ctc,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [ModelFamily::Mnl, ModelFamily::Rcl, ModelFamily::Nml, ModelFamily::Ctc];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Mnl => "MNL",
            ModelFamily::Rcl => "RCL",
            ModelFamily::Nml => "NML",
            ModelFamily::Ctc => "CTC",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MNL" => Ok(ModelFamily::Mnl),
            "RCL" => Ok(ModelFamily::Rcl),
            "NML" => Ok(ModelFamily::Nml),
            "CTC" => Ok(ModelFamily::Ctc),
            other => Err(Error::Parse(format!("unknown model family '{other}'"))),
        }
    }
}

/// A fitted (or hand-specified) choice model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "UPPERCASE")]
pub enum ChoiceModel {
    Mnl(MnlParams),
    Rcl(RclModel),
    Nml(NmlParams),
    Ctc(CtcParams),
}

/// Everything needed to map a free parameter vector back to a model.
#[derive(Debug, Clone)]
pub enum ModelShape {
    Mnl { n_styles: usize },
    Rcl { n_styles: usize, draws: std::sync::Arc<RclDraws> },
    Nml { n_styles: usize, lambda_max: f64 },
    Ctc { n_styles: usize },
}

impl ModelShape {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelShape::Mnl { .. } => ModelFamily::Mnl,
            ModelShape::Rcl { .. } => ModelFamily::Rcl,
            ModelShape::Nml { .. } => ModelFamily::Nml,
            ModelShape::Ctc { .. } => ModelFamily::Ctc,
        }
    }

    pub fn n_styles(&self) -> usize {
        match self {
            ModelShape::Mnl { n_styles }
            | ModelShape::Rcl { n_styles, .. }
            | ModelShape::Nml { n_styles, .. }
            | ModelShape::Ctc { n_styles } => *n_styles,
        }
    }

    /// Length of the unconstrained parameter vector.
    pub fn dim(&self) -> usize {
        let b = self.n_styles();
        match self {
            ModelShape::Mnl { .. } => TASTE_DIM + b - 1,
            ModelShape::Rcl { .. } => 2 * TASTE_DIM + 2 * b - 1,
            ModelShape::Nml { .. } => TASTE_DIM + 2 * b - 1,
            ModelShape::Ctc { .. } => TASTE_DIM + (1usize << b) - 2,
        }
    }

    pub fn decode(&self, x: &[f64]) -> Result<ChoiceModel> {
        if x.len() != self.dim() {
            return Err(Error::InvalidParameters(format!(
                "free vector has length {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(match self {
            ModelShape::Mnl { n_styles } => ChoiceModel::Mnl(MnlParams::from_free(x, *n_styles)),
            ModelShape::Rcl { n_styles, draws } => {
                ChoiceModel::Rcl(RclModel::from_free(x, *n_styles, draws.clone()))
            }
            ModelShape::Nml { n_styles, lambda_max } => {
                ChoiceModel::Nml(NmlParams::from_free(x, *n_styles, *lambda_max))
            }
            ModelShape::Ctc { n_styles } => ChoiceModel::Ctc(CtcParams::from_free(x, *n_styles)),
        })
    }
}

impl ChoiceModel {
    pub fn family(&self) -> ModelFamily {
        match self {
            ChoiceModel::Mnl(_) => ModelFamily::Mnl,
            ChoiceModel::Rcl(_) => ModelFamily::Rcl,
            ChoiceModel::Nml(_) => ModelFamily::Nml,
            ChoiceModel::Ctc(_) => ModelFamily::Ctc,
        }
    }

    pub fn shape(&self) -> ModelShape {
        match self {
            ChoiceModel::Mnl(p) => ModelShape::Mnl { n_styles: p.n_styles() },
            ChoiceModel::Rcl(m) => ModelShape::Rcl { n_styles: m.n_styles(), draws: m.draws.clone() },
            ChoiceModel::Nml(p) => ModelShape::Nml { n_styles: p.n_styles(), lambda_max: p.lambda_max },
            ChoiceModel::Ctc(p) => ModelShape::Ctc { n_styles: p.n_styles() },
        }
    }

    /// Unconstrained coordinates of this model (inverse of [`ModelShape::decode`]).
    pub fn to_free(&self) -> Result<Vec<f64>> {
        match self {
            ChoiceModel::Mnl(p) => p.to_free(),
            ChoiceModel::Rcl(m) => m.to_free(),
            ChoiceModel::Nml(p) => p.to_free(),
            ChoiceModel::Ctc(p) => p.to_free(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ChoiceModel::Mnl(p) => p.validate(),
            ChoiceModel::Rcl(m) => m.validate(),
            ChoiceModel::Nml(p) => p.validate(),
            ChoiceModel::Ctc(p) => p.validate(),
        }
    }

    fn kernel(&self) -> &dyn ChoiceKernel {
        match self {
            ChoiceModel::Mnl(p) => p,
            ChoiceModel::Rcl(m) => m,
            ChoiceModel::Nml(p) => p,
            ChoiceModel::Ctc(p) => p,
        }
    }

    /// Probabilities with the model's invariants checked first.
    pub fn checked_probabilities(&self, vehicles: &[VehicleProfile]) -> Result<Vec<f64>> {
        self.validate()?;
        check_vehicles(vehicles, self.n_styles())?;
        Ok(self.probabilities(vehicles))
    }

    /// Log-likelihood of `data` under this model.
    pub fn log_likelihood(&self, data: &MarketData) -> Result<LogLikelihood> {
        log_likelihood(self, data)
    }
}

impl ChoiceKernel for ChoiceModel {
    fn n_styles(&self) -> usize {
        self.kernel().n_styles()
    }

    fn probabilities(&self, vehicles: &[VehicleProfile]) -> Vec<f64> {
        self.kernel().probabilities(vehicles)
    }

    fn log_probabilities(&self, vehicles: &[VehicleProfile]) -> Vec<f64> {
        self.kernel().log_probabilities(vehicles)
    }

    fn profit(&self, vehicles: &[VehicleProfile], margins: &[f64]) -> ProfitGradient {
        self.kernel().profit(vehicles, margins)
    }
}

pub(crate) fn check_vehicles(vehicles: &[VehicleProfile], n_styles: usize) -> Result<()> {
    for v in vehicles {
        v.check_finite()?;
        if v.style.index() >= n_styles {
            return Err(Error::invalid(format!("style {} outside model's {n_styles} styles", v.style)));
        }
    }
    Ok(())
}

/// Expands `n - 1` free effects into `n` effects summing to zero.
pub(crate) fn effects_from_free(free: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&free[..n - 1]);
    out.push(-free[..n - 1].iter().sum::<f64>());
    out
}

pub(crate) fn check_effects(effects: &[f64], n: usize, what: &str) -> Result<()> {
    if effects.len() != n {
        return Err(Error::InvalidParameters(format!("{what}: {} entries, expected {n}", effects.len())));
    }
    if effects.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameters(format!("{what}: non-finite entry")));
    }
    let sum: f64 = effects.iter().sum();
    let scale = effects.iter().map(|v| v.abs()).fold(1.0, f64::max);
    if sum.abs() > 1e-9 * scale {
        return Err(Error::InvalidParameters(format!("{what} must sum to zero (sum {sum})")));
    }
    Ok(())
}

/// Chain rule for effects coding: gradient on full effects to gradient on free ones.
pub(crate) fn effects_grad(full: &[f64], out: &mut [f64]) {
    let last = *full.last().expect("at least one effect");
    for (o, g) in out.iter_mut().zip(full) {
        *o = g - last;
    }
}

/// Plain logit with outside utility 0. Writes vehicle probabilities and
/// returns the outside probability.
pub(crate) fn logit(u: &[f64], probs: &mut [f64]) -> f64 {
    let shift = u.iter().copied().fold(0.0f64, f64::max);
    let outside = (-shift).exp();
    let mut denom = outside;
    for (p, &x) in probs.iter_mut().zip(u) {
        *p = (x - shift).exp();
        denom += *p;
    }
    for p in probs.iter_mut() {
        *p /= denom;
    }
    outside / denom
}

/// `log Σ exp(x)`, stabilized; negative infinity for an empty slice.
pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let top = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + x.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// `log(1 + Σ exp(u))`, stabilized.
pub(crate) fn log1p_sum_exp(u: &[f64]) -> f64 {
    let shift = u.iter().copied().fold(0.0f64, f64::max);
    let s = (-shift).exp() + u.iter().map(|&x| (x - shift).exp()).sum::<f64>();
    shift + s.ln()
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_parsing() {
        assert_eq!("ctc".parse::<ModelFamily>().unwrap(), ModelFamily::Ctc);
        assert_eq!("NML".parse::<ModelFamily>().unwrap(), ModelFamily::Nml);
        assert!("probit".parse::<ModelFamily>().is_err());
    }

    #[test]
    fn logit_of_single_zero_utility_is_half() {
        let mut p = [0.0];
        let p0 = logit(&[0.0], &mut p);
        assert_eq!(p[0], 0.5);
        assert_eq!(p0, 0.5);
    }

    #[test]
    fn logit_survives_extreme_utilities() {
        let mut p = [0.0; 3];
        let p0 = logit(&[800.0, 799.0, -900.0], &mut p);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() + p0 - 1.0).abs() < 1e-12);
        assert!((log1p_sum_exp(&[800.0]) - 800.0).abs() < 1e-12);
    }
}
