use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_effects, effects_from_free, log1p_sum_exp, log_sum_exp, logit, ChoiceKernel, ProfitGradient, TASTE_DIM};
use crate::error::{Error, Result};
use crate::market::VehicleProfile;
use crate::seed::rng_from;

/// Means and standard deviations of the `4 + B` random coefficients, laid
/// out as (log-price, fuel, accel, constant, style 1..B).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RclParams {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl RclParams {
    pub fn n_styles(&self) -> usize {
        self.mean.len().saturating_sub(TASTE_DIM)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() <= TASTE_DIM || self.sd.len() != self.mean.len() {
            return Err(Error::InvalidParameters(format!(
                "RCL expects equal-length mean/sd vectors longer than {TASTE_DIM} (got {} and {})",
                self.mean.len(),
                self.sd.len()
            )));
        }
        if self.mean.iter().chain(&self.sd).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("non-finite RCL parameter".into()));
        }
        if self.sd.iter().any(|&s| s < 0.0) {
            return Err(Error::InvalidParameters("negative RCL standard deviation".into()));
        }
        check_effects(&self.mean[TASTE_DIM..], self.n_styles(), "RCL style means")
    }
}

/// Fixed standard-normal draws reused across evaluations (common random numbers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "DrawSpec", into = "DrawSpec")]
pub struct RclDraws {
    seed: u64,
    count: usize,
    dim: usize,
    z: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DrawSpec {
    seed: u64,
    count: usize,
    dim: usize,
}

impl From<DrawSpec> for RclDraws {
    fn from(s: DrawSpec) -> Self {
        RclDraws::new(s.seed, s.count, s.dim)
    }
}

impl From<RclDraws> for DrawSpec {
    fn from(d: RclDraws) -> Self {
        DrawSpec { seed: d.seed, count: d.count, dim: d.dim }
    }
}

impl RclDraws {
    pub fn new(seed: u64, count: usize, dim: usize) -> Self {
        let mut rng = rng_from(seed);
        let z = (0..count * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self { seed, count, dim, z }
    }

    pub fn for_styles(seed: u64, count: usize, n_styles: usize) -> Self {
        Self::new(seed, count, TASTE_DIM + n_styles)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.dim..(i + 1) * self.dim]
    }
}

/// Random-coefficients logit: parameters plus the draws that integrate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RclModel {
    pub params: RclParams,
    pub draws: Arc<RclDraws>,
}

impl RclModel {
    pub fn new(params: RclParams, draws: Arc<RclDraws>) -> Result<Self> {
        let m = Self { params, draws };
        m.validate()?;
        Ok(m)
    }

    pub fn n_styles(&self) -> usize {
        self.params.n_styles()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.draws.count == 0 {
            return Err(Error::InvalidParameters("RCL needs at least one draw".into()));
        }
        if self.draws.dim != self.params.mean.len() {
            return Err(Error::InvalidParameters(format!(
                "draw dimension {} does not match {} coefficients",
                self.draws.dim,
                self.params.mean.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn from_free(x: &[f64], n_styles: usize, draws: Arc<RclDraws>) -> Self {
        let k = TASTE_DIM + n_styles;
        let mut mean = x[..TASTE_DIM].to_vec();
        mean.extend(effects_from_free(&x[TASTE_DIM..TASTE_DIM + n_styles - 1], n_styles));
        let sd = x[k - 1..2 * k - 1].iter().map(|r| r.abs()).collect();
        Self { params: RclParams { mean, sd }, draws }
    }

    pub(crate) fn to_free(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let k = self.params.mean.len();
        let mut x = self.params.mean[..k - 1].to_vec();
        x.extend_from_slice(&self.params.sd);
        Ok(x)
    }

    /// Coefficients of draw `i` written into `out` (length `4 + B`).
    #[inline]
    pub(crate) fn coefficients(&self, i: usize, out: &mut [f64]) {
        let z = self.draws.row(i);
        for (l, o) in out.iter_mut().enumerate() {
            *o = self.params.mean[l] + self.params.sd[l] * z[l];
        }
    }
}

#[inline]
pub(crate) fn draw_utility(coef: &[f64], price_coef: f64, v: &VehicleProfile) -> f64 {
    -price_coef * v.price + coef[1] / v.mpg + coef[2] / v.accel + coef[3] + coef[TASTE_DIM + v.style.index()]
}

impl ChoiceKernel for RclModel {
    fn n_styles(&self) -> usize {
        self.params.n_styles()
    }

    fn probabilities(&self, vehicles: &[VehicleProfile]) -> Vec<f64> {
        let n = vehicles.len();
        let mut coef = vec![0.0; self.params.mean.len()];
        let mut u = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut acc = vec![0.0; n + 1];
        for i in 0..self.draws.count {
            self.coefficients(i, &mut coef);
            let pc = coef[0].exp();
            for (uj, v) in u.iter_mut().zip(vehicles) {
                *uj = draw_utility(&coef, pc, v);
            }
            acc[n] += logit(&u, &mut p);
            for (a, pj) in acc.iter_mut().zip(&p) {
                *a += pj;
            }
        }
        let inv = 1.0 / self.draws.count as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        acc
    }

    fn log_probabilities(&self, vehicles: &[VehicleProfile]) -> Vec<f64> {
        let n = vehicles.len();
        let mut coef = vec![0.0; self.params.mean.len()];
        let mut u = vec![0.0; n];
        // per-draw log probabilities, then a log-sum-exp over draws
        let mut logs = vec![Vec::with_capacity(self.draws.count); n + 1];
        for i in 0..self.draws.count {
            self.coefficients(i, &mut coef);
            let pc = coef[0].exp();
            for (uj, v) in u.iter_mut().zip(vehicles) {
                *uj = draw_utility(&coef, pc, v);
            }
            let lse = log1p_sum_exp(&u);
            for (l, x) in logs.iter_mut().zip(u.iter().chain([&0.0])) {
                l.push(x - lse);
            }
        }
        let ln_count = (self.draws.count as f64).ln();
        logs.iter().map(|l| log_sum_exp(l) - ln_count).collect()
    }

    fn profit(&self, vehicles: &[VehicleProfile], margins: &[f64]) -> ProfitGradient {
        let n = vehicles.len();
        let inv = 1.0 / self.draws.count as f64;
        let mut coef = vec![0.0; self.params.mean.len()];
        let mut u = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut g = ProfitGradient::zeros(n);
        for i in 0..self.draws.count {
            self.coefficients(i, &mut coef);
            let pc = coef[0].exp();
            for (uj, v) in u.iter_mut().zip(vehicles) {
                *uj = draw_utility(&coef, pc, v);
            }
            logit(&u, &mut p);
            let value: f64 = p.iter().zip(margins).map(|(a, b)| a * b).sum();
            g.value += value * inv;
            for (j, v) in vehicles.iter().enumerate() {
                let gu = p[j] * (margins[j] - value) * inv;
                g.price[j] -= pc * gu;
                g.mpg[j] -= coef[1] / (v.mpg * v.mpg) * gu;
                g.accel[j] -= coef[2] / (v.accel * v.accel) * gu;
                g.margin[j] += p[j] * inv;
            }
        }
        g
    }
}
