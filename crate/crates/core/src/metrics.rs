//! Predictive and decision metrics relative to the true behavior.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{DesignOutcome, Portfolio};
use crate::error::{Error, Result};
use crate::market::Market;
use crate::models::{ChoiceKernel, ModelFamily};
use crate::truth::TrueBehavior;

/// Kullback-Leibler divergence averaged over markets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub value: f64,
    /// Markets where the model gives an alternative the truth supports a
    /// probability below the smallest normal `f64`.
    pub unsupported: usize,
}

/// `Σ pt·ln(pt/p)`; zero-probability truth terms contribute nothing.
pub fn divergence(pt: &[f64], p: &[f64]) -> f64 {
    pt.iter()
        .zip(p)
        .map(|(&t, &q)| {
            if t <= 0.0 {
                0.0
            } else if q <= 0.0 {
                f64::INFINITY
            } else {
                t * (t / q).ln()
            }
        })
        .sum()
}

/// [`divergence`] with the model side given as log probabilities.
pub fn divergence_log(pt: &[f64], log_p: &[f64]) -> f64 {
    pt.iter().zip(log_p).map(|(&t, &lq)| if t <= 0.0 { 0.0 } else { t * (t.ln() - lq) }).sum()
}

/// Validation markets with their true choice probabilities.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub markets: Vec<Market>,
    /// Vehicles then outside good, per market.
    pub truth: Vec<Vec<f64>>,
}

impl ValidationSet {
    pub fn new(markets: Vec<Market>, truth: &TrueBehavior) -> Result<Self> {
        if markets.is_empty() {
            return Err(Error::Precondition("divergence needs at least one validation market".into()));
        }
        let truth = markets.iter().map(|m| truth.checked_probabilities(&m.vehicles)).collect::<Result<_>>()?;
        Ok(Self { markets, truth })
    }

    /// Mean divergence of `model` from the truth, over vehicles only unless `include_outside`.
    pub fn kld(&self, model: &dyn ChoiceKernel, include_outside: bool) -> Divergence {
        let floor = f64::MIN_POSITIVE.ln();
        let per_market: Vec<(f64, bool)> = self
            .markets
            .par_iter()
            .zip(&self.truth)
            .map(|(m, pt)| {
                let lp = model.log_probabilities(&m.vehicles);
                let n = if include_outside { lp.len() } else { m.vehicles.len() };
                let tiny = pt[..n].iter().zip(&lp[..n]).any(|(&t, &l)| t > 0.0 && l < floor);
                (divergence_log(&pt[..n], &lp[..n]), tiny)
            })
            .collect();
        let unsupported = per_market.iter().filter(|v| v.1).count();
        let value = per_market.iter().map(|v| v.0).sum::<f64>() / per_market.len() as f64;
        Divergence { value, unsupported }
    }
}

pub fn kld(markets: &[Market], model: &dyn ChoiceKernel, truth: &TrueBehavior, include_outside: bool) -> Result<Divergence> {
    Ok(ValidationSet::new(markets.to_vec(), truth)?.kld(model, include_outside))
}

fn relative_gap(x: (f64, f64), ideal: (f64, f64)) -> f64 {
    0.5 * ((x.0 - ideal.0).abs() / ideal.0 + (x.1 - ideal.1).abs() / ideal.1)
}

/// One-sided Hausdorff term: worst best-match distance from vehicles in
/// `from` to same-style vehicles in `to`, over styles present in both.
fn directed_hausdorff(from: &Portfolio, to: &Portfolio, candidate_first: bool) -> f64 {
    let mut worst = 0.0f64;
    for u in &from.vehicles {
        let best = to
            .vehicles
            .iter()
            .filter(|v| v.style == u.style)
            .map(|v| {
                let (c, i) = if candidate_first { (u, v) } else { (v, u) };
                relative_gap((c.mpg, c.accel), (i.mpg, i.accel))
            })
            .fold(f64::INFINITY, f64::min);
        if best.is_finite() {
            worst = worst.max(best);
        }
    }
    worst
}

/// Design error between a candidate portfolio and the ideal one: style
/// count mismatch plus a Hausdorff distance over (fuel economy,
/// acceleration) of same-style vehicles. Prices are ignored.
pub fn design_error(candidate: &Portfolio, ideal: &Portfolio) -> Result<f64> {
    if candidate.is_empty() || ideal.is_empty() {
        return Err(Error::Precondition("design error needs nonempty portfolios".into()));
    }
    let b = candidate.vehicles.iter().chain(&ideal.vehicles).map(|v| v.style.index() + 1).max().unwrap_or(0);
    let n = candidate.style_counts(b);
    let n_star = ideal.style_counts(b);
    let counts: f64 = n
        .iter()
        .zip(&n_star)
        .map(|(&n, &s)| if s > 0 { (n as f64 - s as f64).abs() / s as f64 } else { n as f64 })
        .sum();
    let h_plus = directed_hausdorff(candidate, ideal, true);
    let h_minus = directed_hausdorff(ideal, candidate, false);
    Ok(0.5 * (counts + h_plus.max(h_minus)))
}

/// Fraction of ideal true profit achieved.
pub fn recovery(profit: f64, ideal_profit: f64) -> Result<f64> {
    if !(ideal_profit > 0.0) {
        return Err(Error::Config(format!("ideal profit {ideal_profit} must be positive")));
    }
    Ok(profit / ideal_profit)
}

pub fn profit_recovery(outcome: &DesignOutcome, ideal: &DesignOutcome) -> Result<f64> {
    recovery(outcome.true_profit, ideal.true_profit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: ModelFamily,
    pub markets: usize,
    pub replicate: usize,
    pub kld: f64,
    pub kld_unsupported: usize,
    pub design_error: f64,
    pub profit_recovery: f64,
    pub pricing_recovery: f64,
}
