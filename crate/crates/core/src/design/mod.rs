//! Product-line design: continuous (acceleration, price) optimization for a
//! fixed multiset of body styles, a genetic search over style multisets,
//! and evaluation of designs under the true behavior.

mod evaluate;
mod ga;
mod inner;

use serde::{Deserialize, Serialize};

use crate::engineering::EngineeringConfig;
use crate::error::{Error, Result};
use crate::market::VehicleProfile;
use crate::population::BodyStyle;

pub use evaluate::{evaluate_design, ideal_design, price_on_offering, true_profit, Repriced};
pub use ga::{outer_optimize, Chromosome, FitnessCache, GaDiagnostics};
pub use inner::{inner_optimize, InnerResult};

/// Upper end of the price search box (10k$).
pub const DEFAULT_PRICE_CAP: f64 = 18.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignedVehicle {
    pub style: BodyStyle,
    pub mpg: f64,
    pub accel: f64,
    pub price: f64,
    pub cost: f64,
}

impl DesignedVehicle {
    pub fn profile(&self) -> VehicleProfile {
        VehicleProfile::new(self.mpg, self.accel, self.price, self.style)
    }

    pub fn margin(&self) -> f64 {
        self.price - self.cost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub vehicles: Vec<DesignedVehicle>,
}

impl Portfolio {
    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn styles(&self) -> Vec<BodyStyle> {
        self.vehicles.iter().map(|v| v.style).collect()
    }

    pub fn profiles(&self) -> Vec<VehicleProfile> {
        self.vehicles.iter().map(DesignedVehicle::profile).collect()
    }

    pub fn margins(&self) -> Vec<f64> {
        self.vehicles.iter().map(DesignedVehicle::margin).collect()
    }

    /// Count of vehicles per style.
    pub fn style_counts(&self, n_styles: usize) -> Vec<usize> {
        let mut n = vec![0; n_styles];
        for v in &self.vehicles {
            n[v.style.index()] += 1;
        }
        n
    }

    /// Checks size, bounds, prices and the fuel-economy trade-off.
    pub fn validate(&self, cfg: &EngineeringConfig) -> Result<()> {
        if self.vehicles.is_empty() || self.vehicles.len() > cfg.n_styles() {
            return Err(Error::invalid(format!(
                "portfolio size {} outside 1..={}",
                self.vehicles.len(),
                cfg.n_styles()
            )));
        }
        for v in &self.vehicles {
            let s = cfg.style(v.style)?;
            if !(v.price >= 0.0 && v.price.is_finite()) {
                return Err(Error::invalid(format!("price {} must be finite and nonnegative", v.price)));
            }
            let (alo, ahi) = s.accel_bounds;
            let (elo, ehi) = s.mpg_bounds;
            let tol = 1e-9;
            if v.accel < alo - tol || v.accel > ahi + tol || v.mpg < elo - tol || v.mpg > ehi + tol {
                return Err(Error::invalid(format!("vehicle of style {} outside bounds", v.style)));
            }
            let g = s.constraint(v.mpg, v.accel);
            if g.abs() > 1e-10 {
                return Err(Error::invalid(format!("trade-off residual {g} for style {}", v.style)));
            }
            if (s.unit_cost(v.accel) - v.cost).abs() > 1e-12 {
                return Err(Error::invalid("recorded cost disagrees with the cost model"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaOptions {
    pub population: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    /// Per-slot mutation probability; `None` uses `1 / B`.
    pub mutation_rate: Option<f64>,
    pub elitism: usize,
    pub max_generations: usize,
    pub min_generations: usize,
    /// Generations without improvement of the best fitness before stopping.
    pub stall_generations: usize,
    /// Largest relative change of mean fitness over the stall window.
    pub mean_tolerance: f64,
}

impl Default for GaOptions {
    fn default() -> Self {
        Self {
            population: 60,
            tournament: 3,
            crossover_rate: 0.9,
            mutation_rate: None,
            elitism: 2,
            max_generations: 100,
            min_generations: 20,
            stall_generations: 10,
            mean_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    pub inner_starts: usize,
    pub inner_max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Stop an inner run once one iteration improves profit by less than this fraction.
    pub value_tolerance: f64,
    pub price_cap: f64,
    pub ga: GaOptions,
    /// Coefficient draws of the true behavior during the ideal design search.
    pub ideal_search_draws: usize,
    pub seed: u64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            inner_starts: 5,
            inner_max_iterations: 200,
            gradient_tolerance: 1e-9,
            value_tolerance: 1e-10,
            price_cap: DEFAULT_PRICE_CAP,
            ga: GaOptions::default(),
            ideal_search_draws: 300,
            seed: 0,
        }
    }
}

impl DesignOptions {
    pub fn validate(&self) -> Result<()> {
        let ga = &self.ga;
        if self.inner_starts == 0 || self.inner_max_iterations == 0 || self.ideal_search_draws == 0 {
            return Err(Error::Config("design counts must be positive".into()));
        }
        if !(self.price_cap > 0.0 && self.gradient_tolerance > 0.0 && self.value_tolerance >= 0.0) {
            return Err(Error::Config("price cap and tolerance must be positive".into()));
        }
        if ga.population < 2 || ga.tournament == 0 || ga.elitism >= ga.population || ga.max_generations == 0 {
            return Err(Error::Config("invalid genetic search sizes".into()));
        }
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !rate_ok(ga.crossover_rate) || !ga.mutation_rate.is_none_or(rate_ok) {
            return Err(Error::Config("genetic search rates must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Where a design came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub data_seed: u64,
    pub markets: usize,
}

/// Best portfolio found by the genetic search for one kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub portfolio: Portfolio,
    pub model_profit: f64,
    pub diagnostics: GaDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOutcome {
    pub portfolio: Portfolio,
    pub model_profit: f64,
    pub true_profit: f64,
    pub true_profit_se: f64,
    pub provenance: Provenance,
    pub diagnostics: GaDiagnostics,
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Free coordinate placing `v` at its relative position in `[lo, hi]`.
pub(crate) fn to_box(v: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let f = ((v - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9);
    (f / (1.0 - f)).ln()
}
