//! Fuel-economy / acceleration trade-off and unit cost per body style.
//!
//! The trade-off is `1000 / (e - 3.46) = D(a)` with
//! `D(a) = βc + βa·exp(-a) + βt·t + βat·a²·t + βw·w + βwa·w·a`, so fuel
//! economy is a closed-form function of acceleration. Unit cost is
//! `βc + βa·exp(-a) + βt·t + βw·w + βwa·w·a` (10k$).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{ACCEL_RANGE, MPG_RANGE};
use crate::population::{BodyStyle, STYLE_NAMES};

/// Offset in the fuel-economy relation.
pub const MPG_OFFSET: f64 = 3.46;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelCoefficients {
    pub constant: f64,
    pub accel: f64,
    pub tech: f64,
    pub accel_tech: f64,
    pub weight: f64,
    pub weight_accel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCoefficients {
    pub constant: f64,
    pub accel: f64,
    pub tech: f64,
    pub weight: f64,
    pub weight_accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleEngineering {
    pub name: String,
    pub fuel: FuelCoefficients,
    pub cost: CostCoefficients,
    /// Curb weight (10³ lbs).
    pub weight: f64,
    /// Technology content.
    pub tech: f64,
    pub mpg_bounds: (f64, f64),
    pub accel_bounds: (f64, f64),
}

/// Fuel economy implied by an acceleration, and whether it lies within the style's bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleMpg {
    pub mpg: f64,
    pub within_bounds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineeringConfig {
    pub styles: Vec<StyleEngineering>,
}

impl StyleEngineering {
    pub fn denominator(&self, accel: f64) -> f64 {
        let g = &self.fuel;
        g.constant
            + g.accel * (-accel).exp()
            + g.tech * self.tech
            + g.accel_tech * accel * accel * self.tech
            + g.weight * self.weight
            + g.weight_accel * self.weight * accel
    }

    fn denominator_slope(&self, accel: f64) -> f64 {
        let g = &self.fuel;
        -g.accel * (-accel).exp() + 2.0 * g.accel_tech * accel * self.tech + g.weight_accel * self.weight
    }

    /// Residual of the trade-off constraint at `(mpg, accel)`.
    pub fn constraint(&self, mpg: f64, accel: f64) -> f64 {
        1000.0 / (mpg - MPG_OFFSET) - self.denominator(accel)
    }

    pub fn unit_cost(&self, accel: f64) -> f64 {
        let c = &self.cost;
        c.constant
            + c.accel * (-accel).exp()
            + c.tech * self.tech
            + c.weight * self.weight
            + c.weight_accel * self.weight * accel
    }

    pub fn cost_slope(&self, accel: f64) -> f64 {
        -self.cost.accel * (-accel).exp() + self.cost.weight_accel * self.weight
    }

    /// Fuel economy and its derivative in acceleration; `None` where `D(a) ≤ 0`.
    pub fn mpg_and_slope(&self, accel: f64) -> Option<(f64, f64)> {
        let d = self.denominator(accel);
        (d > 0.0).then(|| (MPG_OFFSET + 1000.0 / d, -1000.0 * self.denominator_slope(accel) / (d * d)))
    }

    fn mpg_ok(&self, accel: f64) -> bool {
        match self.mpg_and_slope(accel) {
            Some((e, _)) => e >= self.mpg_bounds.0 && e <= self.mpg_bounds.1,
            None => false,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = [
            self.fuel.constant,
            self.fuel.accel,
            self.fuel.tech,
            self.fuel.accel_tech,
            self.fuel.weight,
            self.fuel.weight_accel,
            self.cost.constant,
            self.cost.accel,
            self.cost.tech,
            self.cost.weight,
            self.cost.weight_accel,
            self.tech,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("{}: non-finite coefficient", self.name)));
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::Config(format!("{}: curb weight must be positive", self.name)));
        }
        let inside = |(lo, hi): (f64, f64), (rlo, rhi): (f64, f64)| lo < hi && lo >= rlo && hi <= rhi;
        if !inside(self.mpg_bounds, MPG_RANGE) {
            return Err(Error::Config(format!("{}: fuel economy bounds {:?} invalid", self.name, self.mpg_bounds)));
        }
        if !inside(self.accel_bounds, ACCEL_RANGE) {
            return Err(Error::Config(format!("{}: acceleration bounds {:?} invalid", self.name, self.accel_bounds)));
        }
        Ok(())
    }
}

/// Curb weights of the shipped configuration, in [`STYLE_NAMES`] order.
const DEFAULT_WEIGHTS: [f64; 9] = [3.2, 2.7, 3.0, 3.5, 3.7, 3.9, 5.2, 4.8, 4.4];
const DEFAULT_FUEL_CONSTANTS: [f64; 9] = [19.21, 19.61, 19.37, 18.97, 18.81, 18.65, 17.62, 17.94, 18.26];
const DEFAULT_ACCEL_LOWER: [f64; 9] = [4.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0];
const DEFAULT_ACCEL_UPPER: [f64; 9] = [10.0, 12.0, 12.0, 12.0, 12.0, 12.0, 13.0, 13.0, 13.0];

impl Default for EngineeringConfig {
    /// Shipped coefficients: fuel economy rises with 0-60 time on every
    /// style (roughly 20-31 mpg for a standard sedan over 5-12 s) and unit
    /// costs fall between 1.6 and 2.8 (10k$).
    fn default() -> Self {
        let styles = (0..9)
            .map(|b| StyleEngineering {
                name: STYLE_NAMES[b].to_string(),
                fuel: FuelCoefficients {
                    constant: DEFAULT_FUEL_CONSTANTS[b],
                    accel: 2000.0,
                    tech: -0.3,
                    accel_tech: 0.002,
                    weight: 10.0,
                    weight_accel: -0.4,
                },
                cost: CostCoefficients {
                    constant: if b == 0 { 0.3 } else { 0.0 },
                    accel: 20.0,
                    tech: 0.02,
                    weight: 0.45,
                    weight_accel: 0.0,
                },
                weight: DEFAULT_WEIGHTS[b],
                tech: 20.0,
                mpg_bounds: (10.0, 50.0),
                accel_bounds: (DEFAULT_ACCEL_LOWER[b], DEFAULT_ACCEL_UPPER[b]),
            })
            .collect();
        Self { styles }
    }
}

impl EngineeringConfig {
    pub fn new(styles: Vec<StyleEngineering>) -> Result<Self> {
        let c = Self { styles };
        c.validate()?;
        Ok(c)
    }

    pub fn n_styles(&self) -> usize {
        self.styles.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.styles.is_empty() {
            return Err(Error::Config("engineering config has no body styles".into()));
        }
        self.styles.iter().try_for_each(StyleEngineering::validate)
    }

    pub fn style(&self, b: BodyStyle) -> Result<&StyleEngineering> {
        self.styles
            .get(b.index())
            .ok_or_else(|| Error::invalid(format!("style {b} not in engineering config")))
    }

    /// Fuel economy that satisfies the trade-off at acceleration `accel`.
    pub fn feasible_fuel_economy(&self, accel: f64, b: BodyStyle) -> Result<FeasibleMpg> {
        let s = self.style(b)?;
        if !accel.is_finite() || accel < s.accel_bounds.0 || accel > s.accel_bounds.1 {
            return Err(Error::invalid(format!(
                "acceleration {accel} outside bounds {:?} of style {b}",
                s.accel_bounds
            )));
        }
        let d = s.denominator(accel);
        if d <= 0.0 {
            return Err(Error::Infeasible {
                style: b.0 as usize + 1,
                accel,
                reason: format!("fuel economy denominator {d} is not positive"),
            });
        }
        let mpg = MPG_OFFSET + 1000.0 / d;
        Ok(FeasibleMpg { mpg, within_bounds: mpg >= s.mpg_bounds.0 && mpg <= s.mpg_bounds.1 })
    }

    pub fn unit_cost(&self, _mpg: f64, accel: f64, b: BodyStyle) -> Result<f64> {
        Ok(self.style(b)?.unit_cost(accel))
    }

    /// Largest sub-interval of the acceleration bounds on which fuel economy
    /// stays within its bounds.
    pub fn feasible_accel_interval(&self, b: BodyStyle) -> Result<(f64, f64)> {
        let s = self.style(b)?;
        let (lo, hi) = s.accel_bounds;
        const N: usize = 2000;
        let grid: Vec<f64> = (0..=N).map(|i| lo + (hi - lo) * i as f64 / N as f64).collect();
        let ok: Vec<bool> = grid.iter().map(|&a| s.mpg_ok(a)).collect();
        let mut best: Option<(usize, usize)> = None;
        let mut i = 0;
        while i <= N {
            if ok[i] {
                let start = i;
                while i < N && ok[i + 1] {
                    i += 1;
                }
                if best.is_none_or(|(a, b)| i - start > b - a) {
                    best = Some((start, i));
                }
            }
            i += 1;
        }
        let Some((i0, i1)) = best else {
            return Err(Error::Infeasible {
                style: b.0 as usize + 1,
                accel: lo,
                reason: "no acceleration within bounds gives feasible fuel economy".into(),
            });
        };
        let refine = |mut inside: f64, mut outside: f64| {
            for _ in 0..60 {
                let mid = 0.5 * (inside + outside);
                if s.mpg_ok(mid) {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            inside
        };
        let a0 = if i0 == 0 { lo } else { refine(grid[i0], grid[i0 - 1]) };
        let a1 = if i1 == N { hi } else { refine(grid[i1], grid[i1 + 1]) };
        Ok((a0, a1))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Writes `style, a, e, cost, within_bounds` rows over each style's acceleration bounds.
    pub fn write_curves<W: Write>(&self, writer: W, points: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["style", "a", "e", "cost", "within_bounds"])?;
        let points = points.max(2);
        for (b, s) in self.styles.iter().enumerate() {
            let (lo, hi) = s.accel_bounds;
            for i in 0..points {
                let a = lo + (hi - lo) * i as f64 / (points - 1) as f64;
                let (e, ok) = match self.feasible_fuel_economy(a, BodyStyle(b as u8)) {
                    Ok(f) => (crate::market::fmt_f64(f.mpg), f.within_bounds),
                    Err(_) => (String::new(), false),
                };
                w.write_record([
                    (b + 1).to_string(),
                    crate::market::fmt_f64(a),
                    e,
                    crate::market::fmt_f64(s.unit_cost(a)),
                    ok.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_satisfies_constraint() {
        let cfg = EngineeringConfig::default();
        for (b, s) in cfg.styles.iter().enumerate() {
            for i in 0..100 {
                let a = s.accel_bounds.0 + (s.accel_bounds.1 - s.accel_bounds.0) * i as f64 / 99.0;
                let e = cfg.feasible_fuel_economy(a, BodyStyle(b as u8)).unwrap().mpg;
                assert!(s.constraint(e, a).abs() < 1e-10);
                assert!(e > MPG_OFFSET);
            }
        }
    }

    #[test]
    fn shipped_config_shape() {
        let cfg = EngineeringConfig::default();
        cfg.validate().unwrap();
        let sedan = &cfg.styles[3];
        for a in [5.0, 6.0, 8.0, 10.0, 12.0] {
            let (e, _) = sedan.mpg_and_slope(a).unwrap();
            assert!((15.0..=45.0).contains(&e), "{a} -> {e}");
        }
        for s in &cfg.styles {
            let (lo, hi) = s.accel_bounds;
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=200 {
                let a = lo + (hi - lo) * i as f64 / 200.0;
                let (e, slope) = s.mpg_and_slope(a).unwrap();
                assert!(e > prev && slope > 0.0, "{} not monotone at {a}", s.name);
                prev = e;
                let c = s.unit_cost(a);
                assert!((1.0..=4.0).contains(&c), "{} cost {c}", s.name);
                assert!(s.cost_slope(a) < 0.0);
            }
        }
    }

    #[test]
    fn zero_cost_coefficients() {
        let mut cfg = EngineeringConfig::default();
        cfg.styles[2].cost = CostCoefficients { constant: 0.0, accel: 0.0, tech: 0.0, weight: 0.0, weight_accel: 0.0 };
        assert_eq!(cfg.unit_cost(20.0, 7.0, BodyStyle(2)).unwrap(), 0.0);
        assert_eq!(cfg.unit_cost(40.0, 7.0, BodyStyle(2)).unwrap(), 0.0);
    }

    #[test]
    fn nonpositive_denominator_is_infeasible() {
        let mut cfg = EngineeringConfig::default();
        cfg.styles[0].fuel.constant = -1000.0;
        let err = cfg.feasible_fuel_economy(6.0, BodyStyle(0)).unwrap_err();
        assert!(matches!(err, Error::Infeasible { style: 1, .. }));
        assert!(cfg.feasible_accel_interval(BodyStyle(0)).is_err());
    }

    #[test]
    fn accel_interval_tracks_mpg_bounds() {
        let mut cfg = EngineeringConfig::default();
        cfg.styles[3].mpg_bounds = (25.0, 50.0);
        let (lo, hi) = cfg.feasible_accel_interval(BodyStyle(3)).unwrap();
        assert_eq!(hi, 12.0);
        let e = cfg.feasible_fuel_economy(lo, BodyStyle(3)).unwrap().mpg;
        assert!((e - 25.0).abs() < 1e-9, "{e}");
        let full = EngineeringConfig::default().feasible_accel_interval(BodyStyle(3)).unwrap();
        assert_eq!(full, (5.0, 12.0));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = EngineeringConfig::default();
        let back = EngineeringConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
