use rand::Rng as _;

use super::{logistic, to_box, DesignOptions, DesignedVehicle, Portfolio};
use crate::engineering::EngineeringConfig;
use crate::error::{Error, Result};
use crate::market::VehicleProfile;
use crate::models::ChoiceKernel;
use crate::optim::{minimize, LbfgsOptions};
use crate::population::BodyStyle;
use crate::seed::{mix, rng_from};

/// Optimized portfolio for one style multiset.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub portfolio: Portfolio,
    pub model_profit: f64,
    pub converged: bool,
    /// Some price ended within 0.1% of the price cap.
    pub price_cap_active: bool,
}

/// Expected profit over per-vehicle `(a, p)` in logistic box coordinates,
/// fuel economy eliminated through the trade-off.
pub(crate) struct Problem<'a> {
    kernel: &'a dyn ChoiceKernel,
    cfg: &'a EngineeringConfig,
    styles: Vec<BodyStyle>,
    accel_box: Vec<(f64, f64)>,
    price_cap: f64,
}

impl<'a> Problem<'a> {
    pub fn new(kernel: &'a dyn ChoiceKernel, cfg: &'a EngineeringConfig, styles: &[BodyStyle], price_cap: f64) -> Result<Self> {
        if styles.is_empty() {
            return Err(Error::Precondition("a portfolio needs at least one vehicle".into()));
        }
        if styles.iter().any(|b| b.index() >= kernel.n_styles()) {
            return Err(Error::invalid("style outside the choice model's styles"));
        }
        let accel_box = styles.iter().map(|&b| cfg.feasible_accel_interval(b)).collect::<Result<_>>()?;
        Ok(Self { kernel, cfg, styles: styles.to_vec(), accel_box, price_cap })
    }

    pub fn dim(&self) -> usize {
        2 * self.styles.len()
    }

    pub fn encode(&self, vehicles: &[(f64, f64)]) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        for (&(a, p), &(lo, hi)) in vehicles.iter().zip(&self.accel_box) {
            z.push(to_box(a, lo, hi));
            z.push(to_box(p, 0.0, self.price_cap));
        }
        z
    }

    pub fn decode(&self, z: &[f64]) -> Vec<DesignedVehicle> {
        self.styles
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                let (lo, hi) = self.accel_box[j];
                let a = lo + (hi - lo) * logistic(z[2 * j]);
                let p = self.price_cap * logistic(z[2 * j + 1]);
                let s = &self.cfg.styles[b.index()];
                let mpg = s.mpg_and_slope(a).map_or(f64::NAN, |(e, _)| e);
                DesignedVehicle { style: b, mpg, accel: a, price: p, cost: s.unit_cost(a) }
            })
            .collect()
    }

    /// Negative expected profit and its gradient.
    pub fn objective(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.styles.len();
        let mut profiles = Vec::with_capacity(n);
        let mut margins = Vec::with_capacity(n);
        let mut chain = Vec::with_capacity(n);
        for (j, &b) in self.styles.iter().enumerate() {
            let (lo, hi) = self.accel_box[j];
            let sa = logistic(z[2 * j]);
            let sp = logistic(z[2 * j + 1]);
            let a = lo + (hi - lo) * sa;
            let p = self.price_cap * sp;
            let s = &self.cfg.styles[b.index()];
            let Some((e, de)) = s.mpg_and_slope(a) else {
                return f64::INFINITY;
            };
            profiles.push(VehicleProfile::new(e, a, p, b));
            margins.push(p - s.unit_cost(a));
            chain.push((de, s.cost_slope(a), (hi - lo) * sa * (1.0 - sa), self.price_cap * sp * (1.0 - sp)));
        }
        let pg = self.kernel.profit(&profiles, &margins);
        for (j, &(de, dc, ja, jp)) in chain.iter().enumerate() {
            let d_accel = pg.mpg[j] * de + pg.accel[j] - pg.margin[j] * dc;
            let d_price = pg.price[j] + pg.margin[j];
            grad[2 * j] = -d_accel * ja;
            grad[2 * j + 1] = -d_price * jp;
        }
        -pg.value
    }

    pub fn solve_from(&self, z0: &[f64], options: &DesignOptions) -> (Vec<f64>, f64, bool) {
        let lbfgs = LbfgsOptions {
            max_iterations: options.inner_max_iterations,
            gradient_tolerance: options.gradient_tolerance,
            value_tolerance: options.value_tolerance,
            ..LbfgsOptions::default()
        };
        let m = minimize(|z, g| self.objective(z, g), z0, &lbfgs);
        let converged = m.converged();
        (m.x, -m.value, converged)
    }

    pub fn result(&self, z: &[f64], profit: f64, converged: bool) -> InnerResult {
        let mut vehicles = self.decode(z);
        vehicles.sort_by(|x, y| {
            (x.style, x.accel, x.price).partial_cmp(&(y.style, y.accel, y.price)).expect("finite design")
        });
        let price_cap_active = vehicles.iter().any(|v| v.price > 0.999 * self.price_cap);
        InnerResult { portfolio: Portfolio { vehicles }, model_profit: profit, converged, price_cap_active }
    }
}

/// Maximizes expected profit under `kernel` over acceleration and price of
/// one vehicle per entry of `styles`, with the portfolio as the whole market.
pub fn inner_optimize(
    kernel: &dyn ChoiceKernel,
    cfg: &EngineeringConfig,
    styles: &[BodyStyle],
    options: &DesignOptions,
) -> Result<InnerResult> {
    let mut styles = styles.to_vec();
    styles.sort_unstable();
    let problem = Problem::new(kernel, cfg, &styles, options.price_cap)?;
    let mut words = vec![options.seed, 0x696e6e6572];
    words.extend(styles.iter().map(|b| b.0 as u64));
    let mut rng = rng_from(mix(&words));
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for k in 0..options.inner_starts {
        let start: Vec<(f64, f64)> = styles
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                let (lo, hi) = problem.accel_box[j];
                let a = if k == 0 { 0.5 * (lo + hi) } else { rng.random_range(lo..=hi) };
                let markup = if k == 0 { 0.3 } else { rng.random_range(0.05..1.0) };
                (a, cfg.styles[b.index()].unit_cost(a) + markup)
            })
            .collect();
        let run = problem.solve_from(&problem.encode(&start), options);
        if run.1.is_finite() && best.as_ref().is_none_or(|b| run.1 > b.1) {
            best = Some(run);
        }
    }
    let (z, profit, converged) = best.ok_or_else(|| Error::Precondition("no start reached a finite profit".into()))?;
    Ok(problem.result(&z, profit, converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engineering::CostCoefficients;
    use crate::models::{ChoiceModel, MnlParams};
    use crate::population::TasteCoefficients;

    fn price_only_mnl() -> ChoiceModel {
        ChoiceModel::Mnl(MnlParams::without_styles(TasteCoefficients::from_array([0.0; 4]), 9))
    }

    #[test]
    fn single_vehicle_price_fixed_point() {
        let mut cfg = EngineeringConfig::default();
        cfg.styles[3].cost = CostCoefficients { constant: 0.0, accel: 0.0, tech: 0.0, weight: 0.0, weight_accel: 0.0 };
        let r = inner_optimize(&price_only_mnl(), &cfg, &[BodyStyle(3)], &DesignOptions::default()).unwrap();
        let p = r.portfolio.vehicles[0].price;
        // p solves p (1 - P(p)) = 1 with P(p) = 1 / (1 + e^p)
        let h = |p: f64| p * (1.0 - 1.0 / (1.0 + p.exp())) - 1.0;
        let (mut lo, mut hi) = (0.5, 3.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let share = 1.0 / (1.0 + p.exp());
        assert!((p * (1.0 - share) - 1.0).abs() < 1e-8);
        assert!((p - lo).abs() < 1e-8, "{p} vs {lo}");
    }

    #[test]
    fn beats_random_candidates_and_is_order_invariant() {
        let model = ChoiceModel::Mnl(MnlParams::new(
            TasteCoefficients::from_array([2.0, -36.8, 11.3, 23.2]),
            vec![0.3, -0.2, 0.1, 0.0, 0.4, -0.1, -0.3, 0.2, -0.4],
        ).unwrap());
        let cfg = EngineeringConfig::default();
        let opts = DesignOptions::default();
        let styles = [BodyStyle(4), BodyStyle(1), BodyStyle(4)];
        let r = inner_optimize(&model, &cfg, &styles, &opts).unwrap();
        r.portfolio.validate(&cfg).unwrap();
        let r2 = inner_optimize(&model, &cfg, &[BodyStyle(4), BodyStyle(4), BodyStyle(1)], &opts).unwrap();
        assert_eq!(r, r2);
        let mut rng = rng_from(9);
        for _ in 0..10 {
            let vehicles: Vec<VehicleProfile> = styles
                .iter()
                .map(|&b| {
                    let (lo, hi) = cfg.feasible_accel_interval(b).unwrap();
                    let a = rng.random_range(lo..hi);
                    let e = cfg.feasible_fuel_economy(a, b).unwrap().mpg;
                    VehicleProfile::new(e, a, rng.random_range(1.0..5.0), b)
                })
                .collect();
            let m: Vec<f64> = vehicles.iter().map(|v| v.price - cfg.styles[v.style.index()].unit_cost(v.accel)).collect();
            assert!(model.profit(&vehicles, &m).value <= r.model_profit + 1e-12);
        }
        // identical vehicles within a style under a logit
        let v = &r.portfolio.vehicles;
        let same = v.iter().filter(|x| x.style == BodyStyle(4)).collect::<Vec<_>>();
        assert!(((same[0].accel - same[1].accel) / same[0].accel).abs() < 1e-4);
        assert!(((same[0].price - same[1].price) / same[0].price).abs() < 1e-4);
    }

    #[test]
    fn gradient_matches_differences() {
        let model = ChoiceModel::Mnl(MnlParams::new(
            TasteCoefficients::from_array([1.8, -30.0, 10.0, 22.0]),
            vec![0.2, -0.1, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0, -0.2],
        ).unwrap());
        let cfg = EngineeringConfig::default();
        let styles = [BodyStyle(0), BodyStyle(5), BodyStyle(5)];
        let problem = Problem::new(&model, &cfg, &styles, 18.0).unwrap();
        let z = [0.3, -2.5, -0.4, -2.2, 1.0, -2.4];
        let mut g = vec![0.0; 6];
        problem.objective(&z, &mut g);
        let mut scratch = vec![0.0; 6];
        for i in 0..6 {
            let (mut up, mut dn) = (z, z);
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            let fd = (problem.objective(&up, &mut scratch) - problem.objective(&dn, &mut scratch)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7 * (1.0 + fd.abs()), "{i}: {fd} {}", g[i]);
        }
    }
}
