use serde::{Deserialize, Serialize};

use super::inner::Problem;
use super::{logistic, outer_optimize, to_box, Design, DesignOptions, DesignOutcome, Portfolio, Provenance};
use crate::engineering::EngineeringConfig;
use crate::error::Result;
use crate::models::ChoiceKernel;
use crate::optim::{minimize, LbfgsOptions};
use crate::population::PopulationSpec;
use crate::seed::mix;
use crate::truth::TrueBehavior;

/// Expected profit of `portfolio` under the true behavior, with its
/// Monte-Carlo standard error.
pub fn true_profit(portfolio: &Portfolio, truth: &TrueBehavior, cfg: &EngineeringConfig) -> Result<(f64, f64)> {
    portfolio.validate(cfg)?;
    Ok(truth.profit_with_error(&portfolio.profiles(), &portfolio.margins()))
}

pub fn evaluate_design(
    design: &Design,
    truth: &TrueBehavior,
    cfg: &EngineeringConfig,
    provenance: Provenance,
) -> Result<DesignOutcome> {
    let (true_profit, true_profit_se) = true_profit(&design.portfolio, truth, cfg)?;
    Ok(DesignOutcome {
        portfolio: design.portfolio.clone(),
        model_profit: design.model_profit,
        true_profit,
        true_profit_se,
        provenance,
        diagnostics: design.diagnostics.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repriced {
    pub portfolio: Portfolio,
    pub true_profit: f64,
    pub true_profit_se: f64,
}

/// Re-optimizes prices under the true behavior with fuel economy,
/// acceleration and styles held fixed, starting from the current prices.
pub fn price_on_offering(
    portfolio: &Portfolio,
    truth: &TrueBehavior,
    cfg: &EngineeringConfig,
    options: &DesignOptions,
) -> Result<Repriced> {
    portfolio.validate(cfg)?;
    let cap = options.price_cap;
    let mut vehicles = portfolio.profiles();
    let costs: Vec<f64> = portfolio.vehicles.iter().map(|v| v.cost).collect();
    let z0: Vec<f64> = vehicles.iter().map(|v| to_box(v.price, 0.0, cap)).collect();
    let lbfgs = LbfgsOptions {
        max_iterations: options.inner_max_iterations,
        gradient_tolerance: options.gradient_tolerance,
        value_tolerance: options.value_tolerance,
        ..LbfgsOptions::default()
    };
    let mut scratch = vehicles.clone();
    let objective = |z: &[f64], g: &mut [f64]| {
        let mut margins = Vec::with_capacity(z.len());
        for (j, v) in scratch.iter_mut().enumerate() {
            v.price = cap * logistic(z[j]);
            margins.push(v.price - costs[j]);
        }
        let pg = truth.profit(&scratch, &margins);
        for j in 0..z.len() {
            let s = logistic(z[j]);
            g[j] = -(pg.price[j] + pg.margin[j]) * cap * s * (1.0 - s);
        }
        -pg.value
    };
    let m = minimize(objective, &z0, &lbfgs);
    let mut out = portfolio.clone();
    for (j, v) in out.vehicles.iter_mut().enumerate() {
        v.price = cap * logistic(m.x[j]);
        vehicles[j].price = v.price;
    }
    let (p, se) = truth.profit_with_error(&vehicles, &out.margins());
    let (p0, se0) = truth.profit_with_error(&portfolio.profiles(), &portfolio.margins());
    if p < p0 {
        return Ok(Repriced { portfolio: portfolio.clone(), true_profit: p0, true_profit_se: se0 });
    }
    Ok(Repriced { portfolio: out, true_profit: p, true_profit_se: se })
}

/// Best portfolio for the true behavior: a genetic search against a
/// reduced-draw copy of the truth, then the winning multiset re-optimized
/// against `evaluation`.
pub fn ideal_design(
    pop: &PopulationSpec,
    cfg: &EngineeringConfig,
    options: &DesignOptions,
    evaluation: &TrueBehavior,
) -> Result<Design> {
    let search = TrueBehavior::new(pop, options.ideal_search_draws, mix(&[options.seed, 0x6964656]))?;
    let coarse = outer_optimize(&search, cfg, options)?;
    let styles = coarse.portfolio.styles();
    let problem = Problem::new(evaluation, cfg, &styles, options.price_cap)?;
    let start: Vec<(f64, f64)> = coarse.portfolio.vehicles.iter().map(|v| (v.accel, v.price)).collect();
    let (z, profit, converged) = problem.solve_from(&problem.encode(&start), options);
    let polished = problem.result(&z, profit, converged);
    let coarse_profit = evaluation.profit(&coarse.portfolio.profiles(), &coarse.portfolio.margins()).value;
    let (portfolio, model_profit) = if polished.model_profit >= coarse_profit {
        (polished.portfolio, polished.model_profit)
    } else {
        (coarse.portfolio, coarse_profit)
    };
    Ok(Design { portfolio, model_profit, diagnostics: coarse.diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignedVehicle;
    use crate::population::{default_population, BodyStyle, ScreeningRule, TasteCoefficients};

    fn pop() -> PopulationSpec {
        default_population().with_constant_mean(23.2)
    }

    fn vehicle(cfg: &EngineeringConfig, b: u8, a: f64, markup: f64) -> DesignedVehicle {
        let s = &cfg.styles[b as usize];
        let cost = s.unit_cost(a);
        let mpg = s.mpg_and_slope(a).unwrap().0;
        DesignedVehicle { style: BodyStyle(b), mpg, accel: a, price: cost + markup, cost }
    }

    #[test]
    fn priced_at_cost_earns_nothing() {
        let cfg = EngineeringConfig::default();
        let truth = TrueBehavior::new(&pop(), 500, 1).unwrap();
        let p = Portfolio { vehicles: vec![vehicle(&cfg, 2, 7.0, 0.0), vehicle(&cfg, 5, 8.0, 0.0)] };
        let (v, se) = true_profit(&p, &truth, &cfg).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn unconsidered_style_earns_nothing() {
        let cfg = EngineeringConfig::default();
        let means = pop().means();
        let spec = PopulationSpec::new(
            9,
            vec![(ScreeningRule::new(0b1, 9).unwrap(), 1.0 - 1e-9), (ScreeningRule::all(9), 1e-9)],
            means,
            TasteCoefficients::from_array([0.0; 4]),
        );
        // The coverage requirement forces some mass on a rule accepting every style.
        let spec = spec.unwrap();
        let truth = TrueBehavior::new(&spec, 10, 1).unwrap();
        let p = Portfolio { vehicles: vec![vehicle(&cfg, 4, 8.0, 0.3)] };
        let (v, _) = true_profit(&p, &truth, &cfg).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
    }

    #[test]
    fn repricing_never_loses() {
        let cfg = EngineeringConfig::default();
        let truth = TrueBehavior::new(&pop(), 400, 2).unwrap();
        let p = Portfolio { vehicles: vec![vehicle(&cfg, 3, 7.0, 0.8), vehicle(&cfg, 3, 9.0, 0.05)] };
        let (before, _) = true_profit(&p, &truth, &cfg).unwrap();
        let r = price_on_offering(&p, &truth, &cfg, &DesignOptions::default()).unwrap();
        assert!(r.true_profit > before);
        r.portfolio.validate(&cfg).unwrap();
        let again = price_on_offering(&r.portfolio, &truth, &cfg, &DesignOptions::default()).unwrap();
        assert!((again.true_profit - r.true_profit).abs() < 1e-9);
    }
}
