//! Maximum-likelihood estimation on aggregate shares, in unconstrained
//! coordinates, with multistart.

use std::sync::Arc;
use std::time::Instant;

use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketData;
use crate::models::{ChoiceModel, CtcParams, Likelihood, ModelFamily, ModelShape, RclDraws, TASTE_DIM, DEFAULT_LAMBDA_MAX};
use crate::optim::{minimize, LbfgsOptions, Termination};
use crate::population::TasteCoefficients;
use crate::seed::{mix, rng_from, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationOptions {
    pub n_styles: usize,
    pub multistart_count: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub rcl_mc_draws: usize,
    pub lambda_max: f64,
    /// Drop CTC rule masses below 1e-6 after fitting and renormalize.
    pub ctc_sparsify: bool,
    pub seed: u64,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self {
            n_styles: 9,
            multistart_count: 5,
            max_iterations: 1000,
            gradient_tolerance: 1e-6,
            rcl_mc_draws: 1000,
            lambda_max: DEFAULT_LAMBDA_MAX,
            ctc_sparsify: false,
            seed: 0,
        }
    }
}

impl EstimationOptions {
    pub fn validate(&self) -> Result<()> {
        let counts = [self.n_styles, self.multistart_count, self.max_iterations, self.rcl_mc_draws];
        if counts.contains(&0) {
            return Err(Error::Config("estimation counts must be positive".into()));
        }
        if self.n_styles > crate::population::MAX_STYLES {
            return Err(Error::Config(format!("at most {} body styles", crate::population::MAX_STYLES)));
        }
        if !(self.gradient_tolerance > 0.0 && self.lambda_max > 0.0) {
            return Err(Error::Config("tolerance and lambda cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ChoiceModel,
    pub final_ll: f64,
    pub converged: bool,
    pub start_index: usize,
    pub wall_time: f64,
    pub iterations: usize,
    pub termination: String,
    /// Log-likelihood at each start point, in start order.
    pub start_ll: Vec<f64>,
    /// Every market's observed share is entirely on the outside good.
    pub degenerate_data: bool,
    pub seed: u64,
    pub markets: usize,
}

/// Parameterization used when estimating `kind` under `options`.
pub fn shape_for(kind: ModelFamily, options: &EstimationOptions) -> ModelShape {
    let n_styles = options.n_styles;
    match kind {
        ModelFamily::Mnl => ModelShape::Mnl { n_styles },
        ModelFamily::Rcl => ModelShape::Rcl {
            n_styles,
            draws: Arc::new(RclDraws::for_styles(mix(&[options.seed, 0x72636c]), options.rcl_mc_draws, n_styles)),
        },
        ModelFamily::Nml => ModelShape::Nml { n_styles, lambda_max: options.lambda_max },
        ModelFamily::Ctc => ModelShape::Ctc { n_styles },
    }
}

/// Start point in free coordinates. Taste and style terms are `0.1·N(0,1)`
/// except the log price coefficient (0); RCL spreads start at 0.1, nest
/// scales at 1, and CTC masses at uniform mixed with a flat Dirichlet draw
/// (`jitter` = 0 gives exactly uniform).
pub fn initialize(shape: &ModelShape, rng: &mut Rng, jitter: f64) -> Vec<f64> {
    let normal = |rng: &mut Rng| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        0.1 * z
    };
    let b = shape.n_styles();
    let mut x: Vec<f64> = (0..TASTE_DIM).map(|_| normal(rng)).collect();
    x[0] = 0.0;
    match shape {
        ModelShape::Mnl { .. } => x.extend((0..b - 1).map(|_| normal(rng))),
        ModelShape::Rcl { .. } => {
            x.extend((0..b - 1).map(|_| normal(rng)));
            x.extend(std::iter::repeat_n(0.1, TASTE_DIM + b));
        }
        ModelShape::Nml { lambda_max, .. } => {
            x.extend((0..b - 1).map(|_| normal(rng)));
            let f = 1.0 / lambda_max;
            x.extend(std::iter::repeat_n((f / (1.0 - f)).ln(), b));
        }
        ModelShape::Ctc { .. } => {
            let r = (1usize << b) - 1;
            let mut alpha = vec![1.0 / r as f64; r];
            if jitter > 0.0 {
                let e: Vec<f64> = (0..r).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = e.iter().sum();
                for (a, v) in alpha.iter_mut().zip(&e) {
                    *a = (1.0 - jitter) * *a + jitter * v / total;
                }
            }
            let taste = TasteCoefficients::from_array([x[0], x[1], x[2], x[3]]);
            let start = CtcParams { taste, alpha };
            x = start.to_free().expect("start masses are valid");
        }
    }
    x
}

/// Fits `kind` to `data`, returning the best of `multistart_count` local optima.
pub fn estimate(kind: ModelFamily, data: &MarketData, options: &EstimationOptions) -> Result<FitResult> {
    options.validate()?;
    if data.is_empty() {
        return Err(Error::Precondition("estimation needs at least one market".into()));
    }
    let started = Instant::now();
    let shape = shape_for(kind, options);
    let lik = Likelihood::new(shape.clone(), data)?;
    let lbfgs = LbfgsOptions {
        max_iterations: options.max_iterations,
        gradient_tolerance: options.gradient_tolerance,
        ..LbfgsOptions::default()
    };
    let runs: Vec<_> = (0..options.multistart_count)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_from(mix(&[options.seed, k as u64, 0x7374617274]));
            let jitter = if k == 0 { 0.0 } else { 0.5 };
            let x0 = initialize(&shape, &mut rng, jitter);
            let start_ll = lik.evaluate(&x0, None).map(|l| l.value).unwrap_or(f64::NEG_INFINITY);
            let objective = |x: &[f64], g: &mut [f64]| -> f64 {
                match lik.evaluate(x, Some(g)) {
                    Ok(l) if l.value.is_finite() => {
                        g.iter_mut().for_each(|v| *v = -*v);
                        -l.value
                    }
                    _ => f64::INFINITY,
                }
            };
            let min = minimize(objective, &x0, &lbfgs);
            (start_ll, min)
        })
        .collect();
    let mut best = 0;
    for (k, (_, m)) in runs.iter().enumerate() {
        if m.value < runs[best].1.value {
            best = k;
        }
    }
    let (_, chosen) = &runs[best];
    let mut model = shape.decode(&chosen.x)?;
    if options.ctc_sparsify {
        if let ChoiceModel::Ctc(p) = &mut model {
            p.alpha.iter_mut().for_each(|a| {
                if *a < 1e-6 {
                    *a = 0.0
                }
            });
            let total: f64 = p.alpha.iter().sum();
            p.alpha.iter_mut().for_each(|a| *a /= total);
        }
    }
    let final_ll = model.log_likelihood(data)?.value;
    Ok(FitResult {
        model,
        final_ll,
        converged: chosen.converged() && final_ll.is_finite(),
        start_index: best,
        wall_time: started.elapsed().as_secs_f64(),
        iterations: chosen.iterations,
        termination: format!("{:?}", chosen.termination),
        start_ll: runs.iter().map(|(s, _)| *s).collect(),
        degenerate_data: data.all_outside(),
        seed: options.seed,
        markets: data.len(),
    })
}

impl FitResult {
    pub fn termination_is(&self, t: Termination) -> bool {
        self.termination == format!("{t:?}")
    }
}
