//! The true behavior as a choice kernel: a mixture over screening rules of
//! random-coefficient logits, integrated by fixed Monte-Carlo draws that are
//! shared across rules.

use rayon::prelude::*;

use crate::consideration::{shifted_exp, StyleSlots, SubsetLogit};
use crate::error::{Error, Result};
use crate::market::{Market, VehicleProfile};
use crate::models::{check_vehicles, ChoiceKernel, ProfitGradient};
use crate::population::{PopulationSpec, TasteCoefficients};
use crate::seed::rng_from;

/// Draws per parallel work unit; fixed so sums do not depend on thread count.
const DRAW_CHUNK: usize = 1024;

#[derive(Debug, Clone)]
pub struct TrueBehavior {
    pop: PopulationSpec,
    rules: Vec<(u32, f64)>,
    draws: Vec<TasteCoefficients>,
    seed: u64,
}

impl TrueBehavior {
    pub fn new(pop: &PopulationSpec, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("Monte-Carlo sample size must be at least 1"));
        }
        let mut rng = rng_from(seed);
        let sampler = crate::population::PopulationSampler::new(pop);
        let draws = (0..count).map(|_| sampler.sample_coefficients(&mut rng)).collect();
        let rules = pop.rules().iter().filter(|(_, m)| *m > 0.0).map(|(r, m)| (r.mask(), *m)).collect();
        Ok(Self { pop: pop.clone(), rules, draws, seed })
    }

    pub fn population(&self) -> &PopulationSpec {
        &self.pop
    }

    pub fn draw_count(&self) -> usize {
        self.draws.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Probabilities with input validation.
    pub fn checked_probabilities(&self, vehicles: &[VehicleProfile]) -> Result<Vec<f64>> {
        check_vehicles(vehicles, self.pop.n_styles())?;
        Ok(self.probabilities(vehicles))
    }

    /// Expected profit and its Monte-Carlo standard error over coefficient draws.
    pub fn profit_with_error(&self, vehicles: &[VehicleProfile], margins: &[f64]) -> (f64, f64) {
        let slots = StyleSlots::new(vehicles);
        let weights = slots.class_weights(self.rules.iter().copied());
        let chunks: Vec<(f64, f64)> = self
            .draws
            .par_chunks(DRAW_CHUNK)
            .map(|chunk| {
                let mut sl = SubsetLogit::default();
                let (mut u, mut ev) = (Vec::new(), Vec::new());
                let mut p = vec![0.0; vehicles.len()];
                let mut g = vec![0.0; vehicles.len()];
                let (mut s1, mut s2) = (0.0, 0.0);
                for d in chunk {
                    utilities(d, vehicles, &mut u);
                    let outside = shifted_exp(&u, &mut ev);
                    let (v, _) = sl.value_gradient(&slots, &weights, &ev, outside, margins, 0.0, &mut p, &mut g);
                    s1 += v;
                    s2 += v * v;
                }
                (s1, s2)
            })
            .collect();
        let n = self.draws.len() as f64;
        let (s1, s2) = chunks.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let mean = s1 / n;
        let var = if n > 1.0 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        (mean, (var / n).sqrt())
    }
}

fn utilities(d: &TasteCoefficients, vehicles: &[VehicleProfile], out: &mut Vec<f64>) {
    out.clear();
    out.extend(vehicles.iter().map(|v| d.utility(v.mpg, v.accel, v.price)));
}

fn add_into(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
    a
}

impl ChoiceKernel for TrueBehavior {
    fn n_styles(&self) -> usize {
        self.pop.n_styles()
    }

    fn probabilities(&self, vehicles: &[VehicleProfile]) -> Vec<f64> {
        let n = vehicles.len();
        let slots = StyleSlots::new(vehicles);
        let weights = slots.class_weights(self.rules.iter().copied());
        let parts: Vec<Vec<f64>> = self
            .draws
            .par_chunks(DRAW_CHUNK)
            .map(|chunk| {
                let mut sl = SubsetLogit::default();
                let (mut u, mut ev) = (Vec::new(), Vec::new());
                let mut p = vec![0.0; n];
                let mut acc = vec![0.0; n + 1];
                for d in chunk {
                    utilities(d, vehicles, &mut u);
                    let outside = shifted_exp(&u, &mut ev);
                    acc[n] += sl.probabilities(&slots, &weights, &ev, outside, &mut p);
                    acc.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
                }
                acc
            })
            .collect();
        let inv = 1.0 / self.draws.len() as f64;
        let mut total = parts.into_iter().reduce(add_into).unwrap_or_default();
        total.iter_mut().for_each(|a| *a *= inv);
        total
    }

    fn profit(&self, vehicles: &[VehicleProfile], margins: &[f64]) -> ProfitGradient {
        let n = vehicles.len();
        let slots = StyleSlots::new(vehicles);
        let weights = slots.class_weights(self.rules.iter().copied());
        // Layout: value, then per vehicle (price, mpg, accel, margin).
        let parts: Vec<Vec<f64>> = self
            .draws
            .par_chunks(DRAW_CHUNK)
            .map(|chunk| {
                let mut sl = SubsetLogit::default();
                let (mut u, mut ev) = (Vec::new(), Vec::new());
                let mut p = vec![0.0; n];
                let mut g = vec![0.0; n];
                let mut acc = vec![0.0; 1 + 4 * n];
                for d in chunk {
                    utilities(d, vehicles, &mut u);
                    let outside = shifted_exp(&u, &mut ev);
                    let (v, _) = sl.value_gradient(&slots, &weights, &ev, outside, margins, 0.0, &mut p, &mut g);
                    acc[0] += v;
                    let pc = d.log_price.exp();
                    for (j, veh) in vehicles.iter().enumerate() {
                        let o = 1 + 4 * j;
                        acc[o] -= pc * g[j];
                        acc[o + 1] -= d.fuel / (veh.mpg * veh.mpg) * g[j];
                        acc[o + 2] -= d.accel / (veh.accel * veh.accel) * g[j];
                        acc[o + 3] += p[j];
                    }
                }
                acc
            })
            .collect();
        let inv = 1.0 / self.draws.len() as f64;
        let total = parts.into_iter().reduce(add_into).unwrap_or_default();
        let mut out = ProfitGradient::zeros(n);
        out.value = total[0] * inv;
        for j in 0..n {
            let o = 1 + 4 * j;
            out.price[j] = total[o] * inv;
            out.mpg[j] = total[o + 1] * inv;
            out.accel[j] = total[o + 2] * inv;
            out.margin[j] = total[o + 3] * inv;
        }
        out
    }
}

/// True choice probabilities of a market (vehicles then outside good), with
/// `count` coefficient draws from the stream seeded by `seed`.
pub fn true_choice_probability(market: &Market, pop: &PopulationSpec, count: usize, seed: u64) -> Result<Vec<f64>> {
    TrueBehavior::new(pop, count, seed)?.checked_probabilities(&market.vehicles)
}
