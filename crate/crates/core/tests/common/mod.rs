#![allow(dead_code)]

use std::sync::Arc;

use consider_core::market::{generate_market, Market, MarketData, ShareData};
use consider_core::models::{ChoiceModel, ModelShape, RclDraws};
use consider_core::seed::{mix, rng_from};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn random_markets(seed: u64, count: usize, size: usize, n_styles: usize) -> Vec<Market> {
    (0..count)
        .map(|m| {
            let mut rng = rng_from(mix(&[seed, m as u64]));
            generate_market(&mut rng, m as u64, size, n_styles).unwrap()
        })
        .collect()
}

/// Markets with random positive shares.
pub fn random_data(seed: u64, count: usize, size: usize, n_styles: usize) -> MarketData {
    let markets = random_markets(seed, count, size, n_styles);
    let mut rng = rng_from(mix(&[seed, 77]));
    let shares = markets
        .iter()
        .map(|m| {
            let raw: Vec<f64> = (0..=m.len()).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let (outside, vehicles) = raw.split_last().unwrap();
            ShareData::new(vehicles.iter().map(|v| v / total).collect(), outside / total).unwrap()
        })
        .collect();
    MarketData::new(markets, shares).unwrap()
}

pub fn shape(family: &str, n_styles: usize) -> ModelShape {
    match family {
        "MNL" => ModelShape::Mnl { n_styles },
        "RCL" => ModelShape::Rcl { n_styles, draws: Arc::new(RclDraws::for_styles(3, 50, n_styles)) },
        "NML" => ModelShape::Nml { n_styles, lambda_max: 10.0 },
        "CTC" => ModelShape::Ctc { n_styles },
        _ => unreachable!(),
    }
}

/// A random free vector on a scale where utilities stay moderate.
pub fn random_free(shape: &ModelShape, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    let mut x: Vec<f64> = (0..shape.dim())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.5 * z
        })
        .collect();
    x[0] = rng.random_range(-1.0..0.0);
    x[1] = rng.random_range(-10.0..10.0);
    x[2] = rng.random_range(-5.0..5.0);
    x[3] = rng.random_range(-1.0..1.0);
    if let ModelShape::Rcl { n_styles, .. } = shape {
        // keep standard deviations away from the kink at zero
        for v in &mut x[3 + n_styles..] {
            *v = v.signum() * (0.05 + v.abs());
        }
    }
    x
}

pub fn decode(shape: &ModelShape, x: &[f64]) -> ChoiceModel {
    shape.decode(x).unwrap()
}
