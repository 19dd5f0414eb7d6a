mod common;

use std::time::Instant;

use common::random_markets;
use consider_core::estimation::{estimate, EstimationOptions};
use consider_core::market::{MarketData, ShareData};
use consider_core::models::{ChoiceKernel, ChoiceModel, CtcParams, MnlParams, ModelFamily};
use consider_core::population::TasteCoefficients;

fn noiseless(model: &ChoiceModel, markets: usize, size: usize, n_styles: usize, seed: u64) -> MarketData {
    let markets = random_markets(seed, markets, size, n_styles);
    let shares = markets.iter().map(|m| ShareData::from_probabilities(&model.probabilities(&m.vehicles)).unwrap()).collect();
    MarketData::new(markets, shares).unwrap()
}

#[test]
fn mnl_recovers_generating_parameters() {
    let style = vec![0.4, -0.3, 0.2, 0.1, -0.5, 0.3, -0.2, 0.1, -0.1];
    let truth = MnlParams::new(TasteCoefficients::from_array([0.5, -20.0, 8.0, 3.0]), style).unwrap();
    let model = ChoiceModel::Mnl(truth.clone());
    let data = noiseless(&model, 1000, 5, 9, 3);
    let t = Instant::now();
    let fit = estimate(ModelFamily::Mnl, &data, &EstimationOptions { seed: 1, ..Default::default() }).unwrap();
    eprintln!("mnl fit {:?} {:?}", t.elapsed(), fit.termination);
    let ChoiceModel::Mnl(got) = &fit.model else { panic!() };
    let err = got
        .taste
        .to_array()
        .iter()
        .zip(truth.taste.to_array())
        .map(|(a, b)| (a - b).abs())
        .chain(got.style.iter().zip(&truth.style).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    assert!(err < 1e-3, "max abs error {err}");
    assert!(fit.converged);
}

#[test]
fn ctc_recovers_rule_masses_on_small_problem() {
    let alpha = vec![0.05, 0.1, 0.15, 0.2, 0.1, 0.25, 0.15];
    let truth = CtcParams::new(TasteCoefficients::from_array([0.5, -20.0, 8.0, 3.0]), alpha.clone()).unwrap();
    let data = noiseless(&ChoiceModel::Ctc(truth), 1000, 5, 3, 4);
    let t = Instant::now();
    let opts = EstimationOptions { n_styles: 3, seed: 2, ..Default::default() };
    let fit = estimate(ModelFamily::Ctc, &data, &opts).unwrap();
    eprintln!("ctc fit {:?} {:?}", t.elapsed(), fit.termination);
    let ChoiceModel::Ctc(got) = &fit.model else { panic!() };
    let l1: f64 = got.alpha.iter().zip(&alpha).map(|(a, b)| (a - b).abs()).sum();
    assert!(l1 < 0.01, "L1 {l1}: {:?}", got.alpha);
}
