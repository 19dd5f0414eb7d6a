mod common;

use common::{random_data, random_free, shape};
use consider_core::market::{Market, MarketData, ShareData, VehicleProfile};
use consider_core::models::{ChoiceKernel, ChoiceModel, CtcParams, Likelihood, MnlParams};
use consider_core::population::{BodyStyle, TasteCoefficients};

fn max_rel_error(lik: &Likelihood, x: &[f64]) -> f64 {
    let mut g = vec![0.0; x.len()];
    lik.evaluate(x, Some(&mut g)).unwrap();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        let mut up = x.to_vec();
        up[i] += h;
        let mut dn = x.to_vec();
        dn[i] -= h;
        let fd = (lik.evaluate(&up, None).unwrap().value - lik.evaluate(&dn, None).unwrap().value) / (2.0 * h);
        let err = (g[i] - fd).abs() / fd.abs().max(g[i].abs()).max(1.0);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn analytic_gradients_match_central_differences() {
    for family in ["MNL", "RCL", "NML", "CTC"] {
        let data = random_data(11, 10, 5, 4);
        let s = shape(family, 4);
        let lik = Likelihood::new(s.clone(), &data).unwrap();
        for k in 0..5 {
            let x = random_free(&s, 100 + k);
            let err = max_rel_error(&lik, &x);
            assert!(err < 1e-5, "{family} point {k}: {err}");
        }
    }
}

#[test]
fn uniform_probabilities_give_closed_form_likelihood() {
    let v = VehicleProfile::new(30.0, 8.0, 2.0, BodyStyle(1));
    let sizes = [1usize, 3, 5];
    let markets: Vec<Market> = sizes.iter().enumerate().map(|(i, &j)| Market::new(i as u64, vec![v; j]).unwrap()).collect();
    let shares = sizes.iter().map(|&j| ShareData::new(vec![1.0 / (j + 1) as f64; j], 1.0 / (j + 1) as f64).unwrap()).collect();
    let data = MarketData::new(markets, shares).unwrap();
    let model = ChoiceModel::Mnl(MnlParams::without_styles(TasteCoefficients::from_array([-800.0, 0.0, 0.0, 0.0]), 2));
    let expect: f64 = sizes.iter().map(|&j| ((j + 1) as f64).recip().ln()).sum();
    assert!((model.log_likelihood(&data).unwrap().value - expect).abs() < 1e-12);
}

#[test]
fn ctc_likelihood_matches_direct_probabilities() {
    let data = random_data(5, 6, 5, 3);
    let s = shape("CTC", 3);
    let x = random_free(&s, 9);
    let model = s.decode(&x).unwrap();
    let mut expect = 0.0;
    for (m, sh) in data.iter() {
        let p = model.probabilities(&m.vehicles);
        for (j, sj) in sh.vehicles.iter().enumerate() {
            expect += sj * p[j].ln();
        }
        expect += sh.outside * p[m.len()].ln();
    }
    let got = Likelihood::new(s, &data).unwrap().evaluate(&x, None).unwrap().value;
    assert!((got - expect).abs() < 1e-12 * expect.abs().max(1.0));
    let _ = CtcParams::uniform(TasteCoefficients::from_array([0.0; 4]), 3);
}
