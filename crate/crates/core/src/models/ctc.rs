use serde::{Deserialize, Serialize};

use super::{log1p_sum_exp, log_sum_exp, ChoiceKernel, ProfitGradient, TASTE_DIM};
use crate::consideration::{shifted_exp, StyleSlots, SubsetLogit};
use crate::error::{Error, Result};
use crate::market::VehicleProfile;
use crate::population::{TasteCoefficients, MAX_STYLES};

/// Consider-then-choose logit: a mass `alpha[r - 1]` on every non-empty
/// style mask `r`, followed by a homogeneous logit over the considered
/// vehicles. Body style does not enter utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtcParams {
    pub taste: TasteCoefficients,
    pub alpha: Vec<f64>,
}

impl CtcParams {
    pub fn new(taste: TasteCoefficients, alpha: Vec<f64>) -> Result<Self> {
        let p = Self { taste, alpha };
        p.validate()?;
        Ok(p)
    }

    /// All mass on the rule accepting every style.
    pub fn full_consideration(taste: TasteCoefficients, n_styles: usize) -> Self {
        let mut alpha = vec![0.0; (1 << n_styles) - 1];
        *alpha.last_mut().expect("at least one rule") = 1.0;
        Self { taste, alpha }
    }

    /// Uniform mass over every non-empty rule.
    pub fn uniform(taste: TasteCoefficients, n_styles: usize) -> Self {
        let r = (1usize << n_styles) - 1;
        Self { taste, alpha: vec![1.0 / r as f64; r] }
    }

    pub fn n_styles(&self) -> usize {
        (self.alpha.len() + 1).trailing_zeros() as usize
    }

    /// Mass of the rule with style mask `mask` (non-zero).
    pub fn mass(&self, mask: u32) -> f64 {
        self.alpha[mask as usize - 1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.taste.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("non-finite taste coefficient".into()));
        }
        let r = self.alpha.len() + 1;
        if r < 2 || !r.is_power_of_two() || r.trailing_zeros() as usize > MAX_STYLES {
            return Err(Error::InvalidParameters(format!(
                "rule mass vector has length {}, expected 2^B - 1",
                self.alpha.len()
            )));
        }
        if self.alpha.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(Error::InvalidParameters("rule masses must lie in [0, 1]".into()));
        }
        let sum: f64 = self.alpha.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameters(format!("rule masses sum to {sum}, expected 1")));
        }
        Ok(())
    }

    pub(crate) fn from_free(x: &[f64], n_styles: usize) -> Self {
        let logits = &x[TASTE_DIM..];
        let peak = logits.iter().copied().fold(0.0f64, f64::max);
        let mut alpha: Vec<f64> = logits.iter().map(|&l| (l - peak).exp()).collect();
        alpha.push((-peak).exp());
        let total: f64 = alpha.iter().sum();
        alpha.iter_mut().for_each(|a| *a /= total);
        debug_assert_eq!(alpha.len(), (1 << n_styles) - 1);
        Self { taste: TasteCoefficients::from_array([x[0], x[1], x[2], x[3]]), alpha }
    }

    /// Free coordinates; zero masses map to a very negative finite logit.
    pub(crate) fn to_free(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let floor = |a: f64| a.max(1e-300).ln();
        let pinned = floor(*self.alpha.last().expect("validated"));
        let mut x = self.taste.to_array().to_vec();
        x.extend(self.alpha[..self.alpha.len() - 1].iter().map(|&a| floor(a) - pinned));
        Ok(x)
    }

    pub(crate) fn class_weights(&self, slots: &StyleSlots) -> Vec<f64> {
        slots.class_weights(self.alpha.iter().enumerate().map(|(i, &a)| (i as u32 + 1, a)))
    }
}

impl ChoiceKernel for CtcParams {
    fn n_styles(&self) -> usize {
        CtcParams::n_styles(self)
    }

    fn probabilities(&self, vehicles: &[VehicleProfile]) -> Vec<f64> {
        let slots = StyleSlots::new(vehicles);
        let weights = self.class_weights(&slots);
        let u: Vec<f64> = vehicles.iter().map(|v| self.taste.utility(v.mpg, v.accel, v.price)).collect();
        let mut ev = Vec::new();
        let outside = shifted_exp(&u, &mut ev);
        let mut p = vec![0.0; vehicles.len() + 1];
        let n = vehicles.len();
        p[n] = SubsetLogit::default().probabilities(&slots, &weights, &ev, outside, &mut p[..n]);
        p
    }

    fn log_probabilities(&self, vehicles: &[VehicleProfile]) -> Vec<f64> {
        let n = vehicles.len();
        let u: Vec<f64> = vehicles.iter().map(|v| self.taste.utility(v.mpg, v.accel, v.price)).collect();
        let mut terms = vec![Vec::new(); n + 1];
        let mut considered = Vec::with_capacity(n);
        let mut cu = Vec::with_capacity(n);
        for (i, &a) in self.alpha.iter().enumerate() {
            if a <= 0.0 {
                continue;
            }
            let mask = i as u32 + 1;
            considered.clear();
            considered.extend((0..n).filter(|&j| mask & vehicles[j].style.bit() != 0));
            cu.clear();
            cu.extend(considered.iter().map(|&j| u[j]));
            let lse = log1p_sum_exp(&cu);
            let la = a.ln();
            for &j in &considered {
                terms[j].push(la + u[j] - lse);
            }
            terms[n].push(la - lse);
        }
        terms.iter().map(|t| log_sum_exp(t)).collect()
    }

    fn profit(&self, vehicles: &[VehicleProfile], margins: &[f64]) -> ProfitGradient {
        let n = vehicles.len();
        let slots = StyleSlots::new(vehicles);
        let weights = self.class_weights(&slots);
        let u: Vec<f64> = vehicles.iter().map(|v| self.taste.utility(v.mpg, v.accel, v.price)).collect();
        let mut ev = Vec::new();
        let outside = shifted_exp(&u, &mut ev);
        let mut g = ProfitGradient::zeros(n);
        let mut gu = vec![0.0; n];
        let (value, _) = SubsetLogit::default().value_gradient(
            &slots,
            &weights,
            &ev,
            outside,
            margins,
            0.0,
            &mut g.margin,
            &mut gu,
        );
        g.value = value;
        let pc = self.taste.log_price.exp();
        for (j, v) in vehicles.iter().enumerate() {
            g.price[j] = -pc * gu[j];
            g.mpg[j] = -self.taste.fuel / (v.mpg * v.mpg) * gu[j];
            g.accel[j] = -self.taste.accel / (v.accel * v.accel) * gu[j];
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::BodyStyle;

    #[test]
    fn nothing_considered_means_outside_good() {
        let mut p = CtcParams::full_consideration(TasteCoefficients::from_array([0.0, 0.0, 0.0, 5.0]), 3);
        p.alpha.iter_mut().for_each(|a| *a = 0.0);
        p.alpha[0] = 1.0;
        let v = [
            VehicleProfile::new(30.0, 8.0, 2.0, BodyStyle(1)),
            VehicleProfile::new(30.0, 8.0, 2.0, BodyStyle(2)),
        ];
        assert_eq!(p.probabilities(&v), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn free_round_trip() {
        let mut alpha: Vec<f64> = (1..=7).map(|i| i as f64).collect();
        let s: f64 = alpha.iter().sum();
        alpha.iter_mut().for_each(|a| *a /= s);
        let p = CtcParams::new(TasteCoefficients::from_array([0.2, -3.0, 4.0, 1.0]), alpha).unwrap();
        assert_eq!(p.n_styles(), 3);
        let x = p.to_free().unwrap();
        assert_eq!(x.len(), 4 + 6);
        let back = CtcParams::from_free(&x, 3);
        for (a, b) in back.alpha.iter().zip(&p.alpha) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_alpha() {
        let t = TasteCoefficients::from_array([0.0; 4]);
        assert!(CtcParams::new(t, vec![0.5, 0.5]).is_err());
        assert!(CtcParams::new(t, vec![0.5, 0.2, 0.2]).is_err());
        assert!(CtcParams::new(t, vec![-0.1, 0.6, 0.5]).is_err());
    }
}
