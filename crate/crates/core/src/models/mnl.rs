use serde::{Deserialize, Serialize};

use super::{check_effects, effects_from_free, log1p_sum_exp, logit, ChoiceKernel, ProfitGradient, TASTE_DIM};
use crate::error::{Error, Result};
use crate::market::VehicleProfile;
use crate::population::TasteCoefficients;

/// Multinomial logit with effects-coded body-style terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnlParams {
    pub taste: TasteCoefficients,
    pub style: Vec<f64>,
}

impl MnlParams {
    pub fn new(taste: TasteCoefficients, style: Vec<f64>) -> Result<Self> {
        let p = Self { taste, style };
        p.validate()?;
        Ok(p)
    }

    /// MNL with all body-style effects zero.
    pub fn without_styles(taste: TasteCoefficients, n_styles: usize) -> Self {
        Self { taste, style: vec![0.0; n_styles] }
    }

    pub fn n_styles(&self) -> usize {
        self.style.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.taste.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("non-finite taste coefficient".into()));
        }
        if self.style.is_empty() {
            return Err(Error::InvalidParameters("no body styles".into()));
        }
        check_effects(&self.style, self.style.len(), "MNL style effects")
    }

    pub(crate) fn from_free(x: &[f64], n_styles: usize) -> Self {
        Self {
            taste: TasteCoefficients::from_array([x[0], x[1], x[2], x[3]]),
            style: effects_from_free(&x[TASTE_DIM..], n_styles),
        }
    }

    pub(crate) fn to_free(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut x = self.taste.to_array().to_vec();
        x.extend_from_slice(&self.style[..self.style.len() - 1]);
        Ok(x)
    }

    #[inline]
    pub fn utility(&self, v: &VehicleProfile) -> f64 {
        self.taste.utility(v.mpg, v.accel, v.price) + self.style[v.style.index()]
    }

    pub(crate) fn utilities(&self, vehicles: &[VehicleProfile], out: &mut Vec<f64>) {
        out.clear();
        out.extend(vehicles.iter().map(|v| self.utility(v)));
    }
}

impl ChoiceKernel for MnlParams {
    fn n_styles(&self) -> usize {
        self.style.len()
    }

    fn probabilities(&self, vehicles: &[VehicleProfile]) -> Vec<f64> {
        let mut u = Vec::new();
        self.utilities(vehicles, &mut u);
        let mut p = vec![0.0; vehicles.len() + 1];
        let n = vehicles.len();
        p[n] = logit(&u, &mut p[..n]);
        p
    }

    fn log_probabilities(&self, vehicles: &[VehicleProfile]) -> Vec<f64> {
        let mut u = Vec::new();
        self.utilities(vehicles, &mut u);
        let lse = log1p_sum_exp(&u);
        u.iter().map(|x| x - lse).chain([-lse]).collect()
    }

    fn profit(&self, vehicles: &[VehicleProfile], margins: &[f64]) -> ProfitGradient {
        let n = vehicles.len();
        let mut u = Vec::new();
        self.utilities(vehicles, &mut u);
        let mut p = vec![0.0; n];
        logit(&u, &mut p);
        let value: f64 = p.iter().zip(margins).map(|(a, b)| a * b).sum();
        let mut g = ProfitGradient::zeros(n);
        g.value = value;
        let price_coef = self.taste.log_price.exp();
        for (j, v) in vehicles.iter().enumerate() {
            let gu = p[j] * (margins[j] - value);
            g.price[j] = -price_coef * gu;
            g.mpg[j] = -self.taste.fuel / (v.mpg * v.mpg) * gu;
            g.accel[j] = -self.taste.accel / (v.accel * v.accel) * gu;
            g.margin[j] = p[j];
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::BodyStyle;

    #[test]
    fn identical_vehicles_split_evenly() {
        let m = MnlParams::new(TasteCoefficients::from_array([0.5, -10.0, 5.0, 1.0]), vec![0.2, -0.2]).unwrap();
        let v = VehicleProfile::new(25.0, 7.0, 2.0, BodyStyle(1));
        let p = m.probabilities(&[v, v]);
        assert_eq!(p[0], p[1]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unbalanced_effects() {
        let t = TasteCoefficients::from_array([0.0; 4]);
        assert!(MnlParams::new(t, vec![0.1, 0.0]).is_err());
        assert!(MnlParams::new(t, vec![0.1, -0.1]).is_ok());
    }

    #[test]
    fn free_round_trip() {
        let m = MnlParams::new(TasteCoefficients::from_array([0.1, -2.0, 3.0, 0.5]), vec![0.3, -0.5, 0.2]).unwrap();
        let x = m.to_free().unwrap();
        assert_eq!(x.len(), 6);
        let back = MnlParams::from_free(&x, 3);
        assert_eq!(back.taste, m.taste);
        for (a, b) in back.style.iter().zip(&m.style) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
