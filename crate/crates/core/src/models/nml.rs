use serde::{Deserialize, Serialize};

use super::{check_effects, effects_from_free, log1p_sum_exp, logistic, ChoiceKernel, ProfitGradient, TASTE_DIM};
use crate::error::{Error, Result};
use crate::market::VehicleProfile;
use crate::population::TasteCoefficients;

/// Default upper bound on nest scale parameters.
pub const DEFAULT_LAMBDA_MAX: f64 = 10.0;

/// Nested logit (Daly form) with one nest per body style. Within a nest only
/// price, fuel economy and acceleration matter; the constant, style effect
/// and scaled inclusive value decide between nests and the outside good.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmlParams {
    pub taste: TasteCoefficients,
    pub style: Vec<f64>,
    pub scale: Vec<f64>,
    pub lambda_max: f64,
}

/// Per-nest quantities at one vehicle list.
#[derive(Debug, Default, Clone)]
pub(crate) struct NestEval {
    /// Within-nest conditional probability of each vehicle.
    pub q: Vec<f64>,
    /// Nest of each vehicle (style index).
    pub nest: Vec<usize>,
    /// Inclusive value per style (only meaningful for occupied nests).
    pub incl: Vec<f64>,
    /// Probability of each nest; zero for empty nests.
    pub pn: Vec<f64>,
    pub occupied: Vec<bool>,
    pub outside: f64,
}

impl NmlParams {
    pub fn new(taste: TasteCoefficients, style: Vec<f64>, scale: Vec<f64>, lambda_max: f64) -> Result<Self> {
        let p = Self { taste, style, scale, lambda_max };
        p.validate()?;
        Ok(p)
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
        check_effects(&self.style, self.style.len(), "NML style effects")?;
        if !(self.lambda_max.is_finite() && self.lambda_max > 0.0) {
            return Err(Error::InvalidParameters(format!("invalid lambda cap {}", self.lambda_max)));
        }
        if self.scale.len() != self.style.len() {
            return Err(Error::InvalidParameters("one nest scale per body style required".into()));
        }
        if self.scale.iter().any(|&l| !(l > 0.0 && l <= self.lambda_max)) {
            return Err(Error::InvalidParameters(format!(
                "nest scales must lie in (0, {}]",
                self.lambda_max
            )));
        }
        Ok(())
    }

    pub(crate) fn from_free(x: &[f64], n_styles: usize, lambda_max: f64) -> Self {
        let b = n_styles;
        Self {
            taste: TasteCoefficients::from_array([x[0], x[1], x[2], x[3]]),
            style: effects_from_free(&x[TASTE_DIM..TASTE_DIM + b - 1], b),
            scale: x[TASTE_DIM + b - 1..TASTE_DIM + 2 * b - 1]
                .iter()
                .map(|&r| (lambda_max * logistic(r)).max(f64::MIN_POSITIVE))
                .collect(),
            lambda_max,
        }
    }

    /// Free coordinates; a scale equal to the cap maps to a large finite logit.
    pub(crate) fn to_free(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut x = self.taste.to_array().to_vec();
        x.extend_from_slice(&self.style[..self.style.len() - 1]);
        x.extend(self.scale.iter().map(|&l| {
            let f = (l / self.lambda_max).clamp(1e-15, 1.0 - 1e-15);
            (f / (1.0 - f)).ln()
        }));
        Ok(x)
    }

    #[inline]
    pub(crate) fn within_utility(&self, v: &VehicleProfile) -> f64 {
        -self.taste.log_price.exp() * v.price + self.taste.fuel / v.mpg + self.taste.accel / v.accel
    }

    pub(crate) fn evaluate(&self, vehicles: &[VehicleProfile], u: &[f64], ev: &mut NestEval) {
        let b = self.style.len();
        ev.nest.clear();
        ev.nest.extend(vehicles.iter().map(|v| v.style.index()));
        let mut peak = vec![f64::NEG_INFINITY; b];
        for (&n, &x) in ev.nest.iter().zip(u) {
            peak[n] = peak[n].max(x);
        }
        let mut sum = vec![0.0; b];
        for (&n, &x) in ev.nest.iter().zip(u) {
            sum[n] += (x - peak[n]).exp();
        }
        ev.occupied.clear();
        ev.occupied.extend(peak.iter().map(|p| p.is_finite()));
        ev.incl.clear();
        ev.incl.extend((0..b).map(|n| if ev.occupied[n] { peak[n] + sum[n].ln() } else { 0.0 }));
        ev.q.clear();
        ev.q.extend(ev.nest.iter().zip(u).map(|(&n, &x)| (x - ev.incl[n]).exp()));

        let z: Vec<f64> = (0..b)
            .map(|n| self.taste.constant + self.style[n] + self.scale[n] * ev.incl[n])
            .collect();
        let shift = (0..b).filter(|&n| ev.occupied[n]).map(|n| z[n]).fold(0.0f64, f64::max);
        let outside = (-shift).exp();
        let mut denom = outside;
        ev.pn.clear();
        for n in 0..b {
            let e = if ev.occupied[n] { (z[n] - shift).exp() } else { 0.0 };
            ev.pn.push(e);
            denom += e;
        }
        ev.pn.iter_mut().for_each(|p| *p /= denom);
        ev.outside = outside / denom;
    }
}

impl ChoiceKernel for NmlParams {
    fn n_styles(&self) -> usize {
        self.style.len()
    }

    fn probabilities(&self, vehicles: &[VehicleProfile]) -> Vec<f64> {
        let u: Vec<f64> = vehicles.iter().map(|v| self.within_utility(v)).collect();
        let mut ev = NestEval::default();
        self.evaluate(vehicles, &u, &mut ev);
        let mut p: Vec<f64> = (0..vehicles.len()).map(|j| ev.q[j] * ev.pn[ev.nest[j]]).collect();
        p.push(ev.outside);
        p
    }

    fn log_probabilities(&self, vehicles: &[VehicleProfile]) -> Vec<f64> {
        let u: Vec<f64> = vehicles.iter().map(|v| self.within_utility(v)).collect();
        let mut ev = NestEval::default();
        self.evaluate(vehicles, &u, &mut ev);
        let z: Vec<f64> = (0..self.style.len())
            .map(|k| self.taste.constant + self.style[k] + self.scale[k] * ev.incl[k])
            .collect();
        let occupied: Vec<f64> = z.iter().zip(&ev.occupied).filter(|(_, &o)| o).map(|(&x, _)| x).collect();
        let lse = log1p_sum_exp(&occupied);
        let mut out: Vec<f64> = u.iter().zip(&ev.nest).map(|(&x, &k)| x - ev.incl[k] + z[k] - lse).collect();
        out.push(-lse);
        out
    }

    fn profit(&self, vehicles: &[VehicleProfile], margins: &[f64]) -> ProfitGradient {
        let n = vehicles.len();
        let u: Vec<f64> = vehicles.iter().map(|v| self.within_utility(v)).collect();
        let mut ev = NestEval::default();
        self.evaluate(vehicles, &u, &mut ev);
        let b = self.style.len();
        let mut nest_margin = vec![0.0; b];
        for j in 0..n {
            nest_margin[ev.nest[j]] += ev.q[j] * margins[j];
        }
        let value: f64 = (0..b).map(|k| ev.pn[k] * nest_margin[k]).sum();
        let mut g = ProfitGradient::zeros(n);
        g.value = value;
        let pc = self.taste.log_price.exp();
        for (j, v) in vehicles.iter().enumerate() {
            let k = ev.nest[j];
            let pb = ev.pn[k];
            let gu = pb * ev.q[j] * (margins[j] - nest_margin[k])
                + self.scale[k] * ev.q[j] * pb * (nest_margin[k] - value);
            g.price[j] = -pc * gu;
            g.mpg[j] = -self.taste.fuel / (v.mpg * v.mpg) * gu;
            g.accel[j] = -self.taste.accel / (v.accel * v.accel) * gu;
            g.margin[j] = ev.q[j] * pb;
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MnlParams;
    use crate::population::BodyStyle;

    fn params(scale: f64) -> NmlParams {
        NmlParams::new(
            TasteCoefficients::from_array([0.3, -20.0, 8.0, 0.5]),
            vec![0.4, -0.1, -0.3],
            vec![scale; 3],
            DEFAULT_LAMBDA_MAX,
        )
        .unwrap()
    }

    fn vehicles() -> Vec<VehicleProfile> {
        vec![
            VehicleProfile::new(20.0, 7.0, 1.5, BodyStyle(0)),
            VehicleProfile::new(35.0, 9.0, 2.5, BodyStyle(0)),
            VehicleProfile::new(28.0, 6.0, 3.0, BodyStyle(2)),
        ]
    }

    #[test]
    fn unit_scales_collapse_to_logit() {
        let nml = params(1.0);
        let mnl = MnlParams::new(nml.taste, nml.style.clone()).unwrap();
        let a = nml.probabilities(&vehicles());
        let b = mnl.probabilities(&vehicles());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn within_nest_shares_are_plain_logit() {
        let nml = params(0.3);
        let v = &vehicles()[..2];
        let p = nml.probabilities(v);
        let u: Vec<f64> = v.iter().map(|x| nml.within_utility(x)).collect();
        let expect = u[0].exp() / (u[0].exp() + u[1].exp());
        assert!((p[0] / (p[0] + p[1]) - expect).abs() < 1e-14);
    }

    #[test]
    fn free_round_trip() {
        let nml = params(2.5);
        let back = NmlParams::from_free(&nml.to_free().unwrap(), 3, DEFAULT_LAMBDA_MAX);
        for (a, b) in back.scale.iter().zip(&nml.scale) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_out_of_range_rejected() {
        let t = TasteCoefficients::from_array([0.0; 4]);
        assert!(NmlParams::new(t, vec![0.0; 2], vec![0.0, 1.0], 10.0).is_err());
        assert!(NmlParams::new(t, vec![0.0; 2], vec![11.0, 1.0], 10.0).is_err());
    }
}
