//! Mixtures of logits over consideration sets.
//!
//! When screening is over body style only, what matters about a rule in a
//! given vehicle list is which of the *present* styles it accepts. Rules are
//! therefore aggregated into at most `2^k` classes, `k` being the number of
//! distinct styles present, and every class is a logit over its vehicles plus
//! the outside good.

use crate::market::VehicleProfile;

/// Distinct styles of a vehicle list and each vehicle's compact slot.
#[derive(Debug, Clone)]
pub(crate) struct StyleSlots {
    styles: Vec<u8>,
    slot_of: Vec<usize>,
}

impl StyleSlots {
    pub fn new(vehicles: &[VehicleProfile]) -> Self {
        let mut styles: Vec<u8> = vehicles.iter().map(|v| v.style.0).collect();
        styles.sort_unstable();
        styles.dedup();
        let slot_of = vehicles
            .iter()
            .map(|v| styles.binary_search(&v.style.0).expect("style present"))
            .collect();
        Self { styles, slot_of }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.styles.len()
    }

    #[inline]
    pub fn n_classes(&self) -> usize {
        1usize << self.styles.len()
    }

    #[inline]
    pub fn slot(&self, vehicle: usize) -> usize {
        self.slot_of[vehicle]
    }

    /// Compact class of a full style mask: bit `s` set iff present style `s` is accepted.
    #[inline]
    pub fn compact(&self, mask: u32) -> usize {
        self.styles
            .iter()
            .enumerate()
            .fold(0, |acc, (s, &b)| if mask & (1 << b) != 0 { acc | (1 << s) } else { acc })
    }

    /// Sums rule masses into class weights.
    pub fn class_weights(&self, rules: impl IntoIterator<Item = (u32, f64)>) -> Vec<f64> {
        let mut w = vec![0.0; self.n_classes()];
        for (mask, mass) in rules {
            w[self.compact(mask)] += mass;
        }
        w
    }
}

/// Scratch buffers for evaluating a class mixture at one utility vector.
#[derive(Debug, Clone, Default)]
pub(crate) struct SubsetLogit {
    e_slot: Vec<f64>,
    em_slot: Vec<f64>,
    denom: Vec<f64>,
    numer: Vec<f64>,
    a_slot: Vec<f64>,
    b_slot: Vec<f64>,
}

impl SubsetLogit {
    fn reset(&mut self, k: usize) {
        let n = 1usize << k;
        for v in [&mut self.e_slot, &mut self.em_slot, &mut self.a_slot, &mut self.b_slot] {
            v.clear();
            v.resize(k, 0.0);
        }
        for v in [&mut self.denom, &mut self.numer] {
            v.clear();
            v.resize(n, 0.0);
        }
    }

    /// Choice probabilities. `ev[j] = exp(u_j - shift)` and `outside = exp(-shift)`.
    /// Writes vehicle probabilities to `probs` and returns the outside probability.
    pub fn probabilities(
        &mut self,
        slots: &StyleSlots,
        weights: &[f64],
        ev: &[f64],
        outside: f64,
        probs: &mut [f64],
    ) -> f64 {
        let k = slots.k();
        self.reset(k);
        for (j, &e) in ev.iter().enumerate() {
            self.e_slot[slots.slot(j)] += e;
        }
        self.denom[0] = outside;
        let mut p0 = 0.0;
        for c in 0..weights.len() {
            if c > 0 {
                let low = c.trailing_zeros() as usize;
                self.denom[c] = self.denom[c & (c - 1)] + self.e_slot[low];
            }
            let w = weights[c];
            if w == 0.0 {
                continue;
            }
            let inv = w / self.denom[c].max(f64::MIN_POSITIVE);
            p0 += inv * outside;
            let mut bits = c;
            while bits != 0 {
                let s = bits.trailing_zeros() as usize;
                self.a_slot[s] += inv;
                bits &= bits - 1;
            }
        }
        for (j, p) in probs.iter_mut().enumerate() {
            *p = ev[j] * self.a_slot[slots.slot(j)];
        }
        p0
    }

    /// Expected value `Σ_c w_c Σ_{j ∈ c ∪ {0}} P_{j|c} m_j` with `m0` the
    /// outside good's value, its gradient with respect to each vehicle's
    /// utility, and the choice probabilities. Returns `(value, outside_prob)`.
    #[allow(clippy::too_many_arguments)]
    pub fn value_gradient(
        &mut self,
        slots: &StyleSlots,
        weights: &[f64],
        ev: &[f64],
        outside: f64,
        values: &[f64],
        outside_value: f64,
        probs: &mut [f64],
        grad_u: &mut [f64],
    ) -> (f64, f64) {
        let k = slots.k();
        self.reset(k);
        for (j, &e) in ev.iter().enumerate() {
            let s = slots.slot(j);
            self.e_slot[s] += e;
            self.em_slot[s] += e * values[j];
        }
        self.denom[0] = outside;
        self.numer[0] = outside * outside_value;
        let (mut total, mut p0) = (0.0, 0.0);
        for c in 0..weights.len() {
            if c > 0 {
                let low = c.trailing_zeros() as usize;
                let prev = c & (c - 1);
                self.denom[c] = self.denom[prev] + self.e_slot[low];
                self.numer[c] = self.numer[prev] + self.em_slot[low];
            }
            let w = weights[c];
            if w == 0.0 {
                continue;
            }
            let d = self.denom[c].max(f64::MIN_POSITIVE);
            let inv = w / d;
            let class_value = self.numer[c] / d;
            total += w * class_value;
            p0 += inv * outside;
            let mut bits = c;
            while bits != 0 {
                let s = bits.trailing_zeros() as usize;
                self.a_slot[s] += inv;
                self.b_slot[s] += inv * class_value;
                bits &= bits - 1;
            }
        }
        for j in 0..ev.len() {
            let s = slots.slot(j);
            probs[j] = ev[j] * self.a_slot[s];
            grad_u[j] = ev[j] * (values[j] * self.a_slot[s] - self.b_slot[s]);
        }
        (total, p0)
    }

    /// Derivative of the expected value with respect to each class weight,
    /// valid after [`Self::value_gradient`]: the class-conditional value.
    pub fn class_values(&self, weights_len: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..weights_len).map(|c| self.numer[c] / self.denom[c].max(f64::MIN_POSITIVE)));
    }
}

/// Stabilized exponentials: returns `(exp(u_j - s), exp(-s))` with `s = max(0, max u)`.
pub(crate) fn shifted_exp(u: &[f64], ev: &mut Vec<f64>) -> f64 {
    let shift = u.iter().copied().fold(0.0f64, f64::max);
    ev.clear();
    ev.extend(u.iter().map(|&x| (x - shift).exp()));
    (-shift).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::BodyStyle;

    fn veh(style: u8) -> VehicleProfile {
        VehicleProfile::new(20.0, 8.0, 2.0, BodyStyle(style))
    }

    #[test]
    fn compact_classes_follow_present_styles() {
        let v = [veh(4), veh(1), veh(4)];
        let slots = StyleSlots::new(&v);
        assert_eq!(slots.k(), 2);
        assert_eq!(slots.slot(0), 1);
        assert_eq!(slots.slot(1), 0);
        assert_eq!(slots.compact(0b10010), 0b11);
        assert_eq!(slots.compact(0b00010), 0b01);
        assert_eq!(slots.compact(0b01000), 0);
    }

    #[test]
    fn brute_force_agreement() {
        let v = [veh(0), veh(1), veh(1), veh(2)];
        let slots = StyleSlots::new(&v);
        let u = [0.3, -1.0, 0.7, 2.0];
        let m = [1.0, 2.0, 0.5, -0.3];
        let weights: Vec<f64> = (0..8).map(|c| (c as f64 + 1.0) / 36.0).collect();
        let mut ev = Vec::new();
        let outside = shifted_exp(&u, &mut ev);
        let mut probs = vec![0.0; 4];
        let mut grad = vec![0.0; 4];
        let mut sl = SubsetLogit::default();
        let (val, p0) = sl.value_gradient(&slots, &weights, &ev, outside, &m, 0.25, &mut probs, &mut grad);

        let brute = |u: &[f64]| -> (Vec<f64>, f64, f64) {
            let mut p = vec![0.0; 4];
            let (mut p0, mut val) = (0.0, 0.0);
            for (c, w) in weights.iter().enumerate() {
                let inc: Vec<bool> = (0..4).map(|j| c & (1 << slots.slot(j)) != 0).collect();
                let d = 1.0 + (0..4).filter(|&j| inc[j]).map(|j| u[j].exp()).sum::<f64>();
                p0 += w / d;
                val += w * 0.25 / d;
                for j in 0..4 {
                    if inc[j] {
                        p[j] += w * u[j].exp() / d;
                        val += w * m[j] * u[j].exp() / d;
                    }
                }
            }
            (p, p0, val)
        };
        let (bp, bp0, bval) = brute(&u);
        assert!((p0 - bp0).abs() < 1e-14);
        assert!((val - bval).abs() < 1e-14);
        for j in 0..4 {
            assert!((probs[j] - bp[j]).abs() < 1e-14);
            let h = 1e-6;
            let mut up = u;
            up[j] += h;
            let mut dn = u;
            dn[j] -= h;
            let fd = (brute(&up).2 - brute(&dn).2) / (2.0 * h);
            assert!((grad[j] - fd).abs() < 1e-8, "{j}: {} vs {fd}", grad[j]);
        }
        let mut probs2 = vec![0.0; 4];
        let p0b = sl.probabilities(&slots, &weights, &ev, outside, &mut probs2);
        assert!((p0b - p0).abs() < 1e-15);
        assert_eq!(probs, probs2);
    }
}
