//! Share log-likelihood `Σ_m Σ_j S_jm log P_jm` and its gradient in the
//! unconstrained coordinates of each family.

use rayon::prelude::*;

use super::rcl::draw_utility;
use super::{effects_grad, log1p_sum_exp, logit, ChoiceModel, ModelShape, TASTE_DIM};
use crate::consideration::{shifted_exp, StyleSlots, SubsetLogit};
use crate::error::{Error, Result};
use crate::market::{Market, MarketData, ShareData};

use super::nml::NestEval;

/// Markets per parallel work unit. Fixed so the reduction order does not
/// depend on the thread count.
const CHUNK: usize = 8;

/// Value of the log-likelihood. `zero_probability` is set when some
/// alternative with positive observed share has model probability 0, in
/// which case `value` is `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    pub zero_probability: bool,
}

struct CtcMarket {
    slots: StyleSlots,
    class_of_rule: Vec<u16>,
}

/// Log-likelihood of a fixed data set as a function of free parameters.
pub struct Likelihood<'a> {
    shape: ModelShape,
    data: &'a MarketData,
    ctc: Vec<CtcMarket>,
}

impl<'a> Likelihood<'a> {
    pub fn new(shape: ModelShape, data: &'a MarketData) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Precondition("log-likelihood needs at least one market".into()));
        }
        let b = shape.n_styles();
        for m in &data.markets {
            super::check_vehicles(&m.vehicles, b)?;
        }
        for s in &data.shares {
            s.validate()?;
        }
        let ctc = if let ModelShape::Ctc { n_styles } = shape {
            let r = (1u32 << n_styles) - 1;
            data.markets
                .iter()
                .map(|m| {
                    let slots = StyleSlots::new(&m.vehicles);
                    let class_of_rule = (1..=r).map(|mask| slots.compact(mask) as u16).collect();
                    CtcMarket { slots, class_of_rule }
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self { shape, data, ctc })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    fn full_dim(&self) -> usize {
        let b = self.shape.n_styles();
        match self.shape {
            ModelShape::Mnl { .. } => TASTE_DIM + b,
            ModelShape::Rcl { .. } => 2 * (TASTE_DIM + b),
            ModelShape::Nml { .. } => TASTE_DIM + 2 * b,
            ModelShape::Ctc { .. } => TASTE_DIM + (1 << b) - 1,
        }
    }

    /// Log-likelihood at free parameters `x`; writes the gradient into `grad` when given.
    pub fn evaluate(&self, x: &[f64], grad: Option<&mut [f64]>) -> Result<LogLikelihood> {
        let model = self.shape.decode(x)?;
        Ok(self.evaluate_model(&model, grad.map(|g| (x, g))))
    }

    fn evaluate_model(&self, model: &ChoiceModel, grad: Option<(&[f64], &mut [f64])>) -> LogLikelihood {
        let want = grad.is_some();
        let full_dim = if want { self.full_dim() } else { 0 };
        let n = self.data.len();
        let parts: Vec<(f64, bool, Vec<f64>)> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut g = vec![0.0; full_dim];
                let mut ll = 0.0;
                let mut zero = false;
                let mut scratch = Scratch::default();
                for m in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let (v, z) = self.market(model, m, want.then_some(&mut g[..]), &mut scratch);
                    ll += v;
                    zero |= z;
                }
                (ll, zero, g)
            })
            .collect();
        let (value, zero, full) = pairwise(parts);
        if let Some((x, out)) = grad {
            self.free_gradient(model, x, &full, out);
        }
        LogLikelihood { value: if zero { f64::NEG_INFINITY } else { value }, zero_probability: zero }
    }

    fn market(&self, model: &ChoiceModel, m: usize, grad: Option<&mut [f64]>, s: &mut Scratch) -> (f64, bool) {
        let market = &self.data.markets[m];
        let shares = &self.data.shares[m];
        match model {
            ChoiceModel::Mnl(p) => mnl_market(p, market, shares, grad, s),
            ChoiceModel::Rcl(r) => rcl_market(r, market, shares, grad, s),
            ChoiceModel::Nml(p) => nml_market(p, market, shares, grad, s),
            ChoiceModel::Ctc(p) => ctc_market(p, market, shares, &self.ctc[m], grad, s),
        }
    }

    fn free_gradient(&self, model: &ChoiceModel, x: &[f64], full: &[f64], out: &mut [f64]) {
        let b = self.shape.n_styles();
        out[..TASTE_DIM].copy_from_slice(&full[..TASTE_DIM]);
        match model {
            ChoiceModel::Mnl(_) => effects_grad(&full[TASTE_DIM..], &mut out[TASTE_DIM..]),
            ChoiceModel::Rcl(_) => {
                let k = TASTE_DIM + b;
                effects_grad(&full[TASTE_DIM..k], &mut out[TASTE_DIM..k - 1]);
                for l in 0..k {
                    let sign = if x[k - 1 + l] >= 0.0 { 1.0 } else { -1.0 };
                    out[k - 1 + l] = full[k + l] * sign;
                }
            }
            ChoiceModel::Nml(p) => {
                effects_grad(&full[TASTE_DIM..TASTE_DIM + b], &mut out[TASTE_DIM..TASTE_DIM + b - 1]);
                for n in 0..b {
                    let l = p.scale[n];
                    out[TASTE_DIM + b - 1 + n] = full[TASTE_DIM + b + n] * l * (1.0 - l / p.lambda_max);
                }
            }
            ChoiceModel::Ctc(p) => {
                let g = &full[TASTE_DIM..];
                let mean: f64 = p.alpha.iter().zip(g).map(|(a, g)| a * g).sum();
                for r in 0..p.alpha.len() - 1 {
                    out[TASTE_DIM + r] = p.alpha[r] * (g[r] - mean);
                }
            }
        }
    }
}

/// Log-likelihood of `data` under a fully specified model.
pub fn log_likelihood(model: &ChoiceModel, data: &MarketData) -> Result<LogLikelihood> {
    model.validate()?;
    let lik = Likelihood::new(model.shape(), data)?;
    Ok(lik.evaluate_model(model, None))
}

/// Sums chunk results in a fixed binary-tree order.
fn pairwise(mut parts: Vec<(f64, bool, Vec<f64>)>) -> (f64, bool, Vec<f64>) {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some((a, za, mut ga)) = it.next() {
            if let Some((b, zb, gb)) = it.next() {
                ga.iter_mut().zip(&gb).for_each(|(x, y)| *x += y);
                next.push((a + b, za || zb, ga));
            } else {
                next.push((a, za, ga));
            }
        }
        parts = next;
    }
    parts.pop().unwrap_or((0.0, false, Vec::new()))
}

#[derive(Default)]
struct Scratch {
    u: Vec<f64>,
    p: Vec<f64>,
    g: Vec<f64>,
    ev: Vec<f64>,
    w: Vec<f64>,
    coef: Vec<f64>,
    probs_by_draw: Vec<f64>,
    nest: NestEval,
    subset: SubsetLogit,
    class_values: Vec<f64>,
}

#[inline]
fn share_term(s: f64, p: f64, zero: &mut bool) -> f64 {
    if s <= 0.0 {
        0.0
    } else if p > 0.0 {
        s * p.ln()
    } else {
        *zero = true;
        0.0
    }
}

/// Accumulates `Σ_j g_j ∂u_j/∂(θp, θe, θa, θ0)` for the common utility form.
#[inline]
fn taste_chain(grad: &mut [f64], price_coef: f64, market: &Market, gu: &[f64]) {
    for (v, &g) in market.vehicles.iter().zip(gu) {
        grad[0] -= g * price_coef * v.price;
        grad[1] += g / v.mpg;
        grad[2] += g / v.accel;
        grad[3] += g;
    }
}

fn mnl_market(
    p: &super::MnlParams,
    market: &Market,
    shares: &ShareData,
    grad: Option<&mut [f64]>,
    s: &mut Scratch,
) -> (f64, bool) {
    p.utilities(&market.vehicles, &mut s.u);
    let lse = log1p_sum_exp(&s.u);
    let mut ll = -shares.outside * lse;
    for (sj, uj) in shares.vehicles.iter().zip(&s.u) {
        if *sj > 0.0 {
            ll += sj * (uj - lse);
        }
    }
    if let Some(grad) = grad {
        let total = shares.total();
        s.g.clear();
        s.g.extend(s.u.iter().zip(&shares.vehicles).map(|(u, sj)| sj - total * (u - lse).exp()));
        taste_chain(grad, p.taste.log_price.exp(), market, &s.g);
        for (v, g) in market.vehicles.iter().zip(&s.g) {
            grad[TASTE_DIM + v.style.index()] += g;
        }
    }
    (ll, !ll.is_finite())
}

fn rcl_market(
    r: &super::RclModel,
    market: &Market,
    shares: &ShareData,
    grad: Option<&mut [f64]>,
    s: &mut Scratch,
) -> (f64, bool) {
    let n = market.len();
    let count = r.draws.count();
    let k = r.params.mean.len();
    let inv = 1.0 / count as f64;
    s.coef.resize(k, 0.0);
    s.u.resize(n, 0.0);
    s.probs_by_draw.resize(count * (n + 1), 0.0);
    s.p.clear();
    s.p.resize(n + 1, 0.0);
    for i in 0..count {
        r.coefficients(i, &mut s.coef);
        let pc = s.coef[0].exp();
        for (uj, v) in s.u.iter_mut().zip(&market.vehicles) {
            *uj = draw_utility(&s.coef, pc, v);
        }
        let row = &mut s.probs_by_draw[i * (n + 1)..(i + 1) * (n + 1)];
        row[n] = logit(&s.u, &mut row[..n]);
        for (a, b) in s.p.iter_mut().zip(row.iter()) {
            *a += b * inv;
        }
    }
    let mut zero = false;
    let mut ll = share_term(shares.outside, s.p[n], &mut zero);
    for j in 0..n {
        ll += share_term(shares.vehicles[j], s.p[j], &mut zero);
    }
    if let Some(grad) = grad {
        s.w.clear();
        s.w.extend((0..=n).map(|j| {
            let sj = if j < n { shares.vehicles[j] } else { shares.outside };
            if sj > 0.0 && s.p[j] > 0.0 {
                sj / s.p[j]
            } else {
                0.0
            }
        }));
        let mut dl = vec![0.0; k];
        for i in 0..count {
            let row = &s.probs_by_draw[i * (n + 1)..(i + 1) * (n + 1)];
            let avg: f64 = row.iter().zip(&s.w).map(|(p, w)| p * w).sum();
            r.coefficients(i, &mut s.coef);
            let pc = s.coef[0].exp();
            dl.iter_mut().for_each(|d| *d = 0.0);
            for (j, v) in market.vehicles.iter().enumerate() {
                let h = inv * row[j] * (s.w[j] - avg);
                dl[0] -= h * pc * v.price;
                dl[1] += h / v.mpg;
                dl[2] += h / v.accel;
                dl[3] += h;
                dl[TASTE_DIM + v.style.index()] += h;
            }
            let z = r.draws.row(i);
            for l in 0..k {
                grad[l] += dl[l];
                grad[k + l] += dl[l] * z[l];
            }
        }
    }
    (if zero { f64::NEG_INFINITY } else { ll }, zero)
}

fn nml_market(
    p: &super::NmlParams,
    market: &Market,
    shares: &ShareData,
    grad: Option<&mut [f64]>,
    s: &mut Scratch,
) -> (f64, bool) {
    let b = p.n_styles();
    s.u.clear();
    s.u.extend(market.vehicles.iter().map(|v| p.within_utility(v)));
    p.evaluate(&market.vehicles, &s.u, &mut s.nest);
    let ev = &s.nest;
    let mut zero = false;
    let mut ll = share_term(shares.outside, ev.outside, &mut zero);
    for (j, &sj) in shares.vehicles.iter().enumerate() {
        if sj > 0.0 {
            let pb = ev.pn[ev.nest[j]];
            if pb > 0.0 {
                ll += sj * (s.u[j] - ev.incl[ev.nest[j]] + pb.ln());
            } else {
                zero = true;
            }
        }
    }
    if let Some(grad) = grad {
        let total = shares.total();
        let mut nest_share = vec![0.0; b];
        for (j, &sj) in shares.vehicles.iter().enumerate() {
            nest_share[ev.nest[j]] += sj;
        }
        let gz: Vec<f64> = (0..b)
            .map(|n| if ev.occupied[n] { nest_share[n] - total * ev.pn[n] } else { 0.0 })
            .collect();
        s.g.clear();
        s.g.extend((0..market.len()).map(|j| {
            let n = ev.nest[j];
            shares.vehicles[j] - nest_share[n] * ev.q[j] + gz[n] * p.scale[n] * ev.q[j]
        }));
        let pc = p.taste.log_price.exp();
        for (v, &g) in market.vehicles.iter().zip(&s.g) {
            grad[0] -= g * pc * v.price;
            grad[1] += g / v.mpg;
            grad[2] += g / v.accel;
        }
        for n in 0..b {
            grad[3] += gz[n];
            grad[TASTE_DIM + n] += gz[n];
            grad[TASTE_DIM + b + n] += gz[n] * ev.incl[n];
        }
    }
    (if zero { f64::NEG_INFINITY } else { ll }, zero)
}

fn ctc_market(
    p: &super::CtcParams,
    market: &Market,
    shares: &ShareData,
    pre: &CtcMarket,
    grad: Option<&mut [f64]>,
    s: &mut Scratch,
) -> (f64, bool) {
    let n = market.len();
    let mut weights = vec![0.0; pre.slots.n_classes()];
    for (&c, &a) in pre.class_of_rule.iter().zip(&p.alpha) {
        weights[c as usize] += a;
    }
    s.u.clear();
    s.u.extend(market.vehicles.iter().map(|v| p.taste.utility(v.mpg, v.accel, v.price)));
    let outside = shifted_exp(&s.u, &mut s.ev);
    s.p.resize(n, 0.0);
    let p0 = s.subset.probabilities(&pre.slots, &weights, &s.ev, outside, &mut s.p);
    let mut zero = false;
    let mut ll = share_term(shares.outside, p0, &mut zero);
    for j in 0..n {
        ll += share_term(shares.vehicles[j], s.p[j], &mut zero);
    }
    if let Some(grad) = grad {
        let ratio = |sh: f64, pr: f64| if sh > 0.0 && pr > 0.0 { sh / pr } else { 0.0 };
        s.w.clear();
        s.w.extend((0..n).map(|j| ratio(shares.vehicles[j], s.p[j])));
        let w0 = ratio(shares.outside, p0);
        s.g.resize(n, 0.0);
        let mut probs = std::mem::take(&mut s.p);
        s.subset.value_gradient(&pre.slots, &weights, &s.ev, outside, &s.w, w0, &mut probs, &mut s.g);
        s.p = probs;
        taste_chain(grad, p.taste.log_price.exp(), market, &s.g);
        s.subset.class_values(weights.len(), &mut s.class_values);
        for (r, &c) in pre.class_of_rule.iter().enumerate() {
            grad[TASTE_DIM + r] += s.class_values[c as usize];
        }
    }
    (if zero { f64::NEG_INFINITY } else { ll }, zero)
}
