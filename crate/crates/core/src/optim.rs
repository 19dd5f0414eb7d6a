//! Limited-memory BFGS with a strong-Wolfe line search, for smooth
//! unconstrained minimization.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the largest gradient component falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the relative decrease over one iteration falls below this.
    pub value_tolerance: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 10, max_iterations: 500, gradient_tolerance: 1e-6, value_tolerance: 1e-14 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Value,
    MaxIterations,
    LineSearch,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl Minimum {
    /// Gradient or value criterion met.
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Gradient | Termination::Value)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

struct Objective<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Objective<F> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x, g);
        if v.is_finite() && g.iter().all(|x| x.is_finite()) {
            v
        } else {
            f64::INFINITY
        }
    }
}

/// Minimizes `f`, which returns the value at `x` and writes the gradient into its second argument.
pub fn minimize<F>(f: F, x0: &[f64], opts: &LbfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut obj = Objective { f, evaluations: 0 };
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = obj.eval(&x, &mut g);
    let finish = |x: Vec<f64>, value: f64, g: &[f64], iterations, evaluations, termination| Minimum {
        x,
        value,
        gradient_norm: inf_norm(g),
        iterations,
        evaluations,
        termination,
    };
    if !fx.is_finite() {
        return finish(x, fx, &g, 0, obj.evaluations, Termination::NonFinite);
    }
    if n == 0 || inf_norm(&g) <= opts.gradient_tolerance {
        return finish(x, fx, &g, 0, obj.evaluations, Termination::Gradient);
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut d = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory.max(1)];
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut retried = false;
    for iter in 1..=opts.max_iterations {
        // two-loop recursion
        d.iter_mut().zip(&g).for_each(|(d, g)| *d = -g);
        for (k, (s, y, rho)) in history.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[k] = a;
            d.iter_mut().zip(y).for_each(|(d, y)| *d -= a * y);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|d| *d *= gamma);
        } else {
            let scale = 1.0 / inf_norm(&g).max(1.0);
            d.iter_mut().for_each(|d| *d *= scale);
        }
        for (k, (s, y, rho)) in history.iter().enumerate() {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(d, s)| *d += (alpha_buf[k] - b) * s);
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            let scale = 1.0 / inf_norm(&g).max(1.0);
            d.iter_mut().zip(&g).for_each(|(d, g)| *d = -g * scale);
            slope = dot(&g, &d);
        }
        match line_search(&mut obj, &x, fx, slope, &d, &mut xn, &mut gn) {
            Some(fnew) => {
                retried = false;
                let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                let decrease = fx - fnew;
                std::mem::swap(&mut x, &mut xn);
                std::mem::swap(&mut g, &mut gn);
                fx = fnew;
                if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    if history.len() == opts.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                if inf_norm(&g) <= opts.gradient_tolerance {
                    return finish(x, fx, &g, iter, obj.evaluations, Termination::Gradient);
                }
                if decrease <= opts.value_tolerance * fx.abs().max(1.0) {
                    return finish(x, fx, &g, iter, obj.evaluations, Termination::Value);
                }
            }
            None => {
                if retried || history.is_empty() {
                    return finish(x, fx, &g, iter, obj.evaluations, Termination::LineSearch);
                }
                retried = true;
                history.clear();
            }
        }
    }
    finish(x, fx, &g, opts.max_iterations, obj.evaluations, Termination::MaxIterations)
}

/// Strong-Wolfe line search (bracketing then zoom with safeguarded cubic
/// interpolation). Returns the accepted value with the point and gradient
/// written to `xn` and `gn`.
fn line_search<F>(
    obj: &mut Objective<F>,
    x: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    xn: &mut [f64],
    gn: &mut [f64],
) -> Option<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    const MAX_EVALS: usize = 40;

    let phi = |obj: &mut Objective<F>, t: f64, xn: &mut [f64], gn: &mut [f64]| -> (f64, f64) {
        for i in 0..x.len() {
            xn[i] = x[i] + t * d[i];
        }
        let v = obj.eval(xn, gn);
        (v, if v.is_finite() { dot(gn, d) } else { f64::NAN })
    };

    let (mut t_prev, mut f_prev, mut s_prev) = (0.0, f0, slope0);
    let mut t = 1.0;
    let mut evals = 0;
    let (mut lo, mut hi);
    loop {
        evals += 1;
        let (ft, st) = phi(obj, t, xn, gn);
        if !ft.is_finite() {
            // shrink into the finite region
            hi = (t, ft, st);
            lo = (t_prev, f_prev, s_prev);
            if evals >= MAX_EVALS {
                return None;
            }
            break;
        }
        if ft > f0 + C1 * t * slope0 || (evals > 1 && ft >= f_prev) {
            lo = (t_prev, f_prev, s_prev);
            hi = (t, ft, st);
            break;
        }
        if st.abs() <= -C2 * slope0 {
            return Some(ft);
        }
        if st >= 0.0 {
            lo = (t, ft, st);
            hi = (t_prev, f_prev, s_prev);
            break;
        }
        if evals >= MAX_EVALS {
            return None;
        }
        t_prev = t;
        f_prev = ft;
        s_prev = st;
        t *= 4.0;
    }
    // zoom
    while evals < MAX_EVALS {
        evals += 1;
        let (tl, fl, sl) = lo;
        let (th, fh, sh) = hi;
        let width = (th - tl).abs();
        let mut tj = if fh.is_finite() && sh.is_finite() { cubic_min(tl, fl, sl, th, fh, sh) } else { f64::NAN };
        let (a, b) = if tl < th { (tl, th) } else { (th, tl) };
        if !tj.is_finite() || tj <= a + 0.1 * width || tj >= b - 0.1 * width {
            tj = 0.5 * (tl + th);
        }
        if width < 1e-16 * tl.abs().max(1.0) {
            return None;
        }
        let (fj, sj) = phi(obj, tj, xn, gn);
        if !fj.is_finite() || fj > f0 + C1 * tj * slope0 || fj >= fl {
            hi = (tj, fj, sj);
        } else {
            if sj.abs() <= -C2 * slope0 {
                return Some(fj);
            }
            if sj * (th - tl) >= 0.0 {
                hi = lo;
            }
            lo = (tj, fj, sj);
        }
    }
    // Accept the best sufficient-decrease point found, if any.
    let (tl, fl, _) = lo;
    if tl > 0.0 && fl < f0 {
        let (fj, _) = phi(obj, tl, xn, gn);
        return Some(fj);
    }
    None
}

fn cubic_min(t0: f64, f0: f64, s0: f64, t1: f64, f1: f64, s1: f64) -> f64 {
    let d1 = s0 + s1 - 3.0 * (f0 - f1) / (t0 - t1);
    let disc = d1 * d1 - s0 * s1;
    if disc < 0.0 {
        return f64::NAN;
    }
    let d2 = disc.sqrt().copysign(t1 - t0);
    t1 - (t1 - t0) * (s1 + d2 - d1) / (s1 - s0 + 2.0 * d2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let m = minimize(f, &[-1.2, 1.0], &LbfgsOptions { gradient_tolerance: 1e-10, ..Default::default() });
        assert!(m.converged(), "{:?}", m.termination);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn quadratic_in_many_dimensions() {
        let n = 50;
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..x.len() {
                let c = (i + 1) as f64;
                v += 0.5 * c * (x[i] - 1.0).powi(2);
                g[i] = c * (x[i] - 1.0);
            }
            v
        };
        let opts = LbfgsOptions { gradient_tolerance: 1e-9, value_tolerance: 0.0, ..Default::default() };
        let m = minimize(f, &vec![0.0; n], &opts);
        assert!(m.converged());
        assert!(m.x.iter().all(|v| (v - 1.0).abs() < 1e-8), "{m:?}");
    }

    #[test]
    fn recovers_from_infinite_region() {
        // log barrier: infinite for x <= 0
        let f = |x: &[f64], g: &mut [f64]| {
            if x[0] <= 0.0 {
                return f64::INFINITY;
            }
            g[0] = 1.0 - 1.0 / x[0];
            x[0] - x[0].ln()
        };
        let m = minimize(f, &[5.0], &LbfgsOptions { gradient_tolerance: 1e-10, ..Default::default() });
        assert!((m.x[0] - 1.0).abs() < 1e-8, "{:?}", m);
    }
}
