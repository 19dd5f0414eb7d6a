use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inner::{inner_optimize, InnerResult};
use super::{Design, DesignOptions};
use crate::engineering::EngineeringConfig;
use crate::error::{Error, Result};
use crate::models::ChoiceKernel;
use crate::population::BodyStyle;
use crate::seed::{mix, rng_from, Rng};

/// One slot per body style; 0 is empty, `k` is style `k - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chromosome(pub Vec<u8>);

impl Chromosome {
    /// Sorted styles of the non-empty slots.
    pub fn multiset(&self) -> Vec<BodyStyle> {
        let mut s: Vec<BodyStyle> = self.0.iter().filter(|&&g| g > 0).map(|&g| BodyStyle(g - 1)).collect();
        s.sort_unstable();
        s
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&g| g == 0)
    }

    fn repair(&mut self, rng: &mut Rng) {
        if self.is_empty() {
            let b = self.0.len();
            let slot = rng.random_range(0..b);
            self.0[slot] = rng.random_range(1..=b as u8);
        }
    }

    fn random(b: usize, rng: &mut Rng) -> Self {
        let mut c = Chromosome(
            (0..b).map(|_| if rng.random_bool(0.5) { 0 } else { rng.random_range(1..=b as u8) }).collect(),
        );
        c.repair(rng);
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GaDiagnostics {
    pub generations: usize,
    /// Distinct style multisets optimized.
    pub evaluations: usize,
    pub converged: bool,
    /// Best and mean fitness per generation.
    pub history: Vec<(f64, f64)>,
    pub inner_failures: usize,
    pub price_cap_hits: usize,
}

/// Inner-problem results memoized by style multiset.
pub struct FitnessCache<'a> {
    kernel: &'a dyn ChoiceKernel,
    cfg: &'a EngineeringConfig,
    options: &'a DesignOptions,
    memo: Mutex<HashMap<Vec<BodyStyle>, Option<InnerResult>>>,
    evaluations: AtomicUsize,
}

impl<'a> FitnessCache<'a> {
    pub fn new(kernel: &'a dyn ChoiceKernel, cfg: &'a EngineeringConfig, options: &'a DesignOptions) -> Self {
        Self { kernel, cfg, options, memo: Mutex::new(HashMap::new()), evaluations: AtomicUsize::new(0) }
    }

    /// Inner-problem solves performed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    fn solve(&self, styles: &[BodyStyle]) -> Option<InnerResult> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        inner_optimize(self.kernel, self.cfg, styles, self.options).ok()
    }

    /// Solves every multiset not yet cached, in parallel.
    pub fn fill(&self, chromosomes: &[Chromosome]) {
        let mut pending: Vec<Vec<BodyStyle>> = Vec::new();
        {
            let memo = self.memo.lock().expect("cache lock");
            for c in chromosomes {
                let key = c.multiset();
                if !memo.contains_key(&key) && !pending.contains(&key) {
                    pending.push(key);
                }
            }
        }
        let solved: Vec<_> = pending.into_par_iter().map(|k| (self.solve(&k), k)).collect();
        let mut memo = self.memo.lock().expect("cache lock");
        for (r, k) in solved {
            memo.insert(k, r);
        }
    }

    /// Model profit of a chromosome's optimized portfolio; `-inf` if its inner problem failed.
    pub fn fitness(&self, c: &Chromosome) -> f64 {
        let key = c.multiset();
        if let Some(r) = self.memo.lock().expect("cache lock").get(&key) {
            return r.as_ref().map_or(f64::NEG_INFINITY, |r| r.model_profit);
        }
        let r = self.solve(&key);
        let f = r.as_ref().map_or(f64::NEG_INFINITY, |r| r.model_profit);
        self.memo.lock().expect("cache lock").insert(key, r);
        f
    }

    pub fn result(&self, c: &Chromosome) -> Option<InnerResult> {
        self.memo.lock().expect("cache lock").get(&c.multiset()).cloned().flatten()
    }

    fn failures(&self) -> (usize, usize) {
        let memo = self.memo.lock().expect("cache lock");
        let failed = memo.values().filter(|r| r.is_none()).count();
        let capped = memo.values().flatten().filter(|r| r.price_cap_active).count();
        (failed, capped)
    }
}

fn tournament<'c>(pop: &'c [Chromosome], fit: &[f64], k: usize, rng: &mut Rng) -> &'c Chromosome {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..k {
        let i = rng.random_range(0..pop.len());
        if fit[i] > fit[best] {
            best = i;
        }
    }
    &pop[best]
}

/// Genetic search over body-style multisets with fitness given by the
/// inner problem under `kernel`.
pub fn outer_optimize(
    kernel: &dyn ChoiceKernel,
    cfg: &EngineeringConfig,
    options: &DesignOptions,
) -> Result<Design> {
    options.validate()?;
    let b = kernel.n_styles();
    if cfg.n_styles() != b {
        return Err(Error::invalid(format!(
            "engineering config has {} styles, choice model {b}",
            cfg.n_styles()
        )));
    }
    let ga = &options.ga;
    let mutation = ga.mutation_rate.unwrap_or(1.0 / b as f64);
    let cache = FitnessCache::new(kernel, cfg, options);
    let mut rng = rng_from(mix(&[options.seed, 0x6761]));
    let mut pop: Vec<Chromosome> = (0..ga.population).map(|_| Chromosome::random(b, &mut rng)).collect();
    let mut diag = GaDiagnostics::default();
    let mut best: Option<(Chromosome, f64)> = None;
    let mut last_improvement = 0;
    for generation in 0..ga.max_generations {
        cache.fill(&pop);
        let fit: Vec<f64> = pop.iter().map(|c| cache.fitness(c)).collect();
        for (c, &f) in pop.iter().zip(&fit) {
            if best.as_ref().is_none_or(|(_, bf)| f > *bf) {
                best = Some((c.clone(), f));
                last_improvement = generation;
            }
        }
        let finite: Vec<f64> = fit.iter().copied().filter(|f| f.is_finite()).collect();
        let mean = if finite.is_empty() { f64::NAN } else { finite.iter().sum::<f64>() / finite.len() as f64 };
        let best_f = best.as_ref().map_or(f64::NEG_INFINITY, |(_, f)| *f);
        diag.history.push((best_f, mean));
        diag.generations = generation + 1;
        if generation + 1 >= ga.min_generations && generation - last_improvement >= ga.stall_generations {
            let (_, old_mean) = diag.history[diag.history.len() - 1 - ga.stall_generations];
            if (mean - old_mean).abs() <= ga.mean_tolerance * mean.abs().max(1e-12) {
                diag.converged = true;
                break;
            }
        }
        if generation + 1 == ga.max_generations {
            break;
        }
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&i, &j| fit[j].total_cmp(&fit[i]).then(i.cmp(&j)));
        let mut next: Vec<Chromosome> = order[..ga.elitism].iter().map(|&i| pop[i].clone()).collect();
        while next.len() < ga.population {
            let mut c1 = tournament(&pop, &fit, ga.tournament, &mut rng).clone();
            let mut c2 = tournament(&pop, &fit, ga.tournament, &mut rng).clone();
            if rng.random_bool(ga.crossover_rate) {
                for s in 0..b {
                    if rng.random_bool(0.5) {
                        std::mem::swap(&mut c1.0[s], &mut c2.0[s]);
                    }
                }
            }
            for c in [&mut c1, &mut c2] {
                for g in c.0.iter_mut() {
                    if rng.random_bool(mutation) {
                        *g = rng.random_range(0..=b as u8);
                    }
                }
                c.repair(&mut rng);
            }
            next.push(c1);
            if next.len() < ga.population {
                next.push(c2);
            }
        }
        pop = next;
    }
    diag.evaluations = cache.evaluations();
    (diag.inner_failures, diag.price_cap_hits) = cache.failures();
    let (chromosome, _) = best.expect("population is nonempty");
    let result = cache
        .result(&chromosome)
        .ok_or_else(|| Error::Precondition("no style multiset gave a feasible design".into()))?;
    Ok(Design { portfolio: result.portfolio, model_profit: result.model_profit, diagnostics: diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ChoiceModel, MnlParams};
    use crate::population::TasteCoefficients;

    fn mnl() -> ChoiceModel {
        ChoiceModel::Mnl(
            MnlParams::new(
                TasteCoefficients::from_array([2.0, -36.8, 11.3, 23.2]),
                vec![0.3, -0.2, 0.1, 0.0, 0.4, -0.1, -0.3, 0.2, -0.4],
            )
            .unwrap(),
        )
    }

    #[test]
    fn permuted_chromosomes_share_a_cache_entry() {
        let (model, cfg, opts) = (mnl(), EngineeringConfig::default(), DesignOptions::default());
        let cache = FitnessCache::new(&model, &cfg, &opts);
        let a = Chromosome(vec![0, 3, 0, 5, 0, 0, 3, 0, 0]);
        let b = Chromosome(vec![5, 0, 0, 0, 3, 0, 0, 0, 3]);
        let fa = cache.fitness(&a);
        let fb = cache.fitness(&b);
        assert_eq!(fa, fb);
        assert_eq!(cache.evaluations(), 1);
        cache.fill(&[a, b, Chromosome(vec![1, 0, 0, 0, 0, 0, 0, 0, 0])]);
        assert_eq!(cache.evaluations(), 2);
    }

    #[test]
    fn random_chromosomes_are_never_empty() {
        let mut rng = rng_from(3);
        for _ in 0..2000 {
            assert!(!Chromosome::random(2, &mut rng).is_empty());
        }
        let mut c = Chromosome(vec![0, 0, 0]);
        c.repair(&mut rng);
        assert!(!c.is_empty());
    }

    #[test]
    fn logit_design_uses_one_style() {
        let (model, cfg) = (mnl(), EngineeringConfig::default());
        let opts = DesignOptions { inner_starts: 2, ..Default::default() };
        let d = outer_optimize(&model, &cfg, &opts).unwrap();
        let styles = d.portfolio.styles();
        assert!(styles.iter().all(|&s| s == styles[0]), "{styles:?}");
        assert_eq!(styles.len(), 9);
        d.portfolio.validate(&cfg).unwrap();
    }
}
