//! Synthetic "true" behavior: body-style screening rules, random taste
//! coefficients and the utility they induce.

use std::fmt;
use std::path::Path;

use rand_distr::{Distribution, Normal, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of body styles a screening rule bitmask can hold.
pub const MAX_STYLES: usize = 16;

/// Body style names of the reference vehicle market.
pub const STYLE_NAMES: [&str; 9] = [
    "sports car",
    "hatchback",
    "compact sedan",
    "standard sedan",
    "crossover",
    "small SUV",
    "full-size SUV",
    "pickup truck",
    "minivan",
];

/// Share of respondents accepting each body style (same order as [`STYLE_NAMES`]).
pub const REFERENCE_ACCEPTANCE: [f64; 9] = [0.16, 0.19, 0.38, 0.42, 0.38, 0.39, 0.29, 0.18, 0.10];

/// Reference coefficient means for (log price sensitivity, fuel economy, acceleration, constant).
pub const REFERENCE_MEANS: [f64; 4] = [2.0, -36.8, 11.3, -23.2];

/// Reference coefficient spreads, same order as [`REFERENCE_MEANS`].
pub const REFERENCE_SPREADS: [f64; 4] = [0.1, 2.2, 0.3, 0.5];

/// Rules with less mass than this are dropped when synthesizing a rule distribution.
pub const RULE_MASS_FLOOR: f64 = 1e-6;

/// Zero-based body style index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BodyStyle(pub u8);

impl BodyStyle {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn bit(self) -> u32 {
        1u32 << self.0
    }
}

impl fmt::Display for BodyStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // External formats number styles from 1.
        write!(f, "{}", self.0 as usize + 1)
    }
}

/// Set of acceptable body styles. A vehicle is considered iff its style bit is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScreeningRule {
    mask: u32,
}

impl ScreeningRule {
    pub fn new(mask: u32, n_styles: usize) -> Result<Self> {
        if n_styles == 0 || n_styles > MAX_STYLES {
            return Err(Error::invalid(format!("style count {n_styles} outside 1..={MAX_STYLES}")));
        }
        if mask == 0 {
            return Err(Error::invalid("screening rule accepts no body style"));
        }
        if mask >> n_styles != 0 {
            return Err(Error::invalid(format!(
                "screening rule mask {mask:#b} has bits beyond {n_styles} styles"
            )));
        }
        Ok(Self { mask })
    }

    /// Rule accepting every one of `n_styles` styles.
    pub fn all(n_styles: usize) -> Self {
        Self { mask: full_mask(n_styles) }
    }

    #[inline]
    pub fn mask(self) -> u32 {
        self.mask
    }

    #[inline]
    pub fn accepts(self, style: BodyStyle) -> bool {
        self.mask & style.bit() != 0
    }

    /// Parses a bitstring whose first character is style 1.
    pub fn parse(bits: &str, n_styles: usize) -> Result<Self> {
        let bits = bits.trim();
        if bits.len() != n_styles {
            return Err(Error::Parse(format!(
                "rule '{bits}' has {} characters, expected {n_styles}",
                bits.len()
            )));
        }
        let mut mask = 0u32;
        for (i, ch) in bits.chars().enumerate() {
            match ch {
                '1' => mask |= 1 << i,
                '0' => {}
                other => return Err(Error::Parse(format!("unexpected '{other}' in rule '{bits}'"))),
            }
        }
        Self::new(mask, n_styles)
    }

    pub fn to_bitstring(self, n_styles: usize) -> String {
        (0..n_styles)
            .map(|i| if self.mask & (1 << i) != 0 { '1' } else { '0' })
            .collect()
    }
}

#[inline]
pub fn full_mask(n_styles: usize) -> u32 {
    if n_styles >= 32 {
        u32::MAX
    } else {
        (1u32 << n_styles) - 1
    }
}

/// Taste coefficients of the compensatory utility. Price enters as
/// `-exp(log_price) * p`, so `log_price` is the log of the price sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TasteCoefficients {
    pub log_price: f64,
    pub fuel: f64,
    pub accel: f64,
    pub constant: f64,
}

/// One individual's draw of taste coefficients.
pub type CoefficientDraw = TasteCoefficients;

impl TasteCoefficients {
    pub fn from_array(v: [f64; 4]) -> Self {
        Self { log_price: v[0], fuel: v[1], accel: v[2], constant: v[3] }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.log_price, self.fuel, self.accel, self.constant]
    }

    /// Compensatory utility of a vehicle with fuel economy `mpg`, 0-60 time
    /// `accel` (s) and price `price` (10k$).
    #[inline]
    pub fn utility(&self, mpg: f64, accel: f64, price: f64) -> f64 {
        -self.log_price.exp() * price + self.fuel / mpg + self.accel / accel + self.constant
    }
}

/// Checked utility evaluation: `-exp(θp)·p + θe/e + θa/a + θ0`.
pub fn true_utility(mpg: f64, accel: f64, price: f64, draw: &CoefficientDraw) -> Result<f64> {
    let inputs = [mpg, accel, price];
    if inputs.iter().chain(draw.to_array().iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite utility input"));
    }
    if mpg <= 0.0 || accel <= 0.0 || price < 0.0 {
        return Err(Error::invalid(format!(
            "utility requires mpg > 0, accel > 0, price >= 0 (got {mpg}, {accel}, {price})"
        )));
    }
    Ok(draw.utility(mpg, accel, price))
}

/// How the spread column of a coefficient table is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadInterpretation {
    #[default]
    StandardDeviation,
    Variance,
}

/// Distribution of screening rules and random taste coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    n_styles: usize,
    rules: Vec<(ScreeningRule, f64)>,
    means: TasteCoefficients,
    sds: TasteCoefficients,
}

impl PopulationSpec {
    pub fn new(
        n_styles: usize,
        rules: Vec<(ScreeningRule, f64)>,
        means: TasteCoefficients,
        sds: TasteCoefficients,
    ) -> Result<Self> {
        let spec = Self { n_styles, rules, means, sds };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPopulation(m));
        if self.n_styles == 0 || self.n_styles > MAX_STYLES {
            return bad(format!("style count {} outside 1..={MAX_STYLES}", self.n_styles));
        }
        if self.rules.is_empty() {
            return bad("empty rule distribution".into());
        }
        let mut covered = 0u32;
        let mut total = 0.0;
        for (rule, mass) in &self.rules {
            if rule.mask() == 0 || rule.mask() >> self.n_styles != 0 {
                return bad(format!("rule {:#b} invalid for {} styles", rule.mask(), self.n_styles));
            }
            if !(mass.is_finite() && *mass >= 0.0) {
                return bad(format!("rule mass {mass} is not a nonnegative number"));
            }
            if *mass > 0.0 {
                covered |= rule.mask();
            }
            total += mass;
        }
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("rule masses sum to {total}, expected 1"));
        }
        if covered != full_mask(self.n_styles) {
            return bad(format!(
                "some body style is acceptable under no rule with positive mass (coverage {covered:#b})"
            ));
        }
        let coeffs = self.means.to_array().into_iter().chain(self.sds.to_array());
        if coeffs.clone().any(|v| !v.is_finite()) {
            return bad("non-finite coefficient".into());
        }
        if self.sds.to_array().iter().any(|&s| s < 0.0) {
            return bad("negative coefficient standard deviation".into());
        }
        Ok(())
    }

    pub fn n_styles(&self) -> usize {
        self.n_styles
    }

    pub fn rules(&self) -> &[(ScreeningRule, f64)] {
        &self.rules
    }

    pub fn means(&self) -> TasteCoefficients {
        self.means
    }

    pub fn sds(&self) -> TasteCoefficients {
        self.sds
    }

    /// Copy with a different mean for the utility constant.
    pub fn with_constant_mean(mut self, constant: f64) -> Self {
        self.means.constant = constant;
        self
    }

    /// Share of the population accepting each style.
    pub fn marginal_acceptance(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_styles];
        for (rule, mass) in &self.rules {
            for (b, slot) in out.iter_mut().enumerate() {
                if rule.mask() & (1 << b) != 0 {
                    *slot += mass;
                }
            }
        }
        out
    }

    /// Mass of each rule mask, indexed by mask (index 0, the null rule, is always 0).
    pub fn mass_by_mask(&self) -> Vec<f64> {
        let mut out = vec![0.0; 1usize << self.n_styles];
        for (rule, mass) in &self.rules {
            out[rule.mask() as usize] += mass;
        }
        out
    }

    /// Builds a rule distribution from independent per-style acceptance,
    /// conditioned on accepting at least one style. Acceptance probabilities
    /// are calibrated so the *conditional* marginals equal `marginals`, and
    /// rules lighter than `floor` are dropped.
    pub fn from_independent_acceptance(
        marginals: &[f64],
        floor: f64,
        means: TasteCoefficients,
        sds: TasteCoefficients,
    ) -> Result<Self> {
        let n = marginals.len();
        if n == 0 || n > MAX_STYLES {
            return Err(Error::InvalidPopulation(format!("style count {n} outside 1..={MAX_STYLES}")));
        }
        if marginals.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidPopulation("marginal acceptance must lie in (0, 1)".into()));
        }
        let masses_for = |q: &[f64]| -> Vec<(u32, f64)> {
            let mut raw: Vec<(u32, f64)> = (1..=full_mask(n))
                .map(|mask| {
                    let m = (0..n)
                        .map(|b| if mask & (1 << b) != 0 { q[b] } else { 1.0 - q[b] })
                        .product::<f64>();
                    (mask, m)
                })
                .filter(|&(_, m)| m >= floor)
                .collect();
            let total: f64 = raw.iter().map(|r| r.1).sum();
            for r in &mut raw {
                r.1 /= total;
            }
            raw
        };
        let marginals_of = |rules: &[(u32, f64)]| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for &(mask, m) in rules {
                for (b, o) in out.iter_mut().enumerate() {
                    if mask & (1 << b) != 0 {
                        *o += m;
                    }
                }
            }
            out
        };
        let mut q = marginals.to_vec();
        let mut rules = masses_for(&q);
        for _ in 0..500 {
            let current = marginals_of(&rules);
            let worst = current
                .iter()
                .zip(marginals)
                .map(|(c, t)| (c - t).abs())
                .fold(0.0, f64::max);
            if worst < 1e-13 {
                break;
            }
            for b in 0..n {
                q[b] = (q[b] * marginals[b] / current[b]).clamp(1e-9, 1.0 - 1e-9);
            }
            rules = masses_for(&q);
        }
        // Final renormalization in a fixed order so the masses sum to one tightly.
        let total: f64 = rules.iter().map(|r| r.1).sum();
        let rules = rules
            .into_iter()
            .map(|(mask, m)| Ok((ScreeningRule::new(mask, n)?, m / total)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, rules, means, sds)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: PopulationFile = toml::from_str(text)?;
        file.into_spec()
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(&PopulationFile::from_spec(self))?)
    }
}

/// Reference population: per-style acceptance marginals and taste
/// coefficients, with spreads read as standard deviations.
pub fn default_population() -> PopulationSpec {
    PopulationSpec::from_independent_acceptance(
        &REFERENCE_ACCEPTANCE,
        RULE_MASS_FLOOR,
        TasteCoefficients::from_array(REFERENCE_MEANS),
        TasteCoefficients::from_array(REFERENCE_SPREADS),
    )
    .expect("reference population is valid")
}

/// Draws individuals from a population. Screening rule and coefficients are
/// independent of each other.
#[derive(Debug, Clone)]
pub struct PopulationSampler<'a> {
    pop: &'a PopulationSpec,
    index: WeightedIndex<f64>,
    normals: [Normal<f64>; 4],
}

impl<'a> PopulationSampler<'a> {
    pub fn new(pop: &'a PopulationSpec) -> Self {
        let index = WeightedIndex::new(pop.rules.iter().map(|r| r.1))
            .expect("validated rule masses are nonnegative with positive total");
        let (m, s) = (pop.means.to_array(), pop.sds.to_array());
        let normals = std::array::from_fn(|l| Normal::new(m[l], s[l]).expect("validated sd"));
        Self { pop, index, normals }
    }

    pub fn sample_rule<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> ScreeningRule {
        self.pop.rules[self.index.sample(rng)].0
    }

    pub fn sample_coefficients<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> CoefficientDraw {
        let v: [f64; 4] = std::array::from_fn(|l| self.normals[l].sample(rng));
        TasteCoefficients::from_array(v)
    }

    pub fn sample_individual<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (ScreeningRule, CoefficientDraw) {
        let rule = self.sample_rule(rng);
        (rule, self.sample_coefficients(rng))
    }
}

/// Convenience wrapper drawing one individual; prefer [`PopulationSampler`] in loops.
pub fn sample_individual<R: rand::Rng + ?Sized>(
    rng: &mut R,
    pop: &PopulationSpec,
) -> (ScreeningRule, CoefficientDraw) {
    PopulationSampler::new(pop).sample_individual(rng)
}

/// Standard-normal innovations for the four taste coefficients.
pub fn standard_normal_draws<R: rand::Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<[f64; 4]> {
    (0..count)
        .map(|_| std::array::from_fn(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CoefficientEntry {
    mean: f64,
    spread: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CoefficientTable {
    price: CoefficientEntry,
    fuel_economy: CoefficientEntry,
    acceleration: CoefficientEntry,
    constant: CoefficientEntry,
}

#[derive(Debug, Serialize, Deserialize)]
struct RuleEntry {
    bits: String,
    mass: f64,
}

/// On-disk population description.
#[derive(Debug, Serialize, Deserialize)]
struct PopulationFile {
    n_styles: usize,
    #[serde(default)]
    spread: SpreadInterpretation,
    coefficients: CoefficientTable,
    rules: Vec<RuleEntry>,
}

impl PopulationFile {
    fn into_spec(self) -> Result<PopulationSpec> {
        let c = &self.coefficients;
        let entries = [&c.price, &c.fuel_economy, &c.acceleration, &c.constant];
        let means = TasteCoefficients::from_array(entries.map(|e| e.mean));
        let spreads = entries.map(|e| e.spread);
        if spreads.iter().any(|&s| s < 0.0) {
            return Err(Error::InvalidPopulation("negative coefficient spread".into()));
        }
        let sds = match self.spread {
            SpreadInterpretation::StandardDeviation => spreads,
            SpreadInterpretation::Variance => spreads.map(f64::sqrt),
        };
        let rules = self
            .rules
            .iter()
            .map(|r| Ok((ScreeningRule::parse(&r.bits, self.n_styles)?, r.mass)))
            .collect::<Result<Vec<_>>>()?;
        PopulationSpec::new(self.n_styles, rules, means, TasteCoefficients::from_array(sds))
    }

    fn from_spec(spec: &PopulationSpec) -> Self {
        let (m, s) = (spec.means.to_array(), spec.sds.to_array());
        let e = |l: usize| CoefficientEntry { mean: m[l], spread: s[l] };
        Self {
            n_styles: spec.n_styles,
            spread: SpreadInterpretation::StandardDeviation,
            coefficients: CoefficientTable {
                price: e(0),
                fuel_economy: e(1),
                acceleration: e(2),
                constant: e(3),
            },
            rules: spec
                .rules
                .iter()
                .map(|(r, mass)| RuleEntry { bits: r.to_bitstring(spec.n_styles), mass: *mass })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn point_mass(n: usize, sds: [f64; 4]) -> PopulationSpec {
        PopulationSpec::new(
            n,
            vec![(ScreeningRule::all(n), 1.0)],
            TasteCoefficients::from_array(REFERENCE_MEANS),
            TasteCoefficients::from_array(sds),
        )
        .unwrap()
    }

    #[test]
    fn utility_matches_hand_evaluation() {
        let draw = TasteCoefficients::from_array(REFERENCE_MEANS);
        let u = true_utility(30.0, 8.0, 2.0, &draw).unwrap();
        // -e^2 * 2 - 36.8/30 + 11.3/8 - 23.2
        let hand = -7.38905609893065 * 2.0 - 1.226666666666667 + 1.4125 - 23.2;
        assert!((u - hand).abs() < 1e-12, "{u} vs {hand}");
        assert!((u - (-37.792278864527967)).abs() < 1e-9);
    }

    #[test]
    fn utility_vanishes_without_coefficients() {
        let draw = TasteCoefficients { log_price: 1.3, fuel: 0.0, accel: 0.0, constant: 0.0 };
        assert_eq!(true_utility(17.0, 9.0, 0.0, &draw).unwrap(), 0.0);
    }

    #[test]
    fn utility_decreases_in_price_and_rejects_bad_input() {
        let draw = TasteCoefficients::from_array(REFERENCE_MEANS);
        let u3 = true_utility(25.0, 7.0, 3.0, &draw).unwrap();
        let u2 = true_utility(25.0, 7.0, 2.0, &draw).unwrap();
        assert!(u3 < u2);
        assert!(true_utility(f64::NAN, 7.0, 2.0, &draw).is_err());
        assert!(true_utility(25.0, f64::INFINITY, 2.0, &draw).is_err());
        assert!(true_utility(25.0, 7.0, -1.0, &draw).is_err());
    }

    #[test]
    fn rule_parsing_round_trips_and_rejects_null() {
        let r = ScreeningRule::parse("101000001", 9).unwrap();
        assert!(r.accepts(BodyStyle(0)) && r.accepts(BodyStyle(2)) && r.accepts(BodyStyle(8)));
        assert!(!r.accepts(BodyStyle(1)));
        assert_eq!(r.to_bitstring(9), "101000001");
        assert!(ScreeningRule::parse("000000000", 9).is_err());
        assert!(ScreeningRule::parse("10", 9).is_err());
        assert!(ScreeningRule::new(0b100, 2).is_err());
    }

    #[test]
    fn default_population_matches_reference_tables() {
        let pop = default_population();
        assert_eq!(pop.means().to_array(), [2.0, -36.8, 11.3, -23.2]);
        assert_eq!(pop.sds().to_array(), [0.1, 2.2, 0.3, 0.5]);
        let marg = pop.marginal_acceptance();
        for (got, want) in marg.iter().zip(REFERENCE_ACCEPTANCE) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!((marg[8] - 0.10).abs() < 0.005);
        let total: f64 = pop.rules().iter().map(|r| r.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(pop.rules().iter().all(|r| r.1 >= 0.0 && r.0.mask() != 0));
        assert_eq!(pop.mass_by_mask()[0], 0.0);
        // Support stays rich.
        assert!(pop.rules().len() > 200);
    }

    #[test]
    fn validation_rejects_bad_populations() {
        let means = TasteCoefficients::from_array(REFERENCE_MEANS);
        let sds = TasteCoefficients::from_array(REFERENCE_SPREADS);
        let r = |m| ScreeningRule::new(m, 2).unwrap();
        assert!(PopulationSpec::new(2, vec![(r(1), 0.5), (r(2), 0.4)], means, sds).is_err());
        assert!(PopulationSpec::new(2, vec![(r(1), 1.0), (r(2), 0.0)], means, sds).is_err());
        assert!(PopulationSpec::new(2, vec![(r(1), 1.2), (r(2), -0.2)], means, sds).is_err());
        let neg = TasteCoefficients::from_array([0.1, -0.1, 0.0, 0.0]);
        assert!(PopulationSpec::new(2, vec![(r(3), 1.0)], means, neg).is_err());
        assert!(PopulationSpec::new(2, vec![(r(1), 0.5), (r(2), 0.5)], means, sds).is_ok());
    }

    #[test]
    fn point_mass_rule_always_sampled() {
        let pop = point_mass(9, REFERENCE_SPREADS);
        let sampler = PopulationSampler::new(&pop);
        let mut rng = rng_from(3);
        for _ in 0..1000 {
            assert_eq!(sampler.sample_rule(&mut rng), ScreeningRule::all(9));
        }
    }

    #[test]
    fn zero_spread_returns_means() {
        let pop = point_mass(3, [0.0; 4]);
        let sampler = PopulationSampler::new(&pop);
        let mut rng = rng_from(4);
        for _ in 0..100 {
            let (_, d) = sampler.sample_individual(&mut rng);
            assert_eq!(d.to_array(), REFERENCE_MEANS);
        }
    }

    #[test]
    fn rule_frequencies_follow_mass_function() {
        let pop = default_population();
        let sampler = PopulationSampler::new(&pop);
        let mut rng = rng_from(11);
        let n = 100_000;
        let mut counts = vec![0usize; 1 << 9];
        let mut accept = [0usize; 9];
        for _ in 0..n {
            let (rule, _) = sampler.sample_individual(&mut rng);
            assert_ne!(rule.mask(), 0);
            counts[rule.mask() as usize] += 1;
            for (b, a) in accept.iter_mut().enumerate() {
                if rule.mask() & (1 << b) != 0 {
                    *a += 1;
                }
            }
        }
        let mass = pop.mass_by_mask();
        let linf = counts
            .iter()
            .zip(&mass)
            .map(|(&c, &m)| (c as f64 / n as f64 - m).abs())
            .fold(0.0, f64::max);
        assert!(linf < 0.01, "L-inf {linf}");
        for (b, &a) in accept.iter().enumerate() {
            let p = REFERENCE_ACCEPTANCE[b];
            let tol = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
            assert!((a as f64 / n as f64 - p).abs() < tol, "style {b}");
        }
    }

    #[test]
    fn toml_round_trip_and_variance_reading() {
        let pop = default_population();
        let text = pop.to_toml().unwrap();
        let back = PopulationSpec::from_toml(&text).unwrap();
        assert_eq!(back.rules().len(), pop.rules().len());
        assert_eq!(back.means(), pop.means());

        let doc = r#"
            n_styles = 2
            spread = "variance"
            [coefficients]
            price = { mean = 2.0, spread = 0.04 }
            fuel_economy = { mean = -36.8, spread = 4.0 }
            acceleration = { mean = 11.3, spread = 0.09 }
            constant = { mean = -23.2, spread = 0.25 }
            [[rules]]
            bits = "10"
            mass = 0.25
            [[rules]]
            bits = "11"
            mass = 0.75
        "#;
        let pop = PopulationSpec::from_toml(doc).unwrap();
        let sds = pop.sds().to_array();
        assert!((sds[0] - 0.2).abs() < 1e-12 && (sds[1] - 2.0).abs() < 1e-12);
        assert!((sds[3] - 0.5).abs() < 1e-12);
    }
}
