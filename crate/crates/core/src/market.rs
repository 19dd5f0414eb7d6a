//! Random vehicle markets and simulated aggregate choice shares.

use std::io::{Read, Write};

use rand_distr::{Distribution, Gumbel, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{BodyStyle, PopulationSampler, PopulationSpec};

/// Euler–Mascheroni constant; the zero-mean standard Gumbel has location `-EULER_GAMMA`.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Attribute ranges for randomly drawn vehicles. Price is in 10k$.
pub const MPG_RANGE: (f64, f64) = (5.0, 50.0);
pub const ACCEL_RANGE: (f64, f64) = (2.0, 15.0);
pub const PRICE_RANGE: (f64, f64) = (1.0, 6.0);

/// A vehicle as seen by consumers: fuel economy (mpg), 0-60 time (s),
/// price (10k$) and body style.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleProfile {
    pub mpg: f64,
    pub accel: f64,
    pub price: f64,
    pub style: BodyStyle,
}

impl VehicleProfile {
    pub fn new(mpg: f64, accel: f64, price: f64, style: BodyStyle) -> Self {
        Self { mpg, accel, price, style }
    }

    /// Whether the profile lies inside the attribute ranges used for random markets.
    pub fn in_market_ranges(&self, n_styles: usize) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        within(self.mpg, MPG_RANGE)
            && within(self.accel, ACCEL_RANGE)
            && within(self.price, PRICE_RANGE)
            && self.style.index() < n_styles
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if !(self.mpg.is_finite() && self.accel.is_finite() && self.price.is_finite())
            || self.mpg <= 0.0
            || self.accel <= 0.0
        {
            return Err(Error::invalid(format!("vehicle attributes out of domain: {self:?}")));
        }
        Ok(())
    }
}

/// A universal choice set of vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Market {
    pub id: u64,
    pub vehicles: Vec<VehicleProfile>,
}

impl Market {
    pub fn new(id: u64, vehicles: Vec<VehicleProfile>) -> Result<Self> {
        if vehicles.is_empty() {
            return Err(Error::Precondition("a market needs at least one vehicle".into()));
        }
        for v in &vehicles {
            v.check_finite()?;
        }
        Ok(Self { id, vehicles })
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    /// Bitmask of the body styles present.
    pub fn style_mask(&self) -> u32 {
        self.vehicles.iter().fold(0, |m, v| m | v.style.bit())
    }
}

/// Observed choice fractions: one per vehicle plus the outside good.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareData {
    pub vehicles: Vec<f64>,
    pub outside: f64,
}

impl ShareData {
    pub fn new(vehicles: Vec<f64>, outside: f64) -> Result<Self> {
        let s = Self { vehicles, outside };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vehicles.iter().chain(std::iter::once(&self.outside)).any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("shares must be finite and nonnegative"));
        }
        let total = self.total();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("shares sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.vehicles.iter().sum::<f64>() + self.outside
    }

    /// Builds share data from a probability vector laid out as vehicles then outside good.
    pub fn from_probabilities(probs: &[f64]) -> Result<Self> {
        let (outside, vehicles) = probs.split_last().ok_or_else(|| Error::invalid("empty probability vector"))?;
        Self::new(vehicles.to_vec(), *outside)
    }
}

/// Draws `count` vehicles with attributes uniform on the market ranges and uniform body style.
pub fn generate_market<R: rand::Rng + ?Sized>(
    rng: &mut R,
    id: u64,
    count: usize,
    n_styles: usize,
) -> Result<Market> {
    if count == 0 {
        return Err(Error::Precondition("market size must be at least 1".into()));
    }
    if n_styles == 0 || n_styles > u8::MAX as usize {
        return Err(Error::invalid(format!("invalid style count {n_styles}")));
    }
    let mpg = Uniform::new_inclusive(MPG_RANGE.0, MPG_RANGE.1).expect("valid range");
    let accel = Uniform::new_inclusive(ACCEL_RANGE.0, ACCEL_RANGE.1).expect("valid range");
    let price = Uniform::new_inclusive(PRICE_RANGE.0, PRICE_RANGE.1).expect("valid range");
    let vehicles = (0..count)
        .map(|_| {
            let e = mpg.sample(rng);
            let a = accel.sample(rng);
            let p = price.sample(rng);
            let b = rng.random_range(0..n_styles) as u8;
            VehicleProfile::new(e, a, p, BodyStyle(b))
        })
        .collect();
    Market::new(id, vehicles)
}

/// Simulates `n_individuals` utility-maximizing choices. Each individual
/// draws a screening rule and taste coefficients, then picks the best of
/// the considered vehicles and the outside good under i.i.d. zero-mean
/// Gumbel errors (one per alternative).
pub fn simulate_shares<R: rand::Rng + ?Sized>(
    market: &Market,
    pop: &PopulationSpec,
    n_individuals: usize,
    rng: &mut R,
) -> Result<ShareData> {
    if n_individuals == 0 {
        return Err(Error::Precondition("need at least one individual".into()));
    }
    if market.vehicles.iter().any(|v| v.style.index() >= pop.n_styles()) {
        return Err(Error::invalid("market contains a style unknown to the population"));
    }
    let sampler = PopulationSampler::new(pop);
    let gumbel = Gumbel::new(-EULER_GAMMA, 1.0).expect("valid Gumbel");
    let mut counts = vec![0usize; market.len()];
    let mut outside = 0usize;
    for _ in 0..n_individuals {
        let (rule, theta) = sampler.sample_individual(rng);
        let mut best = gumbel.sample(rng);
        let mut choice = None;
        for (j, v) in market.vehicles.iter().enumerate() {
            if !rule.accepts(v.style) {
                continue;
            }
            let u = theta.utility(v.mpg, v.accel, v.price) + gumbel.sample(rng);
            if u > best {
                best = u;
                choice = Some(j);
            }
        }
        match choice {
            Some(j) => counts[j] += 1,
            None => outside += 1,
        }
    }
    let n = n_individuals as f64;
    Ok(ShareData {
        vehicles: counts.iter().map(|&c| c as f64 / n).collect(),
        outside: outside as f64 / n,
    })
}

/// Markets paired with their observed shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketData {
    pub markets: Vec<Market>,
    pub shares: Vec<ShareData>,
}

impl MarketData {
    pub fn new(markets: Vec<Market>, shares: Vec<ShareData>) -> Result<Self> {
        if markets.len() != shares.len() {
            return Err(Error::invalid("market and share counts differ"));
        }
        for (m, s) in markets.iter().zip(&shares) {
            if m.len() != s.vehicles.len() {
                return Err(Error::invalid(format!("market {} share length mismatch", m.id)));
            }
            s.validate()?;
        }
        Ok(Self { markets, shares })
    }

    pub fn len(&self) -> usize {
        self.markets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Market, &ShareData)> {
        self.markets.iter().zip(&self.shares)
    }

    /// True when every market's observed outside share is 1.
    pub fn all_outside(&self) -> bool {
        self.shares.iter().all(|s| s.outside >= 1.0 - 1e-12)
    }

    /// Writes one row per vehicle (`j` from 1) and one outside-good row (`j = 0`)
    /// per market. Outside rows leave the attribute columns empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["market_id", "j", "e", "a", "p", "b", "share"])?;
        for (m, s) in self.iter() {
            w.write_record([m.id.to_string(), "0".into(), String::new(), String::new(), String::new(), String::new(), fmt_f64(s.outside)])?;
            for (j, (v, share)) in m.vehicles.iter().zip(&s.vehicles).enumerate() {
                w.write_record([
                    m.id.to_string(),
                    (j + 1).to_string(),
                    fmt_f64(v.mpg),
                    fmt_f64(v.accel),
                    fmt_f64(v.price),
                    v.style.to_string(),
                    fmt_f64(*share),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut markets: Vec<Market> = Vec::new();
        let mut shares: Vec<ShareData> = Vec::new();
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad {what} '{s}'")))
        };
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 7 {
                return Err(Error::Parse(format!("expected 7 columns, got {}", rec.len())));
            }
            let id: u64 = rec[0].trim().parse().map_err(|_| Error::Parse(format!("bad market id '{}'", &rec[0])))?;
            let j: usize = rec[1].trim().parse().map_err(|_| Error::Parse(format!("bad index '{}'", &rec[1])))?;
            if markets.last().map(|m| m.id) != Some(id) {
                markets.push(Market { id, vehicles: Vec::new() });
                shares.push(ShareData { vehicles: Vec::new(), outside: 0.0 });
            }
            let share = parse(&rec[6], "share")?;
            let (m, s) = (markets.last_mut().unwrap(), shares.last_mut().unwrap());
            if j == 0 {
                s.outside = share;
                continue;
            }
            if j != m.vehicles.len() + 1 {
                return Err(Error::Parse(format!("market {id}: vehicle index {j} out of order")));
            }
            let b: usize = rec[5].trim().parse().map_err(|_| Error::Parse(format!("bad style '{}'", &rec[5])))?;
            if b == 0 || b > u8::MAX as usize {
                return Err(Error::Parse(format!("style {b} out of range")));
            }
            m.vehicles.push(VehicleProfile::new(
                parse(&rec[2], "e")?,
                parse(&rec[3], "a")?,
                parse(&rec[4], "p")?,
                BodyStyle((b - 1) as u8),
            ));
            s.vehicles.push(share);
        }
        for m in &markets {
            if m.vehicles.is_empty() {
                return Err(Error::Parse(format!("market {} has no vehicles", m.id)));
            }
        }
        Self::new(markets, shares)
    }
}

/// JSON bundle of generated data together with the seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketBundle {
    pub seed: u64,
    pub n_styles: usize,
    pub individuals_per_market: usize,
    pub data: MarketData,
}

/// Shortest round-trippable decimal form, stable across runs.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Generates `count` markets of `size` vehicles and simulates shares for
/// each. Market `m` uses streams derived from `seed` and its index only.
pub fn generate_dataset(
    pop: &PopulationSpec,
    count: usize,
    size: usize,
    individuals: usize,
    seed: u64,
) -> Result<MarketData> {
    let mut markets = Vec::with_capacity(count);
    let mut shares = Vec::with_capacity(count);
    for m in 0..count as u64 {
        let mut rng = crate::seed::rng_from(crate::seed::mix(&[seed, m, 0x6d6b74]));
        let market = generate_market(&mut rng, m, size, pop.n_styles())?;
        let mut rng = crate::seed::rng_from(crate::seed::mix(&[seed, m, 0x736872]));
        shares.push(simulate_shares(&market, pop, individuals, &mut rng)?);
        markets.push(market);
    }
    MarketData::new(markets, shares)
}

/// Generates `count` markets without shares (validation sets).
pub fn generate_markets(count: usize, size: usize, n_styles: usize, seed: u64) -> Result<Vec<Market>> {
    (0..count as u64)
        .map(|m| {
            let mut rng = crate::seed::rng_from(crate::seed::mix(&[seed, m, 0x6d6b74]));
            generate_market(&mut rng, m, size, n_styles)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{default_population, ScreeningRule, TasteCoefficients};
    use crate::seed::rng_from;

    #[test]
    fn generated_profiles_respect_ranges_and_moments() {
        let mut rng = rng_from(1);
        let n = 100_000;
        let m = generate_market(&mut rng, 0, n, 9).unwrap();
        assert!(m.vehicles.iter().all(|v| v.in_market_ranges(9)));
        let mean_e = m.vehicles.iter().map(|v| v.mpg).sum::<f64>() / n as f64;
        assert!((mean_e - 27.5).abs() < 0.2, "{mean_e}");
        let mut counts = [0usize; 9];
        for v in &m.vehicles {
            counts[v.style.index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 9.0).abs() < 0.01);
        }
        assert!(generate_market(&mut rng, 0, 0, 9).is_err());
    }

    #[test]
    fn worst_vehicle_is_almost_never_bought() {
        let pop = default_population();
        let market = Market::new(0, vec![VehicleProfile::new(5.0, 15.0, 6.0, BodyStyle(3))]).unwrap();
        let mut rng = rng_from(2);
        let s = simulate_shares(&market, &pop, 20_000, &mut rng).unwrap();
        assert!(s.outside > 0.99);
        assert!((s.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unconsidered_vehicle_gets_zero_share_and_seed_replays() {
        let means = TasteCoefficients::from_array([0.0, 0.0, 0.0, 3.0]);
        let pop = PopulationSpec::new(
            2,
            vec![
                (ScreeningRule::new(0b01, 2).unwrap(), 1.0 - 1e-9),
                (ScreeningRule::new(0b11, 2).unwrap(), 1e-9),
            ],
            means,
            TasteCoefficients::from_array([0.0; 4]),
        )
        .unwrap();
        let market = Market::new(
            3,
            vec![
                VehicleProfile::new(30.0, 8.0, 1.0, BodyStyle(0)),
                VehicleProfile::new(30.0, 8.0, 1.0, BodyStyle(1)),
            ],
        )
        .unwrap();
        let a = simulate_shares(&market, &pop, 500, &mut rng_from(9)).unwrap();
        let b = simulate_shares(&market, &pop, 500, &mut rng_from(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.vehicles[1], 0.0);
        assert!(a.vehicles[0] > 0.5);
        for s in a.vehicles.iter().chain([&a.outside]) {
            let k = s * 500.0;
            assert!((k - k.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_round_trip() {
        let pop = default_population().with_constant_mean(23.2);
        let data = generate_dataset(&pop, 4, 5, 50, 17).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = MarketData::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, data);
    }
}
