//! Experiment driver: replicated estimation and design across a grid of
//! market counts, with results persisted as CSV and a JSON manifest.

mod figures;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::{
    evaluate_design, ideal_design, outer_optimize, price_on_offering, DesignOptions, DesignOutcome, Provenance, Repriced,
};
use crate::engineering::EngineeringConfig;
use crate::error::{Error, Result};
use crate::estimation::{estimate, EstimationOptions, FitResult};
use crate::market::{generate_dataset, generate_markets};
use crate::metrics::{design_error, recovery, ValidationSet};
use crate::models::ModelFamily;
use crate::population::{default_population, PopulationSpec};
use crate::seed::{derive, Role};
use crate::truth::TrueBehavior;

pub use figures::{emit_figure_data, write_figure, FigureRow, FIGURES};
pub use output::{read_metrics, MetricRow, OutputFiles, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub markets_grid: Vec<usize>,
    pub replicates: usize,
    pub vehicles_per_market: usize,
    pub individuals_per_market: usize,
    pub validation_markets: usize,
    pub rcl_draws: usize,
    /// Coefficient draws of the true behavior used for evaluation.
    pub truth_draws: usize,
    pub master_seed: u64,
    pub models: Vec<ModelFamily>,
    /// Population file; the built-in population when absent.
    pub population: Option<PathBuf>,
    /// Replaces the mean of the constant term of the population.
    pub constant_mean: Option<f64>,
    /// Engineering file; the built-in coefficients when absent.
    pub engineering: Option<PathBuf>,
    /// Include the outside good in the divergence.
    pub kld_include_outside: bool,
    pub estimation: EstimationOptions,
    pub design: DesignOptions,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            markets_grid: vec![10, 50, 200],
            replicates: 5,
            vehicles_per_market: 5,
            individuals_per_market: 100,
            validation_markets: 1000,
            rcl_draws: 1000,
            truth_draws: 10_000,
            master_seed: 0,
            models: ModelFamily::ALL.to_vec(),
            population: None,
            constant_mean: Some(23.2),
            engineering: None,
            kld_include_outside: false,
            estimation: EstimationOptions::default(),
            design: DesignOptions::default(),
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    /// Full-size protocol: seven market counts, 20 replicates, 10⁵ truth draws.
    pub fn full_scale(mut self) -> Self {
        self.markets_grid = vec![10, 25, 50, 100, 200, 500, 1000];
        self.replicates = 20;
        self.truth_draws = 100_000;
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.replicates,
            self.vehicles_per_market,
            self.individuals_per_market,
            self.validation_markets,
            self.rcl_draws,
            self.truth_draws,
        ];
        if counts.contains(&0) || self.markets_grid.is_empty() || self.markets_grid.contains(&0) {
            return Err(Error::Config("experiment counts must be positive".into()));
        }
        if self.markets_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("market grid must be strictly ascending".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no model families selected".into()));
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return Err(Error::Config("model families listed twice".into()));
        }
        self.estimation.validate()?;
        self.design.validate()
    }

    pub fn load_population(&self) -> Result<PopulationSpec> {
        let pop = match &self.population {
            Some(p) => PopulationSpec::load(p)?,
            None => default_population(),
        };
        Ok(match self.constant_mean {
            Some(c) => pop.with_constant_mean(c),
            None => pop,
        })
    }

    pub fn load_engineering(&self) -> Result<EngineeringConfig> {
        match &self.engineering {
            Some(p) => EngineeringConfig::load(p),
            None => Ok(EngineeringConfig::default()),
        }
    }
}

/// SHA-256 over the configuration and the resolved population and engineering inputs.
pub fn content_hash(config: &ExperimentConfig, pop: &PopulationSpec, cfg: &EngineeringConfig) -> Result<String> {
    let mut h = Sha256::new();
    let mut c = config.clone();
    c.output_dir = PathBuf::new();
    h.update(c.to_toml()?.as_bytes());
    h.update(pop.to_toml()?.as_bytes());
    h.update(cfg.to_toml()?.as_bytes());
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Everything produced for one (model, M, replicate) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub fit: FitResult,
    pub design: DesignOutcome,
    pub repriced: Repriced,
    pub kld: f64,
    pub kld_unsupported: usize,
    pub design_error: f64,
    pub profit_recovery: f64,
    pub pricing_recovery: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub estimate: f64,
    pub design: f64,
    pub evaluate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub model: ModelFamily,
    pub markets: usize,
    pub replicate: usize,
    pub outcome: std::result::Result<CellOutcome, String>,
    pub timing: CellTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub ideal: DesignOutcome,
    pub ideal_repriced: Repriced,
    pub cells: Vec<CellRecord>,
    pub ideal_seconds: f64,
}

impl RunRecord {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }
}

/// Shared, per-run state used by every cell.
struct Context<'a> {
    config: &'a ExperimentConfig,
    cfg: EngineeringConfig,
    truth: TrueBehavior,
    validation: ValidationSet,
    ideal: DesignOutcome,
}

impl Context<'_> {
    fn run_cell(&self, data: &crate::market::MarketData, model: ModelFamily, m: usize, rep: usize) -> (std::result::Result<CellOutcome, String>, CellTiming) {
        let mut timing = CellTiming { estimate: 0.0, design: 0.0, evaluate: 0.0 };
        let r = (|| -> Result<CellOutcome> {
            let c = self.config;
            let tag = model as u64;
            let est = EstimationOptions {
                n_styles: self.cfg.n_styles(),
                rcl_mc_draws: c.rcl_draws,
                seed: derive(c.master_seed, m as u64, rep as u64, Role::Estimation, &[tag]),
                ..c.estimation.clone()
            };
            let t = Instant::now();
            let fit = estimate(model, data, &est)?;
            timing.estimate = t.elapsed().as_secs_f64();
            let opts = DesignOptions {
                seed: derive(c.master_seed, m as u64, rep as u64, Role::Design, &[tag]),
                ..c.design.clone()
            };
            let t = Instant::now();
            let design = outer_optimize(&fit.model, &self.cfg, &opts)?;
            timing.design = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let provenance = Provenance {
                model: model.to_string(),
                data_seed: derive(c.master_seed, m as u64, rep as u64, Role::Markets, &[]),
                markets: m,
            };
            let outcome = evaluate_design(&design, &self.truth, &self.cfg, provenance)?;
            let repriced = price_on_offering(&outcome.portfolio, &self.truth, &self.cfg, &opts)?;
            let kld = self.validation.kld(&fit.model, c.kld_include_outside);
            let cell = CellOutcome {
                kld: kld.value,
                kld_unsupported: kld.unsupported,
                design_error: design_error(&outcome.portfolio, &self.ideal.portfolio)?,
                profit_recovery: recovery(outcome.true_profit, self.ideal.true_profit)?,
                pricing_recovery: recovery(repriced.true_profit, self.ideal.true_profit)?,
                fit,
                design: outcome,
                repriced,
            };
            timing.evaluate = t.elapsed().as_secs_f64();
            Ok(cell)
        })();
        (r.map_err(|e| e.to_string()), timing)
    }
}

/// Runs the full grid. Rows are appended to the output files as each cell
/// finishes; a failed cell is recorded and the run continues.
pub fn run_experiment(config: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<RunRecord> {
    config.validate()?;
    let pop = config.load_population()?;
    let cfg = config.load_engineering()?;
    if cfg.n_styles() != pop.n_styles() {
        return Err(Error::Config(format!(
            "engineering config has {} styles, population {}",
            cfg.n_styles(),
            pop.n_styles()
        )));
    }
    let hash = content_hash(config, &pop, &cfg)?;
    let mut out = OutputFiles::create(&config.output_dir)?;
    let seed = config.master_seed;

    let truth = TrueBehavior::new(&pop, config.truth_draws, derive(seed, 0, 0, Role::TruthDraws, &[]))?;
    let markets = generate_markets(
        config.validation_markets,
        config.vehicles_per_market,
        pop.n_styles(),
        derive(seed, 0, 0, Role::Validation, &[]),
    )?;
    let validation = ValidationSet::new(markets, &truth)?;
    progress("validation probabilities ready");

    let t = Instant::now();
    let ideal_opts = DesignOptions { seed: derive(seed, 0, 0, Role::Ideal, &[]), ..config.design.clone() };
    let ideal = ideal_design(&pop, &cfg, &ideal_opts, &truth)?;
    let provenance = Provenance { model: "IDEAL".into(), data_seed: 0, markets: 0 };
    let ideal = evaluate_design(&ideal, &truth, &cfg, provenance)?;
    let ideal_repriced = price_on_offering(&ideal.portfolio, &truth, &cfg, &ideal_opts)?;
    let ideal_seconds = t.elapsed().as_secs_f64();
    if !(ideal.true_profit > 0.0) {
        return Err(Error::Config(format!("ideal true profit {} is not positive", ideal.true_profit)));
    }
    out.write_design("IDEAL", 0, 0, &ideal.portfolio)?;
    progress(&format!("ideal design: true profit {:.6}", ideal.true_profit));

    let ctx = Context { config, cfg, truth, validation, ideal };
    let mut cells = Vec::new();
    for &m in &config.markets_grid {
        for rep in 0..config.replicates {
            let data = generate_dataset(
                &pop,
                m,
                config.vehicles_per_market,
                config.individuals_per_market,
                derive(seed, m as u64, rep as u64, Role::Markets, &[]),
            );
            for &model in &config.models {
                let (outcome, timing) = match &data {
                    Ok(data) => ctx.run_cell(data, model, m, rep),
                    Err(e) => (Err(e.to_string()), CellTiming { estimate: 0.0, design: 0.0, evaluate: 0.0 }),
                };
                let record = CellRecord { model, markets: m, replicate: rep, outcome, timing };
                out.write_cell(&record, ctx.ideal.true_profit)?;
                progress(&match &record.outcome {
                    Ok(c) => format!(
                        "{model} M={m} rep={rep}: kld {:.4} design error {:.3} recovery {:.3}",
                        c.kld, c.design_error, c.profit_recovery
                    ),
                    Err(e) => format!("{model} M={m} rep={rep}: failed: {e}"),
                });
                cells.push(record);
            }
        }
    }
    let record = RunRecord { config_hash: hash, ideal: ctx.ideal, ideal_repriced, cells, ideal_seconds };
    out.write_manifest(config, &record)?;
    Ok(record)
}
