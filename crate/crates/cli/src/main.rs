use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use consider_core::design::{
    evaluate_design, outer_optimize, price_on_offering, Design, DesignOptions, DesignOutcome, Provenance,
};
use consider_core::estimation::{estimate, EstimationOptions, FitResult};
use consider_core::harness::{emit_figure_data, read_metrics, run_experiment, write_figure, ExperimentConfig};
use consider_core::market::{generate_dataset, MarketData};
use consider_core::metrics::{design_error, recovery};
use consider_core::models::ModelFamily;
use consider_core::seed::{derive, Role};
use consider_core::truth::TrueBehavior;

#[derive(Parser)]
#[command(name = "consider", version, about = "Consideration-aware demand estimation and product-line design")]
struct Cli {
    /// Experiment configuration (TOML); built-in desk defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Use the full-size grid, replicate count and truth draws.
    #[arg(long, global = true)]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate markets and simulated shares as CSV.
    Generate {
        #[arg(long, default_value_t = 50)]
        markets: usize,
    },
    /// Fit a model to a share CSV and write it as JSON.
    Estimate {
        data: PathBuf,
        #[arg(long, default_value = "CTC")]
        model: ModelFamily,
    },
    /// Optimize a portfolio for a fitted model (JSON from `estimate`).
    Design { fit: PathBuf },
    /// Evaluate a design (JSON from `design`) under the true behavior.
    Evaluate {
        design: PathBuf,
        /// Ideal design to compare against.
        #[arg(long)]
        ideal: Option<PathBuf>,
    },
    /// Run the full experiment grid.
    Experiment,
    /// Emit the summary table behind a figure from a run's metrics.csv.
    Figure {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=5))]
        n: u8,
        /// Run directory containing metrics.csv.
        #[arg(long, default_value = "results")]
        run: PathBuf,
    },
    /// Print per-style fuel economy and cost curves as CSV.
    Engineering {
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut c = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if cli.full_scale {
        c = c.full_scale();
    }
    if let Some(s) = cli.seed {
        c.master_seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let c = config(cli)?;
    let out = cli.output.as_deref();
    match &cli.command {
        Command::Generate { markets } => {
            let pop = c.load_population()?;
            let seed = derive(c.master_seed, *markets as u64, 0, Role::Markets, &[]);
            let data = generate_dataset(&pop, *markets, c.vehicles_per_market, c.individuals_per_market, seed)?;
            let mut w = sink(out)?;
            data.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Estimate { data, model } => {
            let f = File::open(data).with_context(|| format!("opening {}", data.display()))?;
            let data = MarketData::read_csv(BufReader::new(f))?;
            let opts = EstimationOptions {
                n_styles: c.load_engineering()?.n_styles(),
                rcl_mc_draws: c.rcl_draws,
                seed: derive(c.master_seed, data.len() as u64, 0, Role::Estimation, &[*model as u64]),
                ..c.estimation.clone()
            };
            let fit = estimate(*model, &data, &opts)?;
            eprintln!("{model}: log-likelihood {:.6}, converged {}", fit.final_ll, fit.converged);
            write_json(&fit, out)?;
        }
        Command::Design { fit } => {
            let fit: FitResult = read_json(fit)?;
            let opts = DesignOptions { seed: derive(c.master_seed, 0, 0, Role::Design, &[]), ..c.design.clone() };
            let design = outer_optimize(&fit.model, &c.load_engineering()?, &opts)?;
            eprintln!("{} vehicles, model profit {:.6}", design.portfolio.len(), design.model_profit);
            write_json(&design, out)?;
        }
        Command::Evaluate { design, ideal } => {
            let design: Design = read_json(design)?;
            let pop = c.load_population()?;
            let cfg = c.load_engineering()?;
            let truth = TrueBehavior::new(&pop, c.truth_draws, derive(c.master_seed, 0, 0, Role::TruthDraws, &[]))?;
            let provenance = Provenance { model: "input".into(), data_seed: 0, markets: 0 };
            let outcome = evaluate_design(&design, &truth, &cfg, provenance)?;
            let repriced = price_on_offering(&outcome.portfolio, &truth, &cfg, &c.design)?;
            let mut report = serde_json::json!({
                "true_profit": outcome.true_profit,
                "true_profit_se": outcome.true_profit_se,
                "repriced_profit": repriced.true_profit,
                "repriced_portfolio": repriced.portfolio,
            });
            if let Some(p) = ideal {
                let ideal: DesignOutcome = read_json(p)?;
                report["design_error"] = design_error(&outcome.portfolio, &ideal.portfolio)?.into();
                report["profit_recovery"] = recovery(outcome.true_profit, ideal.true_profit)?.into();
                report["pricing_recovery"] = recovery(repriced.true_profit, ideal.true_profit)?.into();
            }
            write_json(&report, out)?;
        }
        Command::Experiment => {
            let mut c = c;
            if let Some(dir) = out {
                c.output_dir = dir.to_path_buf();
            }
            let record = run_experiment(&c, &mut |msg| eprintln!("{msg}"))?;
            let failed = record.failed_cells();
            eprintln!("{} cells, {failed} failed; results in {}", record.cells.len(), c.output_dir.display());
            return Ok(failed == 0);
        }
        Command::Figure { n, run } => {
            let rows = read_metrics(run.join("metrics.csv"))?;
            let table = emit_figure_data(&rows, *n)?;
            write_figure(*n, &table, sink(out)?)?;
        }
        Command::Engineering { points } => {
            if *points < 2 {
                bail!("need at least two points per curve");
            }
            c.load_engineering()?.write_curves(sink(out)?, *points)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
