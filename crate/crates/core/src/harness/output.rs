use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CellRecord, ExperimentConfig, RunRecord};
use crate::design::Portfolio;
use crate::error::Result;
use crate::market::fmt_f64;
use crate::models::ModelFamily;

pub const SCHEMA_VERSION: u32 = 1;

/// One row of `metrics.csv`. Metric fields are empty for failed cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub schema_version: u32,
    pub model: ModelFamily,
    pub markets: usize,
    pub replicate: usize,
    pub status: String,
    pub kld: Option<f64>,
    pub kld_unsupported: Option<usize>,
    pub design_error: Option<f64>,
    pub profit_recovery: Option<f64>,
    pub pricing_recovery: Option<f64>,
    pub model_profit: Option<f64>,
    pub true_profit: Option<f64>,
    pub true_profit_se: Option<f64>,
    pub repriced_profit: Option<f64>,
    pub repriced_profit_se: Option<f64>,
    pub ideal_profit: f64,
    pub vehicles: Option<usize>,
    pub distinct_styles: Option<usize>,
    pub error: String,
}

impl MetricRow {
    pub fn from_cell(cell: &CellRecord, ideal_profit: f64) -> Self {
        let mut row = MetricRow {
            schema_version: SCHEMA_VERSION,
            model: cell.model,
            markets: cell.markets,
            replicate: cell.replicate,
            status: "ok".into(),
            kld: None,
            kld_unsupported: None,
            design_error: None,
            profit_recovery: None,
            pricing_recovery: None,
            model_profit: None,
            true_profit: None,
            true_profit_se: None,
            repriced_profit: None,
            repriced_profit_se: None,
            ideal_profit,
            vehicles: None,
            distinct_styles: None,
            error: String::new(),
        };
        match &cell.outcome {
            Ok(c) => {
                let mut styles = c.design.portfolio.styles();
                styles.dedup();
                row.kld = Some(c.kld);
                row.kld_unsupported = Some(c.kld_unsupported);
                row.design_error = Some(c.design_error);
                row.profit_recovery = Some(c.profit_recovery);
                row.pricing_recovery = Some(c.pricing_recovery);
                row.model_profit = Some(c.design.model_profit);
                row.true_profit = Some(c.design.true_profit);
                row.true_profit_se = Some(c.design.true_profit_se);
                row.repriced_profit = Some(c.repriced.true_profit);
                row.repriced_profit_se = Some(c.repriced.true_profit_se);
                row.vehicles = Some(c.design.portfolio.len());
                row.distinct_styles = Some(styles.len());
            }
            Err(e) => {
                row.status = "failed".into();
                row.error = e.clone();
            }
        }
        row
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

type Csv = csv::Writer<BufWriter<File>>;

/// Output files of one run, written row by row.
pub struct OutputFiles {
    dir: PathBuf,
    metrics: Csv,
    designs: Csv,
    fits: Csv,
    timings: Csv,
}

fn open(dir: &Path, name: &str, header: &[&str]) -> Result<Csv> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?));
    w.write_record(header)?;
    w.flush()?;
    Ok(w)
}

impl OutputFiles {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut metrics = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(BufWriter::new(File::create(dir.join("metrics.csv"))?));
        metrics.write_record([
            "schema_version",
            "model",
            "markets",
            "replicate",
            "status",
            "kld",
            "kld_unsupported",
            "design_error",
            "profit_recovery",
            "pricing_recovery",
            "model_profit",
            "true_profit",
            "true_profit_se",
            "repriced_profit",
            "repriced_profit_se",
            "ideal_profit",
            "vehicles",
            "distinct_styles",
            "error",
        ])?;
        metrics.flush()?;
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics,
            designs: open(
                dir,
                "designs.csv",
                &["schema_version", "source", "markets", "replicate", "vehicle", "style", "e", "a", "p", "cost", "repriced_p"],
            )?,
            fits: open(
                dir,
                "fits.csv",
                &[
                    "schema_version",
                    "model",
                    "markets",
                    "replicate",
                    "final_ll",
                    "converged",
                    "start_index",
                    "iterations",
                    "termination",
                    "degenerate_data",
                    "params",
                ],
            )?,
            timings: open(dir, "timings.csv", &["model", "markets", "replicate", "estimate_s", "design_s", "evaluate_s"])?,
        })
    }

    fn design_rows(&mut self, source: &str, m: usize, rep: usize, p: &Portfolio, repriced: Option<&Portfolio>) -> Result<()> {
        for (j, v) in p.vehicles.iter().enumerate() {
            let rp = repriced.map(|r| fmt_f64(r.vehicles[j].price)).unwrap_or_default();
            self.designs.write_record([
                SCHEMA_VERSION.to_string(),
                source.to_string(),
                m.to_string(),
                rep.to_string(),
                j.to_string(),
                v.style.to_string(),
                fmt_f64(v.mpg),
                fmt_f64(v.accel),
                fmt_f64(v.price),
                fmt_f64(v.cost),
                rp,
            ])?;
        }
        self.designs.flush()?;
        Ok(())
    }

    pub fn write_design(&mut self, source: &str, m: usize, rep: usize, p: &Portfolio) -> Result<()> {
        self.design_rows(source, m, rep, p, None)
    }

    pub fn write_cell(&mut self, cell: &CellRecord, ideal_profit: f64) -> Result<()> {
        self.metrics.serialize(MetricRow::from_cell(cell, ideal_profit))?;
        self.metrics.flush()?;
        let (model, m, rep) = (cell.model, cell.markets, cell.replicate);
        if let Ok(c) = &cell.outcome {
            self.design_rows(model.as_str(), m, rep, &c.design.portfolio, Some(&c.repriced.portfolio))?;
            let f = &c.fit;
            self.fits.write_record([
                SCHEMA_VERSION.to_string(),
                model.to_string(),
                m.to_string(),
                rep.to_string(),
                fmt_f64(f.final_ll),
                f.converged.to_string(),
                f.start_index.to_string(),
                f.iterations.to_string(),
                f.termination.clone(),
                f.degenerate_data.to_string(),
                serde_json::to_string(&f.model)?,
            ])?;
            self.fits.flush()?;
        }
        let t = &cell.timing;
        self.timings.write_record([
            model.to_string(),
            m.to_string(),
            rep.to_string(),
            format!("{:.3}", t.estimate),
            format!("{:.3}", t.design),
            format!("{:.3}", t.evaluate),
        ])?;
        self.timings.flush()?;
        Ok(())
    }

    pub fn write_manifest(&mut self, config: &ExperimentConfig, record: &RunRecord) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            schema_version: u32,
            content_hash: &'a str,
            master_seed: u64,
            config: &'a ExperimentConfig,
            cells: usize,
            failed_cells: usize,
            ideal: &'a crate::design::DesignOutcome,
            ideal_repriced_profit: f64,
            files: [&'a str; 4],
        }
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            content_hash: &record.config_hash,
            master_seed: config.master_seed,
            config,
            cells: record.cells.len(),
            failed_cells: record.failed_cells(),
            ideal: &record.ideal,
            ideal_repriced_profit: record.ideal_repriced.true_profit,
            files: ["metrics.csv", "designs.csv", "fits.csv", "timings.csv"],
        };
        let mut w = BufWriter::new(File::create(self.dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}
