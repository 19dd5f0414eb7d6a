use std::collections::BTreeMap;
use std::io::Write;

use super::MetricRow;
use crate::error::{Error, Result};
use crate::market::fmt_f64;
use crate::models::ModelFamily;

/// Figure numbers and the value columns of their tables.
pub const FIGURES: [(u8, &str, [&str; 3]); 5] = [
    (1, "kld", ["min", "mean", "max"]),
    (2, "design_error", ["min", "mean", "max"]),
    (3, "profit_recovery", ["min", "mean", "max"]),
    (4, "pricing_recovery", ["min", "mean", "max"]),
    (5, "scatter", ["mean_kld", "mean_design_error", "mean_profit_error"]),
];

/// Summary of one (model, M) group. `values` is empty-valued where no
/// replicate succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureRow {
    pub model: ModelFamily,
    pub markets: usize,
    pub replicates: usize,
    pub failed: usize,
    pub values: [Option<f64>; 3],
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn range(v: &[f64]) -> [Option<f64>; 3] {
    if v.is_empty() {
        return [None; 3];
    }
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [Some(lo), mean(v), Some(hi)]
}

/// Per (model, M) statistics of the metric behind `figure`, from metric rows.
pub fn emit_figure_data(rows: &[MetricRow], figure: u8) -> Result<Vec<FigureRow>> {
    if !(1..=5).contains(&figure) {
        return Err(Error::invalid(format!("no figure {figure}; choose 1 to 5")));
    }
    let mut groups: BTreeMap<(ModelFamily, usize), Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.model, r.markets)).or_default().push(r);
    }
    let pick = |rows: &[&MetricRow], f: fn(&MetricRow) -> Option<f64>| -> Vec<f64> {
        rows.iter().filter(|r| r.status == "ok").filter_map(|r| f(r)).collect()
    };
    Ok(groups
        .into_iter()
        .map(|((model, markets), g)| {
            let replicates = g.iter().filter(|r| r.status == "ok").count();
            let values = match figure {
                1 => range(&pick(&g, |r| r.kld)),
                2 => range(&pick(&g, |r| r.design_error)),
                3 => range(&pick(&g, |r| r.profit_recovery)),
                4 => range(&pick(&g, |r| r.pricing_recovery)),
                _ => [
                    mean(&pick(&g, |r| r.kld)),
                    mean(&pick(&g, |r| r.design_error)),
                    mean(&pick(&g, |r| r.profit_recovery.map(|p| 1.0 - p))),
                ],
            };
            FigureRow { model, markets, replicates, failed: g.len() - replicates, values }
        })
        .collect())
}

/// Writes a figure table as CSV; `gap` marks groups with failed or missing replicates.
pub fn write_figure<W: Write>(figure: u8, rows: &[FigureRow], writer: W) -> Result<()> {
    let (_, metric, cols) = FIGURES[(figure.clamp(1, 5) - 1) as usize];
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["figure", "metric", "model", "markets", "replicates", "failed", cols[0], cols[1], cols[2], "gap"])?;
    for r in rows {
        let v = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        w.write_record([
            figure.to_string(),
            metric.to_string(),
            r.model.to_string(),
            r.markets.to_string(),
            r.replicates.to_string(),
            r.failed.to_string(),
            v(r.values[0]),
            v(r.values[1]),
            v(r.values[2]),
            (r.failed > 0 || r.replicates == 0).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SCHEMA_VERSION;

    fn row(model: ModelFamily, m: usize, rep: usize, kld: Option<f64>) -> MetricRow {
        MetricRow {
            schema_version: SCHEMA_VERSION,
            model,
            markets: m,
            replicate: rep,
            status: if kld.is_some() { "ok".into() } else { "failed".into() },
            kld,
            kld_unsupported: kld.map(|_| 0),
            design_error: kld.map(|k| 2.0 * k),
            profit_recovery: kld.map(|k| 1.0 - k),
            pricing_recovery: kld.map(|_| 1.0),
            model_profit: None,
            true_profit: None,
            true_profit_se: None,
            repriced_profit: None,
            repriced_profit_se: None,
            ideal_profit: 1.0,
            vehicles: None,
            distinct_styles: None,
            error: String::new(),
        }
    }

    #[test]
    fn single_replicate_has_equal_statistics() {
        let t = emit_figure_data(&[row(ModelFamily::Ctc, 10, 0, Some(0.3))], 1).unwrap();
        assert_eq!(t[0].values, [Some(0.3); 3]);
    }

    #[test]
    fn gaps_and_scatter() {
        let rows = vec![
            row(ModelFamily::Mnl, 10, 0, Some(0.1)),
            row(ModelFamily::Mnl, 10, 1, Some(0.3)),
            row(ModelFamily::Mnl, 50, 0, None),
            row(ModelFamily::Ctc, 10, 0, Some(0.2)),
        ];
        let t = emit_figure_data(&rows, 1).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].values, [Some(0.1), Some(0.2), Some(0.3)]);
        assert_eq!((t[1].replicates, t[1].failed, t[1].values), (0, 1, [None; 3]));
        let s = emit_figure_data(&rows, 5).unwrap();
        assert_eq!(s.len(), 3);
        assert!((s[0].values[1].unwrap() - 0.4).abs() < 1e-15);
        assert!((s[0].values[2].unwrap() - 0.2).abs() < 1e-15);
        let mut buf = Vec::new();
        write_figure(1, &t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().ends_with(",,,,true"));
        assert!(emit_figure_data(&rows, 6).is_err());
    }
}
