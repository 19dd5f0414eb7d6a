use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use consider_core::design::{DesignOptions, GaOptions};
use consider_core::engineering::EngineeringConfig;
use consider_core::harness::{read_metrics, ExperimentConfig};
use consider_core::models::ModelFamily;
use consider_core::population::{PopulationSpec, ScreeningRule, TasteCoefficients};

fn consider(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_consider")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Three-style population and engineering files plus a small experiment config.
fn toy_setup(dir: &Path) -> PathBuf {
    let pop = PopulationSpec::new(
        3,
        [(0b001, 0.2), (0b010, 0.15), (0b100, 0.1), (0b011, 0.2), (0b110, 0.15), (0b111, 0.2)]
            .into_iter()
            .map(|(m, a)| (ScreeningRule::new(m, 3).unwrap(), a))
            .collect(),
        TasteCoefficients::from_array([2.0, -36.8, 11.3, 23.2]),
        TasteCoefficients::from_array([0.1, 2.2, 0.3, 0.5]),
    )
    .unwrap();
    let mut eng = EngineeringConfig::default();
    eng.styles.truncate(3);
    std::fs::write(dir.join("population.toml"), pop.to_toml().unwrap()).unwrap();
    std::fs::write(dir.join("engineering.toml"), eng.to_toml().unwrap()).unwrap();
    let config = ExperimentConfig {
        markets_grid: vec![10],
        replicates: 1,
        validation_markets: 50,
        rcl_draws: 50,
        truth_draws: 2000,
        models: vec![ModelFamily::Mnl],
        population: Some(dir.join("population.toml")),
        constant_mean: None,
        engineering: Some(dir.join("engineering.toml")),
        design: DesignOptions {
            ideal_search_draws: 100,
            ga: GaOptions { population: 16, min_generations: 3, max_generations: 10, ..Default::default() },
            ..Default::default()
        },
        ..Default::default()
    };
    let path = dir.join("experiment.toml");
    std::fs::write(&path, config.to_toml().unwrap()).unwrap();
    path
}

fn data_rows(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[test]
fn single_cell_experiment_writes_one_row_per_output_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let config = toy_setup(tmp.path());
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = consider(&["experiment", "--config", config.to_str().unwrap(), "--seed", "7", "-o", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("a");
    let rows = read_metrics(a.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].status, "ok");
    assert_eq!(rows[0].model, ModelFamily::Mnl);
    assert_eq!(data_rows(&a.join("fits.csv")), 1);
    assert_eq!(data_rows(&a.join("timings.csv")), 1);
    let designs = std::fs::read_to_string(a.join("designs.csv")).unwrap();
    assert!(designs.lines().any(|l| l.contains(",IDEAL,")));
    assert!(designs.lines().any(|l| l.contains(",MNL,")));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["content_hash"].as_str().unwrap().len(), 64);

    let b = run("b");
    let metrics = |d: &Path| std::fs::read(d.join("metrics.csv")).unwrap();
    assert_eq!(metrics(&a), metrics(&b));

    let o = consider(&["figure", "3", "--run", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.lines().next().unwrap().contains("markets"));
    assert!(table.lines().any(|l| l.contains(",MNL,10,")), "{table}");
}

#[test]
fn pipeline_commands_chain_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let config = toy_setup(tmp.path());
    let path = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    let c = config.to_str().unwrap();

    let o = consider(&["generate", "--config", c, "--markets", "20", "-o", &path("data.csv")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_rows(&tmp.path().join("data.csv")), 20 * 6);

    let o = consider(&["estimate", &path("data.csv"), "--model", "MNL", "--config", c, "-o", &path("fit.json")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path("fit.json")).unwrap()).unwrap();
    assert!(fit["final_ll"].as_f64().unwrap().is_finite());

    let o = consider(&["design", &path("fit.json"), "--config", c, "-o", &path("design.json")]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = consider(&["evaluate", &path("design.json"), "--config", c]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let (profit, repriced) = (report["true_profit"].as_f64().unwrap(), report["repriced_profit"].as_f64().unwrap());
    assert!(profit > 0.0);
    assert!(repriced >= profit - 2.0 * report["true_profit_se"].as_f64().unwrap());
}

#[test]
fn engineering_curves_and_errors() {
    let o = consider(&["engineering", "--points", "4"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 9 * 4);

    let o = consider(&["engineering", "--points", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("two points"));

    let o = consider(&["figure", "6"]);
    assert!(!o.status.success());

    let o = consider(&["generate", "--config", "/nonexistent/experiment.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "markets_grid = [50, 10]\n").unwrap();
    let o = consider(&["experiment", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ascending"));
}
