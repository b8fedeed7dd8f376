use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mcforecast::boost::{self, BoostModel, InitWeights};
use mcforecast::data::{self, EnsembleDataset, LagSpec, SensorPanel};
use mcforecast::metrics::{self, EvalReport};
use mcforecast::model::ModelDocument;
use mcforecast::simgen;
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| mcforecast::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_file(path: &Path, body: &[u8]) -> Result<()> {
    fs::write(path, body).map_err(|e| mcforecast::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut body = String::from(header);
    body.push('\n');
    for r in rows {
        body.push_str(&r);
        body.push('\n');
    }
    write_file(path, body.as_bytes())
}

pub fn day_file_name(day: usize) -> String {
    format!("day_{day:03}.csv")
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.sim_spec();
    let panels = simgen::simulate(&spec)?;
    create_dir(&cfg.out)?;
    for p in &panels {
        data::export_csv(p, cfg.out.join(day_file_name(p.day_id() as usize)))?;
    }
    let occupancy: f64 = panels
        .iter()
        .map(|p| p.values().iter().map(|v| f64::from(*v)).sum::<f64>())
        .sum::<f64>()
        / panels.iter().map(|p| p.values().len()).sum::<usize>() as f64;
    println!(
        "wrote {} day panels ({} sensors x {} s, occupancy {:.3}) to {}",
        panels.len(),
        spec.sensors,
        spec.seconds_per_day,
        occupancy,
        cfg.out.display()
    );
    Ok(())
}

/// Day panels `day_001.csv .. day_{days}.csv` from the data directory.
pub fn load_days(dir: &Path, days: usize) -> Result<Vec<SensorPanel>> {
    if days == 0 {
        bail!("days must be >= 1");
    }
    (1..=days)
        .map(|d| {
            let path = dir.join(day_file_name(d));
            Ok(data::ingest_csv(&path)?.with_day_id(d as u32))
        })
        .collect()
}

struct Fitted {
    model: BoostModel,
    ensemble: EnsembleDataset,
    sensor_ids: Vec<String>,
}

fn fit_panels(cfg: &RunConfig, panels: &[SensorPanel], lag: &LagSpec) -> Result<Fitted> {
    let ensemble = data::build_ensemble(panels, lag)?;
    let kspec = cfg.kernel_spec(ensemble.n_sensors(), lag.lag)?;
    let model = boost::boost_fit(&ensemble, &kspec, &cfg.solver_spec(), &cfg.boost_spec())?;
    Ok(Fitted {
        model,
        sensor_ids: panels[0].sensor_ids().to_vec(),
        ensemble,
    })
}

#[derive(Serialize)]
struct RoundReport {
    round: usize,
    epsilon_raw: f64,
    epsilon: f64,
    beta: f64,
    alpha: f64,
    mismatched_columns: usize,
    iterations: usize,
    converged: bool,
    final_objective: f64,
    monotonicity_violations: usize,
    rate_sup: f64,
    rate_bounded: bool,
    gradient_residuals: [f64; 4],
}

#[derive(Serialize)]
struct FitReport {
    config: serde_json::Value,
    training_columns: usize,
    rounds: Vec<RoundReport>,
    final_mismatched_columns: usize,
    /// Only defined for uniform initial weights.
    training_error_bound: Option<Vec<f64>>,
    measured_mismatched_columns: Vec<Option<usize>>,
}

fn fit_report(cfg: &RunConfig, fitted: &Fitted) -> Result<FitReport> {
    let m = &fitted.model;
    let y_tr = fitted.ensemble.augmented_y_tr();
    let rounds = m
        .rounds
        .iter()
        .zip(&m.alpha)
        .enumerate()
        .map(|(k, (r, a))| RoundReport {
            round: k + 1,
            epsilon_raw: r.epsilon_raw,
            epsilon: r.epsilon,
            beta: r.beta,
            alpha: *a,
            mismatched_columns: r.mismatch_count(),
            iterations: r.diagnostics.iterations,
            converged: r.diagnostics.converged,
            final_objective: r.diagnostics.final_objective(),
            monotonicity_violations: r.diagnostics.monotonicity_violations,
            rate_sup: r.diagnostics.rate_sup,
            rate_bounded: r.diagnostics.rate_bounded(),
            gradient_residuals: r.diagnostics.gradient_residuals,
        })
        .collect();
    Ok(FitReport {
        config: cfg.echo(),
        training_columns: m.n_columns(),
        rounds,
        final_mismatched_columns: m.mismatched_columns(y_tr.view()),
        training_error_bound: (m.boost.init_weights == InitWeights::Uniform)
            .then(|| boost::training_error_bound(m, &m.tau)),
        measured_mismatched_columns: boost::measured_trace(m, y_tr.view())?,
    })
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.require_data()?;
    let lag = cfg.lag_spec()?;
    let panels = load_days(dir, cfg.days)?;
    let fitted = fit_panels(cfg, &panels, &lag)?;
    let m = &fitted.model;
    let doc = ModelDocument::from_model(
        m,
        fitted.sensor_ids.clone(),
        fitted.ensemble.timestamps_te().to_vec(),
        cfg.echo(),
    );
    create_dir(&cfg.out)?;
    doc.save(cfg.out.join("model.json"))?;
    write_json(&cfg.out.join("diagnostics.json"), &fit_report(cfg, &fitted)?)?;
    let timing: Vec<f64> = m.rounds.iter().map(|r| r.diagnostics.wall_time_secs).collect();
    write_json(
        &cfg.out.join("timing.json"),
        &serde_json::json!({ "solve_seconds_per_round": timing }),
    )?;
    println!(
        "fitted {} rounds on {} days x {} columns; epsilon {:?}; model written to {}",
        m.rounds.len(),
        fitted.ensemble.n_days(),
        lag.train_len,
        m.epsilons(),
        cfg.out.join("model.json").display()
    );
    Ok(())
}

fn write_panel_like(
    path: &Path,
    ids: &[String],
    stamps: &[i64],
    cell: impl Fn(usize, usize) -> String,
) -> Result<()> {
    let file = File::create(path).map_err(|e| mcforecast::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    let start = stamps.first().copied().unwrap_or(0);
    data::write_matrix_csv(&mut w, ids, start, stamps.len(), cell)
        .and_then(|_| w.flush())
        .map_err(|e| mcforecast::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    Ok(())
}

fn load_model(cfg: &RunConfig) -> Result<ModelDocument> {
    Ok(ModelDocument::load(cfg.require_model()?)?)
}

pub fn predict(cfg: &RunConfig) -> Result<()> {
    let doc = load_model(cfg)?;
    let (pred, scores) = doc.predict()?;
    create_dir(&cfg.out)?;
    let ids = &doc.sensor_ids;
    let stamps = &doc.timestamps_te;
    write_panel_like(&cfg.out.join("predictions.csv"), ids, stamps, |s, t| {
        if pred[[s, t]] == 1.0 { "1" } else { "0" }.to_string()
    })?;
    write_panel_like(&cfg.out.join("scores.csv"), ids, stamps, |s, t| {
        format!("{:?}", scores[[s, t]])
    })?;
    println!(
        "wrote {} x {} predictions to {}",
        pred.nrows(),
        pred.ncols(),
        cfg.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluationDocument<'a> {
    config: serde_json::Value,
    lag: usize,
    horizon: usize,
    #[serde(flatten)]
    report: &'a EvalReport,
}

fn present_truth(doc: &ModelDocument, data_dir: &Path) -> Result<mcforecast::data::LaggedDataset> {
    let path = data_dir.join(day_file_name(1));
    let panel = data::ingest_csv(&path)?;
    if panel.sensor_ids() != doc.sensor_ids.as_slice() {
        bail!(
            "{} has sensors {:?}, the model was fitted on {:?}",
            path.display(),
            panel.sensor_ids(),
            doc.sensor_ids
        );
    }
    let lagged = data::build_lagged(&panel, &doc.lag)?;
    if lagged.timestamps_te != doc.timestamps_te {
        bail!("{} does not cover the model's test window", path.display());
    }
    Ok(lagged)
}

fn evaluate_prediction(cfg: &RunConfig, pred: &Array2<f64>, present: &data::LaggedDataset) -> Result<EvalReport> {
    Ok(metrics::evaluate(pred.view(), present, cfg.ridge_mu, cfg.m1_samples)?)
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let doc = load_model(cfg)?;
    let present = present_truth(&doc, cfg.require_data()?)?;
    let (pred, _) = doc.predict()?;
    let report = evaluate_prediction(cfg, &pred, &present)?;
    create_dir(&cfg.out)?;
    write_json(
        &cfg.out.join("evaluation.json"),
        &EvaluationDocument {
            config: cfg.echo(),
            lag: doc.lag.lag,
            horizon: doc.lag.horizon,
            report: &report,
        },
    )?;

    let mut table = vec![format!(
        "mc_boosted,{},{},{},{}",
        report.model.mae, report.model.accuracy_mae, report.model.m1, report.model.accuracy_m1
    )];
    for (name, s) in &report.baseline_scores {
        table.push(format!("{name},{},{},{},{}", s.mae, s.accuracy_mae, s.m1, s.accuracy_m1));
    }
    write_csv(
        &cfg.out.join("accuracy_table.csv"),
        "method,mae,accuracy_mae,m1,accuracy_m1",
        table,
    )?;

    let mut objective = Vec::new();
    let mut rate = Vec::new();
    for (k, r) in doc.rounds.iter().enumerate() {
        for (i, f) in r.diagnostics.objective_trace.iter().enumerate() {
            objective.push(format!("{},{i},{f}", k + 1));
        }
        for (i, q) in r.diagnostics.rate_trace.iter().enumerate() {
            rate.push(format!("{},{},{q}", k + 1, i + 1));
        }
    }
    write_csv(&cfg.out.join("objective_trace.csv"), "round,iteration,objective", objective)?;
    write_csv(&cfg.out.join("rate_trace.csv"), "round,k,k_times_gap", rate)?;

    let names: Vec<&String> = report.baseline_scores.keys().collect();
    let mut header = String::from("sensor,mc_boosted");
    for n in &names {
        header.push(',');
        header.push_str(n);
    }
    let per_sensor = doc.sensor_ids.iter().enumerate().map(|(j, id)| {
        let mut row = format!("{id},{}", report.model.per_sensor_mae[j]);
        for n in &names {
            row.push_str(&format!(",{}", report.baseline_scores[*n].per_sensor_mae[j]));
        }
        row
    });
    write_csv(&cfg.out.join("per_sensor_mae.csv"), &header, per_sensor)?;

    println!(
        "accuracy (1 - MAE) {:.4}, accuracy (1 - M1) {:.4}; persistence {:.4}",
        report.model.accuracy_mae,
        report.model.accuracy_m1,
        report.baseline_scores["persistence"].accuracy_mae
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub lag: usize,
    pub horizon: usize,
    pub accuracy_mae: f64,
    pub accuracy_m1: f64,
    pub persistence_accuracy_mae: f64,
    pub persistence_accuracy_m1: f64,
}

#[derive(Serialize)]
struct SweepDocument {
    config: serde_json::Value,
    days: usize,
    cells: Vec<SweepCell>,
    /// Per lag, whether MAE accuracy never increases with the horizon.
    /// Reported, not required.
    non_increasing_in_horizon: Vec<(usize, bool)>,
}

fn thread_cap() -> Option<usize> {
    std::env::var("MCFORECAST_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
}

fn sweep_cell(cfg: &RunConfig, panels: &[SensorPanel], lag: usize, horizon: usize) -> Result<SweepCell> {
    let spec = LagSpec::new(lag, horizon, cfg.train_len, cfg.test_len)?;
    let fitted = fit_panels(cfg, panels, &spec)?;
    let report = evaluate_prediction(cfg, &fitted.model.predictions_te, fitted.ensemble.present())?;
    let p = &report.baseline_scores["persistence"];
    Ok(SweepCell {
        lag,
        horizon,
        accuracy_mae: report.model.accuracy_mae,
        accuracy_m1: report.model.accuracy_m1,
        persistence_accuracy_mae: p.accuracy_mae,
        persistence_accuracy_m1: p.accuracy_m1,
    })
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let panels = load_days(cfg.require_data()?, cfg.days)?;
    let grid: Vec<(usize, usize)> = cfg
        .lags
        .iter()
        .flat_map(|l| cfg.horizons.iter().map(move |h| (*l, *h)))
        .collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building the sweep thread pool")?;
    let cells: Vec<Result<SweepCell>> = pool.install(|| {
        grid.par_iter()
            .map(|(l, h)| {
                sweep_cell(cfg, &panels, *l, *h).with_context(|| format!("sweep cell L={l}, H={h}"))
            })
            .collect()
    });
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;

    create_dir(&cfg.out)?;
    let cell_at = |l: usize, h: usize| {
        cells
            .iter()
            .find(|c| c.lag == l && c.horizon == h)
            .ok_or_else(|| anyhow!("missing sweep cell L={l}, H={h}"))
    };
    let header = std::iter::once("days,lag".to_string())
        .chain(cfg.horizons.iter().map(|h| format!("H={h}")))
        .collect::<Vec<_>>()
        .join(",");
    for (file, pick) in [
        ("sweep_mae.csv", (|c: &SweepCell| c.accuracy_mae) as fn(&SweepCell) -> f64),
        ("sweep_m1.csv", |c: &SweepCell| c.accuracy_m1),
    ] {
        let mut rows = Vec::new();
        for l in &cfg.lags {
            let mut row = format!("{},{l}", cfg.days);
            for h in &cfg.horizons {
                row.push_str(&format!(",{}", pick(cell_at(*l, *h)?)));
            }
            rows.push(row);
        }
        write_csv(&cfg.out.join(file), &header, rows)?;
    }
    let trend = cfg
        .lags
        .iter()
        .map(|l| {
            let mut hs = cfg.horizons.clone();
            hs.sort_unstable();
            let acc: Vec<f64> = hs
                .iter()
                .map(|h| cell_at(*l, *h).map(|c| c.accuracy_mae))
                .collect::<Result<_>>()?;
            Ok((*l, acc.windows(2).all(|w| w[1] <= w[0])))
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(
        &cfg.out.join("sweep.json"),
        &SweepDocument {
            config: cfg.echo(),
            days: cfg.days,
            cells: cells.clone(),
            non_increasing_in_horizon: trend,
        },
    )?;
    println!(
        "swept {} cells ({} lags x {} horizons); tables in {}",
        cells.len(),
        cfg.lags.len(),
        cfg.horizons.len(),
        cfg.out.display()
    );
    Ok(())
}
