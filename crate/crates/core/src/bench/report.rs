//! Study and trace files.
//!
//! `runs.csv` carries no timing so that identical seeds give byte-identical
//! files; wall-clock times go to `timings.csv`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::study::{quantile, summarize, RunRecord, StudyResult, Summary, Trace};
use crate::error::{Error, Result};

pub const RUNS_FILE: &str = "runs.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const QUANTILES_FILE: &str = "quantiles.csv";

#[derive(Serialize, Deserialize)]
struct RunRow {
    function: String,
    strategy: String,
    replication: usize,
    seed: u64,
    best_value: Option<f64>,
    status: String,
}

#[derive(Serialize, Deserialize)]
struct TimingRow {
    function: String,
    strategy: String,
    replication: usize,
    wall_ms: f64,
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    function: &'a str,
    fingerprint: String,
    config: &'a super::study::StudyConfig,
    summaries: &'a [Summary],
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Persistence(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Persistence(e.to_string()))
}

pub fn runs_csv(runs: &[RunRecord]) -> Result<String> {
    csv_string(runs.iter().map(|r| RunRow {
        function: r.function.clone(),
        strategy: r.strategy.clone(),
        replication: r.replication,
        seed: r.seed,
        best_value: r.best_value,
        status: if r.failed { "failed" } else { "ok" }.to_string(),
    }))
}

pub fn summaries_csv(summaries: &[Summary]) -> Result<String> {
    csv_string(summaries)
}

pub fn summaries_json(summaries: &[Summary]) -> Result<String> {
    Ok(serde_json::to_string_pretty(summaries)?)
}

/// Quantiles on a 5% grid per strategy, for box and density plots.
pub fn quantiles_csv(result: &StudyResult) -> Result<String> {
    #[derive(Serialize)]
    struct Row<'a> {
        strategy: &'a str,
        prob: f64,
        value: f64,
    }
    let mut rows = Vec::new();
    for s in &result.summaries {
        let mut v = result.best_values(&s.strategy);
        v.sort_by(f64::total_cmp);
        for k in 0..=20 {
            let prob = k as f64 / 20.0;
            rows.push(Row {
                strategy: &s.strategy,
                prob,
                value: quantile(&v, prob),
            });
        }
    }
    csv_string(rows)
}

/// Writes every study file into `dir`, creating it if needed.
pub fn write_study(result: &StudyResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if result.config.strategies.is_empty() || result.runs.is_empty() {
        return Err(Error::invalid("nothing to report: the study has no strategies"));
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RUNS_FILE), runs_csv(&result.runs)?)?;
    fs::write(
        dir.join(TIMINGS_FILE),
        csv_string(result.runs.iter().map(|r| TimingRow {
            function: r.function.clone(),
            strategy: r.strategy.clone(),
            replication: r.replication,
            wall_ms: r.wall_ms,
        }))?,
    )?;
    fs::write(dir.join(SUMMARY_CSV), summaries_csv(&result.summaries)?)?;
    let doc = SummaryDoc {
        function: &result.config.function,
        fingerprint: result.config.fingerprint(),
        config: &result.config,
        summaries: &result.summaries,
    };
    fs::write(dir.join(SUMMARY_JSON), serde_json::to_string_pretty(&doc)? + "\n")?;
    fs::write(dir.join(QUANTILES_FILE), quantiles_csv(result)?)?;
    Ok(())
}

/// Reads `runs.csv` (and `timings.csv` when present) back into records.
pub fn read_runs(dir: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let dir = dir.as_ref();
    let mut reader = csv::Reader::from_path(dir.join(RUNS_FILE))?;
    let mut runs = Vec::new();
    for row in reader.deserialize::<RunRow>() {
        let row = row?;
        let failed = match row.status.as_str() {
            "ok" => false,
            "failed" => true,
            other => return Err(Error::Persistence(format!("unknown run status {other:?}"))),
        };
        runs.push(RunRecord {
            function: row.function,
            strategy: row.strategy,
            replication: row.replication,
            seed: row.seed,
            best_value: row.best_value,
            failed,
            wall_ms: 0.0,
        });
    }
    let timings = dir.join(TIMINGS_FILE);
    if timings.exists() {
        let mut reader = csv::Reader::from_path(timings)?;
        for row in reader.deserialize::<TimingRow>() {
            let row = row?;
            if let Some(r) = runs
                .iter_mut()
                .find(|r| r.strategy == row.strategy && r.replication == row.replication)
            {
                r.wall_ms = row.wall_ms;
            }
        }
    }
    Ok(runs)
}

/// Recomputes summaries from the raw runs in `dir`.
pub fn summarize_dir(dir: impl AsRef<Path>) -> Result<Vec<Summary>> {
    let runs = read_runs(dir)?;
    if runs.is_empty() {
        return Err(Error::invalid("runs file has no rows"));
    }
    Ok(summarize(&runs))
}

/// Writes `trace.csv` (one row per observation) and `regions.csv` (grid
/// membership after the initial design and after each sequential point).
pub fn write_trace(trace: &Trace, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let state = &trace.state;
    let domain = &state.config().domain;
    let n_init = state.config().init.n_runs;

    let mut header: Vec<String> = vec!["n".into(), "phase".into()];
    header.extend(domain.continuous_names().iter().cloned());
    header.extend(domain.qualitative_names().iter().cloned());
    header.extend(["response", "best_value", "cee_value", "beta", "region_size"].map(String::from));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    let mut best = f64::INFINITY;
    for (t, (pt, &y)) in state.points().iter().zip(state.responses()).enumerate() {
        best = best.min(y);
        let diag = (t >= n_init)
            .then(|| state.history()[t - n_init].diagnostics.as_ref())
            .flatten();
        let mut rec = vec![(t + 1).to_string(), if t < n_init { "initial" } else { "sequential" }.into()];
        rec.extend(pt.x.iter().map(f64::to_string));
        rec.extend(pt.z.iter().enumerate().map(|(j, &l)| domain.qualitative().label(j, l)));
        rec.push(y.to_string());
        rec.push(best.to_string());
        rec.push(diag.map_or(String::new(), |d| d.cee_value.to_string()));
        rec.push(diag.map_or(String::new(), |d| d.beta.to_string()));
        rec.push(diag.and_then(|d| d.region_size).map_or(String::new(), |s| s.to_string()));
        w.write_record(&rec)?;
    }
    fs::write(dir.join("trace.csv"), w.into_inner().map_err(|e| Error::Persistence(e.to_string()))?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = vec!["n".into(), "beta".into()];
    header.extend(domain.continuous_names().iter().cloned());
    header.extend(domain.qualitative_names().iter().cloned());
    header.push("in_region".into());
    w.write_record(&header)?;
    for snap in &trace.regions {
        for (g, &inside) in trace.grid.iter().zip(&snap.in_region) {
            let mut rec = vec![snap.n.to_string(), snap.beta.to_string()];
            rec.extend(domain.from_unit(&g.x).iter().map(f64::to_string));
            rec.extend(g.z.iter().enumerate().map(|(j, &l)| domain.qualitative().label(j, l)));
            rec.push(u8::from(inside).to_string());
            w.write_record(&rec)?;
        }
    }
    fs::write(dir.join("regions.csv"), w.into_inner().map_err(|e| Error::Persistence(e.to_string()))?)?;
    Ok(())
}
