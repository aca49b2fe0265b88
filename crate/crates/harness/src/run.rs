//! Parallel trial runner, aggregation and result files.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::plot::plot_script;
use crate::spec::ExperimentSpec;
use crate::trial::{run_trial, TargetRow, TrialRecord};
use crate::Result;

/// Mean of each metric at one (sweep point, variant).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub point: usize,
    pub snr_db: f64,
    pub axis_values: Vec<String>,
    pub variant: String,
    pub trials: usize,
    /// Records that carry a failure reason.
    pub misses: usize,
    /// `(column, mean)` over the records where the metric is finite.
    pub means: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Ordered by sweep point, then variant, then trial.
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl RunOutput {
    pub fn row(&self, variant: &str, snr_db: f64, axis_values: &[&str]) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.variant == variant && r.snr_db == snr_db && r.axis_values.iter().eq(axis_values.iter()))
    }
}

impl SummaryRow {
    pub fn mean(&self, column: &str) -> Option<f64> {
        self.means.iter().find(|(c, _)| c == column).map(|&(_, v)| v)
    }
}

/// Summary column of a per-trial metric: squared errors average to an MSE.
pub fn summary_column(metric: &str) -> String {
    match metric.strip_prefix("sq_err_") {
        Some(rest) => format!("mse_{rest}"),
        None => format!("mean_{metric}"),
    }
}

/// Runs all trials (in parallel) and aggregates them.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutput> {
    spec.validate()?;
    let per_trial = (0..spec.n_trials)
        .into_par_iter()
        .map(|t| run_trial(spec, t))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = spec.effective_variants().into_iter().map(|v| v.label).collect();
    let mut records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    let variant_rank = |r: &TrialRecord| labels.iter().position(|l| *l == r.variant).unwrap_or(usize::MAX);
    records.sort_by_key(|r| (r.point, variant_rank(r), r.trial));
    let summary = summarize(&records);
    Ok(RunOutput { records, summary })
}

/// Metric names in order of first appearance.
fn metric_names(records: &[TrialRecord]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for r in records {
        for (m, _) in &r.metrics {
            if !names.contains(m) {
                names.push(m.clone());
            }
        }
    }
    names
}

/// Groups consecutive records of the same (point, variant).
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let names = metric_names(records);
    records
        .chunk_by(|a, b| a.point == b.point && a.variant == b.variant)
        .map(|group| {
            let first = &group[0];
            let means = names
                .iter()
                .filter_map(|name| {
                    let vals: Vec<f64> = group
                        .iter()
                        .filter_map(|r| r.metrics.iter().find(|(m, _)| m == name).map(|&(_, v)| v))
                        .filter(|v| v.is_finite())
                        .collect();
                    (!vals.is_empty()).then(|| (summary_column(name), vals.iter().sum::<f64>() / vals.len() as f64))
                })
                .collect();
            SummaryRow {
                point: first.point,
                snr_db: first.snr_db,
                axis_values: first.axis_values.clone(),
                variant: first.variant.clone(),
                trials: group.len(),
                misses: group.iter().filter(|r| r.failure.is_some()).count(),
                means,
            }
        })
        .collect()
}

fn fmt_rows(rows: &[TargetRow]) -> String {
    rows.iter().map(|t| format!("{}:{}:{}", t.range, t.velocity, t.doa)).collect::<Vec<_>>().join("|")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Per-trial CSV: one row per (trial, point, variant).
pub fn write_results<W: std::io::Write>(spec: &ExperimentSpec, records: &[TrialRecord], w: W) -> Result<()> {
    let names = metric_names(records);
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["trial", "scene_seed", "point", "snr_db"].map(String::from).to_vec();
    header.extend(spec.axes.iter().map(|a| a.key.clone()));
    header.extend(
        ["variant", "truth", "estimates", "sync_truth_v", "sync_truth_r", "sync_est_v", "sync_est_r", "failure"]
            .map(String::from),
    );
    header.extend(names.iter().cloned());
    out.write_record(&header)?;
    for r in records {
        let mut row = vec![r.trial.to_string(), r.scene_seed.to_string(), r.point.to_string(), r.snr_db.to_string()];
        row.extend(r.axis_values.iter().cloned());
        row.push(r.variant.clone());
        row.push(fmt_rows(&r.truth));
        row.push(fmt_rows(&r.estimates));
        row.push(fmt_opt(r.sync_truth.map(|s| s.0)));
        row.push(fmt_opt(r.sync_truth.map(|s| s.1)));
        row.push(fmt_opt(r.sync_estimate.map(|s| s.0)));
        row.push(fmt_opt(r.sync_estimate.map(|s| s.1)));
        row.push(r.failure.clone().unwrap_or_default());
        for n in &names {
            row.push(fmt_opt(r.metrics.iter().find(|(m, _)| m == n).map(|&(_, v)| v)));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary<W: std::io::Write>(spec: &ExperimentSpec, summary: &[SummaryRow], w: W) -> Result<()> {
    let mut columns: Vec<String> = Vec::new();
    for r in summary {
        for (c, _) in &r.means {
            if !columns.contains(c) {
                columns.push(c.clone());
            }
        }
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["point", "snr_db"].map(String::from).to_vec();
    header.extend(spec.axes.iter().map(|a| a.key.clone()));
    header.extend(["variant", "trials", "misses"].map(String::from));
    header.extend(columns.iter().cloned());
    out.write_record(&header)?;
    for r in summary {
        let mut row = vec![r.point.to_string(), r.snr_db.to_string()];
        row.extend(r.axis_values.iter().cloned());
        row.extend([r.variant.clone(), r.trials.to_string(), r.misses.to_string()]);
        for c in &columns {
            row.push(fmt_opt(r.mean(c)));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `results.csv`, `summary.csv`, `config.txt` and `plot_<name>.py`.
pub fn write_outputs(spec: &ExperimentSpec, output: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_results(spec, &output.records, fs::File::create(dir.join("results.csv"))?)?;
    write_summary(spec, &output.summary, fs::File::create(dir.join("summary.csv"))?)?;
    fs::write(dir.join("config.txt"), spec.to_config())?;
    fs::write(dir.join(format!("plot_{}.py", spec.name)), plot_script(spec))?;
    Ok(())
}
