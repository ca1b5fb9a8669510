//! Cells × seeds in a thread pool, per-cell summaries and the ablation table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use spot_core::presets::Cell;

use crate::config::Settings;
use crate::error::{invalid, HarnessError, Result};
use crate::run::{self, RunSummary};

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub seed: u64,
    pub error: String,
}

/// Ranges over the seeds of one cell.
///
/// `convergence_actions_max` is null when any seed never converged, and
/// `convergence_actions_min` is null only when none did.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub cell: String,
    pub env: String,
    pub q: String,
    pub mask: bool,
    pub spotq: bool,
    pub reward: String,
    pub eval_trials: u32,
    pub completion_rate_min: Option<f64>,
    pub completion_rate_max: Option<f64>,
    pub efficiency_min: Option<f64>,
    pub efficiency_max: Option<f64>,
    pub convergence_actions_min: Option<u64>,
    pub convergence_actions_max: Option<u64>,
    pub runs: Vec<RunSummary>,
    pub failures: Vec<Failure>,
}

fn range(values: impl Iterator<Item = f64> + Clone) -> (Option<f64>, Option<f64>) {
    let min = values.clone().reduce(f64::min);
    let max = values.reduce(f64::max);
    (min, max)
}

impl CellSummary {
    pub fn new(settings: &Settings, cell: Cell, runs: Vec<RunSummary>, failures: Vec<Failure>) -> CellSummary {
        let (completion_rate_min, completion_rate_max) = range(runs.iter().map(|r| r.completion_rate));
        let (efficiency_min, efficiency_max) = range(runs.iter().map(|r| r.mean_efficiency));
        let converged = runs.iter().filter_map(|r| r.convergence_actions);
        let convergence_actions_min = converged.clone().min();
        let convergence_actions_max = if runs.iter().all(|r| r.convergence_actions.is_some()) {
            converged.max()
        } else {
            None
        };
        CellSummary {
            cell: cell.label(),
            env: settings.env.to_string(),
            q: settings.q.to_string(),
            mask: cell.use_mask,
            spotq: cell.use_spotq,
            reward: cell.reward_kind.name().to_string(),
            eval_trials: settings.eval_trials,
            completion_rate_min,
            completion_rate_max,
            efficiency_min,
            efficiency_max,
            convergence_actions_min,
            convergence_actions_max,
            runs,
            failures,
        }
    }
}

/// Trains every (cell, seed) pair and writes `<out>/<cell>/…`. Failed runs are
/// listed in their cell summary rather than aborting the rest.
pub fn run_all(settings: &Settings, out: &Path, jobs: usize) -> Result<Vec<CellSummary>> {
    let pairs: Vec<(Cell, u64)> = settings
        .cells
        .iter()
        .flat_map(|&c| settings.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunSummary>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(cell, seed)| {
                let dir = run::seed_dir(&out.join(cell.label()), seed);
                run::train_run(settings, cell, seed, &dir)
            })
            .collect()
    });
    let mut summaries = Vec::new();
    let mut results = results.into_iter();
    for &cell in &settings.cells {
        let mut runs = Vec::new();
        let mut failures = Vec::new();
        for &seed in &settings.seeds {
            match results.next().expect("one result per pair") {
                Ok(r) => runs.push(r),
                Err(e) => failures.push(Failure {
                    seed,
                    error: e.to_string(),
                }),
            }
        }
        let summary = CellSummary::new(settings, cell, runs, failures);
        let dir = out.join(cell.label());
        run::create_dir(&dir)?;
        run::write_json(&dir.join("summary.json"), &summary)?;
        summaries.push(summary);
    }
    Ok(summaries)
}

pub fn check_failures(summaries: &[CellSummary]) -> Result<()> {
    let failed: usize = summaries.iter().map(|s| s.failures.len()).sum();
    let total: usize = summaries.iter().map(|s| s.runs.len() + s.failures.len()).sum();
    if failed > 0 {
        return Err(HarnessError::RunsFailed { failed, total });
    }
    Ok(())
}

pub const TABLE_COLUMNS: [&str; 6] = ["SPOT-Q", "Mask", "Reward", "Trials%", "Efficiency%", "Actions-to-convergence"];

fn percent_range(min: Option<f64>, max: Option<f64>) -> String {
    match (min, max) {
        (Some(a), Some(b)) => {
            let (a, b) = (format!("{:.1}", 100.0 * a), format!("{:.1}", 100.0 * b));
            if a == b {
                a
            } else {
                format!("{a}-{b}")
            }
        }
        _ => "failed".into(),
    }
}

fn convergence_range(s: &CellSummary) -> String {
    if s.runs.is_empty() {
        return "failed".into();
    }
    let show = |v: Option<u64>| v.map_or("never".to_string(), |v| v.to_string());
    let (a, b) = (show(s.convergence_actions_min), show(s.convergence_actions_max));
    if a == b {
        a
    } else {
        format!("{a}-{b}")
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

pub fn table_rows(summaries: &[CellSummary]) -> Vec<[String; 6]> {
    summaries
        .iter()
        .map(|s| {
            [
                yes_no(s.spotq).to_string(),
                yes_no(s.mask).to_string(),
                s.reward.clone(),
                percent_range(s.completion_rate_min, s.completion_rate_max),
                percent_range(s.efficiency_min, s.efficiency_max),
                convergence_range(s),
            ]
        })
        .collect()
}

/// Writes `table.csv` and the column-aligned `table.txt`.
pub fn write_table(out: &Path, summaries: &[CellSummary]) -> Result<String> {
    let rows = table_rows(summaries);
    let csv_path = out.join("table.csv");
    let file = fs::File::create(&csv_path).map_err(|e| HarnessError::io(&csv_path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| HarnessError::io(&csv_path, std::io::Error::other(e));
    w.write_record(TABLE_COLUMNS).map_err(io)?;
    for r in &rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| HarnessError::io(&csv_path, e))?;

    let mut widths = TABLE_COLUMNS.map(str::len);
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut text = String::new();
    let mut line = |cells: &[&str]| {
        let parts: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(text, "{}", parts.join("  ").trim_end());
    };
    line(&TABLE_COLUMNS);
    for r in &rows {
        line(&r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let txt_path = out.join("table.txt");
    fs::write(&txt_path, &text).map_err(|e| HarnessError::io(&txt_path, e))?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(conv: &[Option<u64>], rates: &[f64]) -> CellSummary {
        let runs: Vec<RunSummary> = conv
            .iter()
            .zip(rates)
            .enumerate()
            .map(|(i, (&c, &r))| RunSummary {
                seed: i as u64,
                completion_rate: r,
                mean_efficiency: r / 2.0,
                convergence_actions: c,
                training_trials: 1,
                training_actions: 1,
            })
            .collect();
        let settings = Settings::from_map(&Default::default(), false).unwrap();
        CellSummary::new(&settings, settings.cells[0], runs, Vec::new())
    }

    #[test]
    fn convergence_ranges() {
        assert_eq!(convergence_range(&summary(&[Some(5), Some(9)], &[1.0, 1.0])), "5-9");
        assert_eq!(convergence_range(&summary(&[Some(5), None], &[1.0, 1.0])), "5-never");
        assert_eq!(convergence_range(&summary(&[None, None], &[1.0, 1.0])), "never");
        assert_eq!(convergence_range(&summary(&[Some(7), Some(7)], &[1.0, 1.0])), "7");
    }

    #[test]
    fn percent_ranges() {
        let s = summary(&[None, None], &[0.25, 0.5]);
        assert_eq!(percent_range(s.completion_rate_min, s.completion_rate_max), "25.0-50.0");
        assert_eq!(percent_range(s.efficiency_min, s.efficiency_max), "12.5-25.0");
        assert_eq!(percent_range(None, None), "failed");
    }
}
