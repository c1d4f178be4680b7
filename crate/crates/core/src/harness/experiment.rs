use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Cell, ExperimentConfig};
use crate::engine::{init_default, run, AlphaRule, StopReason};
use crate::error::{Error, Result};
use crate::rates::{estimate_cr, mean_stderr, scaled_rate};
use crate::rng::derive_seed;

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "ES_RATE_THREADS";

/// Per-trial or aggregated experiment result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub objective: String,
    pub d: usize,
    pub kappa: u32,
    pub alpha_rule: AlphaRule,
    /// Trial seed; `None` on aggregate rows.
    pub seed: Option<u64>,
    pub cr_hat: f64,
    pub stderr: f64,
    pub scaled_rate: f64,
    /// `budget`, `f_floor`, `error:<message>` or, on aggregate rows, the
    /// count of each trial outcome.
    pub stop_reason: String,
    pub wall_ms: f64,
}

impl ResultRow {
    pub fn is_aggregate(&self) -> bool {
        self.seed.is_none()
    }

    pub fn cell_key(&self) -> (String, usize, u32, AlphaRule) {
        (self.objective.clone(), self.d, self.kappa, self.alpha_rule)
    }
}

/// Rows in canonical order: each cell's trials by trial index, followed by
/// the cell's aggregate row.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn trials(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| !r.is_aggregate())
    }

    pub fn aggregates(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.is_aggregate())
    }

    /// Aggregate row of the given cell.
    pub fn aggregate_for(
        &self,
        objective: &str,
        d: usize,
        kappa: u32,
        rule: AlphaRule,
    ) -> Option<&ResultRow> {
        self.aggregates().find(|r| {
            r.objective == objective && r.d == d && r.kappa == kappa && r.alpha_rule == rule
        })
    }
}

fn sanitize(msg: &str) -> String {
    msg.chars()
        .map(|c| {
            if c == ',' || c == '\n' || c == '"' {
                ';'
            } else {
                c
            }
        })
        .collect()
}

fn run_trial(cfg: &ExperimentConfig, cell: &Cell, trial: usize) -> ResultRow {
    let seed = derive_seed(cfg.base_seed, cell.index as u64, trial as u64);
    let start = Instant::now();
    let outcome = (|| -> Result<(f64, f64, f64, StopReason)> {
        let spec = cell.objective.build()?;
        let params = cell.params(cfg.c)?;
        let init = init_default(&spec, seed)?;
        let traj = run(
            &spec,
            &params,
            &init,
            cfg.budget.budget(cell.dim),
            cfg.f_floor,
            seed,
        )?;
        let est = estimate_cr(&traj, cfg.window_frac, cfg.series)?;
        let scaled = scaled_rate(est.cr_hat, &spec).unwrap_or(f64::NAN);
        Ok((est.cr_hat, est.stderr, scaled, traj.stop_reason))
    })();
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let (cr_hat, stderr, scaled_rate, stop_reason) = match outcome {
        Ok((a, b, c, s)) => (a, b, c, s.to_string()),
        Err(e) => (
            f64::NAN,
            f64::NAN,
            f64::NAN,
            format!("error:{}", sanitize(&e.to_string())),
        ),
    };
    ResultRow {
        objective: cell.objective.label(),
        d: cell.dim,
        kappa: cell.kappa,
        alpha_rule: cell.alpha_rule,
        seed: Some(seed),
        cr_hat,
        stderr,
        scaled_rate,
        stop_reason,
        wall_ms,
    }
}

/// Aggregate row over the successful trials of a cell.
pub fn aggregate_rows(trials: &[ResultRow]) -> ResultRow {
    let first = &trials[0];
    let ok: Vec<&ResultRow> = trials.iter().filter(|r| r.cr_hat.is_finite()).collect();
    let (cr_hat, stderr) = mean_stderr(&ok.iter().map(|r| r.cr_hat).collect::<Vec<_>>())
        .unwrap_or((f64::NAN, f64::NAN));
    let scaled_rate = mean_stderr(&ok.iter().map(|r| r.scaled_rate).collect::<Vec<_>>())
        .map_or(f64::NAN, |m| m.0);
    let count = |p: &dyn Fn(&str) -> bool| trials.iter().filter(|r| p(&r.stop_reason)).count();
    let stop_reason = format!(
        "budget={};f_floor={};error={}",
        count(&|s| s == "budget"),
        count(&|s| s == "f_floor"),
        count(&|s| s.starts_with("error")),
    );
    ResultRow {
        objective: first.objective.clone(),
        d: first.d,
        kappa: first.kappa,
        alpha_rule: first.alpha_rule,
        seed: None,
        cr_hat,
        stderr,
        scaled_rate,
        stop_reason,
        wall_ms: trials.iter().map(|r| r.wall_ms).sum(),
    }
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

/// Run every `(cell, trial)` pair. Output order and values do not depend on
/// the number of workers.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run_experiment_with_threads(cfg, threads_from_env())
}

pub fn run_experiment_with_threads(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ResultTable> {
    cfg.validate()?;
    let cells = cfg.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let work = || -> Vec<ResultRow> {
        jobs.par_iter()
            .map(|&(c, t)| run_trial(cfg, &cells[c], t))
            .collect()
    };
    let rows = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut table = ResultTable::default();
    for chunk in rows.chunks(cfg.trials) {
        table.rows.extend_from_slice(chunk);
        table.rows.push(aggregate_rows(chunk));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"objectives":["h1"],"dims":[2,3],"kappas":[0,1],"trials":3,"base_seed":5,
                "budget":{"base":300,"per_dim":100}}"#,
        )
        .unwrap()
    }

    #[test]
    fn grid_completeness_and_aggregates() {
        let cfg = small();
        let t = run_experiment_with_threads(&cfg, Some(2)).unwrap();
        assert_eq!(t.trials().count(), 4 * 3);
        assert_eq!(t.aggregates().count(), 4);
        for chunk in t.rows.chunks(4) {
            let (mean, se) =
                mean_stderr(&chunk[..3].iter().map(|r| r.cr_hat).collect::<Vec<_>>()).unwrap();
            assert!((chunk[3].cr_hat - mean).abs() <= 1e-12 * mean.abs());
            assert!((chunk[3].stderr - se).abs() <= 1e-12 * se.abs().max(1e-300));
            assert!(chunk[3].is_aggregate());
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = small();
        let strip = |t: ResultTable| {
            t.rows
                .into_iter()
                .map(|mut r| {
                    r.wall_ms = 0.0;
                    r
                })
                .collect::<Vec<_>>()
        };
        let a = strip(run_experiment_with_threads(&cfg, Some(1)).unwrap());
        let b = strip(run_experiment_with_threads(&cfg, Some(4)).unwrap());
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn failures_are_recorded_in_row() {
        let mut cfg = small();
        cfg.budget.base = 3;
        cfg.budget.per_dim = 0;
        let t = run_experiment_with_threads(&cfg, Some(1)).unwrap();
        assert!(t
            .trials()
            .all(|r| r.stop_reason.starts_with("error:") && r.cr_hat.is_nan()));
        assert_eq!(t.rows.len(), 16);
    }
}
