//! Batch driver for the modtrace identity suites: configuration files in,
//! JSON/CSV reports and plot series out.

pub mod config;
pub mod error;
pub mod plot;
pub mod report;
pub mod suites;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};
use plot::PlotSeries;
pub use report::ReportRow;
use suites::{Outcome, RunContext};

/// Options of one run.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    pub plots: bool,
    pub plot_dlambda: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: None,
            plots: false,
            plot_dlambda: 1e-3,
        }
    }
}

/// Result of one experiment, in config order.
#[derive(Debug)]
pub struct ExperimentResult {
    pub index: usize,
    pub name: String,
    pub rows: Vec<ReportRow>,
    pub plots: Vec<PlotSeries>,
    pub wall_time_ms: f64,
}

fn run_one(config: &ExperimentConfig, index: usize, opts: &RunOptions) -> ExperimentResult {
    let e = &config.experiments[index];
    let ctx = RunContext {
        config,
        index,
        plots: opts.plots,
        plot_dlambda: opts.plot_dlambda,
    };
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| e.run(&ctx))).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "unknown panic".into());
        Outcome {
            rows: vec![ReportRow::failed(
                &e.name,
                json!({}),
                0.0,
                format!("panic: {msg}"),
            )],
            plots: Vec::new(),
        }
    });
    let mut rows = outcome.rows;
    for r in &mut rows {
        if let Some(obj) = r.params.as_object_mut() {
            obj.insert("experiment".into(), json!(index));
        }
    }
    if rows.is_empty() {
        rows.push(
            ReportRow::residual(&e.name, json!({"experiment": index}), 0.0, 0.0)
                .with_note("skipped: no cases in params"),
        );
    }
    ExperimentResult {
        index,
        name: e.name.clone(),
        rows,
        plots: outcome.plots,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// Runs every experiment, concurrently up to `opts.jobs`; results keep
/// config order regardless of completion order.
pub fn run_suite(config: &ExperimentConfig, opts: &RunOptions) -> CliResult<Vec<ExperimentResult>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| CliError::config("--jobs", e))?;
    Ok(pool.install(|| {
        (0..config.experiments.len())
            .into_par_iter()
            .map(|i| run_one(config, i, opts))
            .collect()
    }))
}

pub fn all_pass(results: &[ExperimentResult]) -> bool {
    results.iter().flat_map(|r| &r.rows).all(|r| r.pass)
}
