use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use modtrace_cli::plot::{write_series, PlotSeries};
use modtrace_cli::report::{self, ReportRow};
use modtrace_cli::{
    all_pass, run_suite, CliError, CliResult, ExperimentConfig, Overrides, RunOptions,
};
use modtrace_core::crossed::{formal_trace, trace_formula_theorem_check};
use modtrace_core::interpolator::InterpolatorSpec;
use modtrace_core::lambda::LambdaGrid;
use modtrace_core::section::TimeGrid;
use modtrace_core::Tolerances;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "modtrace",
    version,
    about = "Verify modular-theory trace identities on finite matrix algebras"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments of a config file and report every identity.
    Verify {
        config: PathBuf,
        #[arg(long = "grid-T")]
        grid_t: Option<f64>,
        #[arg(long = "grid-dt")]
        grid_dt: Option<f64>,
        /// Base seed for random draws inside suites.
        #[arg(long)]
        seed: Option<u64>,
        /// Multiply every comparison tolerance.
        #[arg(long = "tol-scale")]
        tol_scale: Option<f64>,
        /// Experiments run concurrently on this many threads.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Directory for plot series.
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long = "plot-dlambda", default_value_t = 1e-3)]
        plot_dlambda: f64,
    },
    /// Trace-formula and trace checks for one interpolator spec.
    Trace {
        spec: PathBuf,
        #[arg(long = "grid-T", default_value_t = 40.0)]
        grid_t: f64,
        #[arg(long = "grid-dt", default_value_t = 0.01)]
        grid_dt: f64,
        #[arg(long = "lambda-L", default_value_t = 60.0)]
        lambda_l: f64,
        #[arg(long, default_value_t = 0.01)]
        dlambda: f64,
        #[arg(long = "tol-scale")]
        tol_scale: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Directory for the `‖f(t−i/2)‖²` profile.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Convert a report (JSON array or CSV) to another format.
    Report {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn emit(rows: &[ReportRow], format: Format, out: Option<&Path>) -> CliResult<()> {
    let text = match format {
        Format::Json => report::to_json(rows) + "\n",
        Format::Csv => report::to_csv(rows),
    };
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summarize(rows: &[ReportRow]) -> ExitCode {
    let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
    eprintln!("{} rows, {} failed", rows.len(), failed.len());
    for r in &failed {
        eprintln!(
            "  FAIL {} {} rel_err={:.3e} tol={:.1e}{}",
            r.identity_name,
            r.params,
            r.rel_err,
            r.tol,
            r.note
                .as_deref()
                .map(|n| format!(" ({n})"))
                .unwrap_or_default()
        );
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn trace_rows(
    spec: &InterpolatorSpec,
    grid: &TimeGrid,
    lambda: LambdaGrid,
    tol: &Tolerances,
) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    let poles: Vec<_> = spec
        .poles()
        .iter()
        .map(|(p, k)| json!({"pole": [p.re, p.im], "order": k}))
        .collect();
    let params = json!({"poles": poles});
    rows.push(match trace_formula_theorem_check(spec, grid, lambda, tol) {
        Ok(c) => ReportRow::identity(
            "trace.trace_formula",
            params.clone(),
            c.lhs,
            c.rhs,
            tol.haagerup,
        ),
        Err(e) => ReportRow::failed("trace.trace_formula", params.clone(), tol.haagerup, e),
    });
    if spec.is_gaussian() {
        let r = formal_trace(spec, grid).and_then(|f| {
            let v = spec.boundary_vector(grid)?;
            Ok((f, v.inner_product(&v)?))
        });
        rows.push(match r {
            Ok((f, n)) => {
                ReportRow::identity("trace.formal_vs_boundary", params, f, n, tol.haagerup)
            }
            Err(e) => ReportRow::failed("trace.formal_vs_boundary", params, tol.haagerup, e),
        });
    }
    rows
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    match cli.command {
        Command::Verify {
            config,
            grid_t,
            grid_dt,
            seed,
            tol_scale,
            jobs,
            out,
            format,
            plot,
            plot_dlambda,
        } => {
            let mut cfg = ExperimentConfig::from_json(&read(&config)?)?;
            cfg.apply(&Overrides {
                grid_t,
                grid_dt,
                seed,
                tol_scale,
            })?;
            if !(plot_dlambda > 0.0) {
                return Err(CliError::config("--plot-dlambda", "must be positive"));
            }
            let opts = RunOptions {
                jobs,
                plots: plot.is_some(),
                plot_dlambda,
            };
            let results = run_suite(&cfg, &opts)?;
            let rows: Vec<ReportRow> = results.iter().flat_map(|r| r.rows.clone()).collect();
            if let Some(dir) = &plot {
                if rows.is_empty() {
                    eprintln!("no rows; plot series skipped");
                } else {
                    for r in &results {
                        write_series(dir, r.index, &r.name, &r.plots)?;
                    }
                }
            }
            emit(&rows, format, out.as_deref())?;
            let code = summarize(&rows);
            debug_assert_eq!(code == ExitCode::SUCCESS, all_pass(&results));
            Ok(code)
        }
        Command::Trace {
            spec,
            grid_t,
            grid_dt,
            lambda_l,
            dlambda,
            tol_scale,
            out,
            format,
            plot,
        } => {
            let text = read(&spec)?;
            let f: InterpolatorSpec = serde_json::from_str(&text).map_err(|e| {
                CliError::config(format!("line {}, column {}", e.line(), e.column()), e)
            })?;
            let grid = TimeGrid::new(grid_t, grid_dt)
                .map_err(|e| CliError::config("--grid-T/--grid-dt", e))?;
            let lambda = LambdaGrid::new(lambda_l, dlambda)
                .map_err(|e| CliError::config("--lambda-L/--dlambda", e))?;
            let tol = Tolerances::default().scaled(tol_scale.unwrap_or(1.0));
            let rows = trace_rows(&f, &grid, lambda, &tol);
            if let Some(dir) = &plot {
                let v = f.boundary_vector(&grid)?;
                let pts = grid
                    .points()
                    .into_iter()
                    .zip(v.values())
                    .map(|(t, a)| (t, a.hs_norm_sqr()))
                    .collect();
                write_series(
                    dir,
                    0,
                    "trace",
                    &[PlotSeries::new("boundary_profile", "t", pts)],
                )?;
            }
            emit(&rows, format, out.as_deref())?;
            Ok(summarize(&rows))
        }
        Command::Report { input, format, out } => {
            let text = read(&input)?;
            let rows = if input.extension().is_some_and(|e| e == "csv") {
                report::read_csv(text.as_bytes())?
            } else {
                report::from_json(&text).map_err(|e| {
                    CliError::config(format!("line {}, column {}", e.line(), e.column()), e)
                })?
            };
            emit(&rows, format, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
