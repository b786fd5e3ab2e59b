//! Registered identity suites. Each turns its parameters into report rows;
//! errors inside a suite become failed rows and never abort siblings.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use modtrace_core::algebra::{
    majorization_check, majorization_witness, random_element, random_hermitian, random_state,
    random_unitary,
};
use modtrace_core::crossed::{
    cutoff_half_vector, formal_trace, haagerup_closed_form, haagerup_trace,
    haagerup_trace_from_residue, spectral_unitarity, trace_formula_theorem_check, TraceRoute,
};
use modtrace_core::haagerup::{
    build_h, group_law_residual, theta_covariance_residual, verify_averaging, verify_inner_lemma,
    verify_linearity,
};
use modtrace_core::interpolator::{
    cauchy_shift_residual, random_gaussian_spec, Envelope, InterpolatorSpec,
};
use modtrace_core::json::JsonComplex;
use modtrace_core::lambda::LambdaFunction;
use modtrace_core::section::TimeGrid;
use modtrace_core::standard_form::{kms_check, three_lines_bound};
use modtrace_core::{AlgebraElement, Error, FiniteAlgebra, Functional, Tolerances, Weight, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::plot::PlotSeries;
use crate::report::ReportRow;

/// Names accepted in `experiments[i].name`.
pub const SUITES: [&str; 10] = [
    "haagerup_trace",
    "x_form_trace",
    "trace_formula",
    "boundary_catalogue",
    "hilbert_axioms",
    "modular_analytic",
    "majorization",
    "correspondence",
    "spectral_unitarity",
    "grid_convergence",
];

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn complex_list(values: &[f64]) -> Vec<JsonComplex> {
    values.iter().map(|&v| JsonComplex::Real(v)).collect()
}

fn echo(z: C64) -> Value {
    if z.im == 0.0 {
        json!(z.re)
    } else {
        json!([z.re, z.im])
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaagerupParams {
    pub state: Option<String>,
    #[serde(default = "HaagerupParams::default_mu")]
    pub mu: Vec<JsonComplex>,
    #[serde(default = "HaagerupParams::default_route")]
    pub route: TraceRoute,
}

impl HaagerupParams {
    fn default_mu() -> Vec<JsonComplex> {
        complex_list(&[0.0, 0.5, 1.0, 2.0])
    }
    fn default_route() -> TraceRoute {
        TraceRoute::Grid
    }
}

/// Route for the x-form trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XRoute {
    Grid,
    Spectral,
    /// `(1/2π)(B_f + R_f)` for `f = (μ+iz)^{−1}ω^{iz}`, `−1/2 < Re μ < 0`.
    BoundaryResidue,
}

/// An element of `M`: `"identity"`, `"random"`, `"random_hermitian"`, a
/// sum of matrix units of the first block such as `"E12+E21"` (1-based),
/// or an explicit `{blocks, values}` object.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum XSpec {
    Named(String),
    Explicit(AlgebraElement),
}

impl XSpec {
    fn validate(&self, alg: Option<&FiniteAlgebra>) -> Result<(), String> {
        match self {
            XSpec::Named(n) if matches!(n.as_str(), "identity" | "random" | "random_hermitian") => {
                Ok(())
            }
            XSpec::Named(n) => {
                parse_units(n, alg.map_or(usize::MAX, |a| a.blocks()[0])).map(|_| ())
            }
            XSpec::Explicit(x) => match alg {
                Some(a) if x.algebra() != *a => {
                    Err("element does not live on the state's algebra".into())
                }
                _ => Ok(()),
            },
        }
    }

    fn resolve(
        &self,
        alg: &FiniteAlgebra,
        rng: &mut ChaCha8Rng,
    ) -> modtrace_core::Result<AlgebraElement> {
        Ok(match self {
            XSpec::Named(n) if n == "identity" => AlgebraElement::identity(alg),
            XSpec::Named(n) if n == "random" => random_element(alg, rng),
            XSpec::Named(n) if n == "random_hermitian" => random_hermitian(alg, rng),
            XSpec::Named(n) => {
                let units = parse_units(n, alg.blocks()[0]).map_err(Error::InvalidInput)?;
                let mut x = AlgebraElement::zero(alg);
                for (i, j) in units {
                    x = x.try_add(&AlgebraElement::matrix_unit(alg, 0, i, j))?;
                }
                x
            }
            XSpec::Explicit(x) => x.clone(),
        })
    }

    fn label(&self) -> Value {
        match self {
            XSpec::Named(n) => json!(n),
            XSpec::Explicit(_) => json!("explicit"),
        }
    }
}

fn parse_units(text: &str, n: usize) -> Result<Vec<(usize, usize)>, String> {
    text.split('+')
        .map(|t| {
            let t = t.trim();
            let digits = t
                .strip_prefix('E')
                .ok_or_else(|| format!("unknown element `{t}`"))?;
            let d: Vec<usize> = digits
                .chars()
                .map(|ch| ch.to_digit(10).map(|v| v as usize))
                .collect::<Option<_>>()
                .ok_or_else(|| format!("bad matrix unit `{t}`"))?;
            match d[..] {
                [i, j] if (1..=n).contains(&i) && (1..=n).contains(&j) => Ok((i - 1, j - 1)),
                _ => Err(format!("matrix unit `{t}` out of range")),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XFormParams {
    pub state: Option<String>,
    #[serde(default = "XFormParams::default_x")]
    pub x: Vec<XSpec>,
    #[serde(default = "XFormParams::default_mu")]
    pub mu: Vec<JsonComplex>,
    #[serde(default = "XFormParams::default_route")]
    pub route: XRoute,
}

impl XFormParams {
    fn default_x() -> Vec<XSpec> {
        ["E11", "E12+E21", "random_hermitian"]
            .iter()
            .map(|s| XSpec::Named(s.to_string()))
            .collect()
    }
    fn default_mu() -> Vec<JsonComplex> {
        complex_list(&[0.5, 1.0, -0.5])
    }
    fn default_route() -> XRoute {
        XRoute::Grid
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFormulaParams {
    pub state: Option<String>,
    #[serde(default = "default_betas")]
    pub beta: Vec<f64>,
}

fn default_betas() -> Vec<f64> {
    vec![-0.3, -0.25]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogueParams {
    pub state: Option<String>,
    #[serde(default = "CatalogueParams::default_mu")]
    pub mu: Vec<JsonComplex>,
    #[serde(default = "default_betas")]
    pub beta: Vec<f64>,
}

impl CatalogueParams {
    fn default_mu() -> Vec<JsonComplex> {
        complex_list(&[0.0, 0.5, 1.0, -0.3])
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleParams {
    pub count: Option<usize>,
    #[serde(default = "SampleParams::default_dims")]
    pub dims: Vec<usize>,
}

impl SampleParams {
    fn default_dims() -> Vec<usize> {
        vec![2, 3, 4]
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrespondenceParams {
    pub state: Option<String>,
    #[serde(default = "CorrespondenceParams::default_vectors")]
    pub vectors: usize,
    #[serde(default = "CorrespondenceParams::default_instances")]
    pub instances: usize,
    #[serde(default = "CorrespondenceParams::default_s")]
    pub s: Vec<f64>,
    #[serde(default = "CorrespondenceParams::default_mu")]
    pub mu: Vec<f64>,
    #[serde(default = "CorrespondenceParams::default_t")]
    pub t: Vec<f64>,
}

impl CorrespondenceParams {
    fn default_vectors() -> usize {
        20
    }
    fn default_instances() -> usize {
        3
    }
    fn default_s() -> Vec<f64> {
        vec![-1.0, 0.5, 1.0]
    }
    fn default_mu() -> Vec<f64> {
        vec![0.5, 1.0, 2.0]
    }
    fn default_t() -> Vec<f64> {
        vec![-1.0, 0.5, 2.0]
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitarityParams {
    pub state: Option<String>,
    #[serde(default = "UnitarityParams::default_alpha")]
    pub alpha: f64,
    #[serde(default = "UnitarityParams::default_beta")]
    pub beta: JsonComplex,
}

impl UnitarityParams {
    fn default_alpha() -> f64 {
        0.8
    }
    fn default_beta() -> JsonComplex {
        JsonComplex::Pair([0.3, 0.5])
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceParams {
    pub state: Option<String>,
    #[serde(default = "ConvergenceParams::default_mu")]
    pub mu: Vec<f64>,
    /// `[T, dt]` pairs.
    #[serde(default = "ConvergenceParams::default_grids")]
    pub grids: Vec<[f64; 2]>,
    #[serde(default = "ConvergenceParams::default_floor")]
    pub noise_floor: f64,
}

impl ConvergenceParams {
    fn default_mu() -> Vec<f64> {
        vec![0.0, 0.5, 1.0, 2.0]
    }
    fn default_grids() -> Vec<[f64; 2]> {
        vec![[20.0, 0.02], [40.0, 0.02], [20.0, 0.01], [40.0, 0.01]]
    }
    fn default_floor() -> f64 {
        1e-12
    }
}

#[derive(Debug, Clone)]
pub enum Suite {
    HaagerupTrace(HaagerupParams),
    XFormTrace(XFormParams),
    TraceFormula(TraceFormulaParams),
    BoundaryCatalogue(CatalogueParams),
    HilbertAxioms(SampleParams),
    ModularAnalytic(SampleParams),
    Majorization(SampleParams),
    Correspondence(CorrespondenceParams),
    SpectralUnitarity(UnitarityParams),
    GridConvergence(ConvergenceParams),
}

/// One validated entry of `experiments`.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub params: Value,
    pub suite: Suite,
}

fn params<T: DeserializeOwned>(index: usize, v: &Value) -> CliResult<T> {
    let v = if v.is_null() { json!({}) } else { v.clone() };
    serde_json::from_value(v)
        .map_err(|e| CliError::config(format!("experiments[{index}].params"), e))
}

fn check_state(
    index: usize,
    state: &Option<String>,
    states: &BTreeMap<String, Functional>,
) -> CliResult<()> {
    let field = format!("experiments[{index}].params.state");
    match state {
        Some(s) if !states.contains_key(s) => {
            Err(CliError::config(field, format!("no state named `{s}`")))
        }
        Some(_) => Ok(()),
        None if states.contains_key("phi") || states.len() == 1 => Ok(()),
        None => Err(CliError::config(
            field,
            "no default state: define `phi` or name one",
        )),
    }
}

impl Experiment {
    pub fn parse(
        index: usize,
        name: &str,
        raw: &Value,
        states: &BTreeMap<String, Functional>,
    ) -> CliResult<Self> {
        let suite = match name {
            "haagerup_trace" => Suite::HaagerupTrace(params(index, raw)?),
            "x_form_trace" => Suite::XFormTrace(params(index, raw)?),
            "trace_formula" => Suite::TraceFormula(params(index, raw)?),
            "boundary_catalogue" => Suite::BoundaryCatalogue(params(index, raw)?),
            "hilbert_axioms" => Suite::HilbertAxioms(params(index, raw)?),
            "modular_analytic" => Suite::ModularAnalytic(params(index, raw)?),
            "majorization" => Suite::Majorization(params(index, raw)?),
            "correspondence" => Suite::Correspondence(params(index, raw)?),
            "spectral_unitarity" => Suite::SpectralUnitarity(params(index, raw)?),
            "grid_convergence" => Suite::GridConvergence(params(index, raw)?),
            other => {
                return Err(CliError::config(
                    format!("experiments[{index}].name"),
                    format!(
                        "unknown suite `{other}`; expected one of {}",
                        SUITES.join(", ")
                    ),
                ))
            }
        };
        let state = match &suite {
            Suite::HaagerupTrace(p) => Some(&p.state),
            Suite::XFormTrace(p) => Some(&p.state),
            Suite::TraceFormula(p) => Some(&p.state),
            Suite::BoundaryCatalogue(p) => Some(&p.state),
            Suite::Correspondence(p) => Some(&p.state),
            Suite::SpectralUnitarity(p) => Some(&p.state),
            Suite::GridConvergence(p) => Some(&p.state),
            Suite::HilbertAxioms(_) | Suite::ModularAnalytic(_) | Suite::Majorization(_) => None,
        };
        if let Some(s) = state {
            check_state(index, s, states)?;
        }
        match &suite {
            Suite::XFormTrace(p) => {
                let alg = resolve_state(states, &p.state).map(|s| s.algebra());
                for (j, x) in p.x.iter().enumerate() {
                    x.validate(alg.as_ref()).map_err(|m| {
                        CliError::config(format!("experiments[{index}].params.x[{j}]"), m)
                    })?;
                }
            }
            Suite::HilbertAxioms(p) | Suite::ModularAnalytic(p) | Suite::Majorization(p) => {
                if p.dims.is_empty() || p.dims.contains(&0) {
                    return Err(CliError::config(
                        format!("experiments[{index}].params.dims"),
                        "need positive sizes",
                    ));
                }
            }
            Suite::GridConvergence(p) => {
                for (j, [t, dt]) in p.grids.iter().enumerate() {
                    TimeGrid::new(*t, *dt).map_err(|e| {
                        CliError::config(format!("experiments[{index}].params.grids[{j}]"), e)
                    })?;
                }
            }
            _ => {}
        }
        Ok(Self {
            name: name.to_string(),
            params: raw.clone(),
            suite,
        })
    }
}

fn resolve_state<'a>(
    states: &'a BTreeMap<String, Functional>,
    name: &Option<String>,
) -> Option<&'a Functional> {
    match name {
        Some(n) => states.get(n),
        None => states.get("phi").or_else(|| {
            (states.len() == 1)
                .then(|| states.values().next())
                .flatten()
        }),
    }
}

/// Everything a suite needs besides its parameters.
pub struct RunContext<'a> {
    pub config: &'a ExperimentConfig,
    pub index: usize,
    pub plots: bool,
    /// λ-step of emitted plot series.
    pub plot_dlambda: f64,
}

impl RunContext<'_> {
    fn tol(&self) -> &Tolerances {
        &self.config.tolerances
    }

    fn state(&self, name: &Option<String>) -> Functional {
        resolve_state(&self.config.states, name)
            .cloned()
            .expect("validated state")
    }

    /// Seeded per experiment so that reordering siblings changes nothing
    /// but the experiment's own index.
    fn rng(&self) -> ChaCha8Rng {
        let mix = (self.index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        ChaCha8Rng::seed_from_u64(self.config.seed ^ mix)
    }
}

/// Rows and optional plots of one experiment.
#[derive(Debug, Default)]
pub struct Outcome {
    pub rows: Vec<ReportRow>,
    pub plots: Vec<PlotSeries>,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64() * 1e3)
}

/// `lhs = rhs` row, or a failed row carrying the error.
fn identity_row(
    name: &str,
    params: Value,
    tol: f64,
    f: impl FnOnce() -> modtrace_core::Result<(C64, C64)>,
) -> ReportRow {
    let (r, ms) = timed(f);
    match r {
        Ok((lhs, rhs)) => ReportRow::identity(name, params, lhs, rhs, tol),
        Err(e) => ReportRow::failed(name, params, tol, e),
    }
    .with_time(ms)
}

fn residual_row(
    name: &str,
    params: Value,
    tol: f64,
    f: impl FnOnce() -> modtrace_core::Result<f64>,
) -> ReportRow {
    let (r, ms) = timed(f);
    match r {
        Ok(v) => ReportRow::residual(name, params, v, tol),
        Err(e) => ReportRow::failed(name, params, tol, e),
    }
    .with_time(ms)
}

impl Experiment {
    pub fn run(&self, ctx: &RunContext) -> Outcome {
        match &self.suite {
            Suite::HaagerupTrace(p) => haagerup_suite(p, ctx),
            Suite::XFormTrace(p) => x_form_suite(p, ctx),
            Suite::TraceFormula(p) => trace_formula_suite(p, ctx),
            Suite::BoundaryCatalogue(p) => catalogue_suite(p, ctx),
            Suite::HilbertAxioms(p) => axioms_suite(p, ctx),
            Suite::ModularAnalytic(p) => modular_suite(p, ctx),
            Suite::Majorization(p) => majorization_suite(p, ctx),
            Suite::Correspondence(p) => correspondence_suite(p, ctx),
            Suite::SpectralUnitarity(p) => unitarity_suite(p, ctx),
            Suite::GridConvergence(p) => convergence_suite(p, ctx),
        }
    }
}

fn haagerup_suite(p: &HaagerupParams, ctx: &RunContext) -> Outcome {
    let cfg = ctx.config;
    let omega = ctx.state(&p.state);
    let w = Weight::from(omega.clone());
    let one = AlgebraElement::identity(&omega.algebra());
    let (grid, lambda) = (cfg.time_grid(), cfg.lambda());
    let tol = match p.route {
        TraceRoute::Grid => ctx.tol().haagerup,
        TraceRoute::Spectral => ctx.tol().spectral,
    };
    let mut out = Outcome::default();
    for &mu in &p.mu {
        let mu = C64::from(mu);
        let params = json!({"mu": echo(mu), "route": p.route});
        if mu.re <= -1.0 {
            let (r, ms) = timed(|| haagerup_trace(&one, &w, mu, p.route, &grid, lambda));
            let row = match r {
                Err(Error::DivergentTrace { .. }) => {
                    ReportRow::residual("haagerup_trace.divergent", params, 0.0, tol)
                        .with_note("DivergentTrace reported")
                }
                Err(e) => ReportRow::failed("haagerup_trace.divergent", params, tol, e),
                Ok(v) => ReportRow::failed(
                    "haagerup_trace.divergent",
                    params,
                    tol,
                    format!("expected divergence, got {v}"),
                ),
            };
            out.rows.push(row.with_time(ms));
            continue;
        }
        out.rows
            .push(identity_row("haagerup_trace", params, tol, || {
                Ok((
                    haagerup_trace(&one, &w, mu, p.route, &grid, lambda)?,
                    haagerup_closed_form(&one, &w, mu)?,
                ))
            }));
        if ctx.plots {
            let step = ctx.plot_dlambda;
            let n = (lambda.half_width() / step).round() as usize;
            // two samples at λ = 0 keep the jump exact under the trapezoid rule
            let mut pts: Vec<(f64, f64)> = (0..=n)
                .map(|k| {
                    let l = -lambda.half_width() + k as f64 * step;
                    (l, (mu.re * l).exp() * l.exp())
                })
                .collect();
            pts.extend((0..=n).map(|k| (k as f64 * step, 0.0)));
            out.plots.push(PlotSeries::new(
                format!("cutoff_integrand_mu{}", mu.re),
                "lambda",
                pts,
            ));
            if let Ok(v) = cutoff_half_vector(&omega, mu / 2.0, &grid) {
                let pts = grid
                    .points()
                    .into_iter()
                    .zip(v.values())
                    .map(|(t, a)| (t, a.hs_norm_sqr()))
                    .collect();
                out.plots.push(PlotSeries::new(
                    format!("cutoff_profile_mu{}", mu.re),
                    "t",
                    pts,
                ));
            }
        }
    }
    out
}

fn x_form_suite(p: &XFormParams, ctx: &RunContext) -> Outcome {
    let cfg = ctx.config;
    let omega = ctx.state(&p.state);
    let alg = omega.algebra();
    let w = Weight::from(omega.clone());
    let (grid, lambda) = (cfg.time_grid(), cfg.lambda());
    let tol = ctx.tol().haagerup;
    let mut rng = ctx.rng();
    let mut out = Outcome::default();
    for spec in &p.x {
        let x = match spec.resolve(&alg, &mut rng) {
            Ok(x) => x,
            Err(e) => {
                out.rows.push(ReportRow::failed(
                    "x_form_trace",
                    json!({"x": spec.label()}),
                    tol,
                    e,
                ));
                continue;
            }
        };
        for &mu in &p.mu {
            let mu = C64::from(mu);
            let params = json!({"x": spec.label(), "mu": echo(mu), "route": format!("{:?}", p.route).to_lowercase()});
            out.rows.push(identity_row("x_form_trace", params, tol, || {
                let lhs = match p.route {
                    XRoute::Grid => haagerup_trace(&x, &w, mu, TraceRoute::Grid, &grid, lambda)?,
                    XRoute::Spectral => {
                        haagerup_trace(&x, &w, mu, TraceRoute::Spectral, &grid, lambda)?
                    }
                    XRoute::BoundaryResidue => {
                        haagerup_trace_from_residue(&x, &omega, mu, lambda, ctx.tol())?
                    }
                };
                Ok((lhs, haagerup_closed_form(&x, &w, mu)?))
            }));
        }
    }
    out
}

fn rational_spec(phi: &Functional, mu: C64) -> modtrace_core::Result<InterpolatorSpec> {
    InterpolatorSpec::single(Envelope::rational(mu), phi.clone())
}

fn trace_formula_suite(p: &TraceFormulaParams, ctx: &RunContext) -> Outcome {
    let cfg = ctx.config;
    let phi = ctx.state(&p.state);
    let (grid, lambda) = (cfg.time_grid(), cfg.lambda());
    let tol = ctx.tol().haagerup;
    let mut out = Outcome::default();
    for &beta in &p.beta {
        let params = json!({"beta": beta});
        let closed = c(2.0 * PI * phi.total_mass() / (2.0 * beta + 1.0), 0.0);
        let (r, ms) = timed(|| {
            trace_formula_theorem_check(
                &rational_spec(&phi, c(beta, 0.0))?,
                &grid,
                lambda,
                ctx.tol(),
            )
        });
        match r {
            Ok(chk) => {
                out.rows.push(
                    ReportRow::identity(
                        "trace_formula.spectral",
                        params.clone(),
                        chk.lhs,
                        closed,
                        tol,
                    )
                    .with_time(ms),
                );
                out.rows.push(
                    ReportRow::identity("trace_formula.grid", params.clone(), chk.rhs, closed, tol)
                        .with_time(ms),
                );
                out.rows.push(
                    ReportRow::identity(
                        "trace_formula.routes",
                        params,
                        chk.lhs,
                        chk.rhs,
                        2.0 * tol,
                    )
                    .with_time(ms),
                );
            }
            Err(e) => out
                .rows
                .push(ReportRow::failed("trace_formula", params, tol, e).with_time(ms)),
        }
        if ctx.plots {
            if let Ok(v) = rational_spec(&phi, c(beta, 0.0)).and_then(|f| f.boundary_vector(&grid))
            {
                let pts = grid
                    .points()
                    .into_iter()
                    .zip(v.values())
                    .map(|(t, a)| (t, a.hs_norm_sqr()))
                    .collect();
                out.plots.push(PlotSeries::new(
                    format!("boundary_profile_beta{beta}"),
                    "t",
                    pts,
                ));
            }
        }
    }
    out
}

fn catalogue_suite(p: &CatalogueParams, ctx: &RunContext) -> Outcome {
    let phi = ctx.state(&p.state);
    let lambda = ctx.config.lambda();
    let tol = ctx.tol().catalogue;
    let zero = |_| c(0.0, 0.0);
    let mut out = Outcome::default();
    for &mu in &p.mu {
        let mu = C64::from(mu);
        out.rows.push(residual_row(
            "boundary_catalogue.boundary",
            json!({"mu": echo(mu)}),
            tol,
            || {
                let got = rational_spec(&phi, mu)?
                    .boundary_operator(lambda)?
                    .spectral()?
                    .scalar_function()?;
                let expect = if mu.re >= 0.0 {
                    LambdaFunction::piecewise(lambda, |l| 2.0 * PI * (mu * l).exp(), zero)
                } else {
                    LambdaFunction::piecewise(lambda, zero, |l| -2.0 * PI * (mu * l).exp())
                };
                got.sup_diff(&expect)
            },
        ));
    }
    for &beta in &p.beta {
        out.rows.push(residual_row(
            "boundary_catalogue.residue",
            json!({"beta": beta}),
            tol,
            || {
                let got = rational_spec(&phi, c(beta, 0.0))?
                    .residue_operator(lambda, ctx.tol())?
                    .spectral()?
                    .scalar_function()?;
                let expect =
                    LambdaFunction::from_fn(lambda, |l| c(2.0 * PI * (beta * l).exp(), 0.0));
                got.max_rel_diff(&expect, 0.0)
            },
        ));
    }
    out
}

/// Running maximum of several residuals, failing on the first error.
struct Worst {
    names: Vec<&'static str>,
    values: Vec<f64>,
    error: Option<String>,
}

impl Worst {
    fn new(names: &[&'static str]) -> Self {
        Self {
            names: names.to_vec(),
            values: vec![0.0; names.len()],
            error: None,
        }
    }

    fn record(&mut self, k: usize, v: f64) {
        self.values[k] = self.values[k].max(if v.is_nan() { f64::INFINITY } else { v });
    }

    fn rows(self, suite: &str, params: Value, tols: &[f64], ms: f64) -> Vec<ReportRow> {
        if let Some(e) = self.error {
            return vec![ReportRow::failed(suite, params, tols[0], e).with_time(ms)];
        }
        self.names
            .iter()
            .zip(&self.values)
            .zip(tols)
            .map(|((n, v), t)| {
                ReportRow::residual(format!("{suite}.{n}"), params.clone(), *v, *t).with_time(ms)
            })
            .collect()
    }
}

fn axioms_suite(p: &SampleParams, ctx: &RunContext) -> Outcome {
    let grid = ctx.config.time_grid();
    let tol = ctx.tol();
    let count = p.count.unwrap_or(50);
    let mut rng = ctx.rng();
    let mut worst = Worst::new(&[
        "star_symmetry",
        "positivity",
        "l1_submultiplicative",
        "associativity",
        "cauchy_shift",
        "theta_scaling",
    ]);
    let (_, ms) = timed(|| {
        let mut step = || -> modtrace_core::Result<()> {
            let n = p.dims[rng.random_range(0..p.dims.len())];
            let phi = random_state(&FiniteAlgebra::full(n), None, &mut rng);
            let terms = rng.random_range(1..=2);
            let f = random_gaussian_spec(&phi, terms, &mut rng);
            let g = random_gaussian_spec(&phi, 1, &mut rng);
            let h = random_gaussian_spec(&phi, 1, &mut rng);
            let (fv, gv) = (f.boundary_vector(&grid)?, g.boundary_vector(&grid)?);
            let lhs = f
                .star()
                .boundary_vector(&grid)?
                .inner_product(&g.star().boundary_vector(&grid)?)?;
            let rhs = gv.inner_product(&fv)?;
            worst.record(
                0,
                (lhs - rhs).norm() / (fv.norm_sqr() * gv.norm_sqr()).sqrt(),
            );
            let tau = formal_trace(&f, &grid)?;
            worst.record(1, (-tau.re).max(0.0));
            let (sf, sg, sh) = (
                f.to_section(&grid, &phi)?,
                g.to_section(&grid, &phi)?,
                h.to_section(&grid, &phi)?,
            );
            let fg = sf.convolve(&sg)?;
            worst.record(2, (fg.norm_1() - sf.norm_1() * sg.norm_1()).max(0.0));
            let l = fg.convolve(&sh)?;
            let r = sf.convolve(&sg.convolve(&sh)?)?;
            worst.record(3, l.max_diff(&r)? / l.norm_inf());
            worst.record(4, cauchy_shift_residual(&f, &g, &grid)?);
            for s in [-1.0f64, 1.0] {
                let scaled = formal_trace(&f.theta(s)?, &grid)?;
                let want = tau * (-s).exp();
                worst.record(5, (scaled - want).norm() / want.norm());
            }
            Ok(())
        };
        for _ in 0..count {
            if let Err(e) = step() {
                worst.error = Some(e.to_string());
                break;
            }
        }
    });
    let tols = [
        tol.axiom,
        tol.axiom,
        tol.axiom,
        tol.assoc(),
        tol.assoc(),
        tol.conv,
    ];
    Outcome {
        rows: worst.rows(
            "hilbert_axioms",
            json!({"count": count, "dims": p.dims}),
            &tols,
            ms,
        ),
        plots: Vec::new(),
    }
}

fn modular_suite(p: &SampleParams, ctx: &RunContext) -> Outcome {
    let tol = ctx.tol();
    let count = p.count.unwrap_or(100);
    let mut rng = ctx.rng();
    let mut worst = Worst::new(&["kms", "three_lines"]);
    let (_, ms) = timed(|| {
        for _ in 0..count {
            let n = p.dims[rng.random_range(0..p.dims.len())];
            let alg = FiniteAlgebra::full(n);
            let phi = random_state(&alg, None, &mut rng);
            let psi = random_state(&alg, None, &mut rng);
            let a = random_element(&alg, &mut rng);
            let t = rng.random_range(-3.0..3.0);
            let z = c(t, -rng.random_range(0.0..=1.0));
            let r = kms_check(&phi, &psi, &a, t, tol)
                .and_then(|k| Ok((k, three_lines_bound(&phi, &psi, &a, z)?)));
            match r {
                Ok((k, (value, bound))) => {
                    worst.record(0, k);
                    worst.record(1, (value - bound).max(0.0) / bound.max(1.0));
                }
                Err(e) => {
                    worst.error = Some(e.to_string());
                    break;
                }
            }
        }
    });
    Outcome {
        rows: worst.rows(
            "modular_analytic",
            json!({"count": count, "dims": p.dims}),
            &[tol.kms, tol.bound],
            ms,
        ),
        plots: Vec::new(),
    }
}

fn majorization_suite(p: &SampleParams, ctx: &RunContext) -> Outcome {
    let tol = ctx.tol();
    let count = p.count.unwrap_or(100);
    let mut rng = ctx.rng();
    let mut worst = Worst::new(&["equivalence", "witness"]);
    let (_, ms) = timed(|| {
        let mut step = |i: usize| -> modtrace_core::Result<()> {
            let alg = FiniteAlgebra::full(p.dims[rng.random_range(0..p.dims.len())]);
            let psi = random_state(&alg, None, &mut rng);
            let phi = if i.is_multiple_of(2) {
                // ψ^{1/2} K ψ^{1/2} with 0 ≤ K ≤ 1 is dominated by ψ
                let k = random_state(&alg, None, &mut rng);
                let k = k
                    .density()
                    .scale(c(rng.random_range(0.1..1.0) / k.density().op_norm(), 0.0));
                let half = psi.power(c(0.5, 0.0));
                Functional::new(half.try_mul(&k)?.try_mul(&half)?, tol)?
            } else {
                random_state(&alg, None, &mut rng)
            };
            let order = majorization_check(&phi, &psi, tol)?;
            let witness = majorization_witness(&phi, &psi)?;
            worst.values[0] += f64::from(u8::from(order.holds != witness.is_valid(tol)));
            if order.holds {
                worst.record(1, (witness.op_norm - 1.0).max(0.0).max(witness.residual));
            }
            Ok(())
        };
        for i in 0..count {
            if let Err(e) = step(i) {
                worst.error = Some(e.to_string());
                break;
            }
        }
    });
    let mut rows = worst.rows(
        "majorization",
        json!({"count": count, "dims": p.dims}),
        &[0.0, tol.majorize],
        ms,
    );
    if let Some(r) = rows.first_mut() {
        if r.identity_name == "majorization.equivalence" {
            r.note = Some(
                "lhs counts pairs where the order test and the contraction test disagree".into(),
            );
        }
    }
    Outcome {
        rows,
        plots: Vec::new(),
    }
}

fn correspondence_suite(p: &CorrespondenceParams, ctx: &RunContext) -> Outcome {
    let cfg = ctx.config;
    let tol = ctx.tol();
    let grid = cfg.time_grid();
    let phi = ctx.state(&p.state);
    let alg = phi.algebra();
    let h = build_h(&phi);
    let mut rng = ctx.rng();
    let mut out = Outcome::default();
    for (b, &n) in alg.blocks().iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                let params = json!({"block": b, "unit": format!("E{}{}", i + 1, j + 1)});
                out.rows.push(identity_row(
                    "correspondence.recovery",
                    params,
                    tol.corr,
                    || {
                        let e = AlgebraElement::matrix_unit(&alg, b, i, j);
                        Ok((h.recover_functional(&e, &grid)?, phi.evaluate(&e)?))
                    },
                ));
            }
        }
    }
    let psi = random_state(&alg, None, &mut rng);
    let u = random_unitary(&alg, &mut rng);
    let vectors: Vec<_> = (0..p.vectors)
        .map(|_| random_gaussian_spec(&phi, 1, &mut rng))
        .collect();
    let params = json!({"vectors": p.vectors});
    let (lin, ms) = timed(|| verify_linearity(&phi, &psi, &u, &vectors, &grid));
    match lin {
        Ok(rs) => {
            let add = rs.iter().map(|r| r.additivity).fold(0.0, f64::max);
            let cov = rs.iter().map(|r| r.covariance).fold(0.0, f64::max);
            out.rows.push(
                ReportRow::residual("correspondence.additivity", params.clone(), add, tol.conv)
                    .with_time(ms),
            );
            out.rows.push(
                ReportRow::residual(
                    "correspondence.unitary_covariance",
                    params.clone(),
                    cov,
                    tol.conv,
                )
                .with_time(ms),
            );
        }
        Err(e) => out.rows.push(
            ReportRow::failed("correspondence.linearity", params.clone(), tol.conv, e)
                .with_time(ms),
        ),
    }
    out.rows.push(residual_row(
        "correspondence.group_law",
        params.clone(),
        tol.conv,
        || {
            vectors
                .iter()
                .try_fold(0.0f64, |m, f| Ok(m.max(group_law_residual(&h, f, &grid)?)))
        },
    ));
    for &s in &p.s {
        out.rows.push(residual_row(
            "correspondence.theta_covariance",
            json!({"s": s, "vectors": p.vectors}),
            tol.conv,
            || {
                vectors.iter().try_fold(0.0f64, |m, f| {
                    Ok(m.max(theta_covariance_residual(&h, f, s, &grid)?))
                })
            },
        ));
    }
    for inst in 0..p.instances {
        let omega = random_state(&alg, None, &mut rng);
        let x = phi
            .support()
            .try_mul(&random_element(&alg, &mut rng))
            .expect("same algebra");
        for &mu in &p.mu {
            out.rows.push(identity_row(
                "correspondence.averaging",
                json!({"instance": inst, "mu": mu}),
                tol.corr,
                || {
                    let r = verify_averaging(&phi, &omega, &x, mu, &grid, tol)?;
                    Ok((r.lhs, r.rhs))
                },
            ));
        }
        for &t in &p.t {
            out.rows.push(identity_row(
                "correspondence.inner_lemma",
                json!({"instance": inst, "t": t}),
                tol.corr,
                || {
                    let r = verify_inner_lemma(&phi, &omega, &x, t, &grid, tol)?;
                    Ok((r.lhs, r.rhs))
                },
            ));
        }
    }
    out
}

fn unitarity_suite(p: &UnitarityParams, ctx: &RunContext) -> Outcome {
    let cfg = ctx.config;
    let phi = ctx.state(&p.state);
    let beta = C64::from(p.beta);
    let params = json!({"alpha": p.alpha, "beta": echo(beta)});
    let mut out = Outcome::default();
    out.rows.push(identity_row(
        "spectral_unitarity",
        params,
        ctx.tol().corr,
        || {
            let g = InterpolatorSpec::single(Envelope::gaussian(p.alpha, beta), phi.clone())?;
            let (l, r) = spectral_unitarity(&g, &cfg.time_grid(), cfg.lambda())?;
            Ok((c(l, 0.0), c(r, 0.0)))
        },
    ));
    out
}

fn convergence_suite(p: &ConvergenceParams, ctx: &RunContext) -> Outcome {
    let omega = ctx.state(&p.state);
    let w = Weight::from(omega.clone());
    let one = AlgebraElement::identity(&omega.algebra());
    let lambda = ctx.config.lambda();
    let tol = ctx.tol().haagerup;
    let mut out = Outcome::default();
    for &mu in &p.mu {
        let mu_c = c(mu, 0.0);
        let mut errs = Vec::new();
        for &[t, dt] in &p.grids {
            let grid = TimeGrid::new(t, dt).expect("validated grid");
            let row = identity_row(
                "grid_convergence.grid_route",
                json!({"mu": mu, "T": t, "dt": dt}),
                tol,
                || {
                    Ok((
                        haagerup_trace(&one, &w, mu_c, TraceRoute::Grid, &grid, lambda)?,
                        haagerup_closed_form(&one, &w, mu_c)?,
                    ))
                },
            );
            errs.push(row.rel_err);
            out.rows.push(row);
        }
        // refining one parameter with the other fixed must not raise the error
        for (a, &[ta, da]) in p.grids.iter().enumerate() {
            for (b, &[tb, db]) in p.grids.iter().enumerate() {
                let refines_t = da == db && tb > ta;
                let refines_dt = ta == tb && db < da;
                if !(refines_t || refines_dt) {
                    continue;
                }
                let name = if refines_t {
                    "grid_convergence.monotone_T"
                } else {
                    "grid_convergence.monotone_dt"
                };
                let params = json!({"mu": mu, "from": [ta, da], "to": [tb, db]});
                let excess = if errs[a].is_nan() || errs[b].is_nan() {
                    f64::NAN
                } else {
                    (errs[b] - errs[a]).max(0.0)
                };
                out.rows
                    .push(ReportRow::residual(name, params, excess, p.noise_floor));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_unit_names() {
        assert_eq!(parse_units("E12+E21", 2).unwrap(), vec![(0, 1), (1, 0)]);
        assert_eq!(parse_units("E11", 3).unwrap(), vec![(0, 0)]);
        assert!(parse_units("E31", 2).is_err());
        assert!(parse_units("F11", 2).is_err());
        assert!(parse_units("E1", 2).is_err());
    }

    #[test]
    fn every_suite_parses_with_defaults() {
        let mut states = BTreeMap::new();
        states.insert(
            "phi".to_string(),
            Functional::diagonal(&[0.75, 0.25]).unwrap(),
        );
        for (i, name) in SUITES.iter().enumerate() {
            let e = Experiment::parse(i, name, &Value::Null, &states).unwrap();
            assert_eq!(e.name, *name);
        }
    }

    #[test]
    fn missing_state_is_a_config_error() {
        let states = BTreeMap::new();
        let r = Experiment::parse(3, "haagerup_trace", &json!({}), &states);
        assert!(
            matches!(r, Err(CliError::ConfigInvalid { field, .. }) if field == "experiments[3].params.state")
        );
        let r = Experiment::parse(0, "hilbert_axioms", &json!({"count": 1}), &states);
        assert!(r.is_ok());
    }
}
