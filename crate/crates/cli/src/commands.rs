//! One function per subcommand; each reads the config and writes into `out`.

use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use wolffkit::embedding::default_radii;
use wolffkit::error::Error;
use wolffkit::extended::{ExtendedValue, InfiniteReason};
use wolffkit::field::log_grid;
use wolffkit::geometry::Point;
use wolffkit::intrinsic::{check_criteria, kpotential_from, m_function_with, CriteriaOptions};
use wolffkit::measure::Measure;
use wolffkit::params::Params;
use wolffkit::potentials::{riesz, wolff};
use wolffkit::solver::{riccati_transform, solve_sublinear, SolveDiagnostics, SolveOptions};
use wolffkit::verify::{pure_power_example, riccati_study, run_suite, scenario_counterexample, CounterexampleSpec, Gaussian, VerifyBounds};

use crate::cache::{self, Cache};
use crate::config::{Invalid, RunConfig};
use crate::output::{ext, header, num, point_header, write_csv, write_json};

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a Path,
    pub cache: Option<&'a Cache>,
    pub tol: Option<f64>,
    pub seed: u64,
}

/// Outcome of a subcommand that ran to completion.
pub enum Status {
    Ok,
    ChecksFailed,
}

fn points(ctx: &Ctx, params: &Params) -> anyhow::Result<Vec<Point>> {
    let pts = ctx.cfg.task.points.clone().ok_or_else(|| Invalid("task.points is required".into()))?;
    if let Some(p) = pts.iter().find(|p| p.dim() != params.n() || !p.is_finite()) {
        anyhow::bail!(Invalid(format!("point {:?} is not a finite point of dimension {}", p.0, params.n())));
    }
    Ok(pts)
}

/// Errors that only say the value at `x` is infinite.
fn infinite_or(e: Error) -> anyhow::Result<(ExtendedValue, Option<f64>)> {
    match e {
        Error::AtomInEvaluationSet => Ok((ExtendedValue::Infinite(InfiniteReason::AtomInEvaluationSet), None)),
        Error::NonexistenceDetected(_) => Ok((ExtendedValue::Infinite(InfiniteReason::SingularCore), None)),
        other => Err(other.into()),
    }
}

/// `(K sigma(x) from t, M(x, t))`.
fn intrinsic_at(ctx: &Ctx, params: &Params, measure: &Measure, x: &Point, t: f64) -> anyhow::Result<(ExtendedValue, Option<f64>)> {
    if measure.is_zero() {
        return Ok((ExtendedValue::zero(), Some(0.0)));
    }
    match cache::table(ctx.cache, params, measure, x, &default_radii(measure, x, 4)) {
        Ok(table) => {
            let k = kpotential_from(params, &table, t);
            let m = m_function_with(params, measure, &table, t);
            Ok((k, Some(m.to_f64())))
        }
        Err(e) => infinite_or(e),
    }
}

pub fn potential(ctx: &Ctx) -> anyhow::Result<Status> {
    let params = ctx.cfg.params()?;
    let measure = ctx.cfg.measure()?;
    let pts = points(ctx, &params)?;
    let t = ctx.cfg.task.truncation.unwrap_or(0.0);
    let rows: Vec<Vec<String>> = pts
        .iter()
        .map(|x| {
            let mut row: Vec<String> = x.0.iter().map(|c| num(*c)).collect();
            row.push(ext(wolff(&params, &measure, x, t)));
            row.push(ext(riesz(&params, &measure, x)));
            row
        })
        .collect();
    write_csv(&ctx.out.join("potential.csv"), &point_header(params.n(), &["wolff", "riesz"]), &rows)?;
    Ok(Status::Ok)
}

pub fn kappa(ctx: &Ctx) -> anyhow::Result<Status> {
    let params = ctx.cfg.params()?;
    let measure = ctx.cfg.measure()?;
    let center = ctx.cfg.task.center.clone().unwrap_or_else(|| Point::origin(params.n()));
    if center.dim() != params.n() {
        anyhow::bail!(Invalid("task.center has the wrong dimension".into()));
    }
    let radii = ctx.cfg.task.radii.clone().unwrap_or_else(|| default_radii(&measure, &center, 4));
    let table = cache::table(ctx.cache, &params, &measure, &center, &radii)?;
    let rows: Vec<Vec<String>> = (0..table.radii.len())
        .map(|i| vec![num(table.radii[i]), num(table.lower[i]), num(table.upper[i]), num(table.kappa[i])])
        .collect();
    write_csv(&ctx.out.join("kappa.csv"), &header(&["radius", "lower", "upper", "kappa"]), &rows)?;
    Ok(Status::Ok)
}

pub fn kpotential(ctx: &Ctx) -> anyhow::Result<Status> {
    let params = ctx.cfg.params()?;
    let measure = ctx.cfg.measure()?;
    let pts = points(ctx, &params)?;
    let t = ctx.cfg.task.truncation.unwrap_or(0.0);
    let mut rows = Vec::with_capacity(pts.len());
    for x in &pts {
        let (k, m) = intrinsic_at(ctx, &params, &measure, x, t)?;
        let mut row: Vec<String> = x.0.iter().map(|c| num(*c)).collect();
        row.push(ext(k));
        row.push(num(m.unwrap_or(f64::INFINITY)));
        rows.push(row);
    }
    write_csv(&ctx.out.join("kpotential.csv"), &point_header(params.n(), &["kpotential", "m_function"]), &rows)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct SolveReport<'a> {
    params: Params,
    grid: wolffkit::solver::GridSpec,
    tol: f64,
    center: &'a Point,
    riccati_b: f64,
    diagnostics: &'a SolveDiagnostics,
}

pub fn solve(ctx: &Ctx) -> anyhow::Result<Status> {
    let params = ctx.cfg.params()?;
    let measure = ctx.cfg.measure()?;
    let task = &ctx.cfg.task;
    let mut opts = SolveOptions::default();
    if let Some(g) = task.grid {
        opts.grid = g;
    }
    if let Some(t) = ctx.tol.or(task.tol) {
        opts.tol = t;
    }
    if let Some(m) = task.max_iter {
        opts.max_iter = m;
    }
    opts.check_criteria = !task.skip_criteria.unwrap_or(false);
    let sol = solve_sublinear(&params, &measure, &opts)?;
    let pair = riccati_transform(&params, &sol.u);
    let stride = task.kpotential_stride.unwrap_or(1);
    let e = params.growth_exp();
    let center = sol.u.center.clone();
    let mut rows = Vec::with_capacity(sol.u.nodes.len());
    for (i, &r) in sol.u.nodes.iter().enumerate() {
        let (u, w) = (sol.u.values[i], sol.wolff.values[i]);
        let mut row = vec![num(r), num(u), num(pair.v.values[i]), num(w)];
        if i % stride == 0 {
            let mut x = center.clone();
            x.0[0] += r;
            let (k, _) = intrinsic_at(ctx, &params, &measure, &x, 0.0)?;
            let m = k.to_f64() + w.powf(e);
            row.extend([ext(k), num(m), num(u / m)]);
        } else {
            row.extend([String::new(), String::new(), String::new()]);
        }
        rows.push(row);
    }
    write_csv(&ctx.out.join("solution.csv"), &header(&["radius", "u", "v", "wolff", "kpotential", "m_function", "ratio"]), &rows)?;
    let report = SolveReport { params, grid: opts.grid, tol: opts.tol, center: &center, riccati_b: pair.b, diagnostics: &sol.diagnostics };
    write_json(&ctx.out.join("diagnostics.json"), &report)?;
    Ok(Status::Ok)
}

pub fn check(ctx: &Ctx) -> anyhow::Result<Status> {
    let params = ctx.cfg.params()?;
    let measure = ctx.cfg.measure()?;
    let mut opts = CriteriaOptions { fit_window: ctx.cfg.task.fit_window, ..CriteriaOptions::default() };
    if let Some(l) = ctx.cfg.task.ladder {
        opts.ladder = l;
    }
    let reports = check_criteria(&params, &measure, &opts)?;
    let mut rows = Vec::new();
    println!("{:<20} {:<13} {:>24}", "criterion", "verdict", "value");
    for r in &reports {
        let name = serde_json::to_value(r.criterion)?.as_str().unwrap_or_default().to_string();
        let value = r.numeric_value.map(ext).unwrap_or_default();
        println!("{:<20} {:<13} {:>24}", name, format!("{:?}", r.verdict), value);
        rows.push(vec![
            name,
            format!("{:?}", r.verdict),
            value,
            r.evidence.fitted_exponent.map(num).unwrap_or_default(),
            r.evidence.critical_exponent.map(num).unwrap_or_default(),
            num(r.evidence.margin),
        ]);
    }
    write_csv(&ctx.out.join("criteria.csv"), &header(&["criterion", "verdict", "numeric_value", "fitted_exponent", "critical_exponent", "margin"]), &rows)?;
    write_json(&ctx.out.join("criteria.json"), &reports)?;
    Ok(Status::Ok)
}

pub fn counterexample(ctx: &Ctx) -> anyhow::Result<Status> {
    let task = &ctx.cfg.task;
    let spec = task.counterexample.unwrap_or(CounterexampleSpec { n: 3, alpha: 1.0, q: 0.5, terms: 64 });
    let radii = task.radii.clone().unwrap_or_else(|| vec![4.0, 8.0, 16.0, 32.0]);
    let rep = scenario_counterexample(&spec, &radii, task.check_doubling.unwrap_or(true))?;
    let rows: Vec<Vec<String>> = rep
        .kappa_rows
        .iter()
        .map(|r| vec![num(r.radius), num(r.kappa_q_lower), num(r.threshold), num(r.kappa_upper), r.pass.to_string()])
        .collect();
    write_csv(&ctx.out.join("kappa_lower.csv"), &header(&["radius", "kappa_q_lower", "threshold", "kappa_upper", "pass"]), &rows)?;
    write_json(&ctx.out.join("counterexample.json"), &rep)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct RiccatiReport {
    riccati_b: f64,
    residuals: Vec<wolffkit::verify::RiccatiResidual>,
    observed_orders: Vec<f64>,
    pure_power: wolffkit::verify::PurePowerReport,
}

pub fn riccati(ctx: &Ctx) -> anyhow::Result<Status> {
    let params = ctx.cfg.params()?;
    let t = ctx.cfg.task.riccati.unwrap_or_default();
    let source = Gaussian { amplitude: t.amplitude, width: t.width };
    let residuals = riccati_study(&params, &source, t.range, t.base_nodes, t.doublings, t.window)?;
    let observed_orders = residuals.windows(2).map(|w| (w[0].max_residual / w[1].max_residual).log2()).collect();
    let pure_power = pure_power_example(&params, t.pure_power, &log_grid(t.range.0, t.range.1, t.base_nodes))?;
    let rows: Vec<Vec<String>> = residuals.iter().map(|r| vec![r.nodes.to_string(), num(r.step), num(r.max_residual)]).collect();
    write_csv(&ctx.out.join("riccati.csv"), &header(&["nodes", "step", "max_residual"]), &rows)?;
    write_json(&ctx.out.join("riccati.json"), &RiccatiReport { riccati_b: params.riccati_b(), residuals, observed_orders, pure_power })?;
    Ok(Status::Ok)
}

pub fn verify(ctx: &Ctx, suite: Option<&str>) -> anyhow::Result<Status> {
    let name = suite.or(ctx.cfg.task.suite.as_deref()).unwrap_or("default");
    let rep = run_suite(name, &VerifyBounds::builtin(), ctx.seed).context("running the verification suite")?;
    let rows: Vec<Vec<String>> = rep
        .checks
        .iter()
        .map(|c| vec![c.check_name.clone(), c.samples.to_string(), num(c.min_ratio), num(c.max_ratio), num(c.geometric_mean_ratio), num(c.bound), c.pass.to_string()])
        .collect();
    write_csv(&ctx.out.join("verify.csv"), &header(&["check", "samples", "min_ratio", "max_ratio", "geometric_mean_ratio", "bound", "pass"]), &rows)?;
    write_json(&ctx.out.join("verify.json"), &rep)?;
    for c in &rep.checks {
        println!("{:<24} {:>5} {}", c.check_name, c.samples, if c.pass { "pass" } else { "FAIL" });
    }
    Ok(if rep.pass { Status::Ok } else { Status::ChecksFailed })
}
