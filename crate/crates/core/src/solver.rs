//! Minimal solutions of `u = W_{alpha,p}(u^q sigma)` for radial measures by
//! monotone iteration.

use serde::{Deserialize, Serialize};

use crate::density::RadialDensity;
use crate::error::{Error, Result};
use crate::extended::InfiniteReason;
use crate::field::{log_grid, RadialField};
use crate::geometry::Point;
use crate::measure::Measure;
use crate::parallel::{self, Exec};
use crate::params::Params;
use crate::potentials::{build_rule, head_cutoff, DEFAULT_REL_TOL, tail_classify, RadialRule, Tail, TailMode, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nodes: usize,
    /// Innermost node as a multiple of the support scale.
    pub lo: f64,
    /// Outermost node as a multiple of the support scale.
    pub hi: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nodes: 256, lo: 1e-3, hi: 1e3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub grid: GridSpec,
    pub tol: f64,
    pub max_iter: usize,
    pub check_criteria: bool,
    /// Halvings of `c0` beyond the first admissible value.
    pub extra_halvings: u32,
    pub quad_tol: f64,
    pub exec: Exec,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { grid: GridSpec::default(), tol: 1e-6, max_iter: 200, check_criteria: true, extra_halvings: 0, quad_tol: 1e-8, exec: Exec::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub monotone: bool,
    /// Sup-relative change of the last step.
    pub residual: f64,
    pub c0_used: f64,
    /// `A_j(x*, t*)` per iterate.
    pub aj_trace: Vec<f64>,
    pub probe: (f64, f64),
    /// Smallest `(u_{j+1} - u_j)/u_{j+1}` seen over all steps and nodes.
    pub worst_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub u: RadialField,
    /// `W_{alpha,p} sigma` on the same nodes.
    pub wolff: RadialField,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiPair {
    pub u: RadialField,
    pub v: RadialField,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolve {
    pub u: RadialField,
    /// `int_B u^q d sigma`.
    pub energy: f64,
    pub diagnostics: SolveDiagnostics,
}

/// Length scale of a radial density: its support radius, or its last break.
pub fn support_scale(density: &RadialDensity) -> f64 {
    let e = density.support_end();
    if e.is_finite() && e > 0.0 {
        e
    } else {
        density.breaks().last().copied().unwrap_or(1.0)
    }
}

/// `u -> W_{alpha,p}(u^q sigma)` on a fixed node set with quadrature rules
/// frozen at construction, so that it is exactly order preserving.
#[derive(Debug, Clone)]
pub struct TOperator {
    params: Params,
    center: Point,
    sigma: RadialDensity,
    nodes: Vec<f64>,
    rules: Vec<RadialRule>,
    exec: Exec,
}

fn structural_cuts(sigma: &RadialDensity, d: f64) -> Vec<f64> {
    let mut cuts = vec![d];
    let end = sigma.support_end();
    for b in sigma.breaks().iter().copied().filter(|b| *b <= end) {
        cuts.push((d - b).abs());
        cuts.push(d + b);
    }
    cuts.retain(|c| *c > 0.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

/// Radial rule for the Wolff potential of `omega` at distance `d` from its
/// center, truncated at `t` when positive.
pub(crate) fn radial_rule(params: &Params, sigma: &RadialDensity, omega: &RadialDensity, d: f64, t: f64, rel_tol: f64) -> Result<(RadialRule, f64)> {
    let cuts = structural_cuts(sigma, d);
    let end = omega.support_end().min(sigma.support_end());
    let scale = cuts.first().copied().unwrap_or(1.0).min(sigma.breaks().first().copied().unwrap_or(1.0));
    let (lo, head) = if t > 0.0 {
        (t, None)
    } else if d > 0.0 {
        (head_cutoff(params, scale), Some(params.dim()))
    } else {
        (head_cutoff(params, scale), Some(params.dim() + omega.head_exponent().unwrap_or(0.0)))
    };
    let tail = if end.is_finite() { Tail::Constant(d + end) } else { Tail::Open(d + support_scale(sigma)) };
    let bm = |r: f64| omega.ball_mass_offset(d, r);
    match build_rule(params, &bm, &cuts, lo, head, tail, rel_tol) {
        Ok(b) => Ok((b.rule, b.value)),
        Err(InfiniteReason::DivergentTail) => Err(Error::NonexistenceDetected("the Wolff tail of the pushforward diverges".into())),
        Err(r) => Err(Error::NonexistenceDetected(format!("Wolff potential is infinite on the grid ({r:?})"))),
    }
}

impl TOperator {
    /// Builds rules adapted to the pushforward `shape^q sigma`.
    pub fn new(params: &Params, center: Point, sigma: RadialDensity, nodes: Vec<f64>, shape: &RadialField, quad_tol: f64, exec: Exec) -> Result<Self> {
        let (fb, ft) = shape.pieces();
        let omega = sigma.times_field_power(&fb, &ft, params.q());
        Self::with_pushforward(params, center, sigma, nodes, &omega, quad_tol, exec)
    }

    fn with_pushforward(params: &Params, center: Point, sigma: RadialDensity, nodes: Vec<f64>, omega: &RadialDensity, quad_tol: f64, exec: Exec) -> Result<Self> {
        let built = parallel::map(exec, &nodes, |d| radial_rule(params, &sigma, omega, *d, 0.0, quad_tol));
        let rules = built.into_iter().map(|r| r.map(|x| x.0)).collect::<Result<Vec<_>>>()?;
        Ok(TOperator { params: *params, center, sigma, nodes, rules, exec })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn sigma(&self) -> &RadialDensity {
        &self.sigma
    }

    pub fn rule_sizes(&self) -> Vec<usize> {
        self.rules.iter().map(|r| r.len()).collect()
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// `u^q sigma` as a radial density.
    pub fn pushforward(&self, u: &RadialField) -> RadialDensity {
        let (fb, ft) = u.pieces();
        self.sigma.times_field_power(&fb, &ft, self.params.q())
    }

    pub fn apply(&self, u: &RadialField) -> RadialField {
        let omega = self.pushforward(u);
        self.apply_to_density(&omega, &u.center)
    }

    /// Wolff potential of an arbitrary radial density on the nodes with the frozen rules.
    pub fn apply_to_density(&self, omega: &RadialDensity, center: &Point) -> RadialField {
        let theta = self.params.inv_p1();
        let idx: Vec<usize> = (0..self.nodes.len()).collect();
        let vals = parallel::map(self.exec, &idx, |&i| {
            let d = self.nodes[i];
            self.rules[i].apply(theta, |r| omega.ball_mass_offset(d, r))
        });
        let mut f = RadialField::zeros(center.clone(), self.nodes.clone()).with_values(vals);
        f.center = self.center.clone();
        f
    }
}

/// One Picard step with rules adapted to `sigma` itself.
pub fn apply_t(params: &Params, measure: &Measure, u: &RadialField) -> Result<RadialField> {
    let (center, sigma) = radial_setup(measure)?;
    if center.dist(&u.center) > 1e-12 * (1.0 + center.norm()) {
        return Err(Error::NonRadialMeasure("field and measure have different centers".into()));
    }
    let ones = RadialField::new(center.clone(), u.nodes.clone(), vec![1.0; u.nodes.len()])?;
    let op = TOperator::new(params, center, sigma, u.nodes.clone(), &ones, 1e-10, Exec::Auto)?;
    Ok(op.apply(u))
}

pub(crate) fn radial_setup(measure: &Measure) -> Result<(Point, RadialDensity)> {
    if measure.atoms().iter().any(|a| a.mass > 0.0) {
        return Err(Error::AtomInEvaluationSet);
    }
    if measure.radial_parts().is_empty() {
        return Ok((Point::origin(measure.dim()), RadialDensity::zero(measure.dim())));
    }
    measure.radial_density().ok_or_else(|| Error::NonRadialMeasure("components have different centers".into()))
}

/// Largest `2^{-k}`, `k <= 60`, with `c^{1 - q/(p-1)} <= min_i T(w)_i / w_i`.
fn find_c0(params: &Params, w: &RadialField, tw: &RadialField) -> Result<f64> {
    let ratio = w
        .values
        .iter()
        .zip(&tw.values)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| b / a)
        .fold(f64::INFINITY, f64::min);
    let expo = 1.0 - params.q() * params.inv_p1();
    let mut c0: f64 = 1.0;
    for k in 0..=60 {
        if c0.powf(expo) <= ratio {
            return Ok(c0);
        }
        if k == 60 {
            break;
        }
        c0 *= 0.5;
    }
    Err(Error::NoSubsolution { halvings: 60 })
}

pub fn solve_sublinear(params: &Params, measure: &Measure, opts: &SolveOptions) -> Result<Solution> {
    let (center, sigma) = radial_setup(measure)?;
    if opts.check_criteria && !sigma.is_zero() {
        let v = tail_classify(params, measure, TailMode::WolffTail);
        if v.verdict != Verdict::Converges {
            return Err(Error::NonexistenceDetected(format!(
                "the Wolff tail condition fails (slope {:.3} against {:.3})",
                v.fitted_exponent, v.critical_exponent
            )));
        }
    }
    let scale = support_scale(&sigma);
    let nodes = log_grid(opts.grid.lo * scale, opts.grid.hi * scale, opts.grid.nodes);
    solve_on_nodes(params, center, sigma, nodes, opts)
}

pub(crate) fn solve_on_nodes(params: &Params, center: Point, sigma: RadialDensity, nodes: Vec<f64>, opts: &SolveOptions) -> Result<Solution> {
    let zeros = RadialField::zeros(center.clone(), nodes.clone());
    let scale = support_scale(&sigma);
    let probe = (0.5 * scale, 0.5 * scale);
    if sigma.is_zero() {
        let diagnostics = SolveDiagnostics { iterations: 1, monotone: true, residual: 0.0, c0_used: 1.0, aj_trace: vec![0.0], probe, worst_step: 0.0 };
        return Ok(Solution { u: zeros.clone(), wolff: zeros, diagnostics });
    }
    let q = params.q();
    let e = params.growth_exp();
    let theta = params.inv_p1();
    let ones = RadialField::new(center.clone(), nodes.clone(), vec![1.0; nodes.len()])?;
    // W sigma itself is cheap, so it keeps the tighter tolerance
    let op_sigma = TOperator::new(params, center.clone(), sigma.clone(), nodes.clone(), &ones, opts.quad_tol.min(DEFAULT_REL_TOL), opts.exec)?;
    let wolff = op_sigma.apply(&ones);
    let we = wolff.map(|w| w.powf(e));
    let op = TOperator::new(params, center.clone(), sigma.clone(), nodes.clone(), &we, opts.quad_tol, opts.exec)?;
    let t1 = op.apply(&we);
    let mut c0 = find_c0(params, &we, &t1)?;
    c0 *= 0.5f64.powi(opts.extra_halvings as i32);

    // A_j probe: truncated Wolff of the pushforward at x* beyond t*
    let (fb, ft) = we.pieces();
    let omega_shape = sigma.times_field_power(&fb, &ft, q);
    let (probe_rule, _) = radial_rule(params, &sigma, &omega_shape, probe.0, probe.1, opts.quad_tol)?;
    let aj = |u: &RadialField| {
        let w = op.pushforward(u);
        probe_rule.apply(theta, |r| w.ball_mass_offset(probe.0, r))
    };

    let mut u = we.scaled(c0);
    let mut trace = vec![aj(&u)];
    let mut monotone = true;
    let mut worst: f64 = 0.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let probes: Vec<usize> = [0.5 * scale, scale].iter().map(|r| nodes.partition_point(|x| x < r).min(nodes.len() - 1)).collect();
    while iterations < opts.max_iter {
        let next = op.apply(&u);
        iterations += 1;
        let mut change: f64 = 0.0;
        for (a, b) in u.values.iter().zip(&next.values) {
            let step = (b - a) / (b.abs() + 1e-300);
            worst = worst.min(step);
            if *b < *a * (1.0 - 1e-14) {
                monotone = false;
            }
            change = change.max(step.abs());
        }
        for &i in &probes {
            if next.values[i] > 1e6 * we.values[i].max(f64::MIN_POSITIVE) {
                return Err(Error::UnboundedIterates { radius: nodes[i], bound: 1e6 * we.values[i] });
            }
        }
        trace.push(aj(&next));
        u = next;
        residual = change;
        if change < opts.tol {
            break;
        }
    }
    if residual >= opts.tol {
        return Err(Error::NonconvergentIteration { iterations, residual });
    }
    let diagnostics = SolveDiagnostics { iterations, monotone, residual, c0_used: c0, aj_trace: trace, probe, worst_step: worst };
    Ok(Solution { u, wolff, diagnostics })
}

/// Solves on `sigma` restricted to `ball` and returns the energy `int_B u^q d sigma`.
pub fn local_solve(params: &Params, measure: &Measure, center: &Point, radius: f64) -> Result<LocalSolve> {
    if measure.has_atom_in_ball(center, radius) {
        return Err(Error::AtomInEvaluationSet);
    }
    let (c, sigma) = radial_setup(&Measure::from_parts(measure.dim(), measure.radial_parts().to_vec(), Vec::new()))?;
    if !measure.radial_parts().is_empty() && c.dist(center) > 1e-12 * (1.0 + c.norm()) {
        return Err(Error::NonRadialMeasure("ball is not centered at the measure's center".into()));
    }
    local_solve_density(params, center.clone(), &sigma.truncated(radius), &LOCAL_OPTIONS)
}

/// Options of the local solves behind the embedding constants.
pub const LOCAL_OPTIONS: SolveOptions = SolveOptions {
    grid: GridSpec { nodes: 96, lo: 1e-3, hi: 1.0 },
    tol: 1e-8,
    max_iter: 400,
    check_criteria: false,
    extra_halvings: 0,
    quad_tol: 1e-9,
    exec: Exec::Auto,
};

pub fn local_solve_density(params: &Params, center: Point, sigma: &RadialDensity, opts: &SolveOptions) -> Result<LocalSolve> {
    if sigma.is_zero() {
        let zeros = RadialField::zeros(center, vec![1.0]);
        let diagnostics = SolveDiagnostics { iterations: 1, monotone: true, residual: 0.0, c0_used: 1.0, aj_trace: vec![0.0], probe: (0.0, 0.0), worst_step: 0.0 };
        return Ok(LocalSolve { u: zeros, energy: 0.0, diagnostics });
    }
    let scale = support_scale(sigma);
    let nodes = log_grid(opts.grid.lo * scale, opts.grid.hi * scale, opts.grid.nodes);
    let sol = solve_on_nodes(params, center, sigma.clone(), nodes, opts).map_err(|e| match e {
        Error::NonconvergentIteration { iterations, residual } => {
            Error::NonconvergentLocalSolve(format!("{iterations} iterations, residual {residual:e}"))
        }
        other => other,
    })?;
    let (fb, ft) = sol.u.pieces();
    let energy = sigma.times_field_power(&fb, &ft, params.q()).total_mass();
    Ok(LocalSolve { u: sol.u, energy, diagnostics: sol.diagnostics })
}

pub fn riccati_transform(params: &Params, u: &RadialField) -> RiccatiPair {
    let e = params.growth_exp();
    let v = u.map(|x| e * x.powf(1.0 / e));
    RiccatiPair { u: u.clone(), v, b: params.riccati_b() }
}
