//! Independent oracles and ratio checks for the potentials and the solver.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::RadialDensity;
use crate::embedding::{calk_with_exponent, default_radii, dirac_factor, kappa_table, Ball};
use crate::error::{Error, Result};
use crate::extended::ExtendedValue;
use crate::field::{log_grid, RadialField};
use crate::geometry::{sphere_area, Point};
use crate::intrinsic::{check_criteria, kpotential_at, kpotential_from, CriteriaOptions, Criterion};
use crate::measure::{Component, Measure};
use crate::parallel::{self, Exec};
use crate::params::{make_params, Params};
use crate::potentials::{riesz, tail_classify_fit, wolff, TailMode, TailVerdict, Verdict};
use crate::solver::{radial_setup, solve_sublinear, support_scale, Solution, SolveOptions, TOperator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub check_name: String,
    pub samples: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub geometric_mean_ratio: f64,
    pub pass: bool,
    /// Largest admissible `max_ratio / min_ratio`.
    pub bound: f64,
}

impl RatioStats {
    /// Stats over nonnegative ratios; an empty sample passes vacuously.
    pub fn from_ratios(name: &str, ratios: &[f64], bound: f64) -> Self {
        if ratios.is_empty() {
            return RatioStats { check_name: name.into(), samples: 0, min_ratio: 0.0, max_ratio: 0.0, geometric_mean_ratio: 0.0, pass: true, bound };
        }
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let gm = if min > 0.0 { (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp() } else { 0.0 };
        let pass = min > 0.0 && max.is_finite() && max / min <= bound;
        RatioStats { check_name: name.into(), samples: ratios.len(), min_ratio: min, max_ratio: max, geometric_mean_ratio: gm, pass, bound }
    }

    pub fn spread(&self) -> f64 {
        self.max_ratio / self.min_ratio
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyBounds {
    pub version: u32,
    pub bounds: BTreeMap<String, f64>,
}

impl VerifyBounds {
    /// The bounds shipped with the crate.
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("../data/verify_bounds.json")).expect("bundled bounds parse")
    }

    pub fn get(&self, name: &str) -> f64 {
        self.bounds.get(name).copied().unwrap_or(f64::INFINITY)
    }
}

/// Radial source density for the oracle: piecewise powers or smooth closed forms.
pub trait RadialSource: Sync {
    fn value(&self, r: f64) -> f64;
    /// Radii where the density may jump.
    fn jumps(&self) -> Vec<f64>;
}

impl RadialSource for RadialDensity {
    fn value(&self, r: f64) -> f64 {
        self.density(r)
    }

    fn jumps(&self) -> Vec<f64> {
        self.breaks().iter().copied().filter(|b| b.is_finite()).collect()
    }
}

/// `amplitude * exp(-(r / width)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub amplitude: f64,
    pub width: f64,
}

impl RadialSource for Gaussian {
    fn value(&self, r: f64) -> f64 {
        self.amplitude * (-(r / self.width).powi(2)).exp()
    }

    fn jumps(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Grid holding `nodes` and the jumps, each interval split into `refine` equal log steps.
fn oracle_grid(nodes: &[f64], jumps: &[f64], refine: usize) -> (Vec<f64>, Vec<usize>) {
    let mut base: Vec<f64> = nodes.to_vec();
    base.extend(jumps.iter().copied().filter(|j| *j > nodes[0] && *j < nodes[nodes.len() - 1]));
    base.sort_by(f64::total_cmp);
    base.dedup_by(|a, b| (*a / *b - 1.0).abs() < 1e-12);
    let mut grid = vec![base[0]];
    for w in base.windows(2) {
        let step = (w[1] / w[0]).ln() / refine as f64;
        for k in 1..refine {
            grid.push(w[0] * (step * k as f64).exp());
        }
        grid.push(w[1]);
    }
    let idx = nodes.iter().map(|x| grid.partition_point(|g| *g < *x * (1.0 - 1e-12))).collect();
    (grid, idx)
}

struct RadialPde {
    n: f64,
    p: f64,
    q: f64,
    grid: Vec<f64>,
    /// One-sided densities `(from the left, from the right)` at each grid radius.
    sigma: Vec<(f64, f64)>,
}

impl RadialPde {
    /// `u(r) = int_r^inf [s^{1-n} int_0^s t^{n-1} sigma u^q dt]^{1/(p-1)} ds` by the trapezoid rule in `ln t`.
    fn apply(&self, u: &[f64], q: f64) -> Vec<f64> {
        let m = self.grid.len();
        let g = &self.grid;
        let inner = |i: usize, left: bool| {
            let s = if left { self.sigma[i].0 } else { self.sigma[i].1 };
            g[i].powf(self.n) * s * u[i].powf(q)
        };
        let mut f = vec![0.0; m];
        let (f0, f1) = (inner(0, false), inner(1, true));
        let h0 = (g[1] / g[0]).ln();
        let k = if f0 > 0.0 && f1 > 0.0 { (f1 / f0).ln() / h0 } else { self.n };
        f[0] = if k > 0.0 { f0 / k } else { f0 / self.n };
        for i in 1..m {
            let h = (g[i] / g[i - 1]).ln();
            f[i] = f[i - 1] + 0.5 * h * (inner(i - 1, false) + inner(i, true));
        }
        let theta = 1.0 / (self.p - 1.0);
        let outer: Vec<f64> = (0..m).map(|i| g[i] * (g[i].powf(1.0 - self.n) * f[i]).powf(theta)).collect();
        let mut out = vec![0.0; m];
        let last = m - 1;
        let slope = if outer[last] > 0.0 && outer[last - 1] > 0.0 { (outer[last] / outer[last - 1]).ln() / (g[last] / g[last - 1]).ln() } else { -1.0 };
        out[last] = if slope < 0.0 { outer[last] / -slope } else { f64::INFINITY };
        for i in (0..last).rev() {
            let h = (g[i + 1] / g[i]).ln();
            out[i] = out[i + 1] + 0.5 * h * (outer[i] + outer[i + 1]);
        }
        out
    }
}

/// Minimal solution of the radial equation `-Delta_p u = sigma u^q` by monotone
/// iteration with trapezoidal inner integrals, reported at `nodes`.
pub fn radial_pde_oracle(params: &Params, source: &dyn RadialSource, nodes: &[f64], refine: usize) -> Result<RadialField> {
    if nodes.len() < 3 || nodes.windows(2).any(|w| w[1] <= w[0]) || nodes[0] <= 0.0 {
        return Err(Error::InvalidArgument("oracle nodes must be positive, increasing, at least three".into()));
    }
    let n = params.n();
    let (grid, idx) = oracle_grid(nodes, &source.jumps(), refine.max(1));
    let sigma = grid.iter().map(|r| (source.value(r * (1.0 - 1e-12)), source.value(r * (1.0 + 1e-12)))).collect();
    let pde = RadialPde { n: n as f64, p: params.p(), q: params.q(), grid, sigma };
    let m = pde.grid.len();
    let ones = vec![1.0; m];
    let base = pde.apply(&ones, 0.0);
    if base.iter().all(|v| *v == 0.0) {
        return RadialField::new(Point::origin(n), nodes.to_vec(), vec![0.0; nodes.len()]);
    }
    if base.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonexistenceDetected("the radial integral diverges at infinity".into()));
    }
    let e = params.growth_exp();
    let shape: Vec<f64> = base.iter().map(|v| v.powf(e)).collect();
    let mut c: f64 = 1.0;
    let mut u: Vec<f64> = shape.clone();
    for k in 0..=60 {
        u = shape.iter().map(|s| c * s).collect();
        let tu = pde.apply(&u, pde.q);
        if tu.iter().zip(&u).all(|(a, b)| a >= b) {
            break;
        }
        if k == 60 {
            return Err(Error::NoSubsolution { halvings: 60 });
        }
        c *= 0.5;
    }
    let mut residual = f64::INFINITY;
    let mut it = 0;
    while it < 2000 {
        let next = pde.apply(&u, pde.q);
        it += 1;
        residual = next.iter().zip(&u).map(|(a, b)| (a - b).abs() / (a.abs() + 1e-300)).fold(0.0, f64::max);
        u = next;
        if residual < 1e-13 {
            break;
        }
    }
    if residual >= 1e-13 {
        return Err(Error::NonconvergentIteration { iterations: it, residual });
    }
    RadialField::new(Point::origin(n), nodes.to_vec(), idx.iter().map(|&i| u[i]).collect())
}

/// Factor turning the Wolff fixed point at `p = 2`, `alpha = 1` into the solution of `-Delta u = sigma u^q`.
pub fn oracle_rescaling(params: &Params) -> f64 {
    sphere_area(params.n()).powf(-1.0 / (1.0 - params.q()))
}

/// Anchored at 1: passes iff every ratio is within `bound` of one in both directions.
pub fn verify_identity_riesz_wolff(params: &Params, measure: &Measure, points: &[Point], bound: f64) -> Result<RatioStats> {
    if params.p() != 2.0 {
        return Err(Error::InvalidArgument("the Riesz identity holds for p = 2".into()));
    }
    let c = params.dim() - 2.0 * params.alpha();
    let ratios = parallel::map(Exec::Auto, points, |x| {
        let w = wolff(params, measure, x, 0.0);
        let i = riesz(params, measure, x);
        match (w, i) {
            (ExtendedValue::Finite(w), ExtendedValue::Finite(i)) if i > 0.0 => Ok(c * w / i),
            (ExtendedValue::Finite(w), ExtendedValue::Finite(i)) if i == 0.0 && w == 0.0 => Ok(1.0),
            _ => Err(Error::InvalidArgument("sample point hits an atom".into())),
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut anchored = ratios;
    anchored.push(1.0);
    let mut s = RatioStats::from_ratios("riesz_wolff_identity", &anchored, bound);
    s.samples -= 1;
    Ok(s)
}

/// Nodes along the first axis from the center of a radial measure.
fn axis_point(center: &Point, r: f64) -> Point {
    let mut v = center.0.clone();
    v[0] += r;
    Point(v)
}

/// Ratio `W[(W sigma)^r sigma] / (W sigma)^{r/(p-1) + 1}` at radial sample distances.
pub fn verify_wolff_of_power(params: &Params, measure: &Measure, r: f64, radii: &[f64], bound: f64) -> Result<RatioStats> {
    let (center, sigma) = radial_setup(measure)?;
    if sigma.is_zero() {
        return Ok(RatioStats::from_ratios("wolff_of_power", &[], bound));
    }
    let scale = support_scale(&sigma);
    let nodes = log_grid(1e-3 * scale, 1e3 * scale, 128);
    let ones = RadialField::new(center.clone(), nodes.clone(), vec![1.0; nodes.len()])?;
    let op = TOperator::new(params, center.clone(), sigma.clone(), nodes.clone(), &ones, 1e-10, Exec::Auto)?;
    let w = op.apply(&ones);
    let shape = w.map(|v| v.powf(r / params.q()));
    let op2 = TOperator::new(params, center.clone(), sigma, nodes, &shape, 1e-10, Exec::Auto)?;
    let lhs = op2.apply(&shape);
    let ratios: Vec<f64> = radii.iter().map(|x| lhs.eval(*x) / w.eval(*x).powf(r / (params.p() - 1.0) + 1.0)).collect();
    Ok(RatioStats::from_ratios("wolff_of_power", &ratios, bound))
}

/// Ratio `sigma(B(x,t)) [int_t^inf (kappa^eta / s^{n - alpha p})^{1/(p-1)} ds/s]^q / int_{B(x,t)} u^q d sigma`
/// for `x` at distance `d` from the center along the first axis.
pub fn verify_local_energy(params: &Params, measure: &Measure, solution: &Solution, samples: &[(f64, f64)], bound: f64) -> Result<RatioStats> {
    let (center, sigma) = radial_setup(measure)?;
    if sigma.is_zero() {
        return Ok(RatioStats::from_ratios("local_energy", &[], bound));
    }
    let (fb, ft) = solution.u.pieces();
    let pushed = sigma.times_field_power(&fb, &ft, params.q());
    let mut ratios = Vec::new();
    for &(d, t) in samples {
        let x = axis_point(&center, d);
        let mass = sigma.ball_mass_offset(d, t);
        if mass <= 0.0 {
            continue;
        }
        let table = kappa_table(params, measure, &x, &default_radii(measure, &x, 4))?;
        let k = kpotential_from(params, &table, t).to_f64();
        ratios.push(mass * k.powf(params.q()) / pushed.ball_mass_offset(d, t));
    }
    Ok(RatioStats::from_ratios("local_energy", &ratios, bound))
}

/// `u / (K sigma + (W sigma)^e)` at every `stride`-th solution node.
pub fn two_sided_ratios(params: &Params, measure: &Measure, solution: &Solution, stride: usize) -> Result<Vec<f64>> {
    let center = solution.u.center.clone();
    let idx: Vec<usize> = (0..solution.u.nodes.len()).step_by(stride.max(1)).collect();
    let e = params.growth_exp();
    parallel::map(Exec::Auto, &idx, |&i| {
        let r = solution.u.nodes[i];
        let k = kpotential_at(params, measure, &axis_point(&center, r))?;
        let denom = k.to_f64() + solution.wolff.values[i].powf(e);
        Ok(solution.u.values[i] / denom)
    })
    .into_iter()
    .collect()
}

pub fn verify_two_sided(params: &Params, measure: &Measure, solution: &Solution, stride: usize, bound: f64) -> Result<RatioStats> {
    if measure.is_zero() {
        return Ok(RatioStats::from_ratios("two_sided", &[], bound));
    }
    Ok(RatioStats::from_ratios("two_sided", &two_sided_ratios(params, measure, solution, stride)?, bound))
}

/// `min_nodes u / (W sigma)^e`.
pub fn wolff_lower_ratio(params: &Params, solution: &Solution) -> f64 {
    let e = params.growth_exp();
    solution.u.values.iter().zip(&solution.wolff.values).filter(|(_, w)| **w > 0.0).map(|(u, w)| u / w.powf(e)).fold(f64::INFINITY, f64::min)
}

/// `inf_{B(x,R)} W sigma` against the Wolff integral truncated at `R`, over random bumps.
pub fn verify_ball_infimum(params: &Params, trials: usize, seed: u64, bound: f64) -> Result<RatioStats> {
    let n = params.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(trials);
    for _ in 0..trials {
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let radius = rng.gen_range(0.2..3.0);
        let gamma = rng.gen_range(0.0..(params.alpha() * params.p()).min(params.dim() - 0.5));
        let amp = rng.gen_range(0.1..10.0);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let big_r = rng.gen_range(0.05..4.0);
        cases.push((Point(c), radius, gamma, amp, Point(x), big_r));
    }
    let ratios = parallel::map(Exec::Auto, &cases, |(c, radius, gamma, amp, x, big_r)| {
        let m = Measure::new(n, vec![Component::RadialPowerBump { center: c.clone(), radius: *radius, gamma: *gamma, amplitude: *amp }])?;
        // radially nonincreasing density: the infimum sits on the boundary point farthest from the center
        let dir = x.sub(c);
        let norm = dir.norm();
        let far = if norm > 0.0 { x.add(&dir.scale(big_r / norm)) } else { axis_point(x, *big_r) };
        let inf = wolff(params, &m, &far, 0.0).to_f64();
        let tail = wolff(params, &m, x, *big_r).to_f64();
        Ok(inf / tail)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(RatioStats::from_ratios("ball_infimum", &ratios, bound))
}

/// Centered nonuniform finite differences of `v` on a radial grid.
fn radial_derivatives(r: &[f64], v: &[f64], i: usize) -> (f64, f64) {
    let (h0, h1) = (r[i] - r[i - 1], r[i + 1] - r[i]);
    let d1 = (-h1 / (h0 * (h0 + h1))) * v[i - 1] + ((h1 - h0) / (h0 * h1)) * v[i] + (h0 / (h1 * (h0 + h1))) * v[i + 1];
    let d2 = 2.0 * (v[i - 1] / (h0 * (h0 + h1)) - v[i] / (h0 * h1) + v[i + 1] / (h1 * (h0 + h1)));
    (d1, d2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiResidual {
    pub nodes: usize,
    /// Log step of the grid.
    pub step: f64,
    pub max_residual: f64,
    pub window: (f64, f64),
}

/// `max |-Delta v - b (v')^2 / v - sigma|` over grid nodes inside `window`, `p = 2`.
pub fn verify_riccati_residual(params: &Params, v: &RadialField, source: &dyn RadialSource, window: (f64, f64)) -> Result<RiccatiResidual> {
    if params.p() != 2.0 {
        return Err(Error::InvalidArgument("the residual check is for p = 2".into()));
    }
    let n = params.dim();
    let b = params.riccati_b();
    let r = &v.nodes;
    let mut worst: f64 = 0.0;
    for i in 1..r.len() - 1 {
        if r[i] < window.0 || r[i] > window.1 {
            continue;
        }
        let (d1, d2) = radial_derivatives(r, &v.values, i);
        let lap = d2 + (n - 1.0) * d1 / r[i];
        let grad = if v.values[i] > 0.0 { b * d1 * d1 / v.values[i] } else { 0.0 };
        worst = worst.max((-lap - grad - source.value(r[i])).abs());
    }
    let step = (r[1] / r[0]).ln();
    Ok(RiccatiResidual { nodes: r.len(), step, max_residual: worst, window })
}

/// Residuals for the oracle solution under successive grid doublings.
pub fn riccati_study(params: &Params, source: &dyn RadialSource, range: (f64, f64), base_nodes: usize, doublings: usize, window: (f64, f64)) -> Result<Vec<RiccatiResidual>> {
    let mut out = Vec::new();
    for k in 0..=doublings {
        let count = (base_nodes - 1) * (1 << k) + 1;
        let nodes = log_grid(range.0, range.1, count);
        let u = radial_pde_oracle(params, source, &nodes, 1)?;
        let pair = crate::solver::riccati_transform(params, &u);
        out.push(verify_riccati_residual(params, &pair.v, source, window)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurePowerReport {
    /// `max |-Delta v - b (v')^2/v|` relative to `max |Delta v|` on the grid.
    pub v_relative_residual: f64,
    /// `max |Delta u|` relative to `max |u''|`: `u` is harmonic away from the origin.
    pub u_relative_laplacian: f64,
    /// `|S^{n-1}| r^{n-1} |u'(r)|` at the innermost and outermost interior nodes.
    pub flux_inner: f64,
    pub flux_outer: f64,
}

/// `v = c |x|^{(1-q)(2-n)}` with `sigma = 0`: `v` solves the gradient equation while
/// `u` carries a point mass at the origin, so `-Delta u = sigma u^q` fails there.
pub fn pure_power_example(params: &Params, c: f64, nodes: &[f64]) -> Result<PurePowerReport> {
    if params.p() != 2.0 || params.n() < 3 {
        return Err(Error::InvalidArgument("the pure-power example needs p = 2 and n >= 3".into()));
    }
    let n = params.dim();
    let q = params.q();
    let a = (1.0 - q) * (2.0 - n);
    let vfield = RadialField::new(Point::origin(params.n()), nodes.to_vec(), nodes.iter().map(|r| c * r.powf(a)).collect())?;
    let e = params.growth_exp();
    let u: Vec<f64> = vfield.values.iter().map(|v| (v / e).powf(e)).collect();
    let zero = RadialDensity::zero(params.n());
    let res = verify_riccati_residual(params, &vfield, &zero, (0.0, f64::INFINITY))?;
    let (mut lap_v, mut lap_u, mut d2_u): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 1..nodes.len() - 1 {
        let (d1, d2) = radial_derivatives(nodes, &vfield.values, i);
        lap_v = lap_v.max((d2 + (n - 1.0) * d1 / nodes[i]).abs());
        let (e1, e2) = radial_derivatives(nodes, &u, i);
        lap_u = lap_u.max((e2 + (n - 1.0) * e1 / nodes[i]).abs());
        d2_u = d2_u.max(e2.abs());
    }
    let omega = sphere_area(params.n());
    let flux = |i: usize| {
        let (d1, _) = radial_derivatives(nodes, &u, i);
        omega * nodes[i].powf(n - 1.0) * d1.abs()
    };
    Ok(PurePowerReport {
        v_relative_residual: res.max_residual / lap_v,
        u_relative_laplacian: lap_u / d2_u,
        flux_inner: flux(1),
        flux_outer: flux(nodes.len() - 2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleSpec {
    pub n: usize,
    pub alpha: f64,
    pub q: f64,
    pub terms: usize,
}

impl CounterexampleSpec {
    pub fn params(&self) -> Result<Params> {
        make_params(self.n, 2.0, self.q, self.alpha)
    }

    pub fn coefficient(&self, k: usize) -> f64 {
        (k as f64).powi(-2)
    }

    pub fn epsilon(&self, k: usize) -> f64 {
        (k as f64).powf(-(self.n as f64 + 2.0))
    }

    pub fn gamma(&self, k: usize) -> f64 {
        let n = self.n as f64;
        n - self.q * (n - 2.0 * self.alpha) - self.epsilon(k)
    }

    /// Bump `k` has radius `k` and center `k e_1`.
    pub fn measure(&self) -> Result<Measure> {
        self.params()?;
        if self.terms == 0 {
            return Err(Error::InvalidArgument("the series needs at least one term".into()));
        }
        let comps = (1..=self.terms)
            .map(|k| Component::RadialPowerBump { center: Point::on_axis(self.n, k as f64), radius: k as f64, gamma: self.gamma(k), amplitude: self.coefficient(k) })
            .collect();
        Measure::new(self.n, comps)
    }

    pub fn centers(&self) -> Vec<Point> {
        (1..=self.terms).map(|k| Point::on_axis(self.n, k as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaLowerRow {
    pub radius: f64,
    /// `kappa(B(0, R))^q` lower bound from Dirac trial measures.
    pub kappa_q_lower: f64,
    pub threshold: f64,
    pub kappa_upper: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub spec: CounterexampleSpec,
    pub mass_growth: Vec<(f64, f64)>,
    pub wolff_tail: TailVerdict,
    pub kappa_rows: Vec<KappaLowerRow>,
    pub intrinsic_tail: Verdict,
    pub intrinsic_exponent: f64,
    pub kappa_finite: bool,
    /// Verdicts recomputed with twice the terms.
    pub doubled: Option<(Verdict, Verdict, bool)>,
    pub stable_under_doubling: bool,
}

fn counterexample_once(spec: &CounterexampleSpec, radii: &[f64]) -> Result<CounterexampleReport> {
    let params = spec.params()?;
    let m = spec.measure()?;
    let n = spec.n;
    let o = Point::origin(n);
    let window = (radii[0], radii[radii.len() - 1]);
    let mass_growth = radii.iter().map(|r| (*r, m.ball_mass(&o, *r))).collect();
    let wolff_tail = tail_classify_fit(&params, &m, TailMode::WolffTail, window, 24);
    let lam = crate::embedding::dual_exponent(&params);
    let mut cands = spec.centers();
    cands.extend(spec.centers().iter().map(|c| c.scale(-1.0)));
    let table = kappa_table(&params, &m, &o, &log_grid(window.0, window.1, 16))?;
    let omega = sphere_area(n);
    let mut kappa_rows = Vec::new();
    for r in radii {
        let ball = Ball::new(o.clone(), *r);
        let v = calk_with_exponent(&m, Some(&ball), &cands, lam, false)?;
        let lower = dirac_factor(&params) * v.value.to_f64().powf(1.0 / params.q());
        let kq = lower.powf(params.q());
        let threshold = omega * 4f64.powi(-(n as i32)) * r.powi(n as i32);
        let upper = crate::embedding::kappa_bracket(&params, &m, &ball)?.upper.to_f64();
        kappa_rows.push(KappaLowerRow { radius: *r, kappa_q_lower: kq, threshold, kappa_upper: upper, pass: kq >= threshold && upper.is_finite() });
    }
    let reports = check_criteria(&params, &m, &CriteriaOptions { fit_window: Some(window), ladder: 0, evaluate: false })?;
    let it = reports.iter().find(|r| r.criterion == Criterion::IntrinsicTail).expect("intrinsic report");
    let kappa_finite = table.upper.iter().all(|u| u.is_finite()) && kappa_rows.iter().all(|r| r.kappa_upper.is_finite());
    Ok(CounterexampleReport {
        spec: *spec,
        mass_growth,
        wolff_tail,
        kappa_rows,
        intrinsic_tail: it.verdict,
        intrinsic_exponent: it.evidence.fitted_exponent.unwrap_or(f64::NAN),
        kappa_finite,
        doubled: None,
        stable_under_doubling: true,
    })
}

/// The divergent-series construction: mass tail converges, the intrinsic tail diverges,
/// and `kappa(B(0, R))^q >= |S^{n-1}| 4^{-n} R^n` on the ladder.
pub fn scenario_counterexample(spec: &CounterexampleSpec, radii: &[f64], check_doubling: bool) -> Result<CounterexampleReport> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("radii must be increasing".into()));
    }
    let mut rep = counterexample_once(spec, radii)?;
    if check_doubling {
        let twice = CounterexampleSpec { terms: 2 * spec.terms, ..*spec };
        let r2 = counterexample_once(&twice, radii)?;
        let lower_ok = r2.kappa_rows.iter().all(|r| r.pass);
        rep.stable_under_doubling =
            r2.wolff_tail.verdict == rep.wolff_tail.verdict && r2.intrinsic_tail == rep.intrinsic_tail && lower_ok == rep.kappa_rows.iter().all(|r| r.pass);
        rep.doubled = Some((r2.wolff_tail.verdict, r2.intrinsic_tail, lower_ok));
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: String,
    pub bounds_version: u32,
    pub checks: Vec<RatioStats>,
    pub pass: bool,
}

/// Random atomic measure with at most `max_atoms` atoms in `[-2, 2]^n`.
pub fn random_atomic(n: usize, max_atoms: usize, rng: &mut ChaCha8Rng) -> Result<Measure> {
    let count = rng.gen_range(1..=max_atoms);
    let comps = (0..count)
        .map(|_| Component::Atom { location: Point((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()), mass: rng.gen_range(0.01..5.0) })
        .collect();
    Measure::new(n, comps)
}

/// Random points at distance at least `gap` from every atom.
pub fn random_points_off_atoms(measure: &Measure, count: usize, gap: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n = measure.dim();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = Point((0..n).map(|_| rng.gen_range(-4.0..4.0)).collect());
        if measure.atoms().iter().all(|a| a.location.dist(&x) > gap) {
            out.push(x);
        }
    }
    out
}

/// The frozen family behind `verify --suite default`.
pub fn run_suite(name: &str, bounds: &VerifyBounds, seed: u64) -> Result<VerifyReport> {
    if name != "default" {
        return Err(Error::InvalidArgument(format!("unknown suite {name:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let p3 = make_params(3, 2.0, 0.5, 1.0)?;

    let atoms = random_atomic(3, 50, &mut rng)?;
    let pts = random_points_off_atoms(&atoms, 100, 1e-3, &mut rng);
    checks.push(verify_identity_riesz_wolff(&p3, &atoms, &pts, bounds.get("riesz_wolff_identity"))?);

    checks.push(verify_ball_infimum(&p3, 100, seed, bounds.get("ball_infimum"))?);

    let unit = Measure::new(3, vec![Component::RadialPowerBump { center: Point::origin(3), radius: 1.0, gamma: 0.0, amplitude: 1.0 }])?;
    let radii = log_grid(1e-2, 1e2, 25);
    checks.push(verify_wolff_of_power(&p3, &unit, p3.q(), &radii, bounds.get("wolff_of_power"))?);

    let opts = SolveOptions::default();
    let sol = solve_sublinear(&p3, &unit, &opts)?;
    let samples: Vec<(f64, f64)> = [(0.0, 0.5), (0.0, 1.0), (0.5, 0.25), (0.5, 2.0), (2.0, 1.5)].to_vec();
    checks.push(verify_local_energy(&p3, &unit, &sol, &samples, bounds.get("local_energy"))?);
    checks.push(verify_two_sided(&p3, &unit, &sol, 16, bounds.get("two_sided"))?);

    let pass = checks.iter().all(|c| c.pass);
    Ok(VerifyReport { suite: name.into(), bounds_version: bounds.version, checks, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_stats_contract() {
        let s = RatioStats::from_ratios("x", &[1.0, 2.0, 4.0], 4.0);
        assert!(s.pass);
        assert!((s.geometric_mean_ratio - 2.0).abs() < 1e-12);
        assert!(!RatioStats::from_ratios("x", &[1.0, 5.0], 4.0).pass);
        assert!(!RatioStats::from_ratios("x", &[0.0, 1.0], 4.0).pass);
        assert!(RatioStats::from_ratios("x", &[], 4.0).pass);
    }

    #[test]
    fn bounds_parse() {
        let b = VerifyBounds::builtin();
        assert_eq!(b.version, 1);
        assert!(b.get("two_sided") >= 1e3);
    }

    #[test]
    fn oracle_zero_and_scaling() {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let nodes = log_grid(1e-2, 1e2, 41);
        let z = radial_pde_oracle(&p, &RadialDensity::zero(3), &nodes, 1).unwrap();
        assert!(z.values.iter().all(|v| *v == 0.0));
        let d = RadialDensity::bump(3, 1.0, 0.0, 1.0).unwrap();
        let a = radial_pde_oracle(&p, &d, &nodes, 2).unwrap();
        let b = radial_pde_oracle(&p, &d.scaled(10.0), &nodes, 2).unwrap();
        let f = 10f64.powf(1.0 / (p.p() - 1.0 - p.q()));
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| (y / x / f - 1.0).abs() < 1e-9));
    }

    #[test]
    fn identity_on_dirac() {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let m = Measure::new(3, vec![Component::Atom { location: Point::origin(3), mass: 1.0 }]).unwrap();
        let s = verify_identity_riesz_wolff(&p, &m, &[Point::on_axis(3, 2.0)], 1.000001).unwrap();
        assert!(s.pass, "{s:?}");
    }

    #[test]
    fn pure_power_reproduces() {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let nodes = log_grid(0.1, 10.0, 801);
        let r = pure_power_example(&p, 1.0, &nodes).unwrap();
        assert!(r.v_relative_residual < 1e-3, "{r:?}");
        assert!(r.u_relative_laplacian < 1e-3, "{r:?}");
        assert!(r.flux_inner > 0.0 && (r.flux_inner / r.flux_outer - 1.0).abs() < 1e-3, "{r:?}");
    }
}
