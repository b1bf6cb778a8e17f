//! Estimates of the localized embedding constant `kappa(B)`: the least `C` with
//! `||W nu||_{L^q(sigma_B)} <= C nu(R^n)^{1/(p-1)}` for every measure `nu`.
//!
//! Lower bounds come from Dirac trial measures and from the energy of the
//! minimal local solution; upper bounds scale the energy by a constant fitted on
//! power bumps.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::RadialDensity;
use crate::error::{Error, Result};
use crate::extended::{ExtendedValue, InfiniteReason};
use crate::field::log_grid;
use crate::geometry::{sphere_area, Point};
use crate::measure::{BumpShape, Measure};
use crate::parallel::{self, Exec};
use crate::params::Params;
use crate::potentials::radial_kernel_integral;
use crate::quadrature::{integrate, Tolerance};
use crate::solver::{local_solve_density, support_scale, LOCAL_OPTIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Self {
        Ball { center, radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerMethod {
    DualDirac,
    SubsolutionEnergy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperMethod {
    /// Calibrated multiple of the subsolution energy.
    EnergyBound,
    /// Calibrated multiple of the Dirac dual, for radial pieces solved by scaling only.
    RadialCalK,
    /// `(sum_k upper_k^q)^{1/q}` over concentric pieces circumscribing the ball.
    Subadditive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaBracket {
    pub lower: f64,
    pub upper: ExtendedValue,
    pub lower_method: LowerMethod,
    pub upper_method: UpperMethod,
    pub ball: Ball,
}

impl KappaBracket {
    /// Geometric mean of the two sides.
    pub fn midpoint(&self) -> f64 {
        match self.upper {
            ExtendedValue::Finite(u) => (self.lower * u).sqrt(),
            ExtendedValue::Infinite(_) => self.lower,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalKValue {
    pub value: ExtendedValue,
    pub maximizer: Point,
    pub candidate_count: usize,
}

/// `W delta_0(y) = dirac_factor * |y|^{-kernel_exp}`.
pub fn dirac_factor(params: &Params) -> f64 {
    (params.p() - 1.0) / (params.dim() - params.alpha() * params.p())
}

/// Exponent of `|y - z|` in `(W delta_z)^q`.
pub fn dual_exponent(params: &Params) -> f64 {
    params.q() * params.kernel_exp()
}

fn dual_to_kappa(params: &Params, integral: f64) -> f64 {
    dirac_factor(params) * integral.max(0.0).powf(1.0 / params.q())
}

/// Exponent `s` with `kappa = energy^s`.
pub fn energy_power(params: &Params) -> f64 {
    let (p, q) = (params.p(), params.q());
    (p - 1.0 - q) / (q * (p - 1.0))
}

/// Radial pieces sharing a center.
#[derive(Debug, Clone)]
struct Group {
    center: Point,
    density: RadialDensity,
    bump: Option<BumpShape>,
}

fn same_point(a: &Point, b: &Point) -> bool {
    a.dist(b) <= 1e-12 * (1.0 + a.norm().max(b.norm()))
}

fn groups(measure: &Measure) -> Vec<Group> {
    let mut out: Vec<(Point, Vec<&RadialDensity>, Vec<Option<BumpShape>>)> = Vec::new();
    for part in measure.radial_parts() {
        if part.density.is_zero() {
            continue;
        }
        match out.iter_mut().find(|g| same_point(&g.0, &part.center)) {
            Some(g) => {
                g.1.push(part.density.as_ref());
                g.2.push(part.bump);
            }
            None => out.push((part.center.clone(), vec![part.density.as_ref()], vec![part.bump])),
        }
    }
    out.into_iter()
        .map(|(center, ds, bs)| {
            let bump = if bs.len() == 1 { bs[0] } else { None };
            let density = if ds.len() == 1 { ds[0].clone() } else { RadialDensity::sum(&ds) };
            Group { center, density, bump }
        })
        .collect()
}

/// Stieltjes form of `int_{B(z, R)} |y - z|^{-lambda} d mu` from `m(t) = mu(B(z, t))`.
fn centered_kernel(density: &RadialDensity, dz: f64, radius: f64, lambda: f64) -> f64 {
    let m = |t: f64| density.ball_mass_offset(dz, t);
    let mut cuts = vec![0.0, radius];
    if dz > 0.0 {
        for b in density.breaks().iter().chain(std::iter::once(&density.support_end())) {
            for c in [(dz - b).abs(), dz + b] {
                if c > 0.0 && c < radius {
                    cuts.push(c);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let inner = integrate(|t| if t > 0.0 { m(t) * t.powf(-lambda - 1.0) } else { 0.0 }, &cuts, Tolerance { abs: 0.0, rel: 1e-10, max_panels: 4000 });
    radius.powf(-lambda) * m(radius) + lambda * inner.value
}

/// `int |z - y|^{-lambda} d sigma_{|B}(y)`, exact when the ball or `z` is
/// concentric with each piece, otherwise bounded below through the largest
/// concentric ball inscribed in the restriction.
fn kernel_integral(groups: &[Group], measure: &Measure, ball: Option<&Ball>, z: &Point, lambda: f64) -> ExtendedValue {
    let mut total = 0.0;
    let n = measure.dim() as f64;
    for a in measure.atoms() {
        if a.mass <= 0.0 || ball.is_some_and(|b| b.center.dist(&a.location) >= b.radius) {
            continue;
        }
        let r = z.dist(&a.location);
        if r == 0.0 {
            return ExtendedValue::Infinite(InfiniteReason::AtomInEvaluationSet);
        }
        total += a.mass * r.powf(-lambda);
    }
    for g in groups {
        let dz = z.dist(&g.center);
        let v = match ball {
            None => radial_kernel_integral(&g.density, dz, lambda),
            Some(b) => {
                let dc = b.center.dist(&g.center);
                if same_point(&b.center, &g.center) {
                    radial_kernel_integral(&g.density.truncated(b.radius), dz, lambda)
                } else if same_point(z, &g.center) {
                    if dc >= b.radius + g.density.support_end() {
                        ExtendedValue::zero()
                    } else if dc < b.radius && g.density.head_exponent().is_some_and(|h| h + n - lambda <= 0.0) {
                        ExtendedValue::Infinite(InfiniteReason::SingularCore)
                    } else {
                        ExtendedValue::Finite(g.density.times_power(-lambda).ball_mass_offset(dc, b.radius))
                    }
                } else if same_point(z, &b.center) {
                    ExtendedValue::Finite(centered_kernel(&g.density, dz, b.radius, lambda))
                } else if b.radius > dc {
                    radial_kernel_integral(&g.density.truncated(b.radius - dc), dz, lambda)
                } else {
                    ExtendedValue::zero()
                }
            }
        };
        match v {
            ExtendedValue::Finite(x) => total += x,
            inf => return inf,
        }
    }
    ExtendedValue::Finite(total)
}

fn default_candidates(groups: &[Group], ball: Option<&Ball>, n: usize) -> (Vec<Point>, f64) {
    let mut out = Vec::new();
    for g in groups {
        out.push(g.center.clone());
        out.push(g.center.scale(-1.0));
    }
    let (c, scale) = match ball {
        Some(b) => (b.center.clone(), b.radius),
        None => match groups.first() {
            Some(g) => (g.center.clone(), support_scale(&g.density)),
            None => (Point::origin(n), 1.0),
        },
    };
    out.push(c.clone());
    for i in 0..n {
        for s in [-0.5, 0.5] {
            let mut v = c.0.clone();
            v[i] += s * scale;
            out.push(Point(v));
        }
    }
    (out, scale)
}

/// `sup_x int_B |x - y|^{-(n - 2 alpha) q} d sigma(y)` over candidates refined by
/// coordinate descent.
pub fn calk(params: &Params, measure: &Measure, ball: Option<&Ball>, candidates: &[Point]) -> Result<CalKValue> {
    if params.p() != 2.0 {
        return Err(Error::InvalidArgument("the dual quantity is defined for p = 2".into()));
    }
    let lambda = (params.dim() - 2.0 * params.alpha()) * params.q();
    calk_with_exponent(measure, ball, candidates, lambda, true)
}

/// As [`calk`] for the kernel `|x - y|^{-lambda}`.
/// `refine = false` keeps to the candidate set.
pub fn calk_with_exponent(measure: &Measure, ball: Option<&Ball>, candidates: &[Point], lambda: f64, refine: bool) -> Result<CalKValue> {
    let n = measure.dim();
    if let Some(a) = measure.atoms().iter().find(|a| a.mass > 0.0 && ball.is_none_or(|b| b.center.dist(&a.location) < b.radius)) {
        return Ok(CalKValue { value: ExtendedValue::Infinite(InfiniteReason::AtomInEvaluationSet), maximizer: a.location.clone(), candidate_count: 1 });
    }
    let gs = groups(measure);
    let (mut cands, scale) = default_candidates(&gs, ball, n);
    cands.extend(candidates.iter().cloned());
    if let Some(bad) = cands.iter().find(|c| c.dim() != n) {
        return Err(Error::InvalidArgument(format!("candidate of dimension {} in dimension {n}", bad.dim())));
    }
    let vals = parallel::map(Exec::Auto, &cands, |z| kernel_integral(&gs, measure, ball, z, lambda));
    let mut count = cands.len();
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        match v {
            ExtendedValue::Infinite(_) => return Ok(CalKValue { value: *v, maximizer: cands[i].clone(), candidate_count: count }),
            ExtendedValue::Finite(x) => {
                if *x > vals[best].to_f64() {
                    best = i;
                }
            }
        }
    }
    let mut x = cands[best].clone();
    let mut fx = vals[best].to_f64();
    let mut h = if refine { 0.25 * scale } else { 0.0 };
    while h > 1e-6 * scale && count < cands.len() + 400 {
        let mut moved = false;
        for i in 0..n {
            for s in [-1.0, 1.0] {
                let mut y = x.clone();
                y.0[i] += s * h;
                count += 1;
                match kernel_integral(&gs, measure, ball, &y, lambda) {
                    ExtendedValue::Finite(fy) if fy > fx * (1.0 + 1e-14) => {
                        x = y;
                        fx = fy;
                        moved = true;
                    }
                    ExtendedValue::Infinite(r) => {
                        return Ok(CalKValue { value: ExtendedValue::Infinite(r), maximizer: y, candidate_count: count });
                    }
                    _ => {}
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    Ok(CalKValue { value: ExtendedValue::Finite(fx), maximizer: x, candidate_count: count })
}

/// Energy-based and dual bounds for `sigma_{1, gamma}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitBump {
    pub gamma: f64,
    pub energy_lower: f64,
    pub dual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Multiplies the energy lower bound into an upper bound.
    pub c_cal: f64,
    /// Largest energy-to-dual ratio on the reference bumps.
    pub c_dual: f64,
    pub references: [UnitBump; 2],
}

fn param_key(params: &Params) -> [u64; 4] {
    [params.n() as u64, params.p().to_bits(), params.q().to_bits(), params.alpha().to_bits()]
}

type Memo<K, V> = OnceLock<RwLock<HashMap<K, V>>>;

fn memo<K: std::hash::Hash + Eq + Clone, V: Clone>(cell: &'static Memo<K, V>, key: K, f: impl FnOnce() -> Result<V>) -> Result<V> {
    let map = cell.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(v) = map.read().ok().and_then(|m| m.get(&key).cloned()) {
        return Ok(v);
    }
    let v = f()?;
    if let Ok(mut m) = map.write() {
        m.entry(key).or_insert_with(|| v.clone());
    }
    Ok(v)
}

/// Dual bound for `sigma_{1, gamma}`; infinite when the kernel is not integrable at the center.
fn unit_dual(params: &Params, gamma: f64) -> Result<f64> {
    let k = params.dim() - gamma - dual_exponent(params);
    if k <= 0.0 {
        return Err(Error::NonexistenceDetected(format!("embedding constant is infinite for a bump with gamma = {gamma}")));
    }
    Ok(dual_to_kappa(params, sphere_area(params.n()) / k))
}

pub fn unit_bump(params: &Params, gamma: f64) -> Result<UnitBump> {
    static CELL: Memo<([u64; 4], u64), UnitBump> = OnceLock::new();
    memo(&CELL, (param_key(params), gamma.to_bits()), || {
        let dual = unit_dual(params, gamma)?;
        let n = params.n();
        let sol = local_solve_density(params, Point::origin(n), &RadialDensity::bump(n, 1.0, gamma, 1.0)?, &LOCAL_OPTIONS)?;
        Ok(UnitBump { gamma, energy_lower: sol.energy.powf(energy_power(params)), dual })
    })
}

/// `gamma` halfway to the integrability limit of the dual kernel.
pub fn half_critical_gamma(params: &Params) -> f64 {
    0.5 * (params.dim() - dual_exponent(params))
}

/// Fitted once per parameter set from `sigma_{R, gamma}`, `gamma` in `{0, half-critical}`;
/// the radius drops out by exact scaling.
pub fn calibration(params: &Params) -> Result<Calibration> {
    static CELL: Memo<[u64; 4], Calibration> = OnceLock::new();
    memo(&CELL, param_key(params), || {
        let refs = [unit_bump(params, 0.0)?, unit_bump(params, half_critical_gamma(params))?];
        let c_cal = refs.iter().map(|r| r.dual / r.energy_lower).fold(1.0, f64::max);
        let c_dual = refs.iter().map(|r| r.energy_lower / r.dual).fold(1.0, f64::max);
        Ok(Calibration { c_cal, c_dual, references: refs })
    })
}

#[derive(Debug, Clone, Copy)]
struct Sides {
    lower: f64,
    lower_method: LowerMethod,
    upper: f64,
    upper_method: UpperMethod,
}

impl Sides {
    const ZERO: Sides = Sides { lower: 0.0, lower_method: LowerMethod::DualDirac, upper: 0.0, upper_method: UpperMethod::EnergyBound };

    fn scaled(self, f: f64) -> Sides {
        Sides { lower: self.lower * f, upper: self.upper * f, ..self }
    }
}

fn energy_sides(cal: &Calibration, energy_lower: f64, dual: f64) -> Sides {
    let (lower, lower_method) = if energy_lower >= dual { (energy_lower, LowerMethod::SubsolutionEnergy) } else { (dual, LowerMethod::DualDirac) };
    Sides { lower, lower_method, upper: (cal.c_cal * energy_lower).max(lower), upper_method: UpperMethod::EnergyBound }
}

fn dual_sides(cal: &Calibration, dual: f64) -> Sides {
    Sides { lower: dual, lower_method: LowerMethod::DualDirac, upper: cal.c_cal * cal.c_dual * dual, upper_method: UpperMethod::RadialCalK }
}

fn density_key(params: &Params, density: &RadialDensity) -> String {
    let mut h = Sha256::new();
    h.update(format!("{:?}{:?}{:?}", param_key(params), density.breaks(), density.segments()).as_bytes());
    hex::encode(h.finalize())
}

fn local_energy_lower(params: &Params, density: &RadialDensity) -> Result<f64> {
    static CELL: Memo<String, f64> = OnceLock::new();
    memo(&CELL, density_key(params, density), || {
        let sol = local_solve_density(params, Point::origin(density.dim()), density, &LOCAL_OPTIONS)?;
        Ok(sol.energy.powf(energy_power(params)))
    })
}

/// Dual bound for a radial density restricted concentrically: the center and every break are tried.
fn concentric_dual(params: &Params, density: &RadialDensity) -> Result<f64> {
    let lambda = dual_exponent(params);
    let end = density.support_end();
    let mut best: f64 = 0.0;
    for d in std::iter::once(0.0).chain(density.breaks().iter().copied().filter(|b| *b < end)) {
        match radial_kernel_integral(density, d, lambda) {
            ExtendedValue::Finite(v) => best = best.max(v),
            ExtendedValue::Infinite(r) => {
                return Err(Error::NonexistenceDetected(format!("embedding constant is infinite ({r:?})")));
            }
        }
    }
    Ok(dual_to_kappa(params, best))
}

/// `c s^{-gamma}` on a ball, if that is all the density is.
fn single_power(d: &RadialDensity) -> Option<BumpShape> {
    let segs = d.segments();
    let end = d.support_end();
    if !end.is_finite() || segs.iter().skip(1).any(|s| !s.is_empty()) {
        return None;
    }
    match segs.first()?.as_slice() {
        [t] if d.breaks().len() == 1 => Some(BumpShape { radius: end, gamma: -t.exp, amplitude: t.coef }),
        _ => None,
    }
}

/// Bracket for a group restricted to the concentric ball of radius `s`.
fn concentric(params: &Params, g: &Group, s: f64, energy: bool) -> Result<Sides> {
    if s <= 0.0 || g.density.is_zero() {
        return Ok(Sides::ZERO);
    }
    let cal = calibration(params)?;
    if let Some(b) = g.bump {
        let rho = s.min(b.radius);
        let k = params.dim() - b.gamma - dual_exponent(params);
        unit_dual(params, b.gamma)?;
        let f = (b.amplitude * rho.powf(k)).powf(1.0 / params.q());
        return if energy {
            let u = unit_bump(params, b.gamma)?;
            Ok(energy_sides(&cal, u.energy_lower, u.dual).scaled(f))
        } else {
            Ok(dual_sides(&cal, unit_dual(params, b.gamma)?).scaled(f))
        };
    }
    let t = if s >= g.density.support_end() { g.density.clone() } else { g.density.truncated(s) };
    if t.is_zero() {
        return Ok(Sides::ZERO);
    }
    if let Some(shape) = single_power(&t) {
        let g = Group { center: g.center.clone(), density: t, bump: Some(shape) };
        return concentric(params, &g, s, energy);
    }
    let dual = concentric_dual(params, &t)?;
    if energy {
        Ok(energy_sides(&cal, local_energy_lower(params, &t)?, dual))
    } else {
        Ok(dual_sides(&cal, dual))
    }
}

/// Interpolated concentric brackets of a non-bump group for off-center balls.
#[derive(Debug, Clone)]
struct GroupModel {
    radii: Vec<f64>,
    sides: Vec<Sides>,
    head: f64,
    tail: f64,
    bounded: bool,
}

fn group_model(params: &Params, g: &Group, energy: bool) -> Result<Arc<GroupModel>> {
    static CELL: Memo<(String, bool), Arc<GroupModel>> = OnceLock::new();
    memo(&CELL, (density_key(params, &g.density), energy), || {
        let scale = support_scale(&g.density);
        let radii = log_grid(1e-2 * scale, scale, 7);
        let sides = parallel::map(Exec::Auto, &radii, |s| concentric(params, g, *s, energy)).into_iter().collect::<Result<Vec<_>>>()?;
        let q = params.q();
        let n = params.dim();
        let lam = dual_exponent(params);
        let head = (n + g.density.head_exponent().unwrap_or(0.0) - lam) / q;
        let tail = g.density.tail_exponent().map(|t| ((n + t - lam) / q).max(0.0)).unwrap_or(0.0);
        Ok(Arc::new(GroupModel { radii, sides, head, tail, bounded: g.density.support_end().is_finite() }))
    })
}

impl GroupModel {
    fn at(&self, s: f64) -> Sides {
        let m = self.radii.len();
        if s <= 0.0 {
            return Sides::ZERO;
        }
        if s <= self.radii[0] {
            return self.sides[0].scaled((s / self.radii[0]).powf(self.head));
        }
        if s >= self.radii[m - 1] {
            let f = if self.bounded { 1.0 } else { (s / self.radii[m - 1]).powf(self.tail) };
            return self.sides[m - 1].scaled(f);
        }
        let j = self.radii.partition_point(|r| *r <= s).min(m - 1);
        let (a, b) = (self.sides[j - 1], self.sides[j]);
        let w = (s / self.radii[j - 1]).ln() / (self.radii[j] / self.radii[j - 1]).ln();
        let geo = |x: f64, y: f64| if x > 0.0 && y > 0.0 { x * (y / x).powf(w) } else { x + (y - x) * w };
        Sides { lower: geo(a.lower, b.lower), upper: geo(a.upper, b.upper), ..b }
    }
}

fn group_sides(params: &Params, g: &Group, s: f64, energy: bool) -> Result<Sides> {
    if g.bump.is_some() {
        concentric(params, g, s, energy)
    } else {
        Ok(group_model(params, g, energy)?.at(s))
    }
}

/// Two-sided estimate of `kappa(B)` for `sigma` restricted to `ball`.
pub fn kappa_bracket(params: &Params, measure: &Measure, ball: &Ball) -> Result<KappaBracket> {
    if ball.center.dim() != measure.dim() || !(ball.radius > 0.0) {
        return Err(Error::InvalidArgument("ball must have positive radius and the measure's dimension".into()));
    }
    if measure.has_atom_in_ball(&ball.center, ball.radius) {
        return Err(Error::AtomInEvaluationSet);
    }
    let gs: Vec<Group> = groups(measure)
        .into_iter()
        .filter(|g| ball.center.dist(&g.center) < ball.radius + g.density.support_end())
        .collect();
    let make = |s: Sides| KappaBracket {
        lower: s.lower,
        upper: ExtendedValue::Finite(s.upper.max(s.lower)),
        lower_method: s.lower_method,
        upper_method: s.upper_method,
        ball: ball.clone(),
    };
    if gs.is_empty() {
        return Ok(make(Sides::ZERO));
    }
    let energy = gs.len() == 1;
    if energy && same_point(&gs[0].center, &ball.center) {
        return Ok(make(concentric(params, &gs[0], ball.radius, true)?));
    }
    let lam = dual_exponent(params);
    let mut zs = vec![ball.center.clone()];
    zs.extend(gs.iter().filter(|g| g.center.dist(&ball.center) < ball.radius).map(|g| g.center.clone()));
    let mut lower: f64 = 0.0;
    let mut lower_method = LowerMethod::DualDirac;
    for z in &zs {
        match kernel_integral(&gs, measure, Some(ball), z, lam) {
            ExtendedValue::Finite(v) => lower = lower.max(dual_to_kappa(params, v)),
            ExtendedValue::Infinite(r) => return Err(Error::NonexistenceDetected(format!("embedding constant is infinite ({r:?})"))),
        }
    }
    let mut upper_q = 0.0;
    let mut upper_method = UpperMethod::Subadditive;
    for g in &gs {
        let d = g.center.dist(&ball.center);
        if ball.radius > d {
            let inner = group_sides(params, g, ball.radius - d, energy)?;
            if inner.lower > lower {
                lower = inner.lower;
                lower_method = inner.lower_method;
            }
        }
        let outer = group_sides(params, g, ball.radius + d, energy)?;
        if energy {
            upper_method = outer.upper_method;
        }
        upper_q += outer.upper.powf(params.q());
    }
    Ok(make(Sides { lower, lower_method, upper: upper_q.powf(1.0 / params.q()), upper_method }))
}

/// Nondecreasing `kappa(B(center, s))` estimates on a radius grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaTable {
    pub center: Point,
    pub radii: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Running maximum of the bracket midpoints.
    pub kappa: Vec<f64>,
    pub measure_hash: String,
    pub params: Params,
    /// Whether `B(center, radii.last())` contains the whole support.
    pub covers_support: bool,
}

/// `per_decade` log-spaced radii from well inside the local scale to well past the support.
pub fn default_radii(measure: &Measure, center: &Point, per_decade: usize) -> Vec<f64> {
    let scale = measure.local_scale(center);
    let sup = measure.support_radius(center);
    let lo = 1e-2 * scale.min(if sup > 0.0 { sup } else { scale });
    let hi = if sup.is_finite() { 2.0 * sup.max(scale) } else { 1e3 * measure.fine_breakpoints(center).last().copied().unwrap_or(scale) };
    let decades = (hi / lo).log10();
    log_grid(lo, hi, ((decades * per_decade as f64).ceil() as usize).max(2) + 1)
}

fn table_key(params: &Params, measure: &Measure, center: &Point, radii: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(measure.content_hash().as_bytes());
    h.update(format!("{:?}{:?}", param_key(params), center).as_bytes());
    for r in radii {
        h.update(r.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn kappa_table(params: &Params, measure: &Measure, center: &Point, radii: &[f64]) -> Result<Arc<KappaTable>> {
    if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("radii must be positive and strictly increasing".into()));
    }
    static CELL: Memo<String, Arc<KappaTable>> = OnceLock::new();
    memo(&CELL, table_key(params, measure, center, radii), || {
        let brackets = parallel::map(Exec::Auto, radii, |s| kappa_bracket(params, measure, &Ball::new(center.clone(), *s)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Arc::new(table_from_brackets(params, measure, center, radii, &brackets)))
    })
}

fn table_from_brackets(params: &Params, measure: &Measure, center: &Point, radii: &[f64], brackets: &[KappaBracket]) -> KappaTable {
    let mut kappa = Vec::with_capacity(radii.len());
    let mut run: f64 = 0.0;
    for b in brackets {
        run = run.max(b.midpoint());
        kappa.push(run);
    }
    KappaTable {
        center: center.clone(),
        radii: radii.to_vec(),
        lower: brackets.iter().map(|b| b.lower).collect(),
        upper: brackets.iter().map(|b| b.upper.to_f64()).collect(),
        kappa,
        measure_hash: measure.content_hash(),
        params: *params,
        covers_support: radii.last().is_some_and(|r| *r >= measure.support_radius(center)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    measure_hash: String,
    params: Params,
    center: Point,
    covers_support: bool,
}

/// Formats with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

impl KappaTable {
    fn stem(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{}{:?}{:?}", self.measure_hash, param_key(&self.params), self.center).as_bytes());
        for r in &self.radii {
            h.update(r.to_le_bytes());
        }
        format!("kappa-{}", &hex::encode(h.finalize())[..16])
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`; returns the CSV path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let stem = self.stem();
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::Io(e.to_string()))?;
        w.write_record(["radius", "lower", "upper", "midpoint"]).map_err(|e| Error::Io(e.to_string()))?;
        for i in 0..self.radii.len() {
            w.write_record([fmt17(self.radii[i]), fmt17(self.lower[i]), fmt17(self.upper[i]), fmt17(self.kappa[i])])
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        let side = Sidecar { measure_hash: self.measure_hash.clone(), params: self.params, center: self.center.clone(), covers_support: self.covers_support };
        let mut f = fs::File::create(dir.join(format!("{stem}.json")))?;
        f.write_all(serde_json::to_string_pretty(&side).map_err(|e| Error::Io(e.to_string()))?.as_bytes())?;
        Ok(csv_path)
    }

    /// Reloads a table saved by [`KappaTable::save`] when the sidecar hash matches.
    pub fn load(dir: &Path, params: &Params, measure: &Measure, center: &Point, radii: &[f64]) -> Option<KappaTable> {
        let probe = KappaTable {
            center: center.clone(),
            radii: radii.to_vec(),
            lower: vec![],
            upper: vec![],
            kappa: vec![],
            measure_hash: measure.content_hash(),
            params: *params,
            covers_support: false,
        };
        let stem = probe.stem();
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json"))).ok()?).ok()?;
        if side.measure_hash != probe.measure_hash || side.params != *params || side.center != *center {
            return None;
        }
        let mut rd = csv::Reader::from_path(dir.join(format!("{stem}.csv"))).ok()?;
        let mut t = KappaTable { covers_support: side.covers_support, radii: vec![], ..probe };
        for rec in rd.records() {
            let rec = rec.ok()?;
            let v: Vec<f64> = rec.iter().map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>().ok()?;
            if v.len() != 4 {
                return None;
            }
            t.radii.push(v[0]);
            t.lower.push(v[1]);
            t.upper.push(v[2]);
            t.kappa.push(v[3]);
        }
        (t.radii == radii).then_some(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Component;
    use crate::params::make_params;
    use std::f64::consts::PI;

    fn bump(n: usize, r: f64, g: f64, a: f64) -> Measure {
        Measure::new(n, vec![Component::RadialPowerBump { center: Point::origin(n), radius: r, gamma: g, amplitude: a }]).unwrap()
    }

    #[test]
    fn calk_unit_ball_value() {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let v = calk(&p, &bump(3, 1.0, 0.0, 1.0), Some(&Ball::new(Point::origin(3), 2.0)), &[]).unwrap();
        let want = 4.0 * PI / 2.5;
        assert!((v.value.to_f64() - want).abs() < 1e-9 * want, "{:?}", v);
        assert!(v.maximizer.norm() < 1e-6);
    }

    #[test]
    fn calk_empty_and_atom() {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let e = Measure::new(3, vec![]).unwrap();
        assert_eq!(calk(&p, &e, None, &[]).unwrap().value, ExtendedValue::zero());
        let d = Measure::new(3, vec![Component::Atom { location: Point::origin(3), mass: 1.0 }]).unwrap();
        let b = Ball::new(Point::origin(3), 1.0);
        assert_eq!(calk(&p, &d, Some(&b), &[]).unwrap().value, ExtendedValue::Infinite(InfiniteReason::AtomInEvaluationSet));
    }

    #[test]
    fn centered_kernel_matches_closed_form() {
        // uniform ball seen from an interior point, restricted to a ball about that point
        let d = RadialDensity::bump(3, 10.0, 0.0, 1.0).unwrap();
        let v = centered_kernel(&d, 1.0, 2.0, 0.5);
        let want = 4.0 * PI * 2f64.powf(2.5) / 2.5;
        assert!((v - want).abs() < 1e-9 * want, "{v} {want}");
    }

    #[test]
    fn bracket_unit_ball() {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let b = kappa_bracket(&p, &bump(3, 1.0, 0.0, 1.0), &Ball::new(Point::origin(3), 2.0)).unwrap();
        assert!(b.lower >= (4.0 * PI / 2.5f64).powi(2) * (1.0 - 1e-9), "{b:?}");
        assert!(b.lower <= b.upper.to_f64());
        let e = kappa_bracket(&p, &Measure::new(3, vec![]).unwrap(), &Ball::new(Point::origin(3), 2.0)).unwrap();
        assert_eq!((e.lower, e.upper), (0.0, ExtendedValue::zero()));
    }

    #[test]
    fn bracket_mass_scaling() {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let ball = Ball::new(Point::on_axis(3, 0.3), 0.8);
        let a = kappa_bracket(&p, &bump(3, 1.0, 0.0, 1.0), &ball).unwrap();
        let b = kappa_bracket(&p, &bump(3, 1.0, 0.0, 1.0).scaled(10.0), &ball).unwrap();
        let f = 10f64.powf(1.0 / p.q());
        assert!((b.lower / a.lower / f - 1.0).abs() < 1e-6);
        assert!((b.upper.to_f64() / a.upper.to_f64() / f - 1.0).abs() < 1e-6);
    }

    #[test]
    fn table_is_monotone_and_saturates() {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let m = bump(3, 1.0, 0.0, 1.0);
        let o = Point::origin(3);
        let radii = default_radii(&m, &o, 4);
        let t = kappa_table(&p, &m, &o, &radii).unwrap();
        assert!(t.kappa.windows(2).all(|w| w[1] >= w[0]));
        assert!(t.covers_support);
        let last = t.kappa.len() - 1;
        assert_eq!(t.kappa[last], t.kappa[last - 1]);
        let dir = tempfile::tempdir().unwrap();
        t.save(dir.path()).unwrap();
        let back = KappaTable::load(dir.path(), &p, &m, &o, &radii).unwrap();
        assert_eq!(back.kappa, t.kappa);
        assert!(KappaTable::load(dir.path(), &p, &m.scaled(2.0), &o, &radii).is_none());
    }
}
