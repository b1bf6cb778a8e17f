//! The intrinsic potential built from embedding constants, the majorant `M(x, t)`,
//! and the existence criteria.

use serde::{Deserialize, Serialize};

use crate::density::pow_integral;
use crate::embedding::{default_radii, dual_exponent, kappa_table, KappaTable};
use crate::error::{Error, Result};
use crate::extended::{ExtendedValue, InfiniteReason};
use crate::geometry::{sphere_area, Point};
use crate::measure::Measure;
use crate::params::Params;
use crate::potentials::{loglog_slope, mass_growth_exponent, tail_classify, tail_classify_fit, wolff, TailMode, Verdict, TAIL_MARGIN};
use crate::quadrature::{integrate, Tolerance};

/// Power of `kappa` in the integrand `kappa^a s^{-kernel_exp}` (in `ds/s`).
pub fn kappa_power(params: &Params) -> f64 {
    params.q() / (params.p() - 1.0 - params.q())
}

/// Index `j > i0` closest to one decade away from node `i0`, in direction `dir`.
fn decade_partner(radii: &[f64], i: usize, up: bool) -> usize {
    let m = radii.len();
    if up {
        (i + 1..m).find(|&j| radii[j] >= 10.0 * radii[i]).unwrap_or(m - 1)
    } else {
        (0..i).rev().find(|&j| radii[j] <= radii[i] / 10.0).unwrap_or(0)
    }
}

fn slope(t: &KappaTable, i: usize, j: usize) -> f64 {
    let (a, b) = (t.kappa[i.min(j)], t.kappa[i.max(j)]);
    if a > 0.0 && b > 0.0 && i != j {
        (b / a).ln() / (t.radii[i.max(j)] / t.radii[i.min(j)]).ln()
    } else {
        0.0
    }
}

/// Large-`s` exponent of `kappa(s)^a s^{-kernel_exp}` over the last decade of the table.
pub fn kappa_tail_exponent(params: &Params, table: &KappaTable) -> f64 {
    let m = table.radii.len();
    let beta = if table.covers_support { 0.0 } else { slope(table, decade_partner(&table.radii, m - 1, false), m - 1) };
    kappa_power(params) * beta - params.kernel_exp()
}

/// `int_t^inf [kappa(B(x, s))^eta / s^{n - alpha p}]^{1/(p-1)} ds/s` from a table
/// about `x`, with power-law interpolation between radii.
pub fn kpotential_from(params: &Params, table: &KappaTable, t: f64) -> ExtendedValue {
    let a = kappa_power(params);
    let kx = params.kernel_exp();
    let r = &table.radii;
    let k = &table.kappa;
    let m = r.len();
    let seg = |lo: f64, hi: f64, i: usize, j: usize| -> f64 {
        // kappa = k_i (s / r_i)^beta on [lo, hi]
        if k[i] <= 0.0 && k[j] <= 0.0 {
            return 0.0;
        }
        if k[i] <= 0.0 || k[j] <= 0.0 {
            // vanishing endpoint: linear interpolation of kappa^a
            let f = |s: f64| {
                let w = (s - r[i]) / (r[j] - r[i]);
                (k[i].powf(a) * (1.0 - w) + k[j].powf(a) * w) * s.powf(-kx - 1.0)
            };
            return integrate(f, &[lo, hi], Tolerance::default()).value;
        }
        let beta = (k[j] / k[i]).ln() / (r[j] / r[i]).ln();
        k[i].powf(a) * r[i].powf(-a * beta) * pow_integral(lo, hi, a * beta - kx - 1.0)
    };
    let mut total = 0.0;
    if t < r[0] {
        if k[0] > 0.0 {
            let beta = slope(table, 0, decade_partner(r, 0, true));
            let e = a * beta - kx;
            if e <= 0.0 {
                return ExtendedValue::Infinite(InfiniteReason::SingularCore);
            }
            total += k[0].powf(a) * (r[0].powf(e) - t.powf(e)) * r[0].powf(-a * beta) / e;
        }
    }
    for i in 0..m - 1 {
        let lo = r[i].max(t);
        if lo < r[i + 1] {
            total += seg(lo, r[i + 1], i, i + 1);
        }
    }
    let e = kappa_tail_exponent(params, table);
    if e >= 0.0 {
        return ExtendedValue::Infinite(InfiniteReason::DivergentTail);
    }
    let start = r[m - 1].max(t);
    let beta = (e + kx) / a;
    total += k[m - 1].powf(a) * r[m - 1].powf(-a * beta) * start.powf(e) / -e;
    ExtendedValue::Finite(total)
}

pub fn kpotential(params: &Params, table: &KappaTable) -> ExtendedValue {
    kpotential_from(params, table, 0.0)
}

fn infinite_from(e: Error) -> Result<ExtendedValue> {
    match e {
        Error::AtomInEvaluationSet => Ok(ExtendedValue::Infinite(InfiniteReason::AtomInEvaluationSet)),
        Error::NonexistenceDetected(_) => Ok(ExtendedValue::Infinite(InfiniteReason::SingularCore)),
        other => Err(other),
    }
}

/// `K sigma(x)` with a default radius grid.
pub fn kpotential_at(params: &Params, measure: &Measure, x: &Point) -> Result<ExtendedValue> {
    kpotential_at_from(params, measure, x, 0.0)
}

pub fn kpotential_at_from(params: &Params, measure: &Measure, x: &Point, t: f64) -> Result<ExtendedValue> {
    if measure.is_zero() {
        return Ok(ExtendedValue::zero());
    }
    match kappa_table(params, measure, x, &default_radii(measure, x, 4)) {
        Ok(table) => Ok(kpotential_from(params, &table, t)),
        Err(e) => infinite_from(e),
    }
}

/// `M(x, t)`: the truncated intrinsic potential plus the `e`-th power of the truncated Wolff potential.
pub fn m_function(params: &Params, measure: &Measure, x: &Point, t: f64) -> Result<ExtendedValue> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument("t must be nonnegative".into()));
    }
    let k = kpotential_at_from(params, measure, x, t)?;
    let w = wolff(params, measure, x, t).map(|w| w.powf(params.growth_exp()));
    Ok(k.add(w))
}

/// As [`m_function`] with a precomputed table about `x`.
pub fn m_function_with(params: &Params, measure: &Measure, table: &KappaTable, t: f64) -> ExtendedValue {
    let w = wolff(params, measure, &table.center, t).map(|w| w.powf(params.growth_exp()));
    kpotential_from(params, table, t).add(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Finiteness of the Wolff potential at infinity.
    WolffTail,
    /// Finiteness of the intrinsic potential at infinity.
    IntrinsicTail,
    /// Finite local Wolff energy on the ball ladder `B(0, 2^j)`.
    LocalWolffEnergy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallVerdict {
    pub radius: f64,
    pub finite: bool,
    pub value: Option<ExtendedValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub fit_window: Option<(f64, f64)>,
    pub fitted_exponent: Option<f64>,
    pub critical_exponent: Option<f64>,
    pub margin: f64,
    pub analytic: bool,
    pub balls: Vec<BallVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: Criterion,
    pub verdict: Verdict,
    /// Evaluated quantity, when cheap enough to compute for this measure.
    pub numeric_value: Option<ExtendedValue>,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriteriaOptions {
    /// Decide the tail criteria by slope fits on this window instead of analytically.
    pub fit_window: Option<(f64, f64)>,
    /// Last ladder index `j`.
    pub ladder: u32,
    pub evaluate: bool,
}

impl Default for CriteriaOptions {
    fn default() -> Self {
        CriteriaOptions { fit_window: None, ladder: 6, evaluate: true }
    }
}

fn classify(fitted: f64, critical: f64) -> Verdict {
    if fitted < critical - TAIL_MARGIN {
        Verdict::Converges
    } else if fitted > critical + TAIL_MARGIN {
        Verdict::Diverges
    } else {
        Verdict::Inconclusive
    }
}

fn wolff_tail_report(params: &Params, measure: &Measure, opts: &CriteriaOptions) -> CriterionReport {
    let v = match opts.fit_window {
        Some(w) => tail_classify_fit(params, measure, TailMode::WolffTail, w, 24),
        None => tail_classify(params, measure, TailMode::WolffTail),
    };
    let numeric_value = match v.verdict {
        Verdict::Diverges if opts.fit_window.is_none() => Some(ExtendedValue::Infinite(InfiniteReason::DivergentTail)),
        _ if opts.evaluate => Some(wolff(params, measure, &Point::origin(params.n()), 0.0)),
        _ => None,
    };
    CriterionReport {
        criterion: Criterion::WolffTail,
        verdict: v.verdict,
        numeric_value,
        evidence: Evidence {
            fit_window: Some(v.fit_window),
            fitted_exponent: Some(v.fitted_exponent),
            critical_exponent: Some(v.critical_exponent),
            margin: v.margin,
            analytic: v.analytic,
            balls: vec![],
        },
    }
}

fn intrinsic_tail_report(params: &Params, measure: &Measure, opts: &CriteriaOptions) -> Result<CriterionReport> {
    let origin = Point::origin(params.n());
    let kx = params.kernel_exp();
    let mut ev = Evidence { fit_window: None, fitted_exponent: None, critical_exponent: Some(0.0), margin: TAIL_MARGIN, analytic: true, balls: vec![] };
    let (verdict, exponent) = if let Some(w) = opts.fit_window {
        let radii = crate::field::log_grid(w.0, w.1, 16);
        let table = kappa_table(params, measure, &origin, &radii)?;
        let beta = loglog_slope(&table.radii, &table.kappa);
        let e = kappa_power(params) * beta - kx;
        ev.fit_window = Some(w);
        ev.analytic = false;
        (classify(e, 0.0), e)
    } else if measure.atoms().iter().any(|a| a.mass > 0.0) {
        ev.fitted_exponent = None;
        return Ok(CriterionReport {
            criterion: Criterion::IntrinsicTail,
            verdict: Verdict::Diverges,
            numeric_value: Some(ExtendedValue::Infinite(InfiniteReason::AtomInEvaluationSet)),
            evidence: ev,
        });
    } else if measure.support_radius(&origin).is_finite() {
        // kappa is constant past the support
        (Verdict::Converges, -kx)
    } else {
        // power tails: kappa(B(0, s))^q grows like s^{beta + n - q kernel_exp}
        let beta = mass_growth_exponent(params, measure);
        let growth = (beta - dual_exponent(params)).max(0.0) / params.q();
        let e = kappa_power(params) * growth - kx;
        let crit = params.critical();
        let v = if beta >= crit { Verdict::Diverges } else { Verdict::Converges };
        (v, e)
    };
    ev.fitted_exponent = Some(exponent);
    let numeric_value = if verdict == Verdict::Diverges {
        Some(ExtendedValue::Infinite(InfiniteReason::DivergentTail))
    } else if opts.evaluate && opts.fit_window.is_none() {
        Some(kpotential_at(params, measure, &origin)?)
    } else {
        None
    };
    Ok(CriterionReport { criterion: Criterion::IntrinsicTail, verdict, numeric_value, evidence: ev })
}

/// Whether `int_B (W sigma_B)^{(1+q)e} d sigma` is finite near every singular point of `sigma_B`.
fn ball_energy_finite(params: &Params, measure: &Measure, radius: f64) -> bool {
    let origin = Point::origin(params.n());
    if measure.has_atom_in_ball(&origin, radius) {
        return false;
    }
    let n = params.dim();
    let ap = params.alpha() * params.p();
    let power = (1.0 + params.q()) * params.growth_exp();
    measure.radial_parts().iter().all(|part| {
        if part.center.norm() >= radius {
            return true;
        }
        let h = part.density.head_exponent().unwrap_or(0.0);
        // near the center W ~ r^{(h + alpha p)/(p - 1)} when that is negative
        let w = ((h + ap) / (params.p() - 1.0)).min(0.0);
        n + h + power * w > 0.0
    })
}

/// Numeric `int_{B(0, R)} (W sigma_B)^{(1+q)e} d sigma` for measures radial about the origin.
fn ball_energy(params: &Params, measure: &Measure, radius: f64) -> Option<f64> {
    let (center, density) = measure.radial_density()?;
    if center.norm() > 0.0 {
        return None;
    }
    let t = density.truncated(radius);
    let restricted = Measure::from_radial(center, t.clone());
    let n = params.n();
    let omega = sphere_area(n);
    let power = (1.0 + params.q()) * params.growth_exp();
    let f = |v: f64| {
        let r = v.exp();
        let w = wolff(params, &restricted, &Point::on_axis(n, r), 0.0).to_f64();
        w.powf(power) * t.density(r) * omega * r.powi(n as i32)
    };
    let mut cuts: Vec<f64> = vec![(radius * 1e-8).ln()];
    cuts.extend(t.breaks().iter().filter(|b| **b < radius).map(|b| b.ln()));
    cuts.push(radius.ln());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    Some(integrate(f, &cuts, Tolerance { abs: 0.0, rel: 1e-6, max_panels: 200 }).value)
}

fn ladder_report(params: &Params, measure: &Measure, opts: &CriteriaOptions) -> CriterionReport {
    let mut balls = Vec::new();
    for j in 0..=opts.ladder {
        let radius = 2f64.powi(j as i32);
        let finite = ball_energy_finite(params, measure, radius);
        let value = if !finite {
            Some(ExtendedValue::Infinite(InfiniteReason::SingularCore))
        } else if opts.evaluate {
            ball_energy(params, measure, radius).map(ExtendedValue::Finite)
        } else {
            None
        };
        balls.push(BallVerdict { radius, finite, value });
    }
    let verdict = if balls.iter().all(|b| b.finite) { Verdict::Converges } else { Verdict::Diverges };
    let numeric_value = balls.last().and_then(|b| b.value);
    CriterionReport {
        criterion: Criterion::LocalWolffEnergy,
        verdict,
        numeric_value,
        evidence: Evidence { fit_window: None, fitted_exponent: None, critical_exponent: None, margin: 0.0, analytic: true, balls },
    }
}

pub fn check_criteria(params: &Params, measure: &Measure, opts: &CriteriaOptions) -> Result<Vec<CriterionReport>> {
    if measure.dim() != params.n() {
        return Err(Error::InvalidArgument("measure and parameters disagree on the dimension".into()));
    }
    Ok(vec![wolff_tail_report(params, measure, opts), intrinsic_tail_report(params, measure, opts)?, ladder_report(params, measure, opts)])
}
