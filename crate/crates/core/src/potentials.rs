//! Wolff and Riesz potentials as integrals over the ball radius, and tail
//! classification.

use serde::{Deserialize, Serialize};

use crate::density::RadialDensity;
use crate::extended::{ExtendedValue, InfiniteReason};
use crate::geometry::{sphere_area, Point};
use crate::measure::Measure;
use crate::params::Params;
use crate::quadrature::{integrate, Tolerance};

/// Relative tolerance of the radial quadrature.
pub const DEFAULT_REL_TOL: f64 = 1e-10;
/// Default slope margin of tail verdicts.
pub const TAIL_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Converges,
    Diverges,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailMode {
    WolffTail,
    MassGrowth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailVerdict {
    pub verdict: Verdict,
    /// Slope of the tested quantity; analytic when `analytic` is set.
    pub fitted_exponent: f64,
    pub critical_exponent: f64,
    pub fit_window: (f64, f64),
    pub margin: f64,
    pub analytic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureReport {
    pub value: ExtendedValue,
    pub panels: usize,
    pub estimated_error: f64,
    pub tail_contribution: f64,
}

/// Nodes and weights with `W = sum_i w_i B(r_i)^{1/(p-1)}`, the head and tail
/// closed forms folded in as extra nodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RadialRule {
    pub radii: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RadialRule {
    pub fn apply(&self, theta: f64, mut ball_mass: impl FnMut(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for (r, w) in self.radii.iter().zip(&self.weights) {
            let b = ball_mass(*r);
            if b > 0.0 {
                acc += w * b.powf(theta);
            }
        }
        acc
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
}

/// How `B(r)` behaves beyond the last cut.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Tail {
    /// Constant from this radius on.
    Constant(f64),
    /// Unbounded support; growth read off the ball masses.
    Open(f64),
}

/// Analytic growth exponent of `r -> sigma(B(0, r))` at infinity: 0 for finite mass.
pub fn mass_growth_exponent(params: &Params, measure: &Measure) -> f64 {
    let n = params.dim();
    measure
        .radial_parts()
        .iter()
        .filter_map(|p| p.density.tail_exponent())
        .map(|t| (n + t).max(0.0))
        .fold(0.0, f64::max)
}

/// Whether the Wolff integral diverges at infinity, decided from the tail exponents.
fn tail_diverges(params: &Params, measure: &Measure) -> bool {
    let n = params.dim();
    measure
        .radial_parts()
        .iter()
        .filter_map(|p| p.density.tail_exponent())
        .any(|t| n + t > 0.0 && n + t >= params.critical())
}

/// Local exponent `k` with `sigma(B(x, r)) ~ r^k` as `r -> 0`.
fn local_exponent(params: &Params, measure: &Measure, x: &Point) -> Result<f64, InfiniteReason> {
    if measure.has_atom_at(x) {
        return Err(InfiniteReason::SingularCore);
    }
    let n = params.dim();
    let mut k = n;
    for part in measure.radial_parts() {
        if x.dist(&part.center) == 0.0 {
            if let Some(h) = part.density.head_exponent() {
                k = k.min(n + h);
            }
        }
    }
    Ok(k)
}

pub(crate) struct RuleBuild {
    pub rule: RadialRule,
    pub value: f64,
    pub error: f64,
    pub panels: usize,
    pub tail: f64,
}

/// Adaptive construction of a radial rule for `int_lo^inf (B(r)/r^{n-alpha p})^{1/(p-1)} dr/r`.
///
/// `head_k` is the small-radius exponent used below `lo`; `None` means no head.
pub(crate) fn build_rule(
    params: &Params,
    ball_mass: &dyn Fn(f64) -> f64,
    cuts: &[f64],
    lo: f64,
    head_k: Option<f64>,
    tail: Tail,
    rel_tol: f64,
) -> Result<RuleBuild, InfiniteReason> {
    let theta = params.inv_p1();
    let kexp = params.kernel_exp();
    let crit = params.critical();
    let mut radii = Vec::new();
    let mut weights = Vec::new();
    let mut head_val = 0.0;
    if let Some(k) = head_k {
        let b = ball_mass(lo);
        if b > 0.0 {
            if k <= crit {
                return Err(InfiniteReason::SingularCore);
            }
            let w = lo.powf(-kexp) / ((k - crit) * theta);
            radii.push(lo);
            weights.push(w);
            head_val = w * b.powf(theta);
        }
    }
    let mut us: Vec<f64> = vec![lo.ln()];
    us.extend(cuts.iter().filter(|c| **c > lo).map(|c| c.ln()));
    let (r_end, tail_mass) = match tail {
        Tail::Constant(r) => {
            if r > lo {
                us.push(r.ln());
            }
            (r.max(lo), None)
        }
        Tail::Open(r) => (r.max(lo), Some(())),
    };
    let integrand = |u: f64| {
        let b = ball_mass(u.exp());
        if b > 0.0 {
            (theta * b.ln() - kexp * u).exp()
        } else {
            0.0
        }
    };
    let mut extra_cuts = Vec::new();
    let mut remainder = None;
    if tail_mass.is_some() {
        // extend by decades until the remainder is negligible
        let l10 = std::f64::consts::LN_10;
        let mut u = r_end.ln();
        let mut acc = 0.0;
        let mut prev_b = ball_mass(r_end);
        for _ in 0..400 {
            let un = u + l10;
            let bn = ball_mass(un.exp());
            let f = integrand(un);
            acc += f * l10;
            extra_cuts.push(un);
            let g = if prev_b > 0.0 && bn > 0.0 { (bn / prev_b).ln() / l10 } else { 0.0 };
            let rate = (crit - g.max(0.0)) * theta;
            u = un;
            prev_b = bn;
            if rate > 0.0 && f / rate <= 1e-13 * acc.max(f64::MIN_POSITIVE) {
                remainder = Some((un.exp(), rate));
                break;
            }
        }
        if remainder.is_none() {
            return Err(InfiniteReason::DivergentTail);
        }
    }
    us.extend(extra_cuts);
    us.sort_by(f64::total_cmp);
    us.dedup();
    let out = integrate(integrand, &us, Tolerance { abs: 0.0, rel: rel_tol, max_panels: 4000 });
    for (u, w) in out.rule() {
        radii.push(u.exp());
        weights.push(w * (-kexp * u).exp());
    }
    let tail_val;
    match (tail, remainder) {
        (Tail::Constant(r), _) => {
            // nudged outward so boundary atoms count
            let rr = r.max(lo) * (1.0 + 1e-12);
            let w = rr.powf(-kexp) / kexp;
            let b = ball_mass(rr);
            radii.push(rr);
            weights.push(w);
            tail_val = if b > 0.0 { w * b.powf(theta) } else { 0.0 };
        }
        (Tail::Open(_), Some((r, rate))) => {
            let w = r.powf(-kexp) / rate;
            let b = ball_mass(r);
            radii.push(r);
            weights.push(w);
            tail_val = if b > 0.0 { w * b.powf(theta) } else { 0.0 };
        }
        (Tail::Open(_), None) => unreachable!(),
    }
    Ok(RuleBuild {
        value: head_val + out.value + tail_val,
        error: out.error,
        panels: out.panels.len(),
        tail: tail_val,
        rule: RadialRule { radii, weights },
    })
}

/// Lower cutoff of the radial integral relative to the local length scale.
pub(crate) fn head_cutoff(params: &Params, scale: f64) -> f64 {
    let a = params.alpha() * params.p() * params.inv_p1();
    let decades = (6.0 / a).clamp(3.0, 8.0);
    scale * 10f64.powf(-decades)
}

/// Rule for the Wolff potential of `measure` at `x` truncated at `t`.
pub(crate) fn wolff_rule(params: &Params, measure: &Measure, x: &Point, t: f64, rel_tol: f64) -> Result<RuleBuild, InfiniteReason> {
    if tail_diverges(params, measure) {
        return Err(InfiniteReason::DivergentTail);
    }
    let cuts = measure.fine_breakpoints(x);
    let support = measure.support_radius(x);
    let (lo, head) = if t > 0.0 {
        (t, None)
    } else {
        let k = local_exponent(params, measure, x)?;
        (head_cutoff(params, measure.local_scale(x)), Some(k))
    };
    let tail = if support.is_finite() {
        Tail::Constant(support.max(cuts.last().copied().unwrap_or(0.0)))
    } else {
        Tail::Open(cuts.last().copied().unwrap_or(1.0).max(lo))
    };
    let bm = |r: f64| measure.ball_mass(x, r);
    build_rule(params, &bm, &cuts, lo, head, tail, rel_tol)
}

/// `W_{alpha,p} sigma(x)` truncated below at `t` (`t = 0` for the full potential).
pub fn wolff(params: &Params, measure: &Measure, x: &Point, t: f64) -> ExtendedValue {
    wolff_report(params, measure, x, t).value
}

pub fn wolff_report(params: &Params, measure: &Measure, x: &Point, t: f64) -> QuadratureReport {
    wolff_report_tol(params, measure, x, t, DEFAULT_REL_TOL)
}

pub fn wolff_report_tol(params: &Params, measure: &Measure, x: &Point, t: f64, rel_tol: f64) -> QuadratureReport {
    if measure.is_zero() {
        return QuadratureReport { value: ExtendedValue::zero(), panels: 0, estimated_error: 0.0, tail_contribution: 0.0 };
    }
    match wolff_rule(params, measure, x, t.max(0.0), rel_tol) {
        Ok(b) => QuadratureReport {
            value: ExtendedValue::Finite(b.value),
            panels: b.panels,
            estimated_error: b.error,
            tail_contribution: b.tail,
        },
        Err(reason) => QuadratureReport { value: ExtendedValue::Infinite(reason), panels: 0, estimated_error: 0.0, tail_contribution: 0.0 },
    }
}

/// Spherical mean of `|x - y|^{-lambda}` over `|y - z| = s` with `|x - z| = d`.
pub fn sphere_mean_power(n: usize, d: f64, s: f64, lambda: f64) -> f64 {
    if d == 0.0 {
        return s.powf(-lambda);
    }
    if s == 0.0 {
        return d.powf(-lambda);
    }
    if n == 3 {
        let k = 2.0 - lambda;
        let (a, b) = ((d - s).abs(), d + s);
        // int_a^b t^{1 - lambda} dt, logarithmic at lambda = 2
        return crate::density::pow_integral(a, b, k - 1.0) / (2.0 * d * s);
    }
    let m = n as f64 - 2.0;
    let norm = crate::quadrature::gl_fixed(|phi: f64| phi.sin().powf(m), 0.0, std::f64::consts::PI, crate::quadrature::gl20());
    let f = |phi: f64| {
        let half = (0.5 * phi).sin();
        let dist2 = (d - s) * (d - s) + 4.0 * d * s * half * half;
        dist2.powf(-0.5 * lambda) * phi.sin().powf(m)
    };
    let out = integrate(f, &[0.0, 1e-6, 1e-3, 0.1, std::f64::consts::PI], Tolerance { abs: 0.0, rel: 1e-11, max_panels: 2000 });
    out.value / norm
}

/// `int |x - y|^{-lambda} d sigma(y)` over one radial density about `z`, `|x - z| = d`.
pub fn radial_kernel_integral(density: &RadialDensity, d: f64, lambda: f64) -> ExtendedValue {
    let n = density.dim() as f64;
    if let Some(t) = density.tail_exponent() {
        if t + n - lambda >= 0.0 {
            return ExtendedValue::Infinite(InfiniteReason::DivergentTail);
        }
    }
    if d == 0.0 {
        if let Some(h) = density.head_exponent() {
            if h + n - lambda <= 0.0 {
                return ExtendedValue::Infinite(InfiniteReason::SingularCore);
            }
        }
        return ExtendedValue::Finite(density.moment(0.0, f64::INFINITY, -lambda));
    }
    if density.is_zero() {
        return ExtendedValue::zero();
    }
    let dim = density.dim();
    let omega = sphere_area(dim);
    let end = density.support_end();
    let mut cuts = vec![0.0];
    cuts.extend(density.breaks().iter().copied().filter(|b| *b < end));
    if d < end {
        cuts.push(d);
    }
    let far = if end.is_finite() { end } else { density.breaks().last().copied().unwrap_or(1.0).max(d) * 1e3 };
    cuts.push(far);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let f = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        density.density(s) * omega * s.powf(n - 1.0) * sphere_mean_power(dim, d, s, lambda)
    };
    let tol = Tolerance { abs: 0.0, rel: 1e-9, max_panels: 6000 };
    // an integrable singular head s^beta on [0, c] becomes smooth under s = c v^{1/(beta+1)}
    let head = density.segments().first().and_then(|seg| seg.iter().map(|t| t.exp).reduce(f64::min));
    let beta = head.map(|h| h + n - 1.0).filter(|b| *b < 0.0 && *b > -1.0);
    let mut v = match beta {
        Some(b) if cuts.len() > 2 => {
            let c = cuts[1];
            let k = b + 1.0;
            let g = |w: f64| {
                if w <= 0.0 {
                    return 0.0;
                }
                let s = c * w.powf(1.0 / k);
                f(s) * s.powf(-b)
            };
            let near = integrate(g, &[0.0, 1.0], tol).value * c.powf(k) / k;
            near + integrate(f, &cuts[1..], tol).value
        }
        _ => integrate(f, &cuts, tol).value,
    };
    if !end.is_finite() {
        // beyond `far` the mean is within (d/s)^2 of s^{-lambda}
        v += density.moment(far, f64::INFINITY, -lambda);
    }
    ExtendedValue::Finite(v)
}

/// Unnormalized Riesz potential `int |x - y|^{2 alpha - n} d sigma(y)`.
pub fn riesz(params: &Params, measure: &Measure, x: &Point) -> ExtendedValue {
    let lambda = params.dim() - 2.0 * params.alpha();
    riesz_power(measure, x, lambda)
}

/// `int |x - y|^{-lambda} d sigma(y)` over the whole measure.
pub fn riesz_power(measure: &Measure, x: &Point, lambda: f64) -> ExtendedValue {
    let mut total = ExtendedValue::zero();
    for a in measure.atoms() {
        if a.mass == 0.0 {
            continue;
        }
        let d = x.dist(&a.location);
        if d == 0.0 {
            return ExtendedValue::Infinite(InfiniteReason::SingularCore);
        }
        total = total.add(ExtendedValue::Finite(a.mass * d.powf(-lambda)));
    }
    for part in measure.radial_parts() {
        total = total.add(radial_kernel_integral(&part.density, x.dist(&part.center), lambda));
    }
    total
}

/// Least-squares slope of `(ln x, ln y)`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(_, y)| **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx) * (p.0 - mx)));
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Classifies the tail of `r -> sigma(B(0, r))` against `n - alpha p`.
pub fn tail_classify(params: &Params, measure: &Measure, mode: TailMode) -> TailVerdict {
    let origin = Point::origin(params.n());
    let crit = params.critical();
    let theta = params.inv_p1();
    let r_last = measure.fine_breakpoints(&origin).last().copied().unwrap_or(1.0);
    let window = (2.0 * r_last, 1e4 * r_last);
    let beta = mass_growth_exponent(params, measure);
    let to_mode = |slope: f64| match mode {
        TailMode::MassGrowth => (slope, crit),
        TailMode::WolffTail => ((slope - crit) * theta, 0.0),
    };
    let (fitted, critical) = to_mode(beta);
    // finite mass and pure power tails are decided exactly
    let verdict = if beta < crit || (beta == 0.0 && crit > 0.0) { Verdict::Converges } else { Verdict::Diverges };
    TailVerdict { verdict, fitted_exponent: fitted, critical_exponent: critical, fit_window: window, margin: TAIL_MARGIN, analytic: true }
}

/// Fitted verdict from sampled ball masses on a window.
pub fn tail_classify_fit(params: &Params, measure: &Measure, mode: TailMode, window: (f64, f64), samples: usize) -> TailVerdict {
    let origin = Point::origin(params.n());
    let crit = params.critical();
    let theta = params.inv_p1();
    let samples = samples.max(2);
    let rs: Vec<f64> = (0..samples).map(|i| window.0 * (window.1 / window.0).powf(i as f64 / (samples - 1) as f64)).collect();
    let ms: Vec<f64> = rs.iter().map(|r| measure.ball_mass(&origin, *r)).collect();
    let slope = loglog_slope(&rs, &ms);
    let (fitted, critical) = match mode {
        TailMode::MassGrowth => (slope, crit),
        TailMode::WolffTail => ((slope - crit) * theta, 0.0),
    };
    let margin = TAIL_MARGIN;
    let verdict = if fitted < critical - margin {
        Verdict::Converges
    } else if fitted > critical + margin {
        Verdict::Diverges
    } else {
        Verdict::Inconclusive
    };
    TailVerdict { verdict, fitted_exponent: fitted, critical_exponent: critical, fit_window: window, margin, analytic: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Component;
    use crate::params::make_params;

    fn p3() -> Params {
        make_params(3, 2.0, 0.5, 1.0).unwrap()
    }

    fn unit_ball() -> Measure {
        Measure::new(3, vec![Component::RadialPowerBump { center: Point::origin(3), radius: 1.0, gamma: 0.0, amplitude: 1.0 }]).unwrap()
    }

    #[test]
    fn dirac_reference() {
        let m = Measure::new(3, vec![Component::Atom { location: Point::origin(3), mass: 1.0 }]).unwrap();
        let v = wolff(&p3(), &m, &Point::on_axis(3, 2.0), 0.0).finite().unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(wolff(&p3(), &m, &Point::origin(3), 0.0), ExtendedValue::Infinite(InfiniteReason::SingularCore));
        assert_eq!(riesz(&p3(), &m, &Point::origin(3)), ExtendedValue::Infinite(InfiniteReason::SingularCore));
        assert!((riesz(&p3(), &m, &Point::on_axis(3, 2.0)).finite().unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unit_ball_reference() {
        let v = wolff(&p3(), &unit_ball(), &Point::origin(3), 0.0).finite().unwrap();
        assert!((v - 2.0 * std::f64::consts::PI).abs() < 1e-9, "{v}");
        let r = riesz(&p3(), &unit_ball(), &Point::origin(3)).finite().unwrap();
        assert!((r - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn whole_space_diverges() {
        let m = Measure::new(
            3,
            vec![Component::RadialProfile { center: Point::origin(3), nodes: vec![1.0], densities: vec![1.0], tail_exponent: 0.0, head_exponent: None }],
        )
        .unwrap();
        assert_eq!(wolff(&p3(), &m, &Point::on_axis(3, 0.3), 0.0), ExtendedValue::Infinite(InfiniteReason::DivergentTail));
        assert_eq!(tail_classify(&p3(), &m, TailMode::WolffTail).verdict, Verdict::Diverges);
    }

    #[test]
    fn critical_profile_diverges() {
        let n = 3.0;
        let p = 2.0;
        let omega = sphere_area(3);
        let dens = (n - p) / omega;
        let m = Measure::new(
            3,
            vec![Component::RadialProfile { center: Point::origin(3), nodes: vec![1.0], densities: vec![dens], tail_exponent: -p, head_exponent: None }],
        )
        .unwrap();
        let o = Point::origin(3);
        assert!((m.ball_mass(&o, 5.0) - 5.0).abs() < 1e-12);
        assert_eq!(tail_classify(&p3(), &m, TailMode::MassGrowth).verdict, Verdict::Diverges);
        assert_eq!(tail_classify(&p3(), &unit_ball(), TailMode::MassGrowth).verdict, Verdict::Converges);
    }

    #[test]
    fn riesz_wolff_identity_on_bumps() {
        for (n, alpha) in [(3usize, 1.0), (3, 0.7), (4, 1.0), (5, 1.5)] {
            let params = make_params(n, 2.0, 0.5, alpha).unwrap();
            let m = Measure::new(
                n,
                vec![
                    Component::RadialPowerBump { center: Point::origin(n), radius: 1.0, gamma: 0.5, amplitude: 1.0 },
                    Component::RadialPowerBump { center: Point::on_axis(n, 1.5), radius: 0.7, gamma: 0.0, amplitude: 2.0 },
                ],
            )
            .unwrap();
            for x in [Point::on_axis(n, 0.4), Point::on_axis(n, 3.0), Point::on_axis(n, -0.9)] {
                let w = wolff(&params, &m, &x, 0.0).finite().unwrap();
                let r = riesz(&params, &m, &x).finite().unwrap();
                let lhs = (n as f64 - 2.0 * alpha) * w;
                assert!((lhs - r).abs() < 1e-6 * r, "n={n} alpha={alpha} x={x:?}: {lhs} vs {r}");
            }
        }
    }

    #[test]
    fn profile_tail_converges_numerically() {
        // density s^{-4} beyond 1: mass finite, W(0) closed form
        let m = Measure::new(
            3,
            vec![Component::RadialProfile { center: Point::origin(3), nodes: vec![1.0], densities: vec![1.0], tail_exponent: -4.0, head_exponent: Some(0.0) }],
        )
        .unwrap();
        let o = Point::origin(3);
        let w = wolff(&p3(), &m, &o, 0.0).finite().unwrap();
        // m(r) = 4pi r^3/3 for r<1, 4pi (4/3 - 1/r) for r>1
        let pi4 = 4.0 * std::f64::consts::PI;
        let exact = pi4 / 3.0 * 0.5 + pi4 * (4.0 / 3.0 - 0.5);
        assert!((w - exact).abs() < 1e-8 * exact, "{w} vs {exact}");
    }
}
