//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wolffkit::density::RadialDensity;
use wolffkit::embedding::{calk, Ball};
use wolffkit::error::Error;
use wolffkit::field::log_grid;
use wolffkit::geometry::{sphere_area, Point};
use wolffkit::intrinsic::{check_criteria, CriteriaOptions, Criterion};
use wolffkit::measure::{Component, Measure};
use wolffkit::params::{make_params, Params};
use wolffkit::potentials::{wolff, Verdict};
use wolffkit::solver::{solve_sublinear, Solution, SolveOptions};
use wolffkit::verify::{
    oracle_rescaling, pure_power_example, radial_pde_oracle, random_atomic, random_points_off_atoms, riccati_study, scenario_counterexample,
    two_sided_ratios, verify_identity_riesz_wolff, wolff_lower_ratio, CounterexampleSpec, Gaussian,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn bump(n: usize, radius: f64, gamma: f64, amplitude: f64) -> Measure {
    Measure::new(n, vec![Component::RadialPowerBump { center: Point::origin(n), radius, gamma, amplitude }]).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn sup_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| rel(*x, *y)).fold(0.0, f64::max)
}

fn c1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.gen_range(3..=5);
        let alpha = rng.gen_range(0.05..0.95) * n as f64 / 2.0;
        let params = make_params(n, 2.0, 0.5, alpha).unwrap();
        let m = random_atomic(n, 50, &mut rng).unwrap();
        let pts = random_points_off_atoms(&m, 100, 1e-3, &mut rng);
        let s = verify_identity_riesz_wolff(&params, &m, &pts, f64::INFINITY).unwrap();
        worst = worst.max((s.max_ratio - 1.0).abs()).max((1.0 - s.min_ratio).abs());
    }
    Outcome { pass: worst <= 1e-6, detail: format!("max relative gap {worst:.2e} (<= 1e-6)") }
}

fn c2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.gen_range(2..=6);
        let p = rng.gen_range(1.2..4.0);
        let alpha = rng.gen_range(0.05..0.95) * n as f64 / p;
        let params = make_params(n, p, 0.5 * (p - 1.0), alpha).unwrap();
        let x = rng.gen_range(0.01..100.0);
        let m = Measure::new(n, vec![Component::Atom { location: Point::origin(n), mass: 1.0 }]).unwrap();
        let got = wolff(&params, &m, &Point::on_axis(n, x), 0.0).to_f64();
        let k = n as f64 - alpha * p;
        let want = (p - 1.0) / k * x.powf(-k / (p - 1.0));
        worst = worst.max(rel(got, want));
    }
    let p3 = make_params(3, 2.0, 0.5, 1.0).unwrap();
    let ball = wolff(&p3, &bump(3, 1.0, 0.0, 1.0), &Point::origin(3), 0.0).to_f64();
    let gap = rel(ball, 2.0 * PI);
    Outcome { pass: worst <= 1e-8 && gap <= 1e-8, detail: format!("Dirac max rel {worst:.2e}, unit ball rel {gap:.2e} (<= 1e-8)") }
}

fn c3() -> Outcome {
    let mut worst: f64 = 0.0;
    for (n, alpha, q) in [(3usize, 1.0, 0.5), (4, 1.0, 1.0 / 3.0)] {
        let params = make_params(n, 2.0, q, alpha).unwrap();
        let nf = n as f64;
        let lam = q * (nf - 2.0 * alpha);
        for gamma in [0.0, 0.5 * (nf - lam)] {
            for r in [0.5, 1.0, 2.0, 4.0] {
                let m = bump(n, r, gamma, 1.0);
                let v = calk(&params, &m, Some(&Ball::new(Point::origin(n), 2.0 * r)), &[]).unwrap();
                let k = nf - gamma - lam;
                let want = sphere_area(n) * r.powf(k) / k;
                worst = worst.max(rel(v.value.to_f64(), want));
            }
        }
    }
    Outcome { pass: worst <= 1e-6, detail: format!("max relative error {worst:.2e} (<= 1e-6)") }
}

fn c4() -> Outcome {
    let params = make_params(3, 2.0, 0.5, 1.0).unwrap();
    let m = bump(3, 1.0, 0.0, 1.0);
    let a = solve_sublinear(&params, &m, &SolveOptions::default()).unwrap();
    let b = solve_sublinear(&params, &m, &SolveOptions { extra_halvings: 1, ..Default::default() }).unwrap();
    let d = &a.diagnostics;
    let shift = sup_rel(&b.u.values, &a.u.values);
    let pass = d.monotone && b.diagnostics.monotone && d.iterations <= 200 && d.residual <= 1e-5 && shift <= 1e-5;
    Outcome {
        pass,
        detail: format!(
            "monotone {}, {} iterations, residual {:.1e}, halved-c0 shift {:.1e} (c0 {} -> {})",
            d.monotone && b.diagnostics.monotone,
            d.iterations,
            d.residual,
            shift,
            d.c0_used,
            b.diagnostics.c0_used
        ),
    }
}

fn c5() -> Outcome {
    let params = make_params(3, 2.0, 0.5, 1.0).unwrap();
    let lam = oracle_rescaling(&params);
    let opts = SolveOptions::default();
    let mut worst: f64 = 0.0;
    let mut base: Option<(Measure, Solution)> = None;
    for gamma in [0.0, 0.5, 1.25] {
        let density = RadialDensity::bump(3, 1.0, gamma, 1.0).unwrap();
        let m = bump(3, 1.0, gamma, 1.0);
        let sol = solve_sublinear(&params, &m, &opts).unwrap();
        let oracle = radial_pde_oracle(&params, &density, &sol.u.nodes, 4).unwrap();
        let scaled: Vec<f64> = sol.u.values.iter().map(|v| v * lam).collect();
        worst = worst.max(sup_rel(&scaled, &oracle.values));
        if base.is_none() {
            base = Some((m, sol));
        }
    }
    let mut scale_gap: f64 = 0.0;
    let (m, sol) = base.unwrap();
    let p3 = make_params(5, 3.0, 1.0, 1.0).unwrap();
    let m5 = bump(5, 1.0, 0.0, 1.0);
    let sol5 = solve_sublinear(&p3, &m5, &opts).unwrap();
    for (params, m, sol) in [(params, &m, &sol), (p3, &m5, &sol5)] {
        for l in [0.1, 10.0] {
            let s = solve_sublinear(&params, &m.scaled(l), &opts).unwrap();
            let f = l.powf(1.0 / (params.p() - 1.0 - params.q()));
            let want: Vec<f64> = sol.u.values.iter().map(|v| v * f).collect();
            scale_gap = scale_gap.max(sup_rel(&s.u.values, &want));
        }
    }
    Outcome {
        pass: worst <= 1e-3 && scale_gap <= 1e-4,
        detail: format!("oracle sup-rel {worst:.2e} (<= 1e-3), scaling sup-rel {scale_gap:.2e} (<= 1e-4)"),
    }
}

fn family(n: usize) -> Vec<Measure> {
    vec![bump(n, 1.0, 0.0, 1.0), bump(n, 2.0, 0.0, 1.0), bump(n, 1.0, 0.5, 1.0), bump(n, 1.0, 1.0, 5.0), bump(n, 0.5, 0.0, 0.2)]
}

fn audit(params: &Params) -> (f64, f64) {
    let mut ratios = Vec::new();
    let mut lows = Vec::new();
    for m in family(params.n()) {
        let sol = solve_sublinear(params, &m, &SolveOptions::default()).unwrap();
        ratios.extend(two_sided_ratios(params, &m, &sol, 8).unwrap());
        lows.push(wolff_lower_ratio(params, &sol));
    }
    let spread = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let lmin = lows.iter().copied().fold(f64::INFINITY, f64::min);
    let lmax = lows.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (spread, if lmin > 0.0 { lmax / lmin } else { f64::INFINITY })
}

fn c6() -> Outcome {
    let rejected = matches!(make_params(3, 3.0, 1.0, 1.0), Err(Error::InvalidExponents(_)));
    let mut pass = rejected;
    let mut parts = vec![format!("(3,3,1,1) rejected: {rejected}")];
    for (n, p, q, a) in [(3usize, 2.0, 0.5, 1.0), (5, 3.0, 1.0, 1.0)] {
        let params = make_params(n, p, q, a).unwrap();
        let (spread, low) = audit(&params);
        pass &= spread <= 1e3 && low <= 4.0;
        parts.push(format!("({n},{p},{q},{a}): two-sided spread {spread:.1} (<= 1e3), lower-ratio spread {low:.2} (<= 4)"));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn c7() -> Outcome {
    let spec = CounterexampleSpec { n: 3, alpha: 1.0, q: 0.5, terms: 64 };
    let rep = scenario_counterexample(&spec, &[4.0, 8.0, 16.0, 32.0], true).unwrap();
    let lower_ok = rep.kappa_rows.iter().all(|r| r.pass);
    let pass = rep.wolff_tail.verdict == Verdict::Converges && lower_ok && rep.intrinsic_tail == Verdict::Diverges && rep.kappa_finite && rep.stable_under_doubling;
    let ratios: Vec<String> = rep.kappa_rows.iter().map(|r| format!("{:.2}", r.kappa_q_lower / r.threshold)).collect();
    Outcome {
        pass,
        detail: format!(
            "mass tail {:?}, lower/threshold [{}], intrinsic tail {:?} (exponent {:.2}), finite {}, stable at N=128 {}",
            rep.wolff_tail.verdict,
            ratios.join(", "),
            rep.intrinsic_tail,
            rep.intrinsic_exponent,
            rep.kappa_finite,
            rep.stable_under_doubling
        ),
    }
}

fn c8() -> Outcome {
    let params = make_params(3, 2.0, 0.5, 1.0).unwrap();
    let g = Gaussian { amplitude: 1.0, width: 1.0 };
    let study = riccati_study(&params, &g, (1e-2, 1e2), 201, 2, (0.1, 5.0)).unwrap();
    let orders: Vec<f64> = study.windows(2).map(|w| (w[0].max_residual / w[1].max_residual).log2()).collect();
    let pp = pure_power_example(&params, 1.0, &log_grid(0.1, 10.0, 801)).unwrap();
    let pp_ok = pp.v_relative_residual < 1e-3 && pp.u_relative_laplacian < 1e-3 && pp.flux_inner > 0.0 && rel(pp.flux_inner, pp.flux_outer) < 1e-3;
    let pass = orders.iter().all(|o| *o >= 1.0) && pp_ok;
    let res: Vec<String> = study.iter().map(|r| format!("{:.2e}", r.max_residual)).collect();
    Outcome {
        pass,
        detail: format!(
            "residuals [{}], observed orders {:?}; pure power: v residual {:.1e}, u flux {:.4} at both ends",
            res.join(", "),
            orders.iter().map(|o| (o * 100.0).round() / 100.0).collect::<Vec<_>>(),
            pp.v_relative_residual,
            pp.flux_inner
        ),
    }
}

fn c9() -> Outcome {
    let params = make_params(3, 2.0, 0.5, 1.0).unwrap();
    let compact = check_criteria(&params, &bump(3, 1.0, 0.0, 1.0), &CriteriaOptions::default()).unwrap();
    let dens = (3.0 - 2.0) / sphere_area(3);
    let critical = Measure::new(
        3,
        vec![Component::RadialProfile { center: Point::origin(3), nodes: vec![1.0], densities: vec![dens], tail_exponent: -2.0, head_exponent: Some(0.0) }],
    )
    .unwrap();
    let crit = check_criteria(&params, &critical, &CriteriaOptions { evaluate: false, ..Default::default() }).unwrap();
    let spec = CounterexampleSpec { n: 3, alpha: 1.0, q: 0.5, terms: 64 };
    let cx = check_criteria(&params, &spec.measure().unwrap(), &CriteriaOptions { fit_window: Some((4.0, 32.0)), ladder: 6, evaluate: false }).unwrap();
    let get = |r: &[wolffkit::intrinsic::CriterionReport], c: Criterion| r.iter().find(|x| x.criterion == c).unwrap().verdict;
    let inconclusive = compact.iter().chain(&crit).chain(&cx).filter(|r| r.verdict == Verdict::Inconclusive).count();
    let pass = compact.iter().all(|r| r.verdict == Verdict::Converges && r.numeric_value.is_some_and(|v| v.is_finite()))
        && get(&crit, Criterion::WolffTail) == Verdict::Diverges
        && get(&cx, Criterion::IntrinsicTail) == Verdict::Diverges
        && inconclusive == 0;
    let fmt = |r: &[wolffkit::intrinsic::CriterionReport]| r.iter().map(|x| format!("{:?}", x.verdict)).collect::<Vec<_>>().join("/");
    Outcome { pass, detail: format!("compact {}, critical {}, counterexample {}, inconclusive {inconclusive}", fmt(&compact), fmt(&crit), fmt(&cx)) }
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    type Check = fn() -> Outcome;
    let criteria: [(u32, Check, Option<u64>); 9] = [
        (1, c1, Some(10)),
        (2, c2, None),
        (3, c3, Some(5)),
        (4, c4, None),
        (5, c5, Some(60)),
        (6, c6, None),
        (7, c7, Some(120)),
        (8, c8, None),
        (9, c9, None),
    ];
    let mut failed = 0;
    for (k, f, limit) in criteria {
        if !filter.is_empty() && !filter.iter().any(|s| s == &k.to_string()) {
            continue;
        }
        let t = Instant::now();
        let out = f();
        let el = t.elapsed();
        let in_time = limit.is_none_or(|s| el <= Duration::from_secs(s));
        let ok = out.pass && in_time;
        if !ok {
            failed += 1;
        }
        let budget = limit.map(|s| format!(" (limit {s} s)")).unwrap_or_default();
        println!("criterion {k}: {} {} [{:.1} s{budget}]", if ok { "PASS" } else { "FAIL" }, out.detail, el.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
