use proptest::prelude::*;
use wolffkit::density::RadialDensity;
use wolffkit::embedding::kappa_table;
use wolffkit::field::{log_grid, RadialField};
use wolffkit::geometry::Point;
use wolffkit::intrinsic::m_function;
use wolffkit::measure::{Component, Measure};
use wolffkit::parallel::Exec;
use wolffkit::params::{make_params, Params};
use wolffkit::potentials::wolff;
use wolffkit::solver::TOperator;

fn point3() -> impl Strategy<Value = Point> {
    prop::array::uniform3(-2.0f64..2.0).prop_map(|a| Point(a.to_vec()))
}

fn bump3() -> impl Strategy<Value = Component> {
    (point3(), 0.2f64..2.0, 0.0f64..2.0, 0.1f64..5.0).prop_map(|(center, radius, gamma, amplitude)| Component::RadialPowerBump { center, radius, gamma, amplitude })
}

fn atom3() -> impl Strategy<Value = Component> {
    (point3(), 0.01f64..3.0).prop_map(|(location, mass)| Component::Atom { location, mass })
}

fn mixture3() -> impl Strategy<Value = Vec<Component>> {
    prop::collection::vec(prop_oneof![bump3(), atom3()], 1..5)
}

fn params() -> impl Strategy<Value = Params> {
    (prop_oneof![Just(3usize), Just(4), Just(5)], 1.2f64..4.0, 0.05f64..0.95, 0.1f64..0.95).prop_filter_map("admissible", |(n, p, qf, af)| {
        let q = qf * (p - 1.0);
        let alpha = af * n as f64 / p;
        make_params(n, p, q, alpha).ok()
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ball_mass_is_monotone_in_radius(comps in mixture3(), x in point3(), r in 0.01f64..5.0, dr in 0.0f64..2.0) {
        let m = Measure::new(3, comps).unwrap();
        prop_assert!(m.ball_mass(&x, r) <= m.ball_mass(&x, r + dr) * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn ball_mass_is_additive_over_components(a in mixture3(), b in mixture3(), x in point3(), r in 0.01f64..5.0) {
        let ma = Measure::new(3, a.clone()).unwrap();
        let mb = Measure::new(3, b.clone()).unwrap();
        let both = Measure::new(3, a.into_iter().chain(b).collect()).unwrap();
        let sum = ma.ball_mass(&x, r) + mb.ball_mass(&x, r);
        prop_assert!(rel(both.ball_mass(&x, r), sum) < 1e-10);
    }

    #[test]
    fn ball_mass_is_translation_invariant(comps in mixture3(), x in point3(), v in point3(), r in 0.01f64..5.0) {
        let m = Measure::new(3, comps).unwrap();
        let moved = m.translated(&v);
        prop_assert!(rel(m.ball_mass(&x, r), moved.ball_mass(&x.add(&v), r)) < 1e-9);
    }

    #[test]
    fn bump_ball_mass_matches_closed_form(radius in 0.2f64..3.0, gamma in 0.0f64..2.5, amplitude in 0.1f64..5.0, s in 0.01f64..4.0) {
        let d = RadialDensity::bump(3, radius, gamma, amplitude).unwrap();
        let rho = s.min(radius);
        let want = amplitude * 4.0 * std::f64::consts::PI * rho.powf(3.0 - gamma) / (3.0 - gamma);
        prop_assert!(rel(d.mass_within(s), want) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn wolff_scales_with_mass(p in params(), lambda in 0.01f64..100.0, r in 0.1f64..3.0) {
        let n = p.n();
        let m = Measure::new(n, vec![Component::RadialPowerBump { center: Point::origin(n), radius: 1.0, gamma: 0.0, amplitude: 1.0 }]).unwrap();
        let x = Point::on_axis(n, r);
        let a = wolff(&p, &m, &x, 0.0).to_f64();
        let b = wolff(&p, &m.scaled(lambda), &x, 0.0).to_f64();
        prop_assert!(rel(b, lambda.powf(1.0 / (p.p() - 1.0)) * a) < 1e-9);
    }

    #[test]
    fn truncated_wolff_is_nonincreasing(comps in mixture3(), x in point3(), t in 0.0f64..2.0, dt in 0.0f64..2.0) {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let m = Measure::new(3, comps).unwrap();
        prop_assume!(!m.has_atom_at(&x) && m.atoms().iter().all(|a| a.location.dist(&x) > 1e-3));
        let a = wolff(&p, &m, &x, t);
        let b = wolff(&p, &m, &x, t + dt);
        prop_assert!(b.to_f64() <= a.to_f64() * (1.0 + 1e-9));
    }

    #[test]
    fn wolff_is_monotone_in_the_measure(a in mixture3(), b in mixture3(), x in point3()) {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let ma = Measure::new(3, a.clone()).unwrap();
        let both = Measure::new(3, a.into_iter().chain(b).collect()).unwrap();
        prop_assume!(both.atoms().iter().all(|at| at.location.dist(&x) > 1e-3));
        prop_assert!(wolff(&p, &ma, &x, 0.0).to_f64() <= wolff(&p, &both, &x, 0.0).to_f64() * (1.0 + 1e-9));
    }
}

fn shaped(nodes: &[f64], base: f64, wiggle: f64, phase: f64) -> Vec<f64> {
    nodes.iter().map(|r| base * (1.0 + r).powf(-0.5) * (1.0 + wiggle * (phase + r.ln()).sin())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn picard_step_preserves_order(base in 0.5f64..5.0, wiggle in 0.0f64..0.5, phase in 0.0f64..6.0, gap in 0.0f64..1.0) {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let sigma = RadialDensity::bump(3, 1.0, 0.5, 1.0).unwrap();
        let nodes = log_grid(1e-2, 1e2, 40);
        let lo = shaped(&nodes, base, wiggle, phase);
        let hi: Vec<f64> = lo.iter().zip(shaped(&nodes, gap, wiggle, phase + 1.0)).map(|(a, b)| a + b.abs()).collect();
        let u = RadialField::new(Point::origin(3), nodes.clone(), lo).unwrap();
        let v = RadialField::new(Point::origin(3), nodes.clone(), hi).unwrap();
        let op = TOperator::new(&p, Point::origin(3), sigma, nodes, &u, 1e-8, Exec::Sequential).unwrap();
        let (tu, tv) = (op.apply(&u), op.apply(&v));
        for (a, b) in tu.values.iter().zip(&tv.values) {
            prop_assert!(*a <= *b * (1.0 + 1e-10), "{a} > {b}");
        }
    }

    #[test]
    fn picard_step_scales(c in 0.1f64..10.0) {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let sigma = RadialDensity::bump(3, 1.0, 0.0, 1.0).unwrap();
        let nodes = log_grid(1e-2, 1e2, 32);
        let u = RadialField::new(Point::origin(3), nodes.clone(), shaped(&nodes, 1.0, 0.2, 0.0)).unwrap();
        let op = TOperator::new(&p, Point::origin(3), sigma, nodes, &u, 1e-8, Exec::Sequential).unwrap();
        let (a, b) = (op.apply(&u), op.apply(&u.scaled(c)));
        // T(c u) = c^{q/(p-1)} T(u)
        let f = c.powf(p.q() / (p.p() - 1.0));
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!(rel(*y, f * x) < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn kappa_table_is_ordered(gamma in 0.0f64..2.0, amplitude in 0.2f64..5.0, radius in 0.5f64..2.0) {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let m = Measure::new(3, vec![Component::RadialPowerBump { center: Point::origin(3), radius, gamma, amplitude }]).unwrap();
        let t = kappa_table(&p, &m, &Point::origin(3), &log_grid(0.05, 4.0, 8)).unwrap();
        for i in 0..t.radii.len() {
            prop_assert!(t.lower[i] <= t.upper[i] * (1.0 + 1e-12));
            prop_assert!(t.lower[i] <= t.kappa[i] * (1.0 + 1e-12));
            if i > 0 {
                prop_assert!(t.kappa[i] >= t.kappa[i - 1]);
                prop_assert!(t.lower[i] >= t.lower[i - 1] * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn m_function_is_nonincreasing_in_t(r in 0.0f64..2.0, t in 0.01f64..1.0, dt in 0.01f64..2.0) {
        let p = make_params(3, 2.0, 0.5, 1.0).unwrap();
        let m = Measure::new(3, vec![Component::RadialPowerBump { center: Point::origin(3), radius: 1.0, gamma: 0.5, amplitude: 1.0 }]).unwrap();
        let x = Point::on_axis(3, r);
        let a = m_function(&p, &m, &x, t).unwrap().to_f64();
        let b = m_function(&p, &m, &x, t + dt).unwrap().to_f64();
        prop_assert!(b <= a * (1.0 + 1e-9));
    }
}
