use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wolffkit::density::RadialDensity;
use wolffkit::field::{log_grid, RadialField};
use wolffkit::geometry::Point;
use wolffkit::measure::Measure;
use wolffkit::parallel::Exec;
use wolffkit::params::make_params;
use wolffkit::solver::TOperator;
use wolffkit::verify::{random_atomic, random_points_off_atoms};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn picard_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("picard_step");
    for (n, p, q) in [(3usize, 2.0, 0.5), (5, 3.0, 1.0)] {
        let params = make_params(n, p, q, 1.0).unwrap();
        let sigma = RadialDensity::bump(n, 1.0, 0.0, 1.0).unwrap();
        let nodes = log_grid(1e-3, 1e3, 256);
        let ones = RadialField::new(Point::origin(n), nodes.clone(), vec![1.0; nodes.len()]).unwrap();
        for (label, exec) in [("parallel", Exec::Auto), ("sequential", Exec::Sequential)] {
            let op = TOperator::new(&params, Point::origin(n), sigma.clone(), nodes.clone(), &ones, 1e-8, exec).unwrap();
            group.bench_with_input(BenchmarkId::new(label, format!("n{n}_p{p}")), &op, |b, op| b.iter(|| black_box(op.apply(&ones))));
        }
    }
    group.finish();
}

fn rule_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("rule_build");
    let params = make_params(3, 2.0, 0.5, 1.0).unwrap();
    let sigma = RadialDensity::bump(3, 1.0, 1.25, 1.0).unwrap();
    let nodes = log_grid(1e-3, 1e3, 128);
    let ones = RadialField::new(Point::origin(3), nodes.clone(), vec![1.0; nodes.len()]).unwrap();
    for (label, exec) in [("parallel", Exec::Auto), ("sequential", Exec::Sequential)] {
        group.bench_function(label, |b| {
            b.iter(|| black_box(TOperator::new(&params, Point::origin(3), sigma.clone(), nodes.clone(), &ones, 1e-8, exec).unwrap()))
        });
    }
    group.finish();
}

fn atomic_wolff(c: &mut Criterion) {
    let mut group = c.benchmark_group("atomic_wolff");
    let params = make_params(3, 2.0, 0.5, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m: Measure = random_atomic(3, 50, &mut rng).unwrap();
    let pts = random_points_off_atoms(&m, 200, 1e-3, &mut rng);
    for (label, exec) in [("parallel", Exec::Auto), ("sequential", Exec::Sequential)] {
        group.bench_function(label, |b| {
            b.iter(|| black_box(wolffkit::parallel::map(exec, &pts, |x| wolffkit::potentials::wolff(&params, &m, x, 0.0).to_f64())))
        });
    }
    group.finish();
}

criterion_group!(
    name = benches;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(5));
    targets = picard_step, rule_build, atomic_wolff
);
criterion_main!(benches);
