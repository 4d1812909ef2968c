use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hardsphere::ensemble::{default_bandwidth, epsilon_for, estimate_marginal, sample_initial};
use hardsphere::hierarchy::eval_series;
use hardsphere::{flow, jset, DensitySpec, Direction, HierarchyKind, Particle, PhaseState, SeriesQuery, Vector};

fn gas(n: usize, seed: u64) -> PhaseState {
    let data = DensitySpec::maxwellian(2, 2.0, 1.0);
    sample_initial(n, epsilon_for(n, 2, 1.0).unwrap(), &data, seed).expect("dilute gas").state
}

fn bench_flow(c: &mut Criterion) {
    let mut g = c.benchmark_group("flow");
    for n in [64, 256, 1024] {
        let z = gas(n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &z, |b, z| {
            b.iter(|| flow(black_box(z), 1.0, Direction::Forward).unwrap())
        });
    }
    g.finish();
}

fn bench_jset(c: &mut Criterion) {
    let mut g = c.benchmark_group("jset");
    for n in [3, 4, 5] {
        let z = gas(n, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &z, |b, z| b.iter(|| jset(black_box(z)).unwrap()));
    }
    g.finish();
}

fn bench_series(c: &mut Criterion) {
    let data = DensitySpec::maxwellian(2, 2.0, 1.0);
    let z_s = PhaseState::new(2, 0.0, vec![Particle::new(Vector::new2(0.0, 0.0), Vector::new2(0.5, 0.0))]).unwrap();
    let mut g = c.benchmark_group("boltzmann_series");
    g.sample_size(10);
    for k_max in [1, 2] {
        let q = SeriesQuery {
            kind: HierarchyKind::boltzmann(1.0).unwrap(),
            z_s: z_s.clone(),
            t: 0.2,
            k_max,
            n_mc: 20_000,
            seed: 3,
            proposal_beta: None,
        };
        g.bench_with_input(BenchmarkId::from_parameter(k_max), &q, |b, q| {
            b.iter(|| eval_series(black_box(q), &data).unwrap())
        });
    }
    g.finish();
}

fn bench_kde(c: &mut Criterion) {
    let n = 256;
    let states: Vec<PhaseState> = (0..8).map(|r| gas(n, 10 + r)).collect();
    let h = default_bandwidth(n, 2, 1.0);
    let mut g = c.benchmark_group("marginal_kde");
    for s in [1, 2, 3] {
        let probe = PhaseState::new(
            2,
            0.0,
            (0..s).map(|i| Particle::new(Vector::new2(i as f64, 0.0), Vector::new2(0.0, 0.3))).collect(),
        )
        .unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(s), &probe, |b, p| {
            b.iter(|| estimate_marginal(black_box(&states), p, h).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_flow, bench_jset, bench_series, bench_kde);
criterion_main!(benches);
