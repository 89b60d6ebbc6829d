use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tipflow::barriers::{build_barriers, certify_barriers, BarrierOptions};
use tipflow::exec::ExecPolicy;
use tipflow::params::FlowParams;
use tipflow::solver::{build_initial_data, diagnose, run_grid, SolverOptions};

const POLICIES: [(&str, ExecPolicy); 2] = [("sequential", ExecPolicy::Sequential), ("parallel", ExecPolicy::Parallel)];

fn bench(c: &mut Criterion) {
    let p = FlowParams::baseline();
    let set = build_barriers(&p, &BarrierOptions::default(), ExecPolicy::Parallel).unwrap();

    let mut g = c.benchmark_group("certify");
    g.sample_size(10);
    for (name, policy) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| certify_barriers(black_box(&set), 1000, 2.0, policy))
        });
    }
    g.finish();

    let opts = SolverOptions::default();
    let tau0 = set.tau0();
    let grid = run_grid(&set.params, &opts, tau0 + 10.0).unwrap();
    let state = build_initial_data(&set, grid, tau0).unwrap();
    let mut g = c.benchmark_group("diagnose");
    for (name, policy) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| diagnose(black_box(&state), p.gamma, p.n, Some(&set), policy))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("build_barriers");
    g.sample_size(10);
    for (name, policy) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_barriers(black_box(&p), &BarrierOptions::default(), policy).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
