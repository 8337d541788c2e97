use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nsasym_core::kernel::{sample_nonlocal_kernel, KernelSpec};
use nsasym_core::solver::{make_initial_vorticity, InitialDataSpec, SolverConfig, SolverState};
use nsasym_core::{Grid, MultiIndex};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    vec![("parallel", all), ("sequential", one)]
}

fn bench(c: &mut Criterion) {
    let grid = Grid::make(2, 16.0, 256).unwrap();
    let spec = InitialDataSpec { amplitude: 1.0, width: 1.0, center: [0.5, 0.25] };
    let omega = make_initial_vorticity(&spec, &grid).unwrap();
    let state = SolverState::new(&omega).unwrap();
    let cfg = SolverConfig::default();
    let riesz = KernelSpec::riesz_pair(1, 0, 1, MultiIndex::new(vec![1, 0]));

    let mut group = c.benchmark_group("kernels");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_with_input(BenchmarkId::new("rk4_step_256", name), &pool, |b, pool| {
            b.iter(|| pool.install(|| state.step(0.01, &cfg).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("riesz_pair_256", name), &pool, |b, pool| {
            b.iter(|| pool.install(|| sample_nonlocal_kernel(&riesz, 1.0, &grid).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("l2_norm_256", name), &pool, |b, pool| {
            b.iter(|| pool.install(|| omega.lq_norm(2.0).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
