use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use toda_ghd::dressing::{rho_on_grid, DosGrid, DressingOperator, DressingSolution};
use toda_ghd::dynamics::{evolve, flaschka_to_toda, IntegratorConfig};
use toda_ghd::ensemble::{sample_thermal, ThermalParams};
use toda_ghd::proxy::{build_s, solve_s};
use toda_ghd::scattering::{CutoffChi, SoftLog};
use toda_ghd::spectral::{build_lax, eig_tridiagonal, eigenvalues, localization_centers, quasiparticle_positions};

fn params() -> ThermalParams {
    ThermalParams::new(1.0, 1.0).unwrap()
}

fn spectral(c: &mut Criterion) {
    let mut g = c.benchmark_group("spectral");
    for n in [256i64, 1024, 4096] {
        let lax = build_lax(&sample_thermal(&params(), 0, n - 1, 1).unwrap());
        g.bench_with_input(BenchmarkId::new("eigenvalues", n), &lax, |b, l| b.iter(|| eigenvalues(black_box(l)).unwrap()));
        if n <= 1024 {
            g.bench_with_input(BenchmarkId::new("eig_tridiagonal", n), &lax, |b, l| b.iter(|| eig_tridiagonal(black_box(l)).unwrap()));
            let spec = eig_tridiagonal(&lax).unwrap();
            g.bench_with_input(BenchmarkId::new("localization_centers", n), &spec, |b, s| b.iter(|| localization_centers(black_box(s)).unwrap()));
        }
    }
    g.finish();
}

fn dynamics(c: &mut Criterion) {
    let mut g = c.benchmark_group("dynamics");
    g.sample_size(10);
    for n in [256i64, 1024] {
        let st = sample_thermal(&params(), 0, n - 1, 2).unwrap();
        g.bench_with_input(BenchmarkId::new("evolve_t10", n), &st, |b, s| b.iter(|| evolve(black_box(s), 10.0, &IntegratorConfig::default(), &[], |_| Ok(())).unwrap()));
    }
    g.finish();
}

fn dressing(c: &mut Criterion) {
    let mut g = c.benchmark_group("dressing");
    g.sample_size(10);
    let p = params();
    let grid = DosGrid::default_for(1.0).unwrap();
    let rho = rho_on_grid(&p, &grid).unwrap();
    let f: Vec<f64> = grid.nodes().to_vec();
    g.bench_function("t_apply", |b| b.iter(|| grid.t_apply(black_box(&rho))));
    g.bench_function("operator_factor", |b| b.iter(|| DressingOperator::new(1.0, black_box(&grid), &rho).unwrap()));
    let op = DressingOperator::new(1.0, &grid, &rho).unwrap();
    g.bench_function("operator_solve", |b| b.iter(|| op.solve(black_box(&f)).unwrap()));
    g.bench_function("full_solution", |b| b.iter(|| DressingSolution::solve(&p, grid.clone()).unwrap()));
    g.finish();
}

fn proxy(c: &mut Criterion) {
    let mut g = c.benchmark_group("proxy");
    let p = ThermalParams::new(1.0, 0.1).unwrap();
    let n = 512usize;
    let st = sample_thermal(&p, 0, n as i64 - 1, 3).unwrap();
    let spec = eig_tridiagonal(&build_lax(&st)).unwrap();
    let lambda = spec.eigenvalues.clone();
    let map = localization_centers(&spec).unwrap();
    let q = quasiparticle_positions(&spec, &map, &flaschka_to_toda(&st).unwrap()).unwrap();
    let chi = CutoffChi::new(10.0, p.alpha()).unwrap();
    let sl = SoftLog::for_size(n);
    g.bench_function("build_s", |b| b.iter(|| build_s(black_box(&lambda), &q, 20, n - 20, &chi, &sl, 25.0, 5).unwrap()));
    let s = build_s(&lambda, &q, 20, n - 20, &chi, &sl, 25.0, 5).unwrap();
    let v: Vec<f64> = lambda[20..20 + s.dim()].to_vec();
    g.bench_function("solve_s", |b| b.iter(|| solve_s(black_box(&s), &v, n).unwrap()));
    g.finish();
}

criterion_group!(benches, spectral, dynamics, dressing, proxy);
criterion_main!(benches);
