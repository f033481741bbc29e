//! Benchmarks for the hot paths of the pipeline: hybrid mesh construction,
//! the leapfrog forward solver, the truncated Laplace transform, the
//! per-interval quadrature coefficients, and the explicit coefficient
//! recovery on the circle submesh.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use waverec_core::forward::{laplace_of_traces, run_forward, NodalField, SimConfig};
use waverec_core::laplace::PseudoFreqGrid;
use waverec_core::mesh::{build_hybrid, reference_geometry, HybridDomain};
use waverec_core::recovery::recover_a_raw;
use waverec_core::stripping::carleman_coeffs;

fn reference_domain() -> HybridDomain {
    let (g, omega, circle, h) = reference_geometry();
    build_hybrid(&g, &omega, &circle, h).unwrap()
}

fn bench_mesh(c: &mut Criterion) {
    c.bench_function("build_hybrid reference geometry", |b| {
        b.iter(|| black_box(reference_domain()))
    });
}

fn bench_forward(c: &mut Criterion) {
    let domain = reference_domain();
    let a = NodalField::coefficient(vec![1.0; domain.fem.n_nodes()], 10.0).unwrap();
    let mut cfg = SimConfig::reference();
    cfg.sigma = 0.0;
    cfg.t_final = 0.5; // 500 leapfrog steps; must cover the drive pulse
    let record: Vec<usize> = domain.fem.circle_submesh().unwrap().to_global;
    c.bench_function("forward solver, 500 steps", |b| {
        b.iter(|| black_box(run_forward(&domain, &a, &cfg, &record).unwrap()))
    });
}

fn bench_laplace(c: &mut Criterion) {
    let domain = reference_domain();
    let a = NodalField::coefficient(vec![1.0; domain.fem.n_nodes()], 10.0).unwrap();
    let mut cfg = SimConfig::reference();
    cfg.sigma = 0.0;
    let record: Vec<usize> = domain.fem.circle_submesh().unwrap().to_global;
    let traces = run_forward(&domain, &a, &cfg, &record).unwrap();
    c.bench_function("Laplace transform of all traces at s = 19", |b| {
        b.iter(|| black_box(laplace_of_traces(&traces, 19.0)))
    });
}

fn bench_carleman(c: &mut Criterion) {
    let grid = PseudoFreqGrid::new(1.0, 19.0, 1.0, 20.0, 0.01).unwrap();
    c.bench_function("Carleman coefficients, one interval", |b| {
        b.iter(|| black_box(carleman_coeffs(1, &grid)))
    });
}

fn bench_recovery(c: &mut Criterion) {
    let domain = reference_domain();
    let sub = domain.fem.circle_submesh().unwrap();
    let v: Vec<f64> = sub
        .mesh
        .nodes
        .iter()
        .map(|p| 0.25 * (p.x * p.x + p.y * p.y))
        .collect();
    c.bench_function("coefficient recovery on circle submesh", |b| {
        b.iter(|| black_box(recover_a_raw(&sub.mesh, &v, 8.0).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_mesh,
    bench_forward,
    bench_laplace,
    bench_carleman,
    bench_recovery
);
criterion_main!(benches);
