use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use twotemp::chapman_enskog::{exact_gram, solve_abc, Sector, SpectralBasis};
use twotemp::collision::{weak_q_mc, TestFunction};
use twotemp::dsmc::{dsmc_step, ParticleEnsemble};
use twotemp::fluid::FluidState1D;
use twotemp::rng::stream;
use twotemp::{Boundary, CeOptions, CoefficientProvider, FluidParams, GasModel, MacroState, Primitive, ScalingMode};

fn gas() -> GasModel {
    GasModel::new(3.0, 0.5, 0.5, 1.0, 0.1).unwrap()
}

fn state() -> MacroState {
    MacroState::at_rest(1.0, 2.0, 1.0).unwrap()
}

fn spectral(c: &mut Criterion) {
    let (g, st) = (gas(), state());
    let basis = SpectralBasis::new(Sector::Vector, 8, 4, &st, g.delta).unwrap();
    c.bench_function("exact_gram vector 8x4", |b| b.iter(|| exact_gram(black_box(&basis), &g)));
    let opts = CeOptions::default();
    c.bench_function("solve_abc 8x4", |b| b.iter(|| solve_abc(black_box(&st), &g, &opts).unwrap()));
}

fn monte_carlo(c: &mut Criterion) {
    let (g, st) = (gas(), state());
    let f = TestFunction::internal_energy();
    c.bench_function("weak_q_mc 1e4", |b| b.iter(|| weak_q_mc(black_box(&st), &f, &g, 1.0, 10_000, 7).unwrap()));
    let mut rng = stream(3, 0);
    let base = ParticleEnsemble::from_maxwellian(&st, g.delta, 10_000, &mut rng).unwrap();
    c.bench_function("dsmc_step 1e4 particles", |b| {
        b.iter_batched(
            || base.clone(),
            |mut ens| dsmc_step(&mut ens, &g, 0.001, &mut rng).unwrap(),
            criterion::BatchSize::LargeInput,
        )
    });
}

fn fluid(c: &mut Criterion) {
    let g = GasModel::new(2.0, 0.0, 0.0, 1.0, 0.1).unwrap();
    let provider = CoefficientProvider::analytic(&g).unwrap();
    let params = FluidParams {
        eps: 0.1,
        kappa: 1.0,
        mode: ScalingMode::Eps1,
        k_correction: true,
        viscous: true,
        cfl: 0.5,
        boundary: Boundary::Periodic,
    };
    let solver = twotemp::fluid::FluidSolver::new(params, &provider).unwrap();
    let base = FluidState1D::new(0.0, 1.0, 400, g.delta, |x| {
        Primitive::new(1.0 + 0.1 * (6.283 * x).sin(), 0.0, 1.5, 1.0)
    })
    .unwrap();
    let dt = solver.stable_dt(&base).unwrap();
    c.bench_function("fluid step 400 cells", |b| {
        b.iter_batched(|| base.clone(), |mut st| solver.step(&mut st, dt).unwrap(), criterion::BatchSize::SmallInput)
    });
}

criterion_group!(benches, spectral, monte_carlo, fluid);
criterion_main!(benches);
