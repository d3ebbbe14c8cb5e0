use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use bitesim::bite::BiteTransferParams;
use bitesim::fem::{elastic_forces, ExternalLoad, SoftBodyState};
use bitesim::geometry::Vec3;
use bitesim::harness::{run_sweep, GridRange, Scene, SceneConfig, SweepSpec};
use bitesim::par::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn deformed(scene: &Scene) -> SoftBodyState {
    let mut state = SoftBodyState::new(&scene.mesh);
    for (i, p) in state.positions.iter_mut().enumerate() {
        let s = i as f64;
        *p += Vec3::new((s * 1.3).sin(), (s * 0.7).cos(), (s * 2.1).sin()) * 1e-3;
    }
    state
}

fn forces(c: &mut Criterion) {
    let scene = Scene::build(SceneConfig::default()).unwrap();
    let state = deformed(&scene);
    let mut g = c.benchmark_group("elastic_forces");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| elastic_forces(black_box(&state), &scene.config.material, exec).unwrap())
        });
    }
    g.finish();
}

fn implicit_step(c: &mut Criterion) {
    let scene = Scene::build(SceneConfig::default()).unwrap();
    let start = deformed(&scene);
    let n = scene.mesh.vertex_count();
    let load = ExternalLoad::zeros(n);
    let pinned = vec![false; n];
    let mut g = c.benchmark_group("implicit_step");
    for (name, exec) in MODES {
        let mut settings = scene.config.solver.settings();
        settings.exec = exec;
        g.bench_function(name, |b| {
            b.iter_batched(
                || (start.clone(), scene.integrator.clone()),
                |(mut state, mut integrator)| {
                    integrator
                        .step(&mut state, &scene.config.material, scene.config.solver.dt, &load, &pinned, &settings)
                        .unwrap();
                    state
                },
                criterion::BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let scene = Scene::build(SceneConfig::default()).unwrap();
    // A short, fast trajectory keeps each run well under a second.
    let base = BiteTransferParams {
        insertion_depth_m: 0.03,
        exit_depth_m: 0.0,
        approach_distance_m: 0.01,
        entry_speed: 0.2,
        exit_speed: 0.2,
        rotation_speed: 200.0,
        jaw_close_duration: 0.05,
        hold_duration: 0.02,
        ..BiteTransferParams::default()
    };
    let mut spec = SweepSpec::entry(&base);
    spec.alpha = GridRange::new(80.0, 100.0, 10.0);
    spec.depth = GridRange::single(0.03);
    let mut g = c.benchmark_group("sweep_3_runs");
    g.sample_size(10);
    g.bench_function("one_thread", |b| b.iter(|| run_sweep(&scene, &spec, Some(1)).unwrap()));
    g.bench_function("all_threads", |b| b.iter(|| run_sweep(&scene, &spec, None).unwrap()));
    g.finish();
}

criterion_group!(benches, forces, implicit_step, sweep);
criterion_main!(benches);
