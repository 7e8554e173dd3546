use criterion::{black_box, criterion_group, criterion_main, Criterion};
use doseopt_bench::{null_study, sizing_scenario, two_groups};
use doseopt_core::lattice::utility_sum_pmf;
use doseopt_core::sim::survival::two_sample_scores;
use doseopt_core::sim::RunOptions;
use doseopt_core::{joint_probs, optimal_design_approx, optimal_design_exact, run_study_with, ExactOptions};

fn sizing(c: &mut Criterion) {
    let s = sizing_scenario();
    c.bench_function("design/approx", |b| b.iter(|| optimal_design_approx(black_box(&s)).unwrap()));
    let mut g = c.benchmark_group("design");
    g.sample_size(10);
    g.bench_function("exact", |b| b.iter(|| optimal_design_exact(black_box(&s), &ExactOptions::default()).unwrap()));
    g.finish();
}

fn convolution(c: &mut Criterion) {
    let s = sizing_scenario();
    let m = joint_probs(0.3, 0.5, 0.0).unwrap();
    for n in [50u64, 200] {
        c.bench_function(&format!("utility_sum_pmf/n={n}"), |b| {
            b.iter(|| utility_sum_pmf(black_box(n), &m, &s.utilities).unwrap())
        });
    }
}

fn simulation(c: &mut Criterion) {
    let opts = RunOptions::default();
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    let binary = null_study(10_000, false);
    g.bench_function("binary/10k", |b| b.iter(|| run_study_with(black_box(&binary), &opts).unwrap()));
    let tte = null_study(1_000, true);
    g.bench_function("survival/1k", |b| b.iter(|| run_study_with(black_box(&tte), &opts).unwrap()));
    g.finish();

    let obs = two_groups(200);
    c.bench_function("logrank/400", |b| {
        b.iter(|| {
            let mut o = obs.clone();
            two_sample_scores(black_box(&mut o))
        })
    });
}

criterion_group!(benches, sizing, convolution, simulation);
criterion_main!(benches);
