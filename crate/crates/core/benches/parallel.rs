use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use crakit::acc;
use crakit::certify::{minimize, CertifyConfig, VertexObjective};
use crakit::design::design_parameters;
use crakit::hybrid::Architecture;
use crakit::sim::{simulate_all, Scenario};
use crakit::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn branch_and_bound(c: &mut Criterion) {
    let sys = acc::system();
    let obj = VertexObjective::new(sys.lie_top(), sys.gain(), sys.input_box());
    let region = sys.state_region();
    let mut group = c.benchmark_group("adversarial_rate");
    for (name, exec) in MODES {
        let cfg = CertifyConfig { exec, ..CertifyConfig::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| minimize(black_box(&obj), &region, &cfg).unwrap().lower_bound)
        });
    }
    group.finish();
}

fn design_sweep(c: &mut Criterion) {
    let arch = Architecture::ProactiveRestart;
    let sys = acc::case_study_system(arch);
    let profile = acc::case_study_profile(arch);
    let base = acc::case_study_sweep(&sys, &CertifyConfig::default()).unwrap();
    let mut group = c.benchmark_group("design_sweep");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = base.clone().with_exec(exec);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| design_parameters(&sys, &profile, &cfg).unwrap().grid_points)
        });
    }
    group.finish();
}

fn scenario_suite(c: &mut Criterion) {
    let sys = acc::system();
    let arch = Architecture::Bftpp;
    let cfg = acc::case_study_sweep(&sys, &CertifyConfig::default()).unwrap();
    let design = design_parameters(&sys, &acc::case_study_profile(arch), &cfg).unwrap();
    // Starts along the D axis inside the designed level set.
    let scenarios: Vec<Scenario> = (0..32)
        .map(|i| Scenario::from_design(&design, vec![0.0, 0.0, 3.0 + 0.1 * f64::from(i)], 4))
        .collect();
    let mut group = c.benchmark_group("simulate_all");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_all(&sys, black_box(&scenarios), exec).len())
        });
    }
    group.finish();
}

criterion_group!(benches, branch_and_bound, design_sweep, scenario_suite);
criterion_main!(benches);
