//! Rayon worker pool against a single worker on the two hot loops: split
//! scoring during selection and the per-replicate Monte Carlo map.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use loccov::experiment::{run_simulation, ExperimentConfig};
use loccov::model::{sample_gaussian, GeneratorSpec};
use loccov::selection::{default_grid_for, select_scaling, SelectionConfig};
use loccov::{LatticeSpec, LocalizationFunction};
use rayon::ThreadPoolBuilder;

const GEN: &str = r#"{"setting": "gauss-kernel", "lattice": {"dims": [8, 8]}}"#;

const SIM: &str = r#"{
  "version": 1,
  "generator": {"setting": "gauss-kernel", "lattice": {"dims": [6, 6]}},
  "n": [60],
  "reps": 16,
  "seed": 3,
  "splits": 10,
  "estimators": [
    {"type": "sample"},
    {"type": "localize", "h": {"kind": "multiplicative-tapering", "c": [0.5]}}
  ]
}"#;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let all = ThreadPoolBuilder::new().build().unwrap();
    let one = ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    vec![("sequential", one), ("parallel", all)]
}

fn selection(c: &mut Criterion) {
    let spec: GeneratorSpec = serde_json::from_str(GEN).unwrap();
    let sigma = spec.freeze(1).unwrap().covariance().unwrap();
    let data = sample_gaussian(&sigma, 100, 2).unwrap();
    let lattice = LatticeSpec::new(vec![8, 8]).unwrap();
    let h: LocalizationFunction = serde_json::from_str(r#"{"kind": "multiplicative-tapering", "c": [0.5]}"#).unwrap();
    let cfg = SelectionConfig {
        candidates: default_grid_for(&h, lattice.dims(), data.n()),
        splits: 20,
        seed: 4,
        norm: Default::default(),
    };
    let mut group = c.benchmark_group("select_scaling");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            pool.install(|| b.iter(|| select_scaling(&data, &lattice, &h, &cfg).unwrap()))
        });
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let cfg = ExperimentConfig::from_json(SIM).unwrap();
    let mut group = c.benchmark_group("run_simulation");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            pool.install(|| b.iter(|| run_simulation(&cfg).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, selection, simulation);
criterion_main!(benches);
