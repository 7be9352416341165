use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use graphwright::conformance::check_against_final_check;
use graphwright::par::Execution;
use graphwright::rollout::{run_batch, BranchConfig, UniformAdmissiblePolicy};
use graphwright::SchemaRegistry;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn rollout_batch(c: &mut Criterion) {
    let r = SchemaRegistry::bundled("mini-sd").unwrap();
    let cfg = BranchConfig::default();
    let seeds: Vec<u64> = (0..32).collect();
    let mut group = c.benchmark_group("rollout_batch_32");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_batch("bench", &r, &UniformAdmissiblePolicy, &cfg, &seeds, exec))
        });
    }
    group.finish();
}

fn equivalence_enumeration(c: &mut Criterion) {
    let r = SchemaRegistry::bundled("mini-sd").unwrap();
    let mut group = c.benchmark_group("equivalence_len4");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| check_against_final_check(&r, 4, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, rollout_batch, equivalence_enumeration);
criterion_main!(benches);
