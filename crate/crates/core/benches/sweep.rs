use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pipesim::model::{PipelineSpec, WarmupPlan};
use pipesim::scheduler::GenConfig;
use pipesim::sweep::{sweep_link, sweep_link_seq};
use pipesim::time::ms;

fn sweep_benchmark(c: &mut Criterion) {
    let spec = PipelineSpec::uniform(8, 32, ms(10));
    let plan = WarmupPlan::new(vec![15, 13, 11, 9, 7, 5, 3, 1]);
    let cfg = GenConfig::auto(&spec);
    let cs: Vec<i64> = (0..=60).map(ms).collect();

    let mut group = c.benchmark_group("sweep_link_s8_n32_61pts");
    group.bench_with_input(BenchmarkId::new("parallel", cs.len()), &cs, |b, cs| {
        b.iter(|| sweep_link(&spec, &plan, &cfg, 0, cs).unwrap())
    });
    group.bench_with_input(BenchmarkId::new("sequential", cs.len()), &cs, |b, cs| {
        b.iter(|| sweep_link_seq(&spec, &plan, &cfg, 0, cs).unwrap())
    });
    group.finish();
}

criterion_group!(benches, sweep_benchmark);
criterion_main!(benches);
