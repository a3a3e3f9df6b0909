//! Frame-level workloads on a one-thread pool versus the default pool.
//! A one-thread pool runs the same code path as the sequential build
//! (`--no-default-features`) minus the dispatch overhead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use octpost_core::phantom::{generate_phantom, PhantomSpec};
use octpost_core::registration::{register_stack, Method, RegistrationPlan};
use octpost_core::shadow::{detect_stack_shadows, DetectParams};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", one), ("parallel", all)]
}

fn bench(c: &mut Criterion) {
    let mut spec = PhantomSpec::table1(256, 256, 8);
    spec.speckle_sigma = 0.2;
    let (stack, _) = generate_phantom(&spec).unwrap();
    let plan = RegistrationPlan::central(stack.len(), Method::Flow);

    let mut group = c.benchmark_group("frames");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_with_input(BenchmarkId::new("phantom", name), &spec, |b, s| {
            b.iter(|| pool.install(|| generate_phantom(s).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("register_flow", name), &stack, |b, s| {
            b.iter(|| pool.install(|| register_stack(s, &plan).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("detect_shadows", name), &stack, |b, s| {
            b.iter(|| pool.install(|| detect_stack_shadows(s, &DetectParams::default())))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
