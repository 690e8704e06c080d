use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nodedistill_core::graph::{generate_sbm, SbmConfig};
use nodedistill_core::student::{DistillConfig, StudentModel};
use nodedistill_core::teachers::{Arch, GnnModel, GraphOps, TeacherConfig};

fn inference(c: &mut Criterion) {
    let g = generate_sbm(&SbmConfig {
        classes: 4,
        nodes_per_class: 1000,
        p_in: 0.02,
        p_out: 0.001,
        ..SbmConfig::default()
    })
    .unwrap();
    let (f, k) = (g.num_features(), g.num_classes());
    let ops = GraphOps::new(&g);
    let mut group = c.benchmark_group("inference 4000 nodes");
    group.sample_size(20);
    for (i, arch) in Arch::ALL.into_iter().enumerate() {
        let model = GnnModel::new(TeacherConfig::small(arch).with_seed(i as u64), f, k).unwrap();
        group.bench_function(arch.name(), |b| b.iter(|| black_box(model.logits(&ops, g.features()).unwrap())));
    }
    let student = StudentModel::new(DistillConfig::default(), f, k).unwrap();
    group.bench_function("mlp student", |b| b.iter(|| black_box(student.logits(g.features(), None).unwrap())));
    group.finish();
}

criterion_group!(benches, inference);
criterion_main!(benches);
