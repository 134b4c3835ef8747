use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use kgrr_bench::{synthetic, test_queries};
use kgrr_core::retriever::{Retriever, RetrieverConfig, Strategy};

fn retrieval(c: &mut Criterion) {
    let data = synthetic();
    let queries = test_queries(&data);
    let mut group = c.benchmark_group("retrieval");
    for strategy in [Strategy::Bfs, Strategy::OneHop, Strategy::Beam] {
        let cfg = RetrieverConfig {
            strategy,
            budget: 30,
            beam_width: 5,
            ..RetrieverConfig::default()
        };
        let r = Retriever::new(cfg, &data.graph).unwrap();
        group.bench_function(format!("{strategy}/test-split"), |b| {
            b.iter(|| r.retrieve_all(&data.graph, black_box(&queries), false).unwrap())
        });
    }
    group.bench_function("beam/build-rule-scorer", |b| {
        let cfg = RetrieverConfig {
            strategy: Strategy::Beam,
            ..RetrieverConfig::default()
        };
        b.iter(|| Retriever::new(black_box(cfg.clone()), &data.graph).unwrap())
    });
    group.finish();
}

criterion_group!(benches, retrieval);
criterion_main!(benches);
