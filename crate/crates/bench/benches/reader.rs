use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use kgrr_bench::{synthetic, test_queries};
use kgrr_core::reader::{forward_prepared, loss_and_grads, ModelConfig, ModelParams, Prepared};
use kgrr_core::retriever::{Retriever, RetrieverConfig};
use kgrr_core::train::sized_for;

fn reader(c: &mut Criterion) {
    let data = synthetic();
    let query = test_queries(&data)[0];
    let mut group = c.benchmark_group("reader");
    for budget in [10, 30, 100] {
        let r = Retriever::new(RetrieverConfig { budget, ..RetrieverConfig::default() }, &data.graph).unwrap();
        let ctx = r.retrieve(&data.graph, &query, false).unwrap();
        let cfg = sized_for(&ModelConfig::default(), &data.graph);
        let params = ModelParams::<f32>::init(&cfg, 0).unwrap();
        let input = Prepared::for_model(&ctx, &params).unwrap();
        let gold = query.target.unwrap().index();
        group.bench_function(format!("forward/budget-{budget}"), |b| {
            b.iter(|| forward_prepared(black_box(&params), black_box(&input)).unwrap())
        });
        group.bench_function(format!("forward-backward/budget-{budget}"), |b| {
            b.iter(|| loss_and_grads(black_box(&params), black_box(&input), gold, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, reader);
criterion_main!(benches);
