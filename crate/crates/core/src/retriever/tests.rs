use proptest::prelude::*;

use super::*;
use crate::kg::{Dataset, Query};
use crate::synth::{desk_kg, generate, SynthConfig};

fn e(d: &Dataset, h: &str, r: &str, t: &str) -> Triple {
    Triple {
        head: d.vocab.entity(h).unwrap(),
        relation: d.vocab.relation(r).unwrap(),
        tail: d.vocab.entity(t).unwrap(),
    }
}

#[test]
fn strip_removes_exactly_the_query_edge() {
    let d = desk_kg();
    let gold = e(&d, "a", "r1", "b");
    let q = Query::from_triple(&gold);
    let ctx = retrieve_bfs(&d.graph, &q, 3, Traversal::Both, &[]);
    assert!(ctx.edges.contains(&gold));
    let stripped = strip_query_edge(&ctx, &gold, 3);
    assert_eq!(stripped.edges.len(), ctx.edges.len() - 1);
    assert!(!stripped.contains_entity(gold.tail));
    stripped.validate().unwrap();

    // identity when the edge is absent
    let other = e(&d, "e", "r3", "c");
    assert_eq!(strip_query_edge(&ctx, &other, 3), ctx);
}

#[test]
fn strip_removes_the_inverse_form() {
    let d = desk_kg();
    let gold = e(&d, "a", "r1", "b");
    let inv = e(&d, "b", "r1_inv", "a");
    let q = Query::from_triple(&gold);
    let ctx = retrieve_path_union(&q, &[vec![e(&d, "a", "r1", "d")], vec![]], 10, super::Strategy::Paths).unwrap();
    let mut with_inv = ctx.clone();
    with_inv.edges.push(inv);
    let terminals = with_inv.terminals();
    let with_inv = SubgraphContext::from_edges(q, with_inv.edges, &terminals, with_inv.provenance);
    let stripped = strip_query_edge(&with_inv, &gold, 3);
    assert_eq!(stripped.edges, ctx.edges);
    assert_eq!(stripped.nodes, ctx.nodes);
}

#[test]
fn coverage_counts_targets() {
    let d = desk_kg();
    let mk = |h: &str, r: &str, t: &str, budget| {
        let q = Query::from_triple(&e(&d, h, r, t));
        retrieve_bfs(&d.graph, &q, budget, Traversal::OriginalsOnly, &[])
    };
    // targets b and c: a's first edge reaches b, nothing reaches c with budget 1
    let contexts = vec![
        mk("a", "r1", "b", 1),
        mk("a", "r1", "c", 1),
        mk("d", "r2", "e", 1),
        mk("f", "r1", "a", 1),
    ];
    assert_eq!(coverage_stats(&contexts).unwrap(), 0.5);

    let mut no_target = contexts[0].clone();
    no_target.query.target = None;
    assert!(coverage_stats(&[no_target]).is_err());
}

#[test]
fn gold_exclusion_keeps_the_full_budget() {
    let d = desk_kg();
    let gold = e(&d, "a", "r1", "b");
    let q = Query::from_triple(&gold);
    let r = Retriever::new(
        RetrieverConfig {
            budget: 3,
            ..RetrieverConfig::default()
        },
        &d.graph,
    )
    .unwrap();
    let ctx = r.retrieve(&d.graph, &q, true).unwrap();
    assert_eq!(ctx.edges.len(), 3);
    assert!(!ctx.edges.contains(&gold));
    assert!(!ctx.edges.contains(&d.graph.inverse(&gold)));
}

#[test]
fn context_file_round_trip() {
    let data = generate(&SynthConfig::default()).unwrap().to_dataset().unwrap();
    let cfg = RetrieverConfig {
        strategy: super::Strategy::Beam,
        budget: 8,
        beam_width: 4,
        ..RetrieverConfig::default()
    };
    let r = Retriever::new(cfg, &data.graph).unwrap();
    let queries: Vec<Query> = data.test.iter().take(20).map(Query::from_triple).collect();
    let contexts = r.retrieve_all(&data.graph, &queries, false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ctx.jsonl");
    write_contexts(&p, &contexts).unwrap();
    assert_eq!(read_contexts(&p).unwrap(), contexts);

    // the same file doubles as a path file
    let paths = read_path_file(&p).unwrap();
    let from_file = Retriever::with_paths(
        RetrieverConfig {
            budget: 8,
            ..RetrieverConfig::default()
        },
        paths,
    );
    for (q, c) in queries.iter().zip(&contexts) {
        let again = from_file.retrieve(&data.graph, q, false).unwrap();
        assert_eq!(again.edges, c.edges);
        assert_eq!(again.terminal, c.terminal);
    }
}

#[test]
fn context_file_parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.jsonl");
    std::fs::write(
        &p,
        "{\"query\":[0,0],\"edges\":[],\"terminals\":[],\"strategy\":\"bfs\"}\n{\"query\":[0]}\n",
    )
    .unwrap();
    match read_contexts(&p) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("unexpected {other:?}"),
    }
}

fn synth() -> &'static Dataset {
    use std::sync::OnceLock;
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| generate(&SynthConfig::default()).unwrap().to_dataset().unwrap())
}

fn beam_retriever() -> &'static Retriever {
    use std::sync::OnceLock;
    static R: OnceLock<Retriever> = OnceLock::new();
    R.get_or_init(|| {
        let cfg = RetrieverConfig {
            strategy: super::Strategy::Beam,
            budget: 1000,
            beam_width: 5,
            max_hops: 2,
            scorer: TranslationalConfig {
                epochs: 10,
                ..TranslationalConfig::default()
            },
            ..RetrieverConfig::default()
        };
        Retriever::new(cfg, &synth().graph).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn retrieval_laws(source in 0u32..60, relation in 0u32..20, budget in 0usize..25, seed in 0u64..1000, strategy in 0usize..3) {
        let data = synth();
        let kg = &data.graph;
        let source = EntityId(source % kg.num_entities() as u32);
        let relation = RelationId(relation % kg.num_relations() as u32);
        let q = Query::new(source, relation);
        let ctx = match strategy {
            0 => retrieve_bfs(kg, &q, budget, Traversal::Both, &[]),
            1 => retrieve_one_hop(kg, &q, budget, seed, Traversal::Both, &[]),
            _ => {
                let paths = beam_search_paths(kg, &q, &BeamConfig { width: 5, max_hops: 2, traversal: Traversal::Both }, beam_retriever().scorer().unwrap(), &[]).unwrap();
                retrieve_path_union(&q, &paths, budget, super::Strategy::Beam).unwrap()
            }
        };
        prop_assert!(ctx.edges.len() <= budget);
        prop_assert_eq!(ctx.nodes[0], source);
        prop_assert!(is_sound(kg, &ctx));
        prop_assert!(ctx.validate().is_ok());

        let again = match strategy {
            0 => retrieve_bfs(kg, &q, budget, Traversal::Both, &[]),
            1 => retrieve_one_hop(kg, &q, budget, seed, Traversal::Both, &[]),
            _ => {
                let paths = beam_search_paths(kg, &q, &BeamConfig { width: 5, max_hops: 2, traversal: Traversal::Both }, beam_retriever().scorer().unwrap(), &[]).unwrap();
                retrieve_path_union(&q, &paths, budget, super::Strategy::Beam).unwrap()
            }
        };
        prop_assert_eq!(ctx, again);
    }

    #[test]
    fn strip_only_removes_matching_edges(source in 0u32..60, budget in 1usize..30, h in 0u32..60, r in 0u32..20, t in 0u32..60) {
        let data = synth();
        let kg = &data.graph;
        let q = Query::new(EntityId(source % kg.num_entities() as u32), RelationId(0));
        let ctx = retrieve_bfs(kg, &q, budget, Traversal::Both, &[]);
        let n = kg.num_original_relations();
        // bias half of the cases toward an edge that is actually present
        let probe = if h % 2 == 0 && !ctx.edges.is_empty() {
            ctx.edges[(t as usize) % ctx.edges.len()]
        } else {
            Triple::new(h % 60, r % (2 * n), t % 60)
        };
        let stripped = strip_query_edge(&ctx, &probe, n);
        let inv = probe.inverse(n);
        for e in &ctx.edges {
            let keep = *e != probe && *e != inv;
            prop_assert_eq!(stripped.edges.contains(e), keep);
        }
    }
}
