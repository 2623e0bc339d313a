//! Train classic and ordered models on the generated graphs and print the
//! clustering and analogy scores per seed.

use std::time::Instant;

use rdf2vec::eval::{cluster_evaluate, evaluate_analogies};
use rdf2vec::synthetic::{capital_graph, role_graph};
use rdf2vec::{
    generate_walks, train, write_walks, Embeddings, KnowledgeGraph, Mode, NegativeTable,
    TrainConfig, Vocabulary, WalkConfig,
};

fn embed(ntriples: &str, mode: Mode, seed: u64, dim: usize) -> Embeddings {
    let graph = KnowledgeGraph::parse_ntriples(ntriples.as_bytes()).unwrap();
    let corpus = generate_walks(
        &graph,
        &WalkConfig {
            seed,
            ..WalkConfig::default()
        },
    )
    .unwrap();
    let mut walks = Vec::new();
    write_walks(&graph, &corpus, &mut walks).unwrap();
    let vocab = Vocabulary::build(walks.as_slice(), 1).unwrap();
    let table = NegativeTable::with_defaults(&vocab).unwrap();
    let config = TrainConfig {
        mode,
        dimension: dim,
        window: 5,
        epochs: 5,
        seed,
        ..TrainConfig::default()
    };
    let out = train(walks.as_slice(), &vocab, &table, &config).unwrap();
    Embeddings::from_model(&out.model, &vocab).unwrap()
}

fn main() {
    for seed in 0..5u64 {
        let t = Instant::now();
        let roles = role_graph(20, seed);
        let mut line = format!("seed {seed}: cluster");
        for mode in [Mode::Classic, Mode::Ordered] {
            let v = embed(&roles.ntriples, mode, seed, 50);
            let (acc, _) = cluster_evaluate(&v, &roles.truth, Some(3), seed).unwrap();
            line += &format!(" {mode}={acc:.3}");
        }
        let caps = capital_graph(20, 40, seed);
        line += " analogy";
        for mode in [Mode::Classic, Mode::Ordered] {
            let v = embed(&caps.ntriples, mode, seed, 50);
            let r = evaluate_analogies(&v, &caps.truth).unwrap();
            line += &format!(" {mode}={:.3}", r.accuracy);
        }
        println!("{line} ({:.1}s)", t.elapsed().as_secs_f64());
    }
}
