//! Oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rdf2vec::eval::{cluster_evaluate, evaluate_analogies};
use rdf2vec::synthetic::{capital_graph, role_graph};
use rdf2vec::{
    generate_walks, train, write_walks, Corpus, EmbeddingModel, Embeddings, KnowledgeGraph, Mode,
    NegativeTable, TrainConfig, Vocabulary, WalkConfig,
};

pub const HAMBURG: &str = "\
<http://ex/Hamburg> <http://ex/country> <http://ex/Germany> .
<http://ex/Germany> <http://ex/leader> <http://ex/Angela_Merkel> .
<http://ex/Angela_Merkel> <http://ex/birthPlace> <http://ex/Hamburg> .
<http://ex/Hamburg> <http://ex/leader> <http://ex/Peter_Tschentscher> .
<http://ex/Peter_Tschentscher> <http://ex/residence> <http://ex/Hamburg> .
";

// ---------------------------------------------------------------- gradients

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error, so exact zeros compare cleanly.
pub const FD_FLOOR: f64 = 1e-8;

pub struct StepInstance {
    pub model: EmbeddingModel<f64>,
    pub center: u32,
    pub context: u32,
    pub offset: isize,
    pub negatives: Vec<u32>,
}

/// A random model (entries uniform in [-0.5, 0.5]) with every output matrix
/// populated, and one step drawn from it. Negatives never equal the context.
pub fn random_instance(mode: Mode, rng: &mut impl Rng) -> StepInstance {
    let (vocab, dim, window, k) = (10usize, 8usize, 5usize, 3usize);
    let mut model = EmbeddingModel::<f64>::zeros(vocab, dim, mode, window, false);
    for x in model.input_mut().as_mut_slice() {
        *x = rng.random::<f64>() - 0.5;
    }
    for m in model.outputs_mut() {
        for x in m.as_mut_slice() {
            *x = rng.random::<f64>() - 0.5;
        }
    }
    let center = rng.random_range(0..vocab as u32);
    let context = rng.random_range(0..vocab as u32);
    let negatives = (0..k)
        .map(|_| loop {
            let n = rng.random_range(0..vocab as u32);
            if n != context {
                break n;
            }
        })
        .collect();
    let mut offset = rng.random_range(1..=window) as isize;
    if rng.random::<bool>() {
        offset = -offset;
    }
    StepInstance {
        model,
        center,
        context,
        offset,
        negatives,
    }
}

fn sigmoid_nll(x: f64) -> f64 {
    // -ln s(x), written out independently of the library.
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// The step's loss evaluated directly from the model's parameters.
pub fn reference_loss(s: &StepInstance, model: &EmbeddingModel<f64>) -> f64 {
    let o = &model.outputs()[model.output_index(s.offset).unwrap()];
    let v = model.input().row(s.center as usize);
    let dot = |t: u32| -> f64 { v.iter().zip(o.row(t as usize)).map(|(a, b)| a * b).sum() };
    sigmoid_nll(dot(s.context))
        + s.negatives
            .iter()
            .map(|&n| sigmoid_nll(-dot(n)))
            .sum::<f64>()
}

fn param(m: &EmbeddingModel<f64>, matrix: Option<usize>, idx: usize) -> f64 {
    match matrix {
        None => m.input().as_slice()[idx],
        Some(k) => m.outputs()[k].as_slice()[idx],
    }
}

fn param_mut(m: &mut EmbeddingModel<f64>, matrix: Option<usize>, idx: usize) -> &mut f64 {
    match matrix {
        None => &mut m.input_mut().as_mut_slice()[idx],
        Some(k) => &mut m.outputs_mut()[k].as_mut_slice()[idx],
    }
}

/// Largest relative error between the update implied by `sgns_step` and a
/// central finite difference of [`reference_loss`], over every touched
/// parameter. Also checks the returned loss against the reference.
pub fn gradient_error(s: &StepInstance) -> f64 {
    let lr = 1.0;
    let mut stepped = s.model.clone();
    let loss = stepped
        .sgns_step(s.center, s.context, s.offset, &s.negatives, lr)
        .unwrap();
    let reference = reference_loss(s, &s.model);
    let mut worst = (loss - reference).abs() / reference.abs().max(FD_FLOOR);

    let k = s.model.output_index(s.offset).unwrap();
    let dim = s.model.dimension();
    // (matrix: None = input, Some(k) = output k; row)
    let mut touched = vec![(None, s.center), (Some(k), s.context)];
    touched.extend(s.negatives.iter().map(|&n| (Some(k), n)));
    touched.sort();
    touched.dedup();

    for (matrix, row) in touched {
        for j in 0..dim {
            let idx = row as usize * dim + j;
            let mut plus = s.model.clone();
            let mut minus = s.model.clone();
            *param_mut(&mut plus, matrix, idx) += FD_STEP;
            *param_mut(&mut minus, matrix, idx) -= FD_STEP;
            let numeric = (reference_loss(s, &plus) - reference_loss(s, &minus)) / (2.0 * FD_STEP);
            let analytic = (param(&s.model, matrix, idx) - param(&stepped, matrix, idx)) / lr;
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

/// Worst gradient error over `n` seeded instances in `mode`.
pub fn gradient_sweep(mode: Mode, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| gradient_error(&random_instance(mode, &mut rng)))
        .fold(0.0, f64::max)
}

// -------------------------------------------------------------- equivalence

pub const EQUIVALENCE_TOLERANCE: f64 = 1e-6;

/// Train classic and tied-output ordered models for one epoch from the same
/// seed with a fixed window; return the largest parameter difference.
pub fn equivalence_gap(walks: &str, seed: u64) -> f64 {
    let vocab = Vocabulary::build(walks.as_bytes(), 1).unwrap();
    let table = NegativeTable::new(&vocab, 0.75, 1_000_000).unwrap();
    let base = TrainConfig {
        dimension: 16,
        window: 5,
        epochs: 1,
        seed,
        dynamic_window: false,
        ..TrainConfig::default()
    };
    let classic = train(
        walks,
        &vocab,
        &table,
        &TrainConfig {
            mode: Mode::Classic,
            ..base.clone()
        },
    )
    .unwrap();
    let tied = train(
        walks,
        &vocab,
        &table,
        &TrainConfig {
            mode: Mode::Ordered,
            shared_output: true,
            ..base
        },
    )
    .unwrap();
    assert_eq!(tied.model.outputs().len(), 1);
    let pairs = std::iter::once((classic.model.input(), tied.model.input()))
        .chain(classic.model.outputs().iter().zip(tied.model.outputs()));
    pairs
        .flat_map(|(a, b)| a.as_slice().iter().zip(b.as_slice()))
        .map(|(a, b)| (a - b).abs() as f64)
        .fold(0.0, f64::max)
}

// -------------------------------------------------------------------- walks

/// A random graph as N-Triples: up to `max_nodes` entities, up to
/// `max_edges` triples, a handful of predicates and some literals.
pub fn random_ntriples(rng: &mut impl Rng, max_nodes: usize, max_edges: usize) -> String {
    let nodes = rng.random_range(1..=max_nodes);
    let edges = rng.random_range(1..=max_edges);
    let preds = rng.random_range(1..=5);
    let mut out = String::new();
    for _ in 0..edges {
        let s = rng.random_range(0..nodes);
        let p = rng.random_range(0..preds);
        if rng.random_ratio(1, 20) {
            out += &format!("<http://g/n{s}> <http://g/p{p}> \"lit {s}\"@en .\n");
        } else {
            let o = rng.random_range(0..nodes);
            out += &format!("<http://g/n{s}> <http://g/p{p}> <http://g/n{o}> .\n");
        }
    }
    out
}

/// Replay every walk against the graph. Returns a description of the first
/// violation, if any.
pub fn check_walks(
    graph: &KnowledgeGraph,
    corpus: &Corpus,
    config: &WalkConfig,
) -> Result<(), String> {
    let walkable = graph
        .entities()
        .filter(|&e| !graph.out_edges(e).unwrap().is_empty())
        .count();
    if corpus.len() != config.walks_per_node * walkable {
        return Err(format!(
            "{} walks for {walkable} walkable entities at {} per node",
            corpus.len(),
            config.walks_per_node
        ));
    }
    for (i, walk) in corpus.walks().iter().enumerate() {
        let t = walk.tokens();
        if t.len() % 2 == 0 || t.len() > 2 * config.depth + 1 {
            return Err(format!("walk {i}: bad length {}", t.len()));
        }
        if (t[0] as usize) >= graph.entity_count() || graph.out_edges(t[0]).unwrap().is_empty() {
            return Err(format!("walk {i}: starts at a sink or unknown entity"));
        }
        for h in 0..t.len() / 2 {
            let (s, p, o) = (t[2 * h], t[2 * h + 1], t[2 * h + 2]);
            let ok = graph
                .out_edges(s)
                .map_err(|e| format!("walk {i}: {e}"))?
                .iter()
                .any(|e| e.predicate == p && e.object == o);
            if !ok {
                return Err(format!("walk {i}: hop {h} is not an edge"));
            }
        }
        let last = *t.last().unwrap();
        if t.len() < 2 * config.depth + 1 && !graph.out_edges(last).unwrap().is_empty() {
            return Err(format!("walk {i}: truncated before a sink"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- replication

pub fn walk_text(ntriples: &str, config: &WalkConfig) -> String {
    let graph = KnowledgeGraph::parse_ntriples(ntriples.as_bytes()).unwrap();
    let corpus = generate_walks(&graph, config).unwrap();
    let mut out = Vec::new();
    write_walks(&graph, &corpus, &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

/// Walk the graph with 500 walks of depth 4 and train `mode` with D=50,
/// window 5 and 5 epochs.
pub fn embed(ntriples: &str, mode: Mode, seed: u64) -> Embeddings {
    let walks = walk_text(
        ntriples,
        &WalkConfig {
            walks_per_node: 500,
            depth: 4,
            seed,
            threads: 1,
        },
    );
    let vocab = Vocabulary::build(walks.as_bytes(), 1).unwrap();
    let table = NegativeTable::with_defaults(&vocab).unwrap();
    let config = TrainConfig {
        mode,
        dimension: 50,
        window: 5,
        epochs: 5,
        seed,
        ..TrainConfig::default()
    };
    let out = train(walks.as_str(), &vocab, &table, &config).unwrap();
    Embeddings::from_model(&out.model, &vocab).unwrap()
}

pub fn clustering_scores(seed: u64) -> (f64, f64) {
    let g = role_graph(20, seed);
    let score = |mode| {
        let v = embed(&g.ntriples, mode, seed);
        cluster_evaluate(&v, &g.truth, Some(3), seed).unwrap().0
    };
    (score(Mode::Classic), score(Mode::Ordered))
}

pub fn analogy_scores(seed: u64) -> (f64, f64) {
    let g = capital_graph(20, 40, seed);
    let score = |mode| {
        let v = embed(&g.ntriples, mode, seed);
        evaluate_analogies(&v, &g.truth).unwrap().accuracy
    };
    (score(Mode::Classic), score(Mode::Ordered))
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

// ---------------------------------------------------------------- chi-square

/// Chi-square statistic of `draws` table samples against count^0.75, and
/// the degrees of freedom.
pub fn negative_chi_square(
    vocab: &Vocabulary,
    table: &NegativeTable,
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    let mut observed = vec![0u64; vocab.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..draws {
        observed[table.sample(&mut rng) as usize] += 1;
    }
    let weights: Vec<f64> = vocab
        .counts()
        .iter()
        .map(|&c| (c as f64).powf(0.75))
        .collect();
    let total: f64 = weights.iter().sum();
    let stat = observed
        .iter()
        .zip(&weights)
        .map(|(&o, &w)| {
            let e = draws as f64 * w / total;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    (stat, (vocab.len() - 1) as f64)
}

/// 100 tokens with counts proportional to 1/rank.
pub fn zipf_vocabulary() -> Vocabulary {
    Vocabulary::from_counts((1..=100u64).map(|r| (format!("t{r:03}"), 100_000 / r)), 1).unwrap()
}

// ------------------------------------------------------------------ dynamics

pub fn repeated_walk_losses(mode: Mode, seed: u64) -> Vec<f64> {
    let line = "http://ex/Hamburg http://ex/country http://ex/Germany http://ex/leader http://ex/Angela_Merkel\n";
    let corpus = line.repeat(1000);
    let vocab = Vocabulary::build(corpus.as_bytes(), 1).unwrap();
    let table = NegativeTable::with_defaults(&vocab).unwrap();
    let config = TrainConfig {
        mode,
        dimension: 50,
        epochs: 5,
        seed,
        ..TrainConfig::default()
    };
    train(corpus.as_str(), &vocab, &table, &config)
        .unwrap()
        .epoch_losses
}
