//! Small generated knowledge graphs with known structure, used to check that
//! embeddings separate entity roles and encode relations.

use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{Analogy, AnalogySet, LabeledDataset};

const BASE: &str = "http://example.org/";

fn iri(kind: &str, i: usize) -> String {
    format!("{BASE}{kind}/{kind}{i:02}")
}

fn pred(name: &str) -> String {
    format!("{BASE}prop/{name}")
}

fn triple(out: &mut String, s: &str, p: &str, o: &str) {
    writeln!(out, "<{s}> <{p}> <{o}> .").unwrap();
}

/// A generated graph plus the ground truth that goes with it.
#[derive(Clone, Debug)]
pub struct Synthetic<T> {
    pub ntriples: String,
    pub truth: T,
}

/// Countries, people and cities wired like a tiny encyclopedia:
///
/// ```text
/// city    -country->    country
/// city    -leader->     person
/// country -leader->     person
/// person  -birthPlace-> city
/// person  -residence->  city
/// ```
///
/// Targets are drawn uniformly from `seed`. The ground truth labels every
/// entity with its class (`country`, `person`, `city`).
pub fn role_graph(per_class: usize, seed: u64) -> Synthetic<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let countries: Vec<String> = (0..per_class).map(|i| iri("country", i)).collect();
    let people: Vec<String> = (0..per_class).map(|i| iri("person", i)).collect();
    let cities: Vec<String> = (0..per_class).map(|i| iri("city", i)).collect();
    let (country, leader, birth, residence) = (
        pred("country"),
        pred("leader"),
        pred("birthPlace"),
        pred("residence"),
    );

    let mut pick = |v: &[String]| v[rng.random_range(0..v.len())].clone();
    let mut out = String::new();
    for city in &cities {
        triple(&mut out, city, &country, &pick(&countries));
        triple(&mut out, city, &leader, &pick(&people));
    }
    for c in &countries {
        triple(&mut out, c, &leader, &pick(&people));
    }
    for p in &people {
        triple(&mut out, p, &birth, &pick(&cities));
        triple(&mut out, p, &residence, &pick(&cities));
    }

    let records = [
        ("country", &countries),
        ("person", &people),
        ("city", &cities),
    ]
    .into_iter()
    .flat_map(|(label, v)| v.iter().map(move |e| (e.clone(), label.to_string())))
    .collect();
    Synthetic {
        ntriples: out,
        truth: LabeledDataset::new(records).expect("entity IRIs are unique"),
    }
}

/// `pairs` capital/country pairs linked by `capitalOf` and `hasCapital`,
/// plus `distractors` entities handed out to the pairs round-robin. Even
/// distractors are regions that both members of a pair are `locatedIn`; odd
/// ones are people born in the capital and citizens of the country. The
/// `seed` shuffles triple order only.
///
/// The ground truth holds every analogy `capital_i : country_i :: capital_j
/// : country_j` with `i != j`.
pub fn capital_graph(pairs: usize, distractors: usize, seed: u64) -> Synthetic<AnalogySet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let capitals: Vec<String> = (0..pairs).map(|i| iri("capital", i)).collect();
    let countries: Vec<String> = (0..pairs).map(|i| iri("nation", i)).collect();
    let (capital_of, has_capital, located_in, born_in, citizen_of) = (
        pred("capitalOf"),
        pred("hasCapital"),
        pred("locatedIn"),
        pred("bornIn"),
        pred("citizenOf"),
    );

    let mut lines = Vec::new();
    let mut push = |s: &str, p: &str, o: &str| {
        let mut line = String::new();
        triple(&mut line, s, p, o);
        lines.push(line);
    };
    for (cap, nation) in capitals.iter().zip(&countries) {
        push(cap, &capital_of, nation);
        push(nation, &has_capital, cap);
    }
    for d in 0..distractors {
        let pair = (d / 2) % pairs;
        let (cap, nation) = (&capitals[pair], &countries[pair]);
        if d % 2 == 0 {
            let region = iri("region", d / 2);
            push(cap, &located_in, &region);
            push(nation, &located_in, &region);
        } else {
            let person = iri("citizen", d / 2);
            push(&person, &born_in, cap);
            push(&person, &citizen_of, nation);
        }
    }
    for i in (1..lines.len()).rev() {
        lines.swap(i, rng.random_range(0..=i));
    }
    let out = lines.concat();

    let mut quads = Vec::new();
    for i in 0..pairs {
        for j in 0..pairs {
            if i != j {
                quads.push(Analogy {
                    a: capitals[i].clone(),
                    b: countries[i].clone(),
                    c: capitals[j].clone(),
                    d: countries[j].clone(),
                });
            }
        }
    }
    Synthetic {
        ntriples: out,
        truth: AnalogySet { quads },
    }
}
