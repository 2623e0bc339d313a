//! Downstream evaluation over entity vectors: analogies, clustering and
//! nearest-neighbour classification or regression.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::io::{self, BufRead};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::store::Embeddings;

pub const MAX_KMEANS_ITERATIONS: usize = 100;
/// k-means runs per clustering evaluation; the lowest final inertia wins.
pub const KMEANS_RESTARTS: u64 = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("invalid evaluation configuration: {0}")]
    Config(String),
    #[error("no in-vocabulary records")]
    NoRecords,
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// `u.v / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, EvalError> {
    if u.len() != v.len() {
        return Err(EvalError::Dimension(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(EvalError::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Descending similarity, then ascending token.
fn rank(a: &(&str, f64), b: &(&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Cosine similarity of `target` to every token not in `exclude`, best
/// first. Zero vectors are skipped.
fn similarities<'e>(
    vectors: &'e Embeddings,
    target: &[f32],
    exclude: &[usize],
) -> Result<Vec<(&'e str, f64)>, EvalError> {
    let tn = norm(target);
    if tn == 0.0 {
        return Err(EvalError::ZeroVector);
    }
    let mut scored: Vec<(&str, f64)> = vectors
        .iter()
        .enumerate()
        .filter(|(i, _)| !exclude.contains(i))
        .filter_map(|(_, (token, v))| {
            let n = norm(v);
            (n > 0.0).then(|| (token, dot(target, v) / (tn * n)))
        })
        .collect();
    scored.sort_by(rank);
    Ok(scored)
}

fn lookup(vectors: &Embeddings, token: &str) -> Result<usize, EvalError> {
    vectors
        .index_of(token)
        .ok_or_else(|| EvalError::UnknownToken(token.to_owned()))
}

/// The `k` tokens most cosine-similar to `token`, excluding itself.
pub fn nearest<'e>(
    vectors: &'e Embeddings,
    token: &str,
    k: usize,
) -> Result<Vec<(&'e str, f64)>, EvalError> {
    let idx = lookup(vectors, token)?;
    let mut scored = similarities(vectors, vectors.vector(idx), &[idx])?;
    scored.truncate(k);
    Ok(scored)
}

/// 3CosAdd: the token closest to `b - a + c`, never one of the query tokens.
pub fn solve_analogy<'e>(
    vectors: &'e Embeddings,
    a: &str,
    b: &str,
    c: &str,
) -> Result<&'e str, EvalError> {
    let (ia, ib, ic) = (
        lookup(vectors, a)?,
        lookup(vectors, b)?,
        lookup(vectors, c)?,
    );
    let target: Vec<f32> = vectors
        .vector(ia)
        .iter()
        .zip(vectors.vector(ib))
        .zip(vectors.vector(ic))
        .map(|((&va, &vb), &vc)| vb - va + vc)
        .collect();
    similarities(vectors, &target, &[ia, ib, ic])?
        .first()
        .map(|(t, _)| *t)
        .ok_or_else(|| EvalError::Config("no candidate tokens outside the query".into()))
}

/// `a` is to `b` as `c` is to `d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Analogy {
    pub a: String,
    pub b: String,
    pub c: String,
    pub d: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnalogySet {
    pub quads: Vec<Analogy>,
}

impl AnalogySet {
    /// Lines of four space-separated tokens; `#` comments and blank lines
    /// are skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, EvalError> {
        let mut quads = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [a, b, c, d] = fields[..] else {
                return Err(EvalError::Dataset {
                    line: i + 1,
                    message: format!("expected 4 tokens, found {}", fields.len()),
                });
            };
            let distinct: HashSet<_> = fields.iter().collect();
            if distinct.len() != 4 {
                return Err(EvalError::Dataset {
                    line: i + 1,
                    message: "analogy tokens must be distinct".into(),
                });
            }
            quads.push(Analogy {
                a: a.into(),
                b: b.into(),
                c: c.into(),
                d: d.into(),
            });
        }
        Ok(AnalogySet { quads })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalogyReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Quadruples with at least one token missing from the vectors; these
    /// count as wrong.
    pub oov: usize,
}

pub fn evaluate_analogies(
    vectors: &Embeddings,
    set: &AnalogySet,
) -> Result<AnalogyReport, EvalError> {
    if set.quads.is_empty() {
        return Err(EvalError::Config("empty analogy set".into()));
    }
    let mut correct = 0;
    let mut oov = 0;
    for q in &set.quads {
        if [&q.a, &q.b, &q.c, &q.d]
            .iter()
            .any(|t| vectors.index_of(t).is_none())
        {
            oov += 1;
            continue;
        }
        if solve_analogy(vectors, &q.a, &q.b, &q.c)? == q.d {
            correct += 1;
        }
    }
    Ok(AnalogyReport {
        accuracy: correct as f64 / set.quads.len() as f64,
        correct,
        total: set.quads.len(),
        oov,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia: Vec<f64>,
}

impl KMeans {
    pub fn final_inertia(&self) -> f64 {
        self.inertia.last().copied().unwrap_or(f64::INFINITY)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from k-means++ seeds. Stops after
/// [`MAX_KMEANS_ITERATIONS`] rounds or once assignments stop changing. A
/// cluster that loses all its points keeps its previous centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans, EvalError> {
    if k == 0 || k > points.len() {
        return Err(EvalError::Config(format!(
            "k = {k} must be between 1 and the number of points ({})",
            points.len()
        )));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(EvalError::Dimension(dim, p.len()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut closest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            closest
                .iter()
                .position(|&d| {
                    r -= d;
                    r < 0.0 && d > 0.0
                })
                .unwrap_or_else(|| closest.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in closest.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }

    let mut assignments = vec![usize::MAX; points.len()];
    let mut inertia = Vec::new();
    for _ in 0..MAX_KMEANS_ITERATIONS {
        let mut changed = false;
        let mut wcss = 0.0;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (best, d) = centroids.iter().map(|c| sq_dist(p, c)).enumerate().fold(
                (0, f64::INFINITY),
                |acc, (i, d)| if d < acc.1 { (i, d) } else { acc },
            );
            wcss += d;
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        inertia.push(wcss);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            sizes[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for ((c, s), n) in centroids.iter_mut().zip(sums).zip(sizes) {
            if n > 0 {
                *c = s.into_iter().map(|x| x / n as f64).collect();
            }
        }
    }

    Ok(KMeans {
        assignments,
        centroids,
        inertia,
    })
}

/// Fraction of points whose cluster maps to their label under the best
/// one-to-one cluster/label matching.
pub fn clustering_accuracy<L: Ord>(assignments: &[usize], labels: &[L]) -> Result<f64, EvalError> {
    if assignments.len() != labels.len() {
        return Err(EvalError::Config(format!(
            "{} assignments for {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let label_ids: BTreeMap<&L, usize> = labels
        .iter()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    let cluster_ids: BTreeMap<usize, usize> = assignments
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, c)| (c, i))
        .collect();
    let n = label_ids.len().max(cluster_ids.len());
    let mut table = vec![vec![0i64; n]; n];
    for (a, l) in assignments.iter().zip(labels) {
        table[cluster_ids[a]][label_ids[l]] += 1;
    }
    let cost: Vec<Vec<i64>> = table
        .iter()
        .map(|r| r.iter().map(|&c| -c).collect())
        .collect();
    let matching = hungarian(&cost);
    let matched: i64 = matching.iter().enumerate().map(|(r, &c)| table[r][c]).sum();
    Ok(matched as f64 / labels.len() as f64)
}

/// Minimum-cost perfect matching on a square matrix. Returns the column
/// assigned to each row.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based potentials; column 0 is a sentinel.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// `entity<TAB>label` records.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabeledDataset {
    pub records: Vec<(String, String)>,
}

impl LabeledDataset {
    pub fn new(records: Vec<(String, String)>) -> Result<Self, EvalError> {
        let mut seen = HashSet::new();
        for (i, (entity, _)) in records.iter().enumerate() {
            if !seen.insert(entity.as_str()) {
                return Err(EvalError::Dataset {
                    line: i + 1,
                    message: format!("duplicate entity {entity:?}"),
                });
            }
        }
        Ok(LabeledDataset { records })
    }

    /// Parse tab-separated records, skipping blank and `#` lines.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, EvalError> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((entity, label)) = line.split_once('\t') else {
                return Err(EvalError::Dataset {
                    line: i + 1,
                    message: "expected entity<TAB>label".into(),
                });
            };
            let (entity, label) = (entity.trim(), label.trim());
            if entity.is_empty() || label.is_empty() {
                return Err(EvalError::Dataset {
                    line: i + 1,
                    message: "empty entity or label".into(),
                });
            }
            if !seen.insert(entity.to_owned()) {
                return Err(EvalError::Dataset {
                    line: i + 1,
                    message: format!("duplicate entity {entity:?}"),
                });
            }
            records.push((entity.to_owned(), label.to_owned()));
        }
        Ok(LabeledDataset { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KnnTask {
    Classify,
    Regress,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnnReport {
    /// Accuracy for classification, RMSE for regression.
    pub metric: f64,
    pub evaluated: usize,
    pub oov: usize,
}

/// Leave-one-out k-nearest-neighbour evaluation under cosine similarity.
///
/// Records whose entity has no vector are dropped and counted in
/// [`KnnReport::oov`]. Neighbour ties go to the smaller token, vote ties to
/// the smaller label.
pub fn knn_evaluate(
    vectors: &Embeddings,
    data: &LabeledDataset,
    k: usize,
    task: KnnTask,
) -> Result<KnnReport, EvalError> {
    if k == 0 {
        return Err(EvalError::Config("k must be at least 1".into()));
    }
    let present: Vec<(&str, &str, &[f32])> = data
        .records
        .iter()
        .filter_map(|(e, l)| vectors.get(e).map(|v| (e.as_str(), l.as_str(), v)))
        .collect();
    let oov = data.len() - present.len();
    if present.is_empty() {
        return Err(EvalError::NoRecords);
    }
    if present.len() < k + 1 {
        return Err(EvalError::Config(format!(
            "k = {k} needs at least {} in-vocabulary records, found {}",
            k + 1,
            present.len()
        )));
    }
    let targets: Vec<f64> = match task {
        KnnTask::Classify => Vec::new(),
        KnnTask::Regress => present
            .iter()
            .enumerate()
            .map(|(i, (_, l, _))| {
                l.parse::<f64>().map_err(|_| EvalError::Dataset {
                    line: i + 1,
                    message: format!("non-numeric regression target {l:?}"),
                })
            })
            .collect::<Result<_, _>>()?,
    };

    let mut correct = 0usize;
    let mut sq_err = 0.0;
    for (i, (_, label, v)) in present.iter().enumerate() {
        let mut scored: Vec<(usize, f64)> = Vec::with_capacity(present.len() - 1);
        for (j, (_, _, w)) in present.iter().enumerate() {
            if i != j {
                scored.push((j, cosine(v, w)?));
            }
        }
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| present[a.0].0.cmp(present[b.0].0))
        });
        let neighbours = &scored[..k];
        match task {
            KnnTask::Classify => {
                let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
                for &(j, _) in neighbours {
                    *votes.entry(present[j].1).or_default() += 1;
                }
                let best = votes.values().copied().max().unwrap_or(0);
                // BTreeMap iterates labels in order, so the first maximum is
                // the lexicographically smallest.
                let predicted = votes.iter().find(|(_, &n)| n == best).map(|(l, _)| *l);
                if predicted == Some(*label) {
                    correct += 1;
                }
            }
            KnnTask::Regress => {
                let mean = neighbours.iter().map(|&(j, _)| targets[j]).sum::<f64>() / k as f64;
                sq_err += (mean - targets[i]).powi(2);
            }
        }
    }

    let n = present.len() as f64;
    let metric = match task {
        KnnTask::Classify => correct as f64 / n,
        KnnTask::Regress => (sq_err / n).sqrt(),
    };
    Ok(KnnReport {
        metric,
        evaluated: present.len(),
        oov,
    })
}

/// Stack the vectors of `tokens` as f64 rows, returning the rows found and
/// the indices into `tokens` they came from.
pub fn gather(vectors: &Embeddings, tokens: &[&str]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut found = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if let Some(v) = vectors.get(t) {
            rows.push(v.iter().map(|&x| f64::from(x)).collect());
            found.push(i);
        }
    }
    (rows, found)
}

/// Cluster the dataset's in-vocabulary entities with k-means and score them
/// against their labels. `k` defaults to the number of distinct labels.
/// Keeps the best of [`KMEANS_RESTARTS`] seeded runs.
pub fn cluster_evaluate(
    vectors: &Embeddings,
    data: &LabeledDataset,
    k: Option<usize>,
    seed: u64,
) -> Result<(f64, usize), EvalError> {
    let tokens: Vec<&str> = data.records.iter().map(|(e, _)| e.as_str()).collect();
    let (points, found) = gather(vectors, &tokens);
    if points.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let labels: Vec<&str> = found.iter().map(|&i| data.records[i].1.as_str()).collect();
    let distinct: HashSet<&str> = labels.iter().copied().collect();
    let k = k.unwrap_or(distinct.len());
    let mut best: Option<KMeans> = None;
    for restart in 0..KMEANS_RESTARTS {
        let run = kmeans(
            &points,
            k,
            seed.wrapping_mul(KMEANS_RESTARTS).wrapping_add(restart),
        )?;
        if best
            .as_ref()
            .is_none_or(|b| run.final_inertia() < b.final_inertia())
        {
            best = Some(run);
        }
    }
    let result = best.expect("at least one restart");
    let acc = clustering_accuracy(&result.assignments, &labels)?;
    Ok((acc, data.len() - points.len()))
}
