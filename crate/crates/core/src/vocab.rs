//! Vocabulary and negative-sampling table built from walk files.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use rand::Rng;
use thiserror::Error;

pub type TokenId = u32;

pub const DEFAULT_TABLE_SIZE: usize = 10_000_000;
pub const DEFAULT_POWER: f64 = 0.75;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("corpus contains no tokens above the count threshold")]
    EmptyCorpus,
    #[error("invalid vocabulary configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Token/ID bijection with corpus frequencies.
///
/// IDs are dense and ordered by descending count, ties broken by the token
/// string, so the mapping does not depend on line order in the corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, TokenId>,
    total_tokens: u64,
}

impl Vocabulary {
    /// Count whitespace-separated tokens of a walk stream.
    pub fn build<R: BufRead>(walks: R, min_count: u64) -> Result<Self, VocabError> {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for line in walks.lines() {
            let line = line?;
            for token in line.split_ascii_whitespace() {
                match counts.get_mut(token) {
                    Some(c) => *c += 1,
                    None => {
                        counts.insert(token.to_owned(), 1);
                    }
                }
            }
        }
        Self::from_counts(counts, min_count)
    }

    pub fn from_counts<I>(counts: I, min_count: u64) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        let mut entries: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c > 0 && *c >= min_count)
            .collect();
        if entries.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        entries.sort_unstable_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));

        let total_tokens = entries.iter().map(|(_, c)| c).sum();
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i as TokenId))
            .collect();
        let (tokens, counts) = entries.into_iter().unzip();
        Ok(Vocabulary {
            tokens,
            counts,
            index,
            total_tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Sum of the counts of all retained tokens.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: TokenId) -> u64 {
        self.counts[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// In-vocabulary token IDs of one walk line; unknown tokens are dropped.
    pub fn encode(&self, line: &str) -> Vec<TokenId> {
        line.split_ascii_whitespace()
            .filter_map(|t| self.id(t))
            .collect()
    }

    /// `token<TAB>count` lines in ID order.
    pub fn write_counts<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (token, count) in self.tokens.iter().zip(&self.counts) {
            writeln!(w, "{token}\t{count}")?;
        }
        w.flush()
    }
}

/// Unigram table raised to `power`, for drawing negative samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeTable {
    table: Vec<TokenId>,
}

impl NegativeTable {
    /// Each token occupies a contiguous run of slots whose length is within
    /// one slot of `size * count^power / sum(count^power)`.
    pub fn new(vocab: &Vocabulary, power: f64, size: usize) -> Result<Self, VocabError> {
        if vocab.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        if !(power > 0.0 && power.is_finite()) {
            return Err(VocabError::Config(format!(
                "power must be positive, got {power}"
            )));
        }
        if size < vocab.len() {
            return Err(VocabError::Config(format!(
                "table size {size} is smaller than the vocabulary ({})",
                vocab.len()
            )));
        }

        let weights: Vec<f64> = vocab
            .counts()
            .iter()
            .map(|&c| (c as f64).powf(power))
            .collect();
        let norm: f64 = weights.iter().sum();
        let mut table = Vec::with_capacity(size);
        let mut cumulative = 0.0;
        for (id, w) in weights.iter().enumerate() {
            cumulative += w;
            let end = if id + 1 == weights.len() {
                size
            } else {
                ((cumulative / norm) * size as f64).round() as usize
            };
            let end = end.min(size);
            table.resize(end.max(table.len()), id as TokenId);
        }
        debug_assert_eq!(table.len(), size);
        Ok(NegativeTable { table })
    }

    pub fn with_defaults(vocab: &Vocabulary) -> Result<Self, VocabError> {
        Self::new(vocab, DEFAULT_POWER, DEFAULT_TABLE_SIZE.max(vocab.len()))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn as_slice(&self) -> &[TokenId] {
        &self.table
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TokenId {
        self.table[rng.random_range(0..self.table.len())]
    }
}
