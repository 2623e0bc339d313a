//! Skip-gram training over walk files.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{EmbeddingModel, Mode, ModelError, StepScratch};
use crate::vocab::{NegativeTable, TokenId, Vocabulary};

/// Learning rate never falls below this fraction of the initial rate.
pub const MIN_LR_FRACTION: f64 = 1e-4;

/// Negative draws equal to the context are re-drawn at most this many times
/// before falling back to a uniform pick over the other tokens.
const MAX_REDRAWS: usize = 64;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("reading walks: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub dimension: usize,
    pub window: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub initial_lr: f64,
    pub seed: u64,
    /// Classic mode only: shrink the window per center to a uniform draw from
    /// `1..=window`. Ordered mode always uses the full window.
    pub dynamic_window: bool,
    /// Workers. More than one trains without synchronisation and is not
    /// reproducible.
    pub threads: usize,
    /// Frequent-token subsampling threshold; `0` disables it.
    pub sample: f64,
    /// Ordered mode only: route every offset through one output matrix.
    pub shared_output: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Classic,
            dimension: 100,
            window: 5,
            epochs: 5,
            negatives: 5,
            initial_lr: 0.025,
            seed: 1,
            dynamic_window: true,
            threads: 1,
            sample: 0.0,
            shared_output: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("dimension", self.dimension),
            ("window", self.window),
            ("epochs", self.epochs),
            ("negatives", self.negatives),
            ("threads", self.threads),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(TrainError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate must be positive, got {}",
                self.initial_lr
            )));
        }
        if !(self.sample >= 0.0 && self.sample.is_finite()) {
            return Err(TrainError::Config(format!(
                "sample must be non-negative, got {}",
                self.sample
            )));
        }
        Ok(())
    }

    /// Whether the window is resampled per center token.
    pub fn uses_dynamic_window(&self) -> bool {
        self.mode == Mode::Classic && self.dynamic_window
    }
}

/// Something that yields the walk lines afresh for every epoch.
pub trait WalkSource {
    fn open(&self) -> io::Result<Box<dyn BufRead + '_>>;
}

impl WalkSource for Path {
    fn open(&self) -> io::Result<Box<dyn BufRead + '_>> {
        Ok(Box::new(BufReader::new(File::open(self)?)))
    }
}

impl WalkSource for PathBuf {
    fn open(&self) -> io::Result<Box<dyn BufRead + '_>> {
        self.as_path().open()
    }
}

impl WalkSource for [u8] {
    fn open(&self) -> io::Result<Box<dyn BufRead + '_>> {
        Ok(Box::new(self))
    }
}

impl WalkSource for str {
    fn open(&self) -> io::Result<Box<dyn BufRead + '_>> {
        Ok(Box::new(self.as_bytes()))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: EmbeddingModel<f32>,
    /// Mean per-step loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Write the loss trace as `epoch<TAB>mean_loss` lines, epochs numbered from 1.
pub fn write_loss_trace<W: Write>(losses: &[f64], mut w: W) -> io::Result<()> {
    for (epoch, loss) in losses.iter().enumerate() {
        writeln!(w, "{}\t{loss:.6}", epoch + 1)?;
    }
    w.flush()
}

/// Initial model for `vocab` under `config`.
pub fn init_model(
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<EmbeddingModel<f32>, TrainError> {
    config.validate()?;
    if vocab.is_empty() {
        return Err(TrainError::Config("empty vocabulary".into()));
    }
    Ok(EmbeddingModel::random(
        vocab.len(),
        config.dimension,
        config.mode,
        config.window,
        config.shared_output,
        config.seed,
    ))
}

/// Train a model on the walks from `walks`.
///
/// Walk tokens missing from `vocab` are dropped before windows are formed.
/// The learning rate decays linearly over `epochs * vocab.total_tokens()`
/// center tokens.
pub fn train<S: WalkSource + ?Sized>(
    walks: &S,
    vocab: &Vocabulary,
    negatives: &NegativeTable,
    config: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    let mut model = init_model(vocab, config)?;
    if vocab.len() < 2 {
        return Err(TrainError::Config(
            "negative sampling needs at least two vocabulary tokens".into(),
        ));
    }
    if let Some(&bad) = negatives
        .as_slice()
        .iter()
        .find(|&&t| t as usize >= vocab.len())
    {
        return Err(TrainError::Config(format!(
            "negative table references token {bad} outside the vocabulary"
        )));
    }

    let job = Job {
        vocab_size: vocab.len(),
        negatives,
        config,
        keep: keep_probabilities(vocab, config.sample),
        total: (config.epochs as u64 * vocab.total_tokens()) as f64 + 1.0,
    };

    // Stream 0 of the seed initialises the model; training draws from stream 1.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let progress = AtomicU64::new(0);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let sentences = read_sentences(walks, vocab)?;
        let stats = if config.threads == 1 {
            job.run(&mut model, &sentences, &mut rng, &progress)?
        } else {
            job.run_hogwild(&mut model, &sentences, epoch, &progress)?
        };
        epoch_losses.push(stats.mean());
    }

    Ok(TrainOutput {
        model,
        epoch_losses,
    })
}

fn read_sentences<S: WalkSource + ?Sized>(
    walks: &S,
    vocab: &Vocabulary,
) -> io::Result<Vec<Vec<TokenId>>> {
    let mut sentences = Vec::new();
    for line in walks.open()?.lines() {
        let sentence = vocab.encode(&line?);
        if !sentence.is_empty() {
            sentences.push(sentence);
        }
    }
    Ok(sentences)
}

/// Per-token keep probability under word2vec-style subsampling, or `None`
/// when subsampling is off.
fn keep_probabilities(vocab: &Vocabulary, sample: f64) -> Option<Vec<f64>> {
    if sample <= 0.0 {
        return None;
    }
    let threshold = sample * vocab.total_tokens() as f64;
    Some(
        vocab
            .counts()
            .iter()
            .map(|&c| {
                let c = c as f64;
                ((c / threshold).sqrt() + 1.0) * threshold / c
            })
            .collect(),
    )
}

#[derive(Clone, Copy, Debug, Default)]
struct LossStats {
    sum: f64,
    steps: u64,
}

impl LossStats {
    fn merge(self, other: LossStats) -> LossStats {
        LossStats {
            sum: self.sum + other.sum,
            steps: self.steps + other.steps,
        }
    }

    fn mean(self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.sum / self.steps as f64
        }
    }
}

struct Job<'a> {
    vocab_size: usize,
    negatives: &'a NegativeTable,
    config: &'a TrainConfig,
    keep: Option<Vec<f64>>,
    total: f64,
}

impl Job<'_> {
    fn learning_rate(&self, done: u64) -> f64 {
        let frac = (1.0 - done as f64 / self.total).max(MIN_LR_FRACTION);
        self.config.initial_lr * frac
    }

    fn draw_negatives<R: Rng>(&self, rng: &mut R, context: TokenId, out: &mut [TokenId]) {
        for slot in out {
            let mut drawn = self.negatives.sample(rng);
            let mut tries = 0;
            while drawn == context {
                tries += 1;
                if tries > MAX_REDRAWS {
                    let r = rng.random_range(0..self.vocab_size as TokenId - 1);
                    drawn = if r >= context { r + 1 } else { r };
                    break;
                }
                drawn = self.negatives.sample(rng);
            }
            *slot = drawn;
        }
    }

    /// Train on `sentences` in order with one RNG stream.
    fn run<R: Rng>(
        &self,
        model: &mut EmbeddingModel<f32>,
        sentences: &[Vec<TokenId>],
        rng: &mut R,
        progress: &AtomicU64,
    ) -> Result<LossStats, TrainError> {
        let window = self.config.window as isize;
        let dynamic = self.config.uses_dynamic_window();
        let mut scratch = StepScratch::default();
        let mut negs = vec![0; self.config.negatives];
        let mut kept = Vec::new();
        let mut stats = LossStats::default();

        for sentence in sentences {
            let base = progress.fetch_add(sentence.len() as u64, Ordering::Relaxed);
            let sentence = match &self.keep {
                None => sentence.as_slice(),
                Some(keep) => {
                    kept.clear();
                    kept.extend(
                        sentence
                            .iter()
                            .copied()
                            .filter(|&t| keep[t as usize] >= rng.random::<f64>()),
                    );
                    kept.as_slice()
                }
            };

            for (pos, &center) in sentence.iter().enumerate() {
                let lr = self.learning_rate(base + pos as u64);
                let span = if dynamic {
                    rng.random_range(1..=self.config.window) as isize
                } else {
                    window
                };
                for offset in -span..=span {
                    if offset == 0 {
                        continue;
                    }
                    let ctx_pos = pos as isize + offset;
                    if ctx_pos < 0 || ctx_pos >= sentence.len() as isize {
                        continue;
                    }
                    let context = sentence[ctx_pos as usize];
                    self.draw_negatives(rng, context, &mut negs);
                    stats.sum +=
                        model.sgns_step_with(center, context, offset, &negs, lr, &mut scratch)?;
                    stats.steps += 1;
                }
            }
        }
        Ok(stats)
    }

    /// Split `sentences` into contiguous chunks and train them concurrently on
    /// one shared model without locking.
    fn run_hogwild(
        &self,
        model: &mut EmbeddingModel<f32>,
        sentences: &[Vec<TokenId>],
        epoch: usize,
        progress: &AtomicU64,
    ) -> Result<LossStats, TrainError> {
        let threads = self.config.threads;
        let chunk = sentences.len().div_ceil(threads).max(1);
        let shared = SharedModel(model as *mut _);

        std::thread::scope(|scope| {
            let handles: Vec<_> = sentences
                .chunks(chunk)
                .enumerate()
                .map(|(worker, part)| {
                    let shared = &shared;
                    scope.spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                        rng.set_stream(2 + (epoch * threads + worker) as u64);
                        // SAFETY: workers race on rows of the same model. The
                        // matrices are never resized while threads run, so
                        // every access stays in bounds; torn or lost float
                        // updates are accepted in this mode.
                        let model = unsafe { &mut *shared.0 };
                        self.run(model, part, &mut rng, progress)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training worker panicked"))
                .try_fold(LossStats::default(), |acc, r| r.map(|s| acc.merge(s)))
        })
    }
}

struct SharedModel(*mut EmbeddingModel<f32>);

// SAFETY: see `Job::run_hogwild`.
unsafe impl Sync for SharedModel {}
unsafe impl Send for SharedModel {}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(text: &str) -> (Vocabulary, NegativeTable) {
        let vocab = Vocabulary::build(text.as_bytes(), 1).unwrap();
        let table = NegativeTable::new(&vocab, 0.75, 10_000).unwrap();
        (vocab, table)
    }

    fn repeated(line: &str, times: usize) -> String {
        std::iter::repeat_n(format!("{line}\n"), times).collect()
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig {
                dimension: 0,
                ..ok.clone()
            },
            TrainConfig {
                window: 0,
                ..ok.clone()
            },
            TrainConfig {
                negatives: 0,
                ..ok.clone()
            },
            TrainConfig {
                initial_lr: 0.0,
                ..ok.clone()
            },
            TrainConfig {
                sample: -1.0,
                ..ok.clone()
            },
        ] {
            assert!(
                matches!(bad.validate(), Err(TrainError::Config(_))),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn ordered_reference_config_has_ten_outputs() {
        let (vocab, table) = setup("a p b q c\n");
        let config = TrainConfig {
            mode: Mode::Ordered,
            dimension: 100,
            window: 5,
            epochs: 1,
            ..TrainConfig::default()
        };
        let out = train("a p b q c\n", &vocab, &table, &config).unwrap();
        assert_eq!(out.model.outputs().len(), 10);
        assert_eq!(out.model.dimension(), 100);
    }

    #[test]
    fn loss_decreases_on_repeated_walk() {
        let corpus = repeated("a p b q c r d", 1000);
        let (vocab, table) = setup(&corpus);
        for mode in [Mode::Classic, Mode::Ordered] {
            let config = TrainConfig {
                mode,
                dimension: 16,
                epochs: 5,
                ..TrainConfig::default()
            };
            let out = train(corpus.as_str(), &vocab, &table, &config).unwrap();
            assert_eq!(out.epoch_losses.len(), 5);
            assert!(
                out.epoch_losses[4] < out.epoch_losses[0],
                "{mode}: {:?}",
                out.epoch_losses
            );
            assert!(out.model.is_finite());
        }
    }

    #[test]
    fn single_worker_is_deterministic() {
        let corpus = repeated("a p b q c", 50) + &repeated("c q b p a", 50);
        let (vocab, table) = setup(&corpus);
        let config = TrainConfig {
            dimension: 8,
            epochs: 2,
            sample: 1e-2,
            ..TrainConfig::default()
        };
        let a = train(corpus.as_str(), &vocab, &table, &config).unwrap();
        let b = train(corpus.as_str(), &vocab, &table, &config).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn unknown_tokens_are_skipped() {
        let (vocab, table) = setup("a b\n");
        let config = TrainConfig {
            dimension: 4,
            epochs: 1,
            ..TrainConfig::default()
        };
        let out = train("a zzz b\nyyy\n", &vocab, &table, &config).unwrap();
        assert!(out.epoch_losses[0] > 0.0);
    }

    #[test]
    fn single_token_vocab_is_rejected() {
        let (vocab, table) = setup("a a a\n");
        let err = train("a a a\n", &vocab, &table, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, TrainError::Config(_)));
    }

    #[test]
    fn missing_file_is_io_error() {
        let (vocab, table) = setup("a b\n");
        let path = PathBuf::from("/nonexistent/walks.txt");
        let err = train(&path, &vocab, &table, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, TrainError::Io(_)));
    }

    #[test]
    fn hogwild_runs_and_stays_finite() {
        let corpus = repeated("a p b q c r d", 400);
        let (vocab, table) = setup(&corpus);
        let config = TrainConfig {
            dimension: 16,
            epochs: 2,
            threads: 4,
            ..TrainConfig::default()
        };
        let out = train(corpus.as_str(), &vocab, &table, &config).unwrap();
        assert!(out.model.is_finite());
        assert_eq!(out.epoch_losses.len(), 2);
    }

    #[test]
    fn redraw_never_returns_context() {
        // Table holding only token 0 forces the uniform fallback.
        let vocab =
            Vocabulary::from_counts([("a".to_string(), 1000), ("b".to_string(), 1)], 1).unwrap();
        let table = NegativeTable::new(&vocab, 1.0, 2).unwrap();
        let config = TrainConfig::default();
        let job = Job {
            vocab_size: 2,
            negatives: &table,
            config: &config,
            keep: None,
            total: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut out = [0; 8];
        for context in 0..2 {
            job.draw_negatives(&mut rng, context, &mut out);
            assert!(out.iter().all(|&n| n != context));
        }
    }

    #[test]
    fn loss_trace_format() {
        let mut buf = Vec::new();
        write_loss_trace(&[2.5, 1.25], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "1\t2.500000\n2\t1.250000\n"
        );
    }

    #[test]
    fn learning_rate_schedule() {
        let table = NegativeTable::new(
            &Vocabulary::from_counts([("a".into(), 1), ("b".into(), 1)], 1).unwrap(),
            0.75,
            2,
        )
        .unwrap();
        let config = TrainConfig::default();
        let job = Job {
            vocab_size: 2,
            negatives: &table,
            config: &config,
            keep: None,
            total: 101.0,
        };
        assert!((job.learning_rate(0) - 0.025).abs() < 1e-15);
        assert!(job.learning_rate(50) < job.learning_rate(10));
        assert!((job.learning_rate(1_000) - 0.025 * MIN_LR_FRACTION).abs() < 1e-15);
    }
}
