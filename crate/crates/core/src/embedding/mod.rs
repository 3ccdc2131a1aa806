//! Skip-gram negative-sampling training and ensemble construction.
//!
//! Training is single-threaded and fully deterministic for a given seed:
//! initialization, window shrinking, negative draws and subsampling each
//! consume their own derived random stream (see [`crate::rng`]).

mod ensemble;
mod sgns;
mod table;

use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, NormalizationConfig, TokenStream, TokenizeMode, Vocabulary};
use crate::rng::{self, purpose};

pub use ensemble::{concatenate_models, EnsembleMember, EnsembleModel, LabeledTable, MemberInfo};
pub use sgns::{sgns_loss, sgns_step};
pub use table::{VectorTable, BINARY_MAGIC};

/// Final learning rate as a fraction of the initial one.
pub const MIN_LR_FRACTION: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("vector dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("models share no words")]
    EmptyIntersection,
    #[error("unknown word `{0}`")]
    UnknownWord(String),
    #[error("vector file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub subsample_t: f64,
    pub epochs: usize,
    pub min_count: u64,
    pub initial_lr: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            dim: 300,
            window: 5,
            negatives: 5,
            subsample_t: 1e-3,
            epochs: 5,
            min_count: 100,
            initial_lr: 0.025,
            seed: 1,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim as f64),
            ("window", self.window as f64),
            ("negatives", self.negatives as f64),
            ("subsample_t", self.subsample_t),
            ("epochs", self.epochs as f64),
            ("min_count", self.min_count as f64),
            ("initial_lr", self.initial_lr),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EmbeddingError::Invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Probability of keeping an occurrence of a word with relative frequency
/// `relative_freq`: `min(1, sqrt(t / f))`.
pub fn subsample_keep_prob(relative_freq: f64, t: f64) -> Result<f64> {
    if !(relative_freq > 0.0 && relative_freq <= 1.0) {
        return Err(EmbeddingError::Invalid(format!(
            "relative frequency {relative_freq} outside (0, 1]"
        )));
    }
    if !(t > 0.0) {
        return Err(EmbeddingError::Invalid("subsampling threshold must be positive".into()));
    }
    Ok((t / relative_freq).sqrt().min(1.0))
}

/// Frequency-based subsampler over a vocabulary.
#[derive(Debug, Clone)]
pub struct Subsampler {
    keep: Vec<f64>,
    rng: rng::Rng,
}

impl Subsampler {
    pub fn new(vocab: &Vocabulary, t: f64, seed: u64) -> Result<Self> {
        let total = vocab.retained_tokens() as f64;
        let keep = vocab
            .entries()
            .iter()
            .map(|e| subsample_keep_prob(e.count as f64 / total, t))
            .collect::<Result<_>>()?;
        Ok(Self {
            keep,
            rng: rng::stream(seed, purpose::SUBSAMPLE),
        })
    }

    pub fn keep_prob(&self, id: usize) -> f64 {
        self.keep[id]
    }

    pub fn keep(&mut self, id: usize) -> bool {
        let p = self.keep[id];
        p >= 1.0 || self.rng.random::<f64>() < p
    }
}

/// Unigram noise distribution `P(w) ∝ count(w)^power`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    pub fn new(vocab: &Vocabulary, power: f64) -> Result<Self> {
        Self::from_counts(vocab.entries().iter().map(|e| e.count), power)
    }

    pub fn from_counts(counts: impl IntoIterator<Item = u64>, power: f64) -> Result<Self> {
        let weights: Vec<f64> = counts.into_iter().map(|c| (c as f64).powf(power)).collect();
        if weights.is_empty() {
            return Err(EmbeddingError::EmptyVocabulary);
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(EmbeddingError::Invalid("noise weights do not normalize".into()));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { probs, cumulative })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> usize {
        let r: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        self.cumulative
            .partition_point(|&c| c <= r)
            .min(self.probs.len() - 1)
    }
}

/// Something that can replay its sentences once per epoch.
pub trait SentenceSource {
    fn for_each_sentence(&self, f: &mut dyn FnMut(&[String])) -> Result<()>;
}

impl SentenceSource for TokenStream {
    fn for_each_sentence(&self, f: &mut dyn FnMut(&[String])) -> Result<()> {
        for s in self.sentences() {
            f(s);
        }
        Ok(())
    }
}

/// A corpus file streamed line by line on every pass.
#[derive(Debug, Clone)]
pub struct CorpusFile {
    pub path: PathBuf,
    pub mode: TokenizeMode,
    pub normalization: NormalizationConfig,
}

impl SentenceSource for CorpusFile {
    fn for_each_sentence(&self, f: &mut dyn FnMut(&[String])) -> Result<()> {
        self.normalization.validate()?;
        let reader = BufReader::new(File::open(&self.path)?);
        let single = |sentence: Vec<String>| TokenStream::new(vec![sentence]);
        for (i, line) in reader.split(b'\n').enumerate() {
            let line = line?;
            let text = std::str::from_utf8(&line).map_err(|e| {
                EmbeddingError::Invalid(format!(
                    "{}: invalid UTF-8 on line {} at column byte {}",
                    self.path.display(),
                    i + 1,
                    e.valid_up_to()
                ))
            })?;
            let tokens = corpus::tokenize_line(text, self.mode);
            if tokens.is_empty() {
                continue;
            }
            let masked = corpus::mask_proper_names(single(tokens), &self.normalization)?;
            for s in masked.sentences() {
                f(s);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub corpus_id: String,
    pub hyperparams: Hyperparams,
    /// Mean loss per (center, context) pair, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

/// A trained model: input vectors (the word embeddings) and output vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub vocab: Arc<Vocabulary>,
    pub input: VectorTable,
    pub output: Vec<f64>,
    pub meta: ModelMeta,
}

impl EmbeddingModel {
    pub fn dim(&self) -> usize {
        self.input.dim()
    }

    pub fn vectors(&self) -> &VectorTable {
        &self.input
    }
}

pub fn train(stream: &TokenStream, vocab: &Arc<Vocabulary>, hp: &Hyperparams) -> Result<EmbeddingModel> {
    train_source(stream, vocab, hp, "corpus")
}

/// Trains a skip-gram negative-sampling model.
///
/// The learning rate decays linearly from `initial_lr` to
/// `initial_lr * MIN_LR_FRACTION` over all epochs, measured in in-vocabulary
/// tokens read. Each center draws its effective window uniformly from
/// `1..=window`; windows stop at sentence boundaries.
pub fn train_source(
    source: &dyn SentenceSource,
    vocab: &Arc<Vocabulary>,
    hp: &Hyperparams,
    corpus_id: &str,
) -> Result<EmbeddingModel> {
    hp.validate()?;
    if vocab.is_empty() {
        return Err(EmbeddingError::EmptyVocabulary);
    }
    let dim = hp.dim;
    let v = vocab.len();

    let mut init_rng = rng::stream(hp.seed, purpose::INIT);
    let half = 0.5 / dim as f64;
    let init: Vec<f64> = (0..v * dim)
        .map(|_| init_rng.random_range(-half..half))
        .collect();
    let words = vocab.entries().iter().map(|e| e.token.clone()).collect();
    let mut input = VectorTable::new(words, dim, init)?;
    let mut output = vec![0.0; v * dim];

    let sampler = NegativeSampler::new(vocab, 0.75)?;
    let mut subsampler = Subsampler::new(vocab, hp.subsample_t, hp.seed)?;
    let mut window_rng = rng::stream(hp.seed, purpose::WINDOW);
    let mut neg_rng = rng::stream(hp.seed, purpose::NEGATIVE);

    let planned = (hp.epochs as f64) * (vocab.retained_tokens() as f64);
    let mut processed = 0u64;
    let mut delta = vec![0.0; dim];
    let mut ids: Vec<usize> = Vec::new();
    let mut epoch_losses = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        let mut loss_sum = 0.0;
        let mut pairs = 0u64;
        source.for_each_sentence(&mut |sentence| {
            ids.clear();
            for tok in sentence {
                if let Some(id) = vocab.id(tok) {
                    processed += 1;
                    if subsampler.keep(id) {
                        ids.push(id);
                    }
                }
            }
            let progress = (processed as f64 / planned).min(1.0);
            let lr = hp.initial_lr * (1.0 - (1.0 - MIN_LR_FRACTION) * progress);
            let data = input.data_mut();
            for pos in 0..ids.len() {
                let center = ids[pos];
                let reach = window_rng.random_range(1..=hp.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(ids.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = ids[ctx_pos];
                    delta.fill(0.0);
                    let center_vec = &data[center * dim..(center + 1) * dim];
                    let mut loss = sgns::update_output(
                        center_vec,
                        &mut output[context * dim..(context + 1) * dim],
                        true,
                        lr,
                        &mut delta,
                    );
                    for _ in 0..hp.negatives {
                        let neg = sampler.sample(&mut neg_rng);
                        if neg == context {
                            continue;
                        }
                        loss += sgns::update_output(
                            center_vec,
                            &mut output[neg * dim..(neg + 1) * dim],
                            false,
                            lr,
                            &mut delta,
                        );
                    }
                    for (c, d) in data[center * dim..(center + 1) * dim].iter_mut().zip(&delta) {
                        *c += d;
                    }
                    loss_sum += loss;
                    pairs += 1;
                }
            }
        })?;
        let mean = if pairs > 0 { loss_sum / pairs as f64 } else { 0.0 };
        log::info!("{corpus_id} seed {} epoch {}: mean loss {mean:.6}", hp.seed, epoch + 1);
        epoch_losses.push(mean);
    }

    if !input.all_finite() || !output.iter().all(|x| x.is_finite()) {
        return Err(EmbeddingError::Invalid("training diverged to non-finite values".into()));
    }
    Ok(EmbeddingModel {
        vocab: Arc::clone(vocab),
        input,
        output,
        meta: ModelMeta {
            corpus_id: corpus_id.to_owned(),
            hyperparams: hp.clone(),
            epoch_losses,
        },
    })
}
