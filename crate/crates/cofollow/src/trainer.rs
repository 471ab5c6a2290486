//! Skip-gram / CBOW trainer with negative sampling over co-follow sets.
//!
//! Contexts are whole sets: for every user, each ordered pair of retained
//! entities yields one skip-gram update, or each retained entity is predicted
//! from the rest of the set under CBOW. Both vector tables live in atomic
//! cells so multiple workers can update them without locking; lost updates
//! are tolerated in that regime and bit-exact reproducibility is guaranteed
//! for `workers = 1`.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{keep_probability, ContextCorpus, Vocabulary};
use crate::store::{EmbeddingStore, StoreError};
use crate::util::{log_sigmoid, seeded_rng, sigmoid};

/// Exponent applied to unigram counts when building the noise distribution.
pub const NEGATIVE_EXPONENT: f64 = 0.75;

// Stream tags for deriving independent RNG streams from one seed.
const STREAM_INIT: u64 = 0x01;
const STREAM_ORDER: u64 = 0x02;
const STREAM_WORKER: u64 = 0x03;
const STREAM_SAMPLER: u64 = 0x04;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("entity count at index {0} is zero")]
    ZeroCount(usize),
    #[error("index {index} out of range for vocabulary of {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("focus and context must differ (both {0})")]
    SelfPair(usize),
    #[error("context set is empty")]
    EmptyContext,
    #[error("focus {0} appears in its own context set")]
    FocusInContext(usize),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Skipgram,
    Cbow,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "skipgram" => Ok(Variant::Skipgram),
            "cbow" => Ok(Variant::Cbow),
            other => Err(format!("unknown variant `{other}`, expected skipgram|cbow")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Skipgram => "skipgram",
            Variant::Cbow => "cbow",
        })
    }
}

/// All learning hyperparameters. Defaults reproduce the reference
/// configuration: 100 dimensions, 20 negatives, subsample threshold 1e-5,
/// learning rate 0.03 decaying linearly to 7e-5, 5 epochs.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub dim: usize,
    pub negatives: usize,
    /// Context window cap. Co-follow sets are modeled whole, so any value at
    /// least as large as the corpus `max_follows` means "the entire set";
    /// the trainer never truncates.
    pub window: usize,
    /// Subsample threshold `t`; occurrences of an entity with frequency
    /// fraction `f` are kept with probability `min(1, sqrt(t/f))`.
    /// `f64::INFINITY` disables subsampling.
    pub subsample: f64,
    pub lr_initial: f64,
    pub lr_min: f64,
    pub epochs: usize,
    pub seed: u64,
    pub workers: usize,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            negatives: 20,
            window: 1000,
            subsample: 1e-5,
            lr_initial: 0.03,
            lr_min: 7e-5,
            epochs: 5,
            seed: 42,
            workers: 1,
            variant: Variant::Skipgram,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.dim == 0 {
            return Err(TrainError::InvalidConfig("dim must be >= 1".into()));
        }
        if self.negatives == 0 {
            return Err(TrainError::InvalidConfig("negatives must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(TrainError::InvalidConfig("workers must be >= 1".into()));
        }
        if !(self.lr_initial > 0.0) {
            return Err(TrainError::InvalidConfig("lr_initial must be > 0".into()));
        }
        if !(self.lr_min > 0.0 && self.lr_min < self.lr_initial) {
            return Err(TrainError::InvalidConfig(
                "lr_min must satisfy 0 < lr_min < lr_initial".into(),
            ));
        }
        if !(self.subsample > 0.0) {
            return Err(TrainError::InvalidConfig("subsample must be > 0".into()));
        }
        Ok(())
    }
}

/// f64 cell updatable without locking. Writes are atomic bit stores, so a
/// concurrent reader never sees a torn value; read-modify-write updates may
/// lose concurrent increments, which the training regime tolerates.
struct Cell(AtomicU64);

impl Cell {
    fn zero() -> Self {
        Cell(AtomicU64::new(0.0f64.to_bits()))
    }

    #[inline]
    fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }

    #[inline]
    fn set(&self, v: f64) {
        self.0.store(v.to_bits(), Ordering::Relaxed)
    }

    #[inline]
    fn add(&self, d: f64) {
        self.set(self.get() + d)
    }
}

struct VectorTable {
    cells: Vec<Cell>,
    dim: usize,
}

impl VectorTable {
    fn zeros(rows: usize, dim: usize) -> Self {
        let mut cells = Vec::with_capacity(rows * dim);
        cells.resize_with(rows * dim, Cell::zero);
        VectorTable { cells, dim }
    }

    #[inline]
    fn row(&self, i: usize) -> &[Cell] {
        &self.cells[i * self.dim..(i + 1) * self.dim]
    }

    fn row_values(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(Cell::get).collect()
    }

    fn set_row(&self, i: usize, values: &[f64]) {
        assert_eq!(values.len(), self.dim);
        for (cell, &v) in self.row(i).iter().zip(values) {
            cell.set(v);
        }
    }

    fn bits(&self) -> Vec<u64> {
        self.cells.iter().map(|c| c.0.load(Ordering::Relaxed)).collect()
    }
}

fn dot_cells(a: &[Cell], b: &[Cell]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.get() * y.get()).sum()
}

/// Paired target and context vector tables over the vocabulary. Published
/// embeddings are the target vectors.
pub struct EmbeddingModel {
    target: VectorTable,
    context: VectorTable,
    vocab_size: usize,
    dim: usize,
}

impl EmbeddingModel {
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn target_vector(&self, i: usize) -> Vec<f64> {
        self.target.row_values(i)
    }

    pub fn context_vector(&self, i: usize) -> Vec<f64> {
        self.context.row_values(i)
    }

    pub fn set_target_vector(&self, i: usize, values: &[f64]) {
        self.target.set_row(i, values);
    }

    pub fn set_context_vector(&self, i: usize, values: &[f64]) {
        self.context.set_row(i, values);
    }

    pub fn all_finite(&self) -> bool {
        self.target.cells.iter().all(|c| c.get().is_finite())
            && self.context.cells.iter().all(|c| c.get().is_finite())
    }

    fn check_index(&self, index: usize) -> Result<(), TrainError> {
        if index >= self.vocab_size {
            Err(TrainError::IndexOutOfRange {
                index,
                size: self.vocab_size,
            })
        } else {
            Ok(())
        }
    }
}

impl Clone for EmbeddingModel {
    fn clone(&self) -> Self {
        let clone_table = |t: &VectorTable| VectorTable {
            cells: t
                .cells
                .iter()
                .map(|c| Cell(AtomicU64::new(c.0.load(Ordering::Relaxed))))
                .collect(),
            dim: t.dim,
        };
        EmbeddingModel {
            target: clone_table(&self.target),
            context: clone_table(&self.context),
            vocab_size: self.vocab_size,
            dim: self.dim,
        }
    }
}

impl PartialEq for EmbeddingModel {
    /// Bit-level equality of both tables.
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.vocab_size == other.vocab_size
            && self.target.bits() == other.target.bits()
            && self.context.bits() == other.context.bits()
    }
}

impl std::fmt::Debug for EmbeddingModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingModel")
            .field("vocab_size", &self.vocab_size)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

/// Initializes target vectors i.i.d. uniform in [-0.5/d, +0.5/d] and context
/// vectors at zero, deterministically under `seed`.
pub fn init_model(vocab_size: usize, dim: usize, seed: u64) -> EmbeddingModel {
    assert!(vocab_size >= 1, "vocab_size must be >= 1");
    assert!(dim >= 1, "dim must be >= 1");
    let mut rng = seeded_rng(seed, &[STREAM_INIT]);
    let target = VectorTable::zeros(vocab_size, dim);
    for cell in &target.cells {
        cell.set((rng.random::<f64>() - 0.5) / dim as f64);
    }
    EmbeddingModel {
        target,
        context: VectorTable::zeros(vocab_size, dim),
        vocab_size,
        dim,
    }
}

/// Noise distribution over vocabulary indices: P(i) proportional to
/// count_i^alpha.
pub struct NegativeSampler {
    counts: Vec<u64>,
    cumulative: Vec<f64>,
    total: f64,
    rng: ChaCha8Rng,
}

impl NegativeSampler {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn probability(&self, index: usize) -> f64 {
        let prev = if index == 0 {
            0.0
        } else {
            self.cumulative[index - 1]
        };
        (self.cumulative[index] - prev) / self.total
    }

    /// Draws one index using the sampler's own seeded state.
    pub fn draw(&mut self) -> usize {
        let u: f64 = self.rng.random();
        self.locate(u * self.total)
    }

    /// Draws one index using an externally owned stream; the sampler itself
    /// is only read, so concurrent workers may share it.
    pub fn draw_with<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.locate(u * self.total)
    }

    fn locate(&self, point: f64) -> usize {
        self.cumulative
            .partition_point(|&c| c <= point)
            .min(self.counts.len() - 1)
    }
}

/// Builds the negative-sampling table from per-entity counts raised to
/// `alpha`. All counts must be positive.
pub fn build_negative_table(
    vocab_counts: &[u64],
    alpha: f64,
    seed: u64,
) -> Result<NegativeSampler, TrainError> {
    if vocab_counts.is_empty() {
        return Err(TrainError::EmptyVocabulary);
    }
    let mut cumulative = Vec::with_capacity(vocab_counts.len());
    let mut total = 0.0;
    for (i, &count) in vocab_counts.iter().enumerate() {
        if count == 0 {
            return Err(TrainError::ZeroCount(i));
        }
        total += (count as f64).powf(alpha);
        cumulative.push(total);
    }
    Ok(NegativeSampler {
        counts: vocab_counts.to_vec(),
        cumulative,
        total,
        rng: seeded_rng(seed, &[STREAM_SAMPLER]),
    })
}

/// Loss of one (focus, context) pair against the given negatives, without
/// touching the model:
/// `-log sigmoid(u_i . v_j) - sum_k log sigmoid(-u_i . v_k)`.
pub fn sgns_pair_loss(
    model: &EmbeddingModel,
    focus: usize,
    context: usize,
    negatives: &[usize],
) -> Result<f64, TrainError> {
    model.check_index(focus)?;
    model.check_index(context)?;
    if focus == context {
        return Err(TrainError::SelfPair(focus));
    }
    let u = model.target.row(focus);
    let mut loss = -log_sigmoid(dot_cells(u, model.context.row(context)));
    for &neg in negatives {
        model.check_index(neg)?;
        loss -= log_sigmoid(-dot_cells(u, model.context.row(neg)));
    }
    Ok(loss)
}

/// One skip-gram SGD step: the gradients of the pair loss are applied to the
/// focus target vector, the context vector, and each negative's context
/// vector, all evaluated at the pre-update parameters. Returns the pre-update
/// loss.
pub fn sgns_pair_update(
    model: &EmbeddingModel,
    focus: usize,
    context: usize,
    negatives: &[usize],
    lr: f64,
) -> Result<f64, TrainError> {
    model.check_index(focus)?;
    model.check_index(context)?;
    if focus == context {
        return Err(TrainError::SelfPair(focus));
    }
    for &neg in negatives {
        model.check_index(neg)?;
    }
    let dim = model.dim;
    let u = model.target.row(focus);
    let mut u_grad = vec![0.0; dim];
    let mut loss = 0.0;
    {
        let v = model.context.row(context);
        let x = dot_cells(u, v);
        loss -= log_sigmoid(x);
        let g = sigmoid(x) - 1.0;
        for k in 0..dim {
            u_grad[k] += g * v[k].get();
            v[k].add(-lr * g * u[k].get());
        }
    }
    for &neg in negatives {
        let v = model.context.row(neg);
        let x = dot_cells(u, v);
        loss -= log_sigmoid(-x);
        let g = sigmoid(x);
        for k in 0..dim {
            u_grad[k] += g * v[k].get();
            v[k].add(-lr * g * u[k].get());
        }
    }
    for k in 0..dim {
        u[k].add(-lr * u_grad[k]);
    }
    Ok(loss)
}

/// CBOW loss for predicting `focus` from the mean of the context vectors
/// over `context_set`, without touching the model.
pub fn cbow_loss(
    model: &EmbeddingModel,
    context_set: &[usize],
    focus: usize,
    negatives: &[usize],
) -> Result<f64, TrainError> {
    let h = cbow_hidden(model, context_set, focus)?;
    let mut loss = -log_sigmoid(dot_mixed(&h, model.target.row(focus)));
    for &neg in negatives {
        model.check_index(neg)?;
        loss -= log_sigmoid(-dot_mixed(&h, model.target.row(neg)));
    }
    Ok(loss)
}

/// One CBOW SGD step: gradients go to the target vectors of the focus and
/// negatives, and, scaled by 1/|C|, to every context vector in the set.
/// Returns the pre-update loss.
pub fn cbow_update(
    model: &EmbeddingModel,
    context_set: &[usize],
    focus: usize,
    negatives: &[usize],
    lr: f64,
) -> Result<f64, TrainError> {
    let h = cbow_hidden(model, context_set, focus)?;
    for &neg in negatives {
        model.check_index(neg)?;
    }
    let dim = model.dim;
    let mut h_grad = vec![0.0; dim];
    let mut loss = 0.0;
    {
        let u = model.target.row(focus);
        let x = dot_mixed(&h, u);
        loss -= log_sigmoid(x);
        let g = sigmoid(x) - 1.0;
        for k in 0..dim {
            h_grad[k] += g * u[k].get();
            u[k].add(-lr * g * h[k]);
        }
    }
    for &neg in negatives {
        let u = model.target.row(neg);
        let x = dot_mixed(&h, u);
        loss -= log_sigmoid(-x);
        let g = sigmoid(x);
        for k in 0..dim {
            h_grad[k] += g * u[k].get();
            u[k].add(-lr * g * h[k]);
        }
    }
    let scale = lr / context_set.len() as f64;
    for &c in context_set {
        let v = model.context.row(c);
        for k in 0..dim {
            v[k].add(-scale * h_grad[k]);
        }
    }
    Ok(loss)
}

fn cbow_hidden(
    model: &EmbeddingModel,
    context_set: &[usize],
    focus: usize,
) -> Result<Vec<f64>, TrainError> {
    if context_set.is_empty() {
        return Err(TrainError::EmptyContext);
    }
    model.check_index(focus)?;
    if context_set.contains(&focus) {
        return Err(TrainError::FocusInContext(focus));
    }
    let dim = model.dim;
    let mut h = vec![0.0; dim];
    for &c in context_set {
        model.check_index(c)?;
        for (acc, cell) in h.iter_mut().zip(model.context.row(c)) {
            *acc += cell.get();
        }
    }
    let inv = 1.0 / context_set.len() as f64;
    for v in &mut h {
        *v *= inv;
    }
    Ok(h)
}

fn dot_mixed(a: &[f64], b: &[Cell]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y.get()).sum()
}

/// Linear decay from `lr_initial` at progress 0 to `lr_min` at progress 1.
/// Progress is measured in processed tokens over `epochs * total_tokens`.
pub fn lr_schedule(progress: f64, config: &TrainConfig) -> f64 {
    debug_assert!((0.0..=1.0).contains(&progress));
    config.lr_initial + progress * (config.lr_min - config.lr_initial)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    pub epoch: usize,
    pub pairs_processed: u64,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

/// One pass over every user set. Per set: each entity occurrence is dropped
/// with probability `1 - keep_probability(f, t)`, the retained entities are
/// shuffled, and every ordered pair (skip-gram) or every focus against the
/// rest of the set (CBOW) yields one update.
pub fn train_epoch(
    model: &EmbeddingModel,
    corpus: &ContextCorpus,
    sampler: &NegativeSampler,
    config: &TrainConfig,
    epoch_index: usize,
) -> Result<TrainStats, TrainError> {
    config.validate()?;
    if sampler.len() != model.vocab_size {
        return Err(TrainError::IndexOutOfRange {
            index: sampler.len(),
            size: model.vocab_size,
        });
    }
    let start = Instant::now();
    if corpus.user_sets.is_empty() {
        return Ok(TrainStats {
            epoch: epoch_index,
            pairs_processed: 0,
            mean_loss: 0.0,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    for set in &corpus.user_sets {
        for &e in set {
            model.check_index(e)?;
        }
    }

    let total_tokens = corpus.total_tokens;
    let keep: Vec<f64> = sampler
        .counts()
        .iter()
        .map(|&c| keep_probability(c as f64 / total_tokens as f64, config.subsample))
        .collect::<Result<_, _>>()?;

    let mut order: Vec<usize> = (0..corpus.user_sets.len()).collect();
    order.shuffle(&mut seeded_rng(config.seed, &[STREAM_ORDER, epoch_index as u64]));

    let tokens_done = AtomicUsize::new(0);
    let workers = config.workers.min(order.len());
    let run_worker = |worker: usize, chunk: &[usize]| -> Result<(u64, f64), TrainError> {
        let mut rng = seeded_rng(
            config.seed,
            &[STREAM_WORKER, worker as u64, epoch_index as u64],
        );
        let mut retained: Vec<usize> = Vec::new();
        let mut negatives: Vec<usize> = Vec::new();
        let mut pairs = 0u64;
        let mut loss_sum = 0.0;
        let planned = (config.epochs * total_tokens) as f64;
        for &set_idx in chunk {
            let set = &corpus.user_sets[set_idx];
            let done = tokens_done.load(Ordering::Relaxed);
            let progress = (epoch_index * total_tokens + done) as f64 / planned;
            let lr = lr_schedule(progress.min(1.0), config);
            retained.clear();
            retained.extend(set.iter().copied().filter(|&e| rng.random::<f64>() < keep[e]));
            retained.shuffle(&mut rng);
            match config.variant {
                Variant::Skipgram => {
                    for i in 0..retained.len() {
                        for j in 0..retained.len() {
                            if i == j {
                                continue;
                            }
                            let (focus, context) = (retained[i], retained[j]);
                            draw_negatives(sampler, &mut rng, config.negatives, &mut negatives, |n| {
                                n == focus || n == context
                            });
                            loss_sum += sgns_pair_update(model, focus, context, &negatives, lr)?;
                            pairs += 1;
                        }
                    }
                }
                Variant::Cbow => {
                    for i in 0..retained.len() {
                        let focus = retained[i];
                        let context: Vec<usize> = retained
                            .iter()
                            .copied()
                            .enumerate()
                            .filter_map(|(j, e)| (j != i).then_some(e))
                            .collect();
                        if context.is_empty() {
                            continue;
                        }
                        draw_negatives(sampler, &mut rng, config.negatives, &mut negatives, |n| {
                            n == focus || context.contains(&n)
                        });
                        loss_sum += cbow_update(model, &context, focus, &negatives, lr)?;
                        pairs += 1;
                    }
                }
            }
            tokens_done.fetch_add(set.len(), Ordering::Relaxed);
        }
        Ok((pairs, loss_sum))
    };

    let results: Vec<Result<(u64, f64), TrainError>> = if workers <= 1 {
        vec![run_worker(0, &order)]
    } else {
        let chunks: Vec<&[usize]> = split_chunks(&order, workers);
        std::thread::scope(|scope| {
            let run_worker = &run_worker;
            let handles: Vec<_> = chunks
                .into_iter()
                .enumerate()
                .map(|(w, chunk)| scope.spawn(move || run_worker(w, chunk)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training worker panicked"))
                .collect()
        })
    };

    let mut pairs_total = 0u64;
    let mut loss_total = 0.0;
    for result in results {
        let (pairs, loss) = result?;
        pairs_total += pairs;
        loss_total += loss;
    }
    Ok(TrainStats {
        epoch: epoch_index,
        pairs_processed: pairs_total,
        mean_loss: if pairs_total > 0 {
            loss_total / pairs_total as f64
        } else {
            0.0
        },
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn split_chunks<'a>(order: &'a [usize], workers: usize) -> Vec<&'a [usize]> {
    let n = order.len();
    (0..workers)
        .map(|w| &order[w * n / workers..(w + 1) * n / workers])
        .filter(|chunk| !chunk.is_empty())
        .collect()
}

/// Negatives are drawn from the noise distribution, re-drawing any that
/// collide with the focus or the true context. The re-draw count is capped
/// so that tiny vocabularies cannot livelock; a collision is then accepted.
fn draw_negatives<R: Rng>(
    sampler: &NegativeSampler,
    rng: &mut R,
    n: usize,
    out: &mut Vec<usize>,
    forbidden: impl Fn(usize) -> bool,
) {
    out.clear();
    for _ in 0..n {
        let mut pick = sampler.draw_with(rng);
        let mut attempts = 0;
        while forbidden(pick) && attempts < 64 {
            pick = sampler.draw_with(rng);
            attempts += 1;
        }
        out.push(pick);
    }
}

/// Full training run: init, negative table, then `epochs` passes with the
/// linear learning-rate schedule. User-set visitation order is reshuffled
/// every epoch under the seed. Published embeddings are the target vectors.
pub fn train(
    corpus: &ContextCorpus,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<(EmbeddingModel, Vec<TrainStats>), TrainError> {
    config.validate()?;
    if vocab.is_empty() {
        return Err(TrainError::EmptyVocabulary);
    }
    let model = init_model(vocab.len(), config.dim, config.seed);
    let sampler = build_negative_table(&vocab.follower_counts(), NEGATIVE_EXPONENT, config.seed)?;
    let mut stats = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        stats.push(train_epoch(&model, corpus, &sampler, config, epoch)?);
    }
    Ok((model, stats))
}

/// Packages the published (target) vectors as an embedding store in
/// vocabulary order.
pub fn published_store(
    model: &EmbeddingModel,
    vocab: &Vocabulary,
) -> Result<EmbeddingStore, StoreError> {
    let rows = vocab
        .entries()
        .iter()
        .map(|e| (e.entity_id.clone(), model.target_vector(e.index)))
        .collect();
    EmbeddingStore::from_rows(rows, model.dim())
}
