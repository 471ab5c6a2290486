//! Binary socio-demographic attribute prediction from averaged followed-
//! entity embeddings, ROC AUC evaluation, and PMI ranking of
//! class-distinctive accounts.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::corpus::Vocabulary;
use crate::store::EmbeddingStore;
use crate::util::{log_sigmoid, seeded_rng, sigmoid};

const STREAM_SPLIT: u64 = 0x10;
const STREAM_SGD: u64 = 0x11;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("user follows no entity present in the store")]
    NoRepresentableEntities,
    #[error("both classes must be present")]
    SingleClass,
    #[error("class {class} has {count} examples, need at least 2")]
    TooFewExamples { class: u8, count: usize },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("feature dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-finite feature value")]
    NonFiniteFeature,
    #[error("class {0} has no labeled users")]
    EmptyClass(u8),
    #[error("scores and labels have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label {0} is not binary")]
    NonBinaryLabel(u8),
}

/// One labeled user: the entities they follow and a binary attribute value.
#[derive(Debug, Clone)]
pub struct LabeledUser {
    pub user_id: String,
    pub followed_entities: Vec<String>,
    pub label: u8,
}

/// Single-sigmoid-unit logistic regression model.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Optimizer settings for [`train_logreg`]; plain SGD from zero
/// initialization.
#[derive(Debug, Clone)]
pub struct LogRegConfig {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            epochs: 100,
            lr: 0.05,
        }
    }
}

/// Arithmetic mean of the embeddings of the user's followed entities that
/// are present in the store; absent entities are ignored. Summation runs in
/// a canonical order so the result is exactly permutation-invariant.
pub fn user_vector(
    followed_entities: &[String],
    store: &EmbeddingStore,
) -> Result<Vec<f64>, EvalError> {
    let mut present: Vec<&[f64]> = Vec::new();
    let mut keys: Vec<&str> = followed_entities
        .iter()
        .map(|s| s.as_str())
        .filter(|id| store.contains(id))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    for id in keys {
        present.push(store.vector(id).expect("checked above"));
    }
    if present.is_empty() {
        return Err(EvalError::NoRepresentableEntities);
    }
    let mut mean = vec![0.0; store.dim()];
    for row in &present {
        for (acc, v) in mean.iter_mut().zip(*row) {
            *acc += v;
        }
    }
    let inv = 1.0 / present.len() as f64;
    for v in &mut mean {
        *v *= inv;
    }
    Ok(mean)
}

/// Splits example indices into train and test per class: each class is
/// shuffled under the seed and cut at `floor(train_fraction * n_class)`, so
/// class proportions on both sides match the whole within one example.
pub fn split_stratified(
    labels: &[u8],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::InvalidFraction(train_fraction));
    }
    for &label in labels {
        if label > 1 {
            return Err(EvalError::NonBinaryLabel(label));
        }
    }
    let mut rng = seeded_rng(seed, &[STREAM_SPLIT]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class).then_some(i))
            .collect();
        if members.len() < 2 {
            return Err(EvalError::TooFewExamples {
                class,
                count: members.len(),
            });
        }
        members.shuffle(&mut rng);
        let cut = (train_fraction * members.len() as f64).floor() as usize;
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    Ok((train, test))
}

/// Mean binary cross-entropy of the model over a dataset.
pub fn mean_bce(model: &LogRegModel, features: &[Vec<f64>], labels: &[u8]) -> f64 {
    let n = features.len() as f64;
    features
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let z = logit(model, x);
            if y == 1 {
                -log_sigmoid(z)
            } else {
                -log_sigmoid(-z)
            }
        })
        .sum::<f64>()
        / n
}

fn logit(model: &LogRegModel, x: &[f64]) -> f64 {
    model.bias + model.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
}

/// Trains logistic regression by per-example SGD on binary cross-entropy,
/// shuffling the example order every epoch under the seed, from zero
/// initialization.
pub fn train_logreg(
    features: &[Vec<f64>],
    labels: &[u8],
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<LogRegModel, EvalError> {
    if features.len() != labels.len() {
        return Err(EvalError::LengthMismatch(features.len(), labels.len()));
    }
    if !labels.iter().any(|&l| l == 0) || !labels.iter().any(|&l| l == 1) {
        return Err(EvalError::SingleClass);
    }
    let dim = features.first().map(|f| f.len()).unwrap_or(0);
    for feature in features {
        if feature.len() != dim {
            return Err(EvalError::DimensionMismatch(dim, feature.len()));
        }
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFiniteFeature);
        }
    }
    let mut model = LogRegModel {
        weights: vec![0.0; dim],
        bias: 0.0,
    };
    let mut rng = seeded_rng(seed, &[STREAM_SGD]);
    let mut order: Vec<usize> = (0..features.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &features[i];
            let p = sigmoid(logit(&model, x));
            let g = p - labels[i] as f64;
            for (w, v) in model.weights.iter_mut().zip(x) {
                *w -= lr * g * v;
            }
            model.bias -= lr * g;
        }
    }
    Ok(model)
}

/// Predicted probability of the positive class: `sigmoid(w . x + b)`.
pub fn predict_proba(model: &LogRegModel, x: &[f64]) -> Result<f64, EvalError> {
    if x.len() != model.weights.len() {
        return Err(EvalError::DimensionMismatch(model.weights.len(), x.len()));
    }
    Ok(sigmoid(logit(model, x)))
}

/// ROC AUC as the probability that a random positive outscores a random
/// negative, ties counted one half (rank / Mann-Whitney definition).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    for &label in labels {
        if label > 1 {
            return Err(EvalError::NonBinaryLabel(label));
        }
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let ranks = fractional_ranks(scores);
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter_map(|(&r, &l)| (l == 1).then_some(r))
        .sum();
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Ranks 1..=n with tied values assigned the mean rank of their group.
pub(crate) fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Mean of ranks i+1 ..= j+1.
        let mean = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean;
        }
        i = j + 1;
    }
    ranks
}

/// Top-k accounts most distinctive of `class` by pointwise mutual
/// information over the labeled users:
/// `PMI(a, c) = ln( P(follow a, class c) / (P(follow a) * P(class c)) )`,
/// with probabilities as empirical fractions. Accounts followed by fewer
/// than `min_count` users of the class are excluded.
pub fn pmi_top_accounts(
    users: &[LabeledUser],
    vocab: &Vocabulary,
    class: u8,
    min_count: usize,
    top_k: usize,
) -> Result<Vec<(String, f64)>, EvalError> {
    if class > 1 {
        return Err(EvalError::NonBinaryLabel(class));
    }
    let n = users.len() as u64;
    let n_class = users.iter().filter(|u| u.label == class).count() as u64;
    if n_class == 0 {
        return Err(EvalError::EmptyClass(class));
    }
    let mut follows: HashMap<usize, (u64, u64)> = HashMap::new(); // entity -> (n_a, n_ac)
    for user in users {
        let mut seen = HashSet::new();
        for entity in &user.followed_entities {
            if let Some(idx) = vocab.index_of(entity) {
                if seen.insert(idx) {
                    let counter = follows.entry(idx).or_insert((0, 0));
                    counter.0 += 1;
                    if user.label == class {
                        counter.1 += 1;
                    }
                }
            }
        }
    }
    let mut ranked: Vec<(String, f64)> = follows
        .into_iter()
        .filter(|&(_, (_, n_ac))| n_ac as usize >= min_count)
        .map(|(idx, (n_a, n_ac))| {
            let pmi = ((n * n_ac) as f64 / (n_a * n_class) as f64).ln();
            (vocab.entity_id(idx).to_string(), pmi)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    Ok(ranked)
}

/// Outcome of one attribute evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeEvaluation {
    pub auc: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Users with no representable entities, excluded before the split.
    pub n_excluded: usize,
}

/// Full attribute pipeline: average user vectors, stratified 80/20-style
/// split, logistic regression, ROC AUC on the held-out side. Users with no
/// representable entities are excluded and counted.
pub fn evaluate_attribute(
    users: &[LabeledUser],
    store: &EmbeddingStore,
    split_seed: u64,
    train_fraction: f64,
    config: &LogRegConfig,
) -> Result<AttributeEvaluation, EvalError> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut n_excluded = 0;
    for user in users {
        match user_vector(&user.followed_entities, store) {
            Ok(v) => {
                features.push(v);
                labels.push(user.label);
            }
            Err(EvalError::NoRepresentableEntities) => n_excluded += 1,
            Err(other) => return Err(other),
        }
    }
    let (train_idx, test_idx) = split_stratified(&labels, train_fraction, split_seed)?;
    let train_features: Vec<Vec<f64>> = train_idx.iter().map(|&i| features[i].clone()).collect();
    let train_labels: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
    let model = train_logreg(
        &train_features,
        &train_labels,
        config.epochs,
        config.lr,
        split_seed,
    )?;
    let mut scores = Vec::with_capacity(test_idx.len());
    let mut test_labels = Vec::with_capacity(test_idx.len());
    for &i in &test_idx {
        scores.push(predict_proba(&model, &features[i])?);
        test_labels.push(labels[i]);
    }
    Ok(AttributeEvaluation {
        auc: roc_auc(&scores, &test_labels)?,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        n_excluded,
    })
}
