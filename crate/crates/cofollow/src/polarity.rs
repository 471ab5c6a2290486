//! Political-orientation scoring along an anchored axis, rank evaluation
//! against gold scores, and the follower-count reliability filter.
//!
//! The PO score of an entity is the cosine similarity to the Republican
//! anchor minus the cosine similarity to the Democratic anchor; positive
//! means conservative-leaning.

use std::collections::HashMap;

use thiserror::Error;

use crate::attributes::fractional_ranks;
use crate::store::{cosine_similarity, EmbeddingStore, StoreError};

#[derive(Debug, Error)]
pub enum PolarityError {
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("entity `{0}` has a zero-norm vector")]
    ZeroNorm(String),
    #[error("anchors must be two distinct entities")]
    IdenticalAnchors,
    #[error("entities missing from the store: {0}")]
    MissingEntities(String),
    #[error("rankings have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 values to rank")]
    TooShort,
    #[error("ranking has zero variance")]
    ZeroVariance,
    #[error("no gold sign for entity `{0}`")]
    MissingGold(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// One scored entity; `n_followers` is its context count in the training
/// corpus (zero when no counts were supplied).
#[derive(Debug, Clone, PartialEq)]
pub struct PolarityResult {
    pub entity_id: String,
    pub po_score: f64,
    pub n_followers: u64,
}

fn vector_checked<'s>(
    store: &'s EmbeddingStore,
    entity_id: &str,
) -> Result<&'s [f64], PolarityError> {
    let v = store
        .vector(entity_id)
        .ok_or_else(|| PolarityError::UnknownEntity(entity_id.to_string()))?;
    if v.iter().all(|&x| x == 0.0) {
        return Err(PolarityError::ZeroNorm(entity_id.to_string()));
    }
    Ok(v)
}

/// `cos(e_R, e_n) - cos(e_D, e_n)`: positive scores lean Republican,
/// negative lean Democratic.
pub fn political_orientation(
    store: &EmbeddingStore,
    entity_id: &str,
    anchor_r: &str,
    anchor_d: &str,
) -> Result<f64, PolarityError> {
    if anchor_r == anchor_d {
        return Err(PolarityError::IdenticalAnchors);
    }
    let e_n = vector_checked(store, entity_id)?;
    let e_r = vector_checked(store, anchor_r)?;
    let e_d = vector_checked(store, anchor_d)?;
    Ok(cosine_similarity(e_r, e_n)? - cosine_similarity(e_d, e_n)?)
}

/// Scores every requested entity and returns the list sorted by descending
/// PO score, ties broken by entity id. Entities absent from the store are an
/// error naming all of them; duplicates in the input are collapsed.
/// `follower_counts` supplies the per-entity context counts (missing -> 0).
pub fn rank_by_po(
    store: &EmbeddingStore,
    entities: &[String],
    anchor_r: &str,
    anchor_d: &str,
    follower_counts: &HashMap<String, u64>,
) -> Result<Vec<PolarityResult>, PolarityError> {
    let mut missing: Vec<&str> = entities
        .iter()
        .filter(|id| !store.contains(id))
        .map(|id| id.as_str())
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(PolarityError::MissingEntities(missing.join(", ")));
    }
    let mut seen = std::collections::HashSet::new();
    let mut results = Vec::new();
    for entity_id in entities {
        if !seen.insert(entity_id.as_str()) {
            continue;
        }
        results.push(PolarityResult {
            entity_id: entity_id.clone(),
            po_score: political_orientation(store, entity_id, anchor_r, anchor_d)?,
            n_followers: follower_counts.get(entity_id).copied().unwrap_or(0),
        });
    }
    results.sort_by(|a, b| {
        b.po_score
            .total_cmp(&a.po_score)
            .then_with(|| a.entity_id.cmp(&b.entity_id))
    });
    Ok(results)
}

/// Spearman's rank correlation: Pearson correlation of fractional ranks,
/// ties assigned mean ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, PolarityError> {
    if a.len() != b.len() {
        return Err(PolarityError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(PolarityError::TooShort);
    }
    let ranks_a = fractional_ranks(a);
    let ranks_b = fractional_ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (ra, rb) in ranks_a.iter().zip(&ranks_b) {
        let da = ra - mean;
        let db = rb - mean;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(PolarityError::ZeroVariance);
    }
    Ok(cov / (var_a.sqrt() * var_b.sqrt()))
}

/// Binary polarity evaluation outcome. Zero PO scores have no sign; they
/// count as wrong and are reported separately.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryAccuracy {
    pub accuracy: f64,
    pub n_correct: usize,
    pub n_total: usize,
    pub n_unclassified: usize,
}

/// Fraction of entities whose PO sign matches the gold sign (+1 or -1).
/// Every scored entity must have a gold entry.
pub fn binary_polarity_accuracy(
    results: &[PolarityResult],
    gold_signs: &HashMap<String, i8>,
) -> Result<BinaryAccuracy, PolarityError> {
    let mut n_correct = 0;
    let mut n_unclassified = 0;
    for result in results {
        let &sign = gold_signs
            .get(&result.entity_id)
            .ok_or_else(|| PolarityError::MissingGold(result.entity_id.clone()))?;
        if result.po_score == 0.0 {
            n_unclassified += 1;
        } else if (result.po_score > 0.0 && sign > 0) || (result.po_score < 0.0 && sign < 0) {
            n_correct += 1;
        }
    }
    Ok(BinaryAccuracy {
        accuracy: if results.is_empty() {
            0.0
        } else {
            n_correct as f64 / results.len() as f64
        },
        n_correct,
        n_total: results.len(),
        n_unclassified,
    })
}

/// Keeps entities whose training-corpus context count reaches
/// `min_followers`; low-context embeddings are unreliable.
pub fn reliability_filter(
    results: Vec<PolarityResult>,
    min_followers: u64,
) -> Vec<PolarityResult> {
    results
        .into_iter()
        .filter(|r| r.n_followers >= min_followers)
        .collect()
}
