//! Follow-record parsing, popularity-thresholded vocabulary construction, and
//! context-set encoding.
//!
//! The corpus is a bipartite user -> followee relation. Training contexts are
//! the sets of in-vocabulary accounts each user follows; users are treated as
//! anonymous samples of social context and carry no features of their own.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid frequency fraction {0}: must be positive")]
    InvalidFrequency(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One user mapped to the distinct accounts they follow.
///
/// `followees` preserves first-occurrence order from the input; duplicates
/// are collapsed at parse time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FollowRecord {
    pub user_id: String,
    pub followees: Vec<String>,
}

/// Parses the follow-records text format: one record per line,
/// `user_id<TAB>followee( followee)*`. Blank lines are skipped and lines
/// starting with `#` are comments.
pub fn parse_follow_records<R: BufRead>(reader: R) -> Result<Vec<FollowRecord>, CorpusError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (user, rest) = line.split_once('\t').ok_or_else(|| CorpusError::Parse {
            line: lineno,
            msg: "expected `user_id<TAB>followees`, found no TAB".to_string(),
        })?;
        if user.is_empty() {
            return Err(CorpusError::Parse {
                line: lineno,
                msg: "empty user field".to_string(),
            });
        }
        if user.chars().any(char::is_whitespace) {
            return Err(CorpusError::Parse {
                line: lineno,
                msg: format!("user id `{user}` contains whitespace"),
            });
        }
        let mut seen = HashSet::new();
        let mut followees = Vec::new();
        for token in rest.split_whitespace() {
            if seen.insert(token) {
                followees.push(token.to_string());
            }
        }
        if followees.is_empty() {
            return Err(CorpusError::Parse {
                line: lineno,
                msg: "expected at least one followee".to_string(),
            });
        }
        records.push(FollowRecord {
            user_id: user.to_string(),
            followees,
        });
    }
    Ok(records)
}

/// Reads a follow-records file from disk.
pub fn read_follow_records(path: &Path) -> Result<Vec<FollowRecord>, CorpusError> {
    parse_follow_records(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabEntry {
    pub index: usize,
    pub entity_id: String,
    pub follower_count: u64,
}

/// The popularity-thresholded entity set: every entry is followed by at least
/// `min_followers` users, ordered by follower count descending with ties
/// broken by entity id ascending (byte order). Indices are contiguous from 0.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    min_followers: u64,
    index_by_id: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_sorted(sorted: Vec<(String, u64)>, min_followers: u64) -> Self {
        let entries: Vec<VocabEntry> = sorted
            .into_iter()
            .enumerate()
            .map(|(index, (entity_id, follower_count))| VocabEntry {
                index,
                entity_id,
                follower_count,
            })
            .collect();
        let index_by_id = entries
            .iter()
            .map(|e| (e.entity_id.clone(), e.index))
            .collect();
        Vocabulary {
            entries,
            min_followers,
            index_by_id,
        }
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn min_followers(&self) -> u64 {
        self.min_followers
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, entity_id: &str) -> Option<usize> {
        self.index_by_id.get(entity_id).copied()
    }

    pub fn entity_id(&self, index: usize) -> &str {
        &self.entries[index].entity_id
    }

    pub fn follower_counts(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.follower_count).collect()
    }

    /// Follower count per entity id, for callers that key by id.
    pub fn count_map(&self) -> HashMap<String, u64> {
        self.entries
            .iter()
            .map(|e| (e.entity_id.clone(), e.follower_count))
            .collect()
    }

    /// Writes the vocabulary TSV: header `index	entity_id	follower_count`,
    /// one row per entry in vocabulary order.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "index\tentity_id\tfollower_count")?;
        for e in &self.entries {
            writeln!(w, "{}\t{}\t{}", e.index, e.entity_id, e.follower_count)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a vocabulary TSV written by [`Vocabulary::save`]. The ordering
    /// and index invariants are re-validated; `min_followers` is recovered as
    /// the smallest count present.
    pub fn load(path: &Path) -> Result<Vocabulary, CorpusError> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => {
                return Err(CorpusError::Parse {
                    line: 1,
                    msg: "empty vocabulary file".to_string(),
                })
            }
        };
        if header.trim_end() != "index\tentity_id\tfollower_count" {
            return Err(CorpusError::Parse {
                line: 1,
                msg: "bad header, expected `index\tentity_id\tfollower_count`".to_string(),
            });
        }
        let mut sorted = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let (index, entity_id, count) = match (fields.next(), fields.next(), fields.next()) {
                (Some(i), Some(id), Some(c)) if fields.next().is_none() => (i, id, c),
                _ => {
                    return Err(CorpusError::Parse {
                        line: lineno,
                        msg: "expected 3 tab-separated fields".to_string(),
                    })
                }
            };
            let index: usize = index.parse().map_err(|_| CorpusError::Parse {
                line: lineno,
                msg: format!("bad index `{index}`"),
            })?;
            if index != sorted.len() {
                return Err(CorpusError::Parse {
                    line: lineno,
                    msg: format!("non-contiguous index {index}, expected {}", sorted.len()),
                });
            }
            let count: u64 = count.parse().map_err(|_| CorpusError::Parse {
                line: lineno,
                msg: format!("bad follower count `{count}`"),
            })?;
            if count == 0 {
                return Err(CorpusError::Parse {
                    line: lineno,
                    msg: "follower count must be positive".to_string(),
                });
            }
            if !seen.insert(entity_id.to_string()) {
                return Err(CorpusError::Parse {
                    line: lineno,
                    msg: format!("duplicate entity id `{entity_id}`"),
                });
            }
            if let Some(&(ref prev_id, prev_count)) = sorted.last() {
                let ordered = count < prev_count
                    || (count == prev_count && entity_id.as_bytes() > prev_id.as_bytes());
                if !ordered {
                    return Err(CorpusError::Parse {
                        line: lineno,
                        msg: "rows violate (count desc, entity_id asc) order".to_string(),
                    });
                }
            }
            sorted.push((entity_id.to_string(), count));
        }
        let min = sorted.iter().map(|&(_, c)| c).min().unwrap_or(1);
        Ok(Vocabulary::from_sorted(sorted, min))
    }
}

/// Builds the vocabulary of accounts followed by at least `min_followers`
/// users. Records whose raw followee-set size exceeds `max_follows` are
/// excluded from counting (non-selective users are not coherent contexts).
pub fn build_vocabulary(
    records: &[FollowRecord],
    min_followers: u64,
    max_follows: usize,
) -> Vocabulary {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for record in records.iter().filter(|r| r.followees.len() <= max_follows) {
        for followee in &record.followees {
            *counts.entry(followee).or_insert(0) += 1;
        }
    }
    let mut sorted: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_followers)
        .map(|(id, c)| (id.to_string(), c))
        .collect();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_sorted(sorted, min_followers)
}

/// Per-user sets of vocabulary indices, ready for training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextCorpus {
    /// One set per retained user; indices sorted ascending, length >= 2.
    pub user_sets: Vec<Vec<usize>>,
    /// Sum of retained set sizes.
    pub total_tokens: usize,
}

/// Maps each record to the set of vocabulary indices of its in-vocabulary
/// followees. Records larger than `max_follows` (raw size) are dropped, as
/// are encoded sets of fewer than two entities, which yield no training
/// pairs.
pub fn encode_contexts(
    records: &[FollowRecord],
    vocab: &Vocabulary,
    max_follows: usize,
) -> ContextCorpus {
    let mut user_sets = Vec::new();
    let mut total_tokens = 0;
    for record in records.iter().filter(|r| r.followees.len() <= max_follows) {
        let mut set: Vec<usize> = record
            .followees
            .iter()
            .filter_map(|f| vocab.index_of(f))
            .collect();
        if set.len() < 2 {
            continue;
        }
        set.sort_unstable();
        total_tokens += set.len();
        user_sets.push(set);
    }
    ContextCorpus {
        user_sets,
        total_tokens,
    }
}

/// Probability of keeping one occurrence of an entity with corpus frequency
/// fraction `f` under subsample threshold `t`: `min(1, sqrt(t / f))`.
/// Entities rarer than `t` are always kept; `t = +inf` keeps everything.
pub fn keep_probability(f: f64, t: f64) -> Result<f64, CorpusError> {
    if !(f > 0.0) {
        return Err(CorpusError::InvalidFrequency(f));
    }
    Ok((t / f).sqrt().min(1.0))
}

/// Default follower-count bucket edges: [1,100), [100,1000), [1000,10000),
/// [10000,25000), [25000,inf).
pub const DEFAULT_BUCKET_EDGES: [u64; 5] = [1, 100, 1_000, 10_000, 25_000];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramBucket {
    pub lower: u64,
    /// Exclusive upper edge; `None` for the open top bucket.
    pub upper: Option<u64>,
    pub accounts: u64,
}

/// Counts distinct accounts per follower-count bucket. `edges` must be
/// non-empty and strictly ascending; counts below the first edge are not
/// bucketed.
pub fn follower_histogram(records: &[FollowRecord], edges: &[u64]) -> Vec<HistogramBucket> {
    assert!(!edges.is_empty(), "bucket edges must be non-empty");
    assert!(
        edges.windows(2).all(|w| w[0] < w[1]),
        "bucket edges must be strictly ascending"
    );
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for record in records {
        for followee in &record.followees {
            *counts.entry(followee).or_insert(0) += 1;
        }
    }
    let mut buckets: Vec<HistogramBucket> = edges
        .iter()
        .enumerate()
        .map(|(i, &lower)| HistogramBucket {
            lower,
            upper: edges.get(i + 1).copied(),
            accounts: 0,
        })
        .collect();
    for &count in counts.values() {
        if count < edges[0] {
            continue;
        }
        let slot = edges.partition_point(|&e| e <= count) - 1;
        buckets[slot].accounts += 1;
    }
    buckets
}
