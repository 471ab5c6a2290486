//! Embedding persistence and vector-space queries: cosine similarity and
//! nearest neighbors over a read-only store.
//!
//! The on-disk format is plain text: a `V D` header line followed by `V`
//! rows of `entity_id v_1 ... v_D`. Values are written as shortest
//! round-trip decimals, so save -> load -> save is byte-identical.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("zero-norm vector (untrained entity?)")]
    ZeroNorm,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("duplicate entity id `{0}`")]
    DuplicateId(String),
    #[error("non-finite value in vector for `{0}`")]
    NonFinite(String),
}

/// Immutable table of entity embeddings keyed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    ids: Vec<String>,
    vectors: Vec<f64>, // row-major, len = ids.len() * dim
    dim: usize,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    /// Builds a store from `(id, vector)` rows. Ids must be unique and all
    /// vectors finite and of equal dimension.
    pub fn from_rows(rows: Vec<(String, Vec<f64>)>, dim: usize) -> Result<Self, StoreError> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        let mut index = HashMap::with_capacity(rows.len());
        for (id, vector) in rows {
            if vector.len() != dim {
                return Err(StoreError::DimensionMismatch(dim, vector.len()));
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(StoreError::NonFinite(id));
            }
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(StoreError::DuplicateId(id));
            }
            ids.push(id);
            vectors.extend_from_slice(&vector);
        }
        Ok(EmbeddingStore {
            ids,
            vectors,
            dim,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, entity_id: &str) -> bool {
        self.index.contains_key(entity_id)
    }

    pub fn vector(&self, entity_id: &str) -> Option<&[f64]> {
        self.index.get(entity_id).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<(), StoreError> {
        let mut line = String::new();
        writeln!(w, "{} {}", self.ids.len(), self.dim)?;
        for (i, id) in self.ids.iter().enumerate() {
            line.clear();
            line.push_str(id);
            for v in self.row(i) {
                line.push(' ');
                line.push_str(&format!("{v:?}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save_path(&self, path: &Path) -> Result<(), StoreError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.save(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self, StoreError> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => {
                return Err(StoreError::Format {
                    line: 1,
                    msg: "empty file, expected `V D` header".to_string(),
                })
            }
        };
        let mut parts = header.split_whitespace();
        let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
            (Some(v), Some(d), None) => {
                let v: usize = v.parse().map_err(|_| StoreError::Format {
                    line: 1,
                    msg: format!("bad vector count `{v}`"),
                })?;
                let d: usize = d.parse().map_err(|_| StoreError::Format {
                    line: 1,
                    msg: format!("bad dimension `{d}`"),
                })?;
                (v, d)
            }
            _ => {
                return Err(StoreError::Format {
                    line: 1,
                    msg: "expected header `V D`".to_string(),
                })
            }
        };
        let mut rows = Vec::with_capacity(count);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(' ');
            let id = fields.next().unwrap_or("");
            if id.is_empty() {
                return Err(StoreError::Format {
                    line: lineno,
                    msg: "missing entity id".to_string(),
                });
            }
            let mut vector = Vec::with_capacity(dim);
            for field in fields {
                let value: f64 = field.parse().map_err(|_| StoreError::Format {
                    line: lineno,
                    msg: format!("bad value `{field}`"),
                })?;
                if !value.is_finite() {
                    return Err(StoreError::Format {
                        line: lineno,
                        msg: format!("non-finite value `{field}`"),
                    });
                }
                vector.push(value);
            }
            if vector.len() != dim {
                return Err(StoreError::Format {
                    line: lineno,
                    msg: format!("expected {dim} values, found {}", vector.len()),
                });
            }
            if rows.len() == count {
                return Err(StoreError::Format {
                    line: lineno,
                    msg: format!("more rows than the declared {count}"),
                });
            }
            rows.push((id.to_string(), vector));
        }
        if rows.len() != count {
            return Err(StoreError::Format {
                line: rows.len() + 1,
                msg: format!("expected {count} rows, found {}", rows.len()),
            });
        }
        EmbeddingStore::from_rows(rows, dim)
    }

    pub fn load_path(path: &Path) -> Result<Self, StoreError> {
        EmbeddingStore::load(BufReader::new(File::open(path)?))
    }

    /// Top-k entities most similar to `entity_id` by cosine, the query
    /// itself excluded. Ties are broken by entity id ascending.
    pub fn nearest_neighbors(
        &self,
        entity_id: &str,
        top_k: usize,
    ) -> Result<Vec<(String, f64)>, StoreError> {
        let query = self
            .vector(entity_id)
            .ok_or_else(|| StoreError::UnknownEntity(entity_id.to_string()))?;
        let mut scored = Vec::with_capacity(self.ids.len().saturating_sub(1));
        for (i, id) in self.ids.iter().enumerate() {
            if id == entity_id {
                continue;
            }
            scored.push((id.clone(), cosine_similarity(query, self.row(i))?));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(top_k);
        Ok(scored)
    }
}

/// Cosine similarity of two vectors, clamped to [-1, 1] against rounding.
/// Zero-norm inputs are an error: they signal an untrained entity and must
/// surface rather than read as "similarity 0".
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, StoreError> {
    if a.len() != b.len() {
        return Err(StoreError::DimensionMismatch(a.len(), b.len()));
    }
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(StoreError::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(rows: &[(&str, &[f64])]) -> EmbeddingStore {
        let dim = rows[0].1.len();
        EmbeddingStore::from_rows(
            rows.iter()
                .map(|(id, v)| (id.to_string(), v.to_vec()))
                .collect(),
            dim,
        )
        .unwrap()
    }

    #[test]
    fn cosine_of_vector_with_itself_is_one() {
        let v = [0.3, -1.2, 4.5];
        assert_eq!(cosine_similarity(&v, &v).unwrap(), 1.0);
    }

    #[test]
    fn cosine_of_orthogonal_vectors_is_zero() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_matches_hand_computed_value() {
        // 32 / (sqrt(14) * sqrt(77))
        let got = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((got - 0.974_631_846).abs() < 1e-9);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(StoreError::ZeroNorm)
        ));
    }

    #[test]
    fn cosine_rejects_dimension_mismatch() {
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 2.0]),
            Err(StoreError::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn single_entity_file_body() {
        let s = store(&[("e1", &[1.0, 2.0])]);
        let mut out = Vec::new();
        s.save(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "1 2\ne1 1.0 2.0\n");
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let s = store(&[
            ("e1", &[0.1, -2.5e-7, 3.0]),
            ("e2", &[1.0 / 3.0, f64::MIN_POSITIVE, -0.0]),
        ]);
        let mut first = Vec::new();
        s.save(&mut first).unwrap();
        let loaded = EmbeddingStore::load(first.as_slice()).unwrap();
        let mut second = Vec::new();
        loaded.save(&mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(s, loaded);
    }

    #[test]
    fn load_rejects_row_dimension_mismatch() {
        let text = "1 3\ne1 1.0 2.0 3.0 4.0\n";
        assert!(matches!(
            EmbeddingStore::load(text.as_bytes()),
            Err(StoreError::Format { line: 2, .. })
        ));
    }

    #[test]
    fn load_rejects_duplicate_id() {
        let text = "2 1\ne1 1.0\ne1 2.0\n";
        assert!(matches!(
            EmbeddingStore::load(text.as_bytes()),
            Err(StoreError::DuplicateId(id)) if id == "e1"
        ));
    }

    #[test]
    fn load_rejects_non_finite_values() {
        let text = "1 2\ne1 1.0 inf\n";
        assert!(matches!(
            EmbeddingStore::load(text.as_bytes()),
            Err(StoreError::Format { line: 2, .. })
        ));
        let text = "1 2\ne1 NaN 1.0\n";
        assert!(EmbeddingStore::load(text.as_bytes()).is_err());
    }

    #[test]
    fn load_rejects_missing_rows() {
        let text = "3 1\ne1 1.0\n";
        assert!(EmbeddingStore::load(text.as_bytes()).is_err());
    }

    #[test]
    fn duplicated_vectors_are_mutual_top_neighbors() {
        let s = store(&[
            ("a", &[1.0, 2.0]),
            ("b", &[1.0, 2.0]),
            ("far", &[-2.0, 1.0]),
        ]);
        let nn = s.nearest_neighbors("a", 1).unwrap();
        assert_eq!(nn[0].0, "b");
        assert_eq!(nn[0].1, 1.0);
        let nn = s.nearest_neighbors("b", 1).unwrap();
        assert_eq!(nn[0].0, "a");
    }

    #[test]
    fn top_k_larger_than_store_returns_all_others() {
        let s = store(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[1.0, 1.0])]);
        let nn = s.nearest_neighbors("a", 10).unwrap();
        assert_eq!(nn.len(), 2);
    }

    #[test]
    fn neighbor_order_matches_brute_force() {
        let rows: &[(&str, &[f64])] = &[
            ("q", &[1.0, 0.5, -0.25]),
            ("x", &[0.9, 0.4, -0.2]),
            ("y", &[-1.0, 0.3, 0.7]),
            ("z", &[0.1, 2.0, 0.3]),
        ];
        let s = store(rows);
        let nn = s.nearest_neighbors("q", 3).unwrap();
        let mut brute: Vec<(String, f64)> = rows[1..]
            .iter()
            .map(|(id, v)| {
                (
                    id.to_string(),
                    cosine_similarity(rows[0].1, v).unwrap(),
                )
            })
            .collect();
        brute.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        assert_eq!(nn, brute);
    }

    #[test]
    fn unknown_query_is_an_error() {
        let s = store(&[("a", &[1.0])]);
        assert!(matches!(
            s.nearest_neighbors("nope", 1),
            Err(StoreError::UnknownEntity(_))
        ));
    }

    #[test]
    fn neighbor_list_is_prefix_stable() {
        let s = store(&[
            ("a", &[1.0, 0.2]),
            ("b", &[0.8, 0.3]),
            ("c", &[0.5, 0.9]),
            ("d", &[-0.7, 0.1]),
        ]);
        let k2 = s.nearest_neighbors("a", 2).unwrap();
        let k3 = s.nearest_neighbors("a", 3).unwrap();
        assert_eq!(k2[..], k3[..2]);
    }
}
