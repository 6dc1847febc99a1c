//! Bag-of-tags vectors over a training-set vocabulary, plus optional
//! per-column standardization for dense layers.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureVector, TagSet};
use crate::error::{Error, Result};

/// Tag-to-column map; columns follow lexicographic tag order.
#[derive(Clone, Debug, PartialEq)]
pub struct TagVocabulary {
    index: HashMap<String, usize>,
    tags: Vec<String>,
    min_df: usize,
}

impl TagVocabulary {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn min_df(&self) -> usize {
        self.min_df
    }

    pub fn get(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Computation(format!("writing vocabulary: {e}"));
        w.write_record(["tag", "index"]).map_err(wrap)?;
        for (i, tag) in self.tags.iter().enumerate() {
            w.write_record([tag.as_str(), &i.to_string()]).map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::Computation(e.to_string()))
    }
}

/// Builds the vocabulary from training tag sets. Tags with document frequency
/// below `min_df` are left out.
pub fn build_vocabulary<'a, I>(train: I, min_df: usize) -> Result<TagVocabulary>
where
    I: IntoIterator<Item = &'a TagSet>,
{
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    let mut docs = 0usize;
    for set in train {
        docs += 1;
        for tag in set.iter() {
            *df.entry(tag).or_default() += 1;
        }
    }
    if docs == 0 {
        return Err(Error::InvalidArgument("cannot build a vocabulary from an empty corpus".into()));
    }
    let tags: Vec<String> = df
        .into_iter()
        .filter(|&(_, n)| n >= min_df.max(1))
        .map(|(t, _)| t.to_string())
        .collect();
    let index = tags.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(TagVocabulary { index, tags, min_df })
}

/// Sparse vector with strictly increasing column indices and nonzero values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    pub fn new(mut pairs: Vec<(u32, f64)>, dim: usize) -> Result<Self> {
        pairs.sort_by_key(|&(i, _)| i);
        let mut indices = Vec::with_capacity(pairs.len());
        let mut values = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("sparse entry {i}")));
            }
            if i as usize >= dim {
                return Err(Error::InvalidArgument(format!("index {i} out of range for dimension {dim}")));
            }
            if indices.last() == Some(&i) {
                return Err(Error::InvalidArgument(format!("repeated sparse index {i}")));
            }
            if v != 0.0 {
                indices.push(i);
                values.push(v);
            }
        }
        Ok(SparseVector { indices, values, dim })
    }

    pub fn empty(dim: usize) -> Self {
        SparseVector {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Merge-join dot product.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagEncoding {
    #[default]
    Binary,
    Count,
}

/// Binary presence encoding; tags outside the vocabulary are ignored.
pub fn vectorize(tags: &TagSet, vocab: &TagVocabulary) -> SparseVector {
    vectorize_tokens(tags.iter(), vocab, TagEncoding::Binary)
}

/// Encodes a tag sequence that may repeat tags. `Count` accumulates
/// occurrences, `Binary` records presence.
pub fn vectorize_tokens<'a, I>(tags: I, vocab: &TagVocabulary, encoding: TagEncoding) -> SparseVector
where
    I: IntoIterator<Item = &'a str>,
{
    let mut cols: BTreeMap<u32, f64> = BTreeMap::new();
    for tag in tags {
        if let Some(i) = vocab.get(tag) {
            let slot = cols.entry(i as u32).or_insert(0.0);
            *slot = match encoding {
                TagEncoding::Binary => 1.0,
                TagEncoding::Count => *slot + 1.0,
            };
        }
    }
    SparseVector {
        indices: cols.keys().copied().collect(),
        values: cols.values().copied().collect(),
        dim: vocab.len(),
    }
}

/// User tags and deep tags share one namespace; the combined set is the union.
pub fn combine_tagsets(user: &TagSet, deep: &TagSet) -> TagSet {
    user.union(deep)
}

/// Per-column z-scoring fitted on training vectors. Constant columns are only
/// centered.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a, I>(train: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FeatureVector>,
    {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for v in train {
            if n == 0 {
                sum = vec![0.0; v.dim()];
                sq = vec![0.0; v.dim()];
            } else if v.dim() != sum.len() {
                return Err(Error::DimensionMismatch {
                    id: "standardizer input".into(),
                    expected: sum.len(),
                    found: v.dim(),
                });
            }
            for (k, x) in v.values().iter().enumerate() {
                sum[k] += x;
                sq[k] += x * x;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::InvalidArgument("cannot fit a standardizer on no data".into()));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / nf - m * m).max(0.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn transform(&self, v: &FeatureVector) -> Result<FeatureVector> {
        if v.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                id: "standardizer input".into(),
                expected: self.mean.len(),
                found: v.dim(),
            });
        }
        FeatureVector::new(
            v.values()
                .iter()
                .zip(self.mean.iter().zip(&self.scale))
                .map(|(x, (m, s))| (x - m) / s)
                .collect(),
        )
    }
}
