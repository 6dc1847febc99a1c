//! Softmax over final-layer logits, top-K deep tags and user-tag cleaning.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use crate::corpus::{CategoryLexicon, FeatureVector, TagSet};
use crate::error::{Error, Result};

pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_MAX_TOKENS: usize = 4;

/// Softmax output: one probability per category.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityDistribution(Vec<f64>);

impl ProbabilityDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Wraps an existing distribution (e.g. a precomputed "prob" layer).
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::InvalidArgument("probabilities must lie in [0, 1]".into()));
        }
        Ok(ProbabilityDistribution(probs))
    }

    pub fn into_feature_vector(self) -> FeatureVector {
        FeatureVector::new(self.0).expect("softmax output is finite and nonempty")
    }
}

#[derive(Clone, Debug)]
pub struct AnnotationConfig {
    pub k: usize,
    pub stopwords: HashSet<String>,
    pub max_tokens: usize,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            k: DEFAULT_TOP_K,
            stopwords: HashSet::new(),
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl AnnotationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidArgument("max_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

/// Max-shifted softmax: `exp(z_c - max z) / sum_j exp(z_j - max z)`.
pub fn softmax(logits: &[f64]) -> Result<ProbabilityDistribution> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("softmax of an empty vector".into()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(ProbabilityDistribution(exps.into_iter().map(|e| e / total).collect()))
}

/// Names of the `k` most probable categories, lowercased. Ties go to the lower
/// category index. Categories whose names coincide after lowercasing collapse
/// into one tag.
pub fn top_k_tags(
    dist: &ProbabilityDistribution,
    lexicon: &CategoryLexicon,
    cfg: &AnnotationConfig,
) -> Result<TagSet> {
    cfg.validate()?;
    if dist.dim() != lexicon.len() {
        return Err(Error::DimensionMismatch {
            id: "distribution vs lexicon".into(),
            expected: lexicon.len(),
            found: dist.dim(),
        });
    }
    if cfg.k > lexicon.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds lexicon size {}",
            cfg.k,
            lexicon.len()
        )));
    }
    let mut order: Vec<usize> = (0..dist.dim()).collect();
    let p = dist.probs();
    // Stable sort keeps lower indices first among equal probabilities.
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    let mut tags = TagSet::new();
    for &c in order.iter().take(cfg.k) {
        let name = lexicon.name(c).expect("index within lexicon");
        tags.insert_normalized(normalize_whitespace(&name.to_lowercase()));
    }
    Ok(tags)
}

fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_url(tag: &str) -> bool {
    if tag.starts_with("www.") {
        return true;
    }
    match tag.find("://") {
        Some(pos) if pos > 0 => tag[..pos]
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')),
        _ => false,
    }
}

fn is_numeric(tag: &str) -> bool {
    tag.chars()
        .filter(|c| !c.is_ascii_punctuation() && !c.is_whitespace())
        .all(|c| c.is_ascii_digit())
}

/// Cleans raw user tags: trim, lowercase, drop URLs, numbers, stopwords and
/// tags longer than `max_tokens` tokens, then deduplicate.
///
/// The token limit drops individual tags rather than whole images.
pub fn normalize_user_tags<S: AsRef<str>>(raw: &[S], cfg: &AnnotationConfig) -> TagSet {
    let mut out = TagSet::new();
    for tag in raw {
        if let Some(clean) = normalize_tag(tag.as_ref(), cfg) {
            out.insert_normalized(clean);
        }
    }
    out
}

pub(crate) fn normalize_tag(raw: &str, cfg: &AnnotationConfig) -> Option<String> {
    let tag = normalize_whitespace(&raw.trim().to_lowercase());
    if tag.is_empty() || is_url(&tag) || is_numeric(&tag) {
        return None;
    }
    let tokens = tag.split(' ').count();
    if tokens > cfg.max_tokens {
        return None;
    }
    if tokens == 1 && cfg.stopwords.contains(&tag) {
        return None;
    }
    Some(tag)
}

pub fn read_stopwords<R: BufRead>(reader: R, path: &Path) -> Result<HashSet<String>> {
    let mut words = HashSet::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let w = line.trim();
        if w.is_empty() || w.starts_with('#') {
            continue;
        }
        words.insert(w.to_lowercase());
    }
    Ok(words)
}

pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_stopwords(std::io::BufReader::new(file), path)
}
