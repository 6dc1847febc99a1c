//! How records become SVM inputs. Anything learned from data (vocabulary,
//! column statistics) is fitted on the training part only.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureVector, ImageRecord, Layer, TagSet};
use crate::error::{Error, Result};
use crate::featurize::{build_vocabulary, combine_tagsets, vectorize, SparseVector, Standardizer, TagVocabulary};
use crate::svm::KernelVector;

pub trait Representation: Sync {
    type Vector: KernelVector;
    type Fitted: Send + Sync;

    fn fit(&self, train: &[&ImageRecord]) -> Result<Self::Fitted>;
    fn transform(&self, fitted: &Self::Fitted, record: &ImageRecord) -> Result<Self::Vector>;

    fn transform_all(&self, fitted: &Self::Fitted, records: &[&ImageRecord]) -> Result<Vec<Self::Vector>> {
        records.iter().map(|r| self.transform(fitted, r)).collect()
    }
}

/// A dense layer, optionally z-scored with training statistics.
#[derive(Clone, Copy, Debug)]
pub struct DenseLayer {
    pub layer: Layer,
    pub standardize: bool,
}

impl Representation for DenseLayer {
    type Vector = FeatureVector;
    type Fitted = Option<Standardizer>;

    fn fit(&self, train: &[&ImageRecord]) -> Result<Self::Fitted> {
        if !self.standardize {
            return Ok(None);
        }
        let vectors = train
            .iter()
            .map(|r| r.feature(self.layer))
            .collect::<Result<Vec<_>>>()?;
        Standardizer::fit(vectors).map(Some)
    }

    fn transform(&self, fitted: &Self::Fitted, record: &ImageRecord) -> Result<FeatureVector> {
        let v = record.feature(self.layer)?;
        match fitted {
            Some(s) => s.transform(v),
            None => Ok(v.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagSource {
    User,
    Deep,
    #[default]
    Combined,
}

impl TagSource {
    pub fn select<'a>(&self, record: &'a ImageRecord) -> Cow<'a, TagSet> {
        match self {
            TagSource::User => Cow::Borrowed(&record.user_tags),
            TagSource::Deep => Cow::Borrowed(&record.deep_tags),
            TagSource::Combined => Cow::Owned(combine_tagsets(&record.user_tags, &record.deep_tags)),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TagSource::User => "user",
            TagSource::Deep => "deep",
            TagSource::Combined => "combined",
        }
    }
}

impl fmt::Display for TagSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TagSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "user" => Ok(TagSource::User),
            "deep" => Ok(TagSource::Deep),
            "combined" | "user+deep" => Ok(TagSource::Combined),
            other => Err(Error::InvalidArgument(format!(
                "unknown tag source {other:?} (expected user, deep or combined)"
            ))),
        }
    }
}

/// Binary bag of tags over a vocabulary built from the training records.
#[derive(Clone, Copy, Debug)]
pub struct BagOfTags {
    pub source: TagSource,
    pub min_df: usize,
}

impl Representation for BagOfTags {
    type Vector = SparseVector;
    type Fitted = TagVocabulary;

    fn fit(&self, train: &[&ImageRecord]) -> Result<TagVocabulary> {
        let sets: Vec<Cow<'_, TagSet>> = train.iter().map(|r| self.source.select(r)).collect();
        build_vocabulary(sets.iter().map(|s| s.as_ref()), self.min_df)
    }

    fn transform(&self, vocab: &TagVocabulary, record: &ImageRecord) -> Result<SparseVector> {
        Ok(vectorize(&self.source.select(record), vocab))
    }
}
