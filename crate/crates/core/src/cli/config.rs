//! Run configuration: one TOML document, with command-line flags layered on
//! top. Relative paths resolve against the directory of the config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotate::DEFAULT_TOP_K;
use crate::corpus::Layer;
use crate::error::{Error, Result};
use crate::eval::{GridSpec, TagSource};
use crate::gist::GistConfig;
use crate::wordnet::{ExpansionSpec, Relation};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Feature table per layer.
    pub features: BTreeMap<Layer, PathBuf>,
    pub user_tags: Option<PathBuf>,
    /// Precomputed deep tags; derived from fc8 and the lexicon when absent.
    pub deep_tags: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub wordnet_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Enrichment {
    #[default]
    Off,
    Synonym,
    Hypernym,
    Hyponym,
}

impl Enrichment {
    pub fn relation(self) -> Option<Relation> {
        match self {
            Enrichment::Off => None,
            Enrichment::Synonym => Some(Relation::Synonym),
            Enrichment::Hypernym => Some(Relation::Hypernym),
            Enrichment::Hyponym => Some(Relation::Hyponym),
        }
    }
}

impl fmt::Display for Enrichment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.relation() {
            None => f.write_str("off"),
            Some(r) => f.write_str(r.as_str()),
        }
    }
}

impl FromStr for Enrichment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("off") || s.eq_ignore_ascii_case("none") {
            return Ok(Enrichment::Off);
        }
        Ok(match s.parse::<Relation>()? {
            Relation::Synonym => Enrichment::Synonym,
            Relation::Hypernym => Enrichment::Hypernym,
            Relation::Hyponym => Enrichment::Hyponym,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateSection {
    pub k: usize,
    pub max_tokens: usize,
}

impl Default for AnnotateSection {
    fn default() -> Self {
        AnnotateSection {
            k: DEFAULT_TOP_K,
            max_tokens: crate::annotate::DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// A deep layer, `gist`, or `tags` for bag-of-tags.
    pub representation: Layer,
    pub tag_source: TagSource,
    pub enrichment: Enrichment,
    pub enrichment_depth: usize,
    pub min_df: usize,
    /// Z-score dense layers with Train statistics.
    pub standardize: bool,
    pub outer_folds: usize,
    pub cv_folds: usize,
    pub tol: f64,
    pub max_passes: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            representation: Layer::Tags,
            tag_source: TagSource::Combined,
            enrichment: Enrichment::Off,
            enrichment_depth: 1,
            min_df: 1,
            standardize: false,
            outer_folds: 6,
            cv_folds: 5,
            tol: 1e-3,
            max_passes: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TagsSection {
    pub source: TagSource,
    pub top: usize,
    pub threshold: usize,
    pub focus: Vec<String>,
    pub ig_folds: usize,
}

impl Default for TagsSection {
    fn default() -> Self {
        TagsSection {
            source: TagSource::Combined,
            top: crate::taglab::DEFAULT_CLOUD_SIZE,
            threshold: crate::taglab::DEFAULT_EDGE_THRESHOLD,
            focus: Vec::new(),
            ig_folds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub wordnet_all_pos: bool,
    pub paths: Paths,
    pub annotate: AnnotateSection,
    pub experiment: ExperimentSection,
    pub grid: GridSpec,
    pub tags: TagsSection,
    pub gist: GistConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            wordnet_all_pos: false,
            paths: Paths::default(),
            annotate: AnnotateSection::default(),
            experiment: ExperimentSection::default(),
            grid: GridSpec::default(),
            tags: TagsSection::default(),
            gist: GistConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::parse(path, line, e.message().to_string())
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        p.features.values_mut().for_each(|f| resolve(base, f));
        for slot in [
            &mut p.user_tags,
            &mut p.deep_tags,
            &mut p.labels,
            &mut p.lexicon,
            &mut p.stopwords,
            &mut p.wordnet_dir,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, slot);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.outer_folds < 2 || e.cv_folds < 2 || self.tags.ig_folds < 2 {
            return Err(Error::InvalidArgument("fold counts must be at least 2".into()));
        }
        if e.min_df == 0 {
            return Err(Error::InvalidArgument("min_df must be at least 1".into()));
        }
        if self.annotate.k == 0 || self.annotate.max_tokens == 0 {
            return Err(Error::InvalidArgument("k and max_tokens must be at least 1".into()));
        }
        self.enrichment_spec()?;
        self.grid.validate()?;
        self.gist.validate()
    }

    pub fn enrichment_spec(&self) -> Result<Option<ExpansionSpec>> {
        self.experiment
            .enrichment
            .relation()
            .map(|r| ExpansionSpec::new(r, self.experiment.enrichment_depth))
            .transpose()
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn split_seed(&self) -> u64 {
        self.seed
    }

    pub fn cv_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn smo_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }
}
