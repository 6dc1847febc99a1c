//! Data model and on-disk tables.
//!
//! Feature and tag tables are line-delimited JSON; labels are a two-column CSV;
//! the category lexicon is plain text with one name per line. Lines starting
//! with `#` are metadata and are skipped by every loader.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of object categories produced by the upstream network.
pub const DEFAULT_CATEGORY_COUNT: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrivacyLabel {
    Public,
    Private,
}

impl PrivacyLabel {
    pub const ALL: [PrivacyLabel; 2] = [PrivacyLabel::Public, PrivacyLabel::Private];

    /// SVM target: private is the positive class.
    pub fn sign(self) -> f64 {
        match self {
            PrivacyLabel::Public => -1.0,
            PrivacyLabel::Private => 1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            PrivacyLabel::Public => 0,
            PrivacyLabel::Private => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PrivacyLabel::Public => "public",
            PrivacyLabel::Private => "private",
        }
    }
}

impl fmt::Display for PrivacyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrivacyLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "public" => Ok(PrivacyLabel::Public),
            "private" => Ok(PrivacyLabel::Private),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

/// Named source of a per-image representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Fc6,
    Fc7,
    Fc8,
    Prob,
    Gist,
    Tags,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Fc6 => "fc6",
            Layer::Fc7 => "fc7",
            Layer::Fc8 => "fc8",
            Layer::Prob => "prob",
            Layer::Gist => "gist",
            Layer::Tags => "tags",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "fc6" => Layer::Fc6,
            "fc7" => Layer::Fc7,
            "fc8" => Layer::Fc8,
            "prob" => Layer::Prob,
            "gist" => Layer::Gist,
            "tags" => Layer::Tags,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown layer {other:?} (expected fc6, fc7, fc8, prob, gist or tags)"
                )))
            }
        })
    }
}

/// Dense vector of finite reals with at least one entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty feature vector".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature vector entry {pos}")));
        }
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        FeatureVector::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// Set of normalized tags: nonempty, trimmed, lowercase strings, iterated in
/// lexicographic order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagSet(BTreeSet<String>);

impl TagSet {
    pub fn new() -> Self {
        TagSet(BTreeSet::new())
    }

    /// Builds a set from tags that are already normalized; rejects empty or
    /// non-lowercase entries.
    pub fn try_from_iter<I, S>(tags: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = TagSet::new();
        for tag in tags {
            set.insert(tag.into())?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, tag: String) -> Result<bool> {
        if tag.trim().is_empty() || tag.trim() != tag {
            return Err(Error::InvalidArgument(format!("tag {tag:?} is not trimmed/nonempty")));
        }
        if tag.chars().any(char::is_uppercase) {
            return Err(Error::InvalidArgument(format!("tag {tag:?} is not lowercase")));
        }
        Ok(self.0.insert(tag))
    }

    pub(crate) fn insert_normalized(&mut self, tag: String) {
        debug_assert!(!tag.is_empty() && !tag.chars().any(char::is_uppercase));
        self.0.insert(tag);
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.0.contains(tag)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> + '_ {
        self.0.iter().map(String::as_str)
    }

    pub fn union(&self, other: &TagSet) -> TagSet {
        TagSet(self.0.union(&other.0).cloned().collect())
    }

    pub fn is_subset(&self, other: &TagSet) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl<'a> IntoIterator for &'a TagSet {
    type Item = &'a String;
    type IntoIter = std::collections::btree_set::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Names of the object categories, indexed by category id.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryLexicon {
    labels: Vec<String>,
}

impl CategoryLexicon {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("empty category lexicon".into()));
        }
        if let Some(i) = labels.iter().position(|l| l.trim().is_empty()) {
            return Err(Error::InvalidArgument(format!("category {i} has an empty name")));
        }
        Ok(CategoryLexicon { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub features: BTreeMap<Layer, FeatureVector>,
    pub user_tags: TagSet,
    pub deep_tags: TagSet,
    pub label: Option<PrivacyLabel>,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>) -> Self {
        ImageRecord {
            id: id.into(),
            features: BTreeMap::new(),
            user_tags: TagSet::new(),
            deep_tags: TagSet::new(),
            label: None,
        }
    }

    pub fn feature(&self, layer: Layer) -> Result<&FeatureVector> {
        self.features
            .get(&layer)
            .ok_or_else(|| Error::MissingData(format!("record {:?} has no {layer} features", self.id)))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub public: usize,
    pub private: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.public + self.private
    }

    pub fn get(&self, label: PrivacyLabel) -> usize {
        match label {
            PrivacyLabel::Public => self.public,
            PrivacyLabel::Private => self.private,
        }
    }

    fn bump(&mut self, label: PrivacyLabel) {
        match label {
            PrivacyLabel::Public => self.public += 1,
            PrivacyLabel::Private => self.private += 1,
        }
    }

    pub fn from_labels<I: IntoIterator<Item = PrivacyLabel>>(labels: I) -> Self {
        let mut counts = ClassCounts::default();
        for l in labels {
            counts.bump(l);
        }
        counts
    }
}

/// Ordered, id-unique collection of records with per-layer dimension checks.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    records: Vec<ImageRecord>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(records: Vec<ImageRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        let mut dims: BTreeMap<Layer, usize> = BTreeMap::new();
        for (pos, rec) in records.iter().enumerate() {
            if rec.id.is_empty() {
                return Err(Error::InvalidArgument(format!("record {pos} has an empty id")));
            }
            if index.insert(rec.id.clone(), pos).is_some() {
                return Err(Error::DuplicateId(rec.id.clone()));
            }
            for (layer, v) in &rec.features {
                let expected = *dims.entry(*layer).or_insert(v.dim());
                if expected != v.dim() {
                    return Err(Error::DimensionMismatch {
                        id: rec.id.clone(),
                        expected,
                        found: v.dim(),
                    });
                }
            }
        }
        Ok(Dataset { records, index })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    /// Records carrying a label, in dataset order.
    pub fn labeled(&self) -> impl Iterator<Item = (&ImageRecord, PrivacyLabel)> + '_ {
        self.records.iter().filter_map(|r| r.label.map(|l| (r, l)))
    }

    pub fn class_counts(&self) -> ClassCounts {
        ClassCounts::from_labels(self.records.iter().filter_map(|r| r.label))
    }

    pub fn layer_dim(&self, layer: Layer) -> Option<usize> {
        self.records
            .iter()
            .find_map(|r| r.features.get(&layer).map(FeatureVector::dim))
    }

    pub fn into_records(self) -> Vec<ImageRecord> {
        self.records
    }
}

/// Joins feature and tag tables by id (inner join, first table fixes the
/// order) and attaches labels where known.
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    order: Vec<String>,
    records: HashMap<String, ImageRecord>,
    started: bool,
}

impl DatasetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn join<T>(&mut self, rows: Vec<(String, T)>, mut apply: impl FnMut(&mut ImageRecord, T)) {
        if !self.started {
            self.started = true;
            for (id, value) in rows {
                let mut rec = ImageRecord::new(id.clone());
                apply(&mut rec, value);
                self.order.push(id.clone());
                self.records.insert(id, rec);
            }
            return;
        }
        let mut seen = HashSet::with_capacity(rows.len());
        for (id, value) in rows {
            if let Some(rec) = self.records.get_mut(&id) {
                apply(rec, value);
                seen.insert(id);
            }
        }
        let dropped = self.order.len() - seen.len();
        if dropped > 0 {
            log::info!("inner join dropped {dropped} records absent from a later table");
        }
        self.order.retain(|id| seen.contains(id));
        self.records.retain(|id, _| seen.contains(id));
    }

    pub fn layer(mut self, layer: Layer, table: Dataset) -> Self {
        let rows = table
            .into_records()
            .into_iter()
            .filter_map(|mut r| r.features.remove(&layer).map(|v| (r.id, v)))
            .collect();
        self.join(rows, |rec, v| {
            rec.features.insert(layer, v);
        });
        self
    }

    pub fn user_tags(mut self, tags: Vec<(String, TagSet)>) -> Self {
        self.join(tags, |rec, t| rec.user_tags = t);
        self
    }

    pub fn deep_tags(mut self, tags: Vec<(String, TagSet)>) -> Self {
        self.join(tags, |rec, t| rec.deep_tags = t);
        self
    }

    /// Labels never restrict the record set; ids without a label stay unlabeled.
    pub fn labels(mut self, labels: &[(String, PrivacyLabel)]) -> Self {
        for (id, label) in labels {
            if let Some(rec) = self.records.get_mut(id) {
                rec.label = Some(*label);
            }
        }
        self
    }

    pub fn build(mut self) -> Result<Dataset> {
        let records = self
            .order
            .iter()
            .map(|id| self.records.remove(id).expect("ordered id present"))
            .collect();
        Dataset::new(records)
    }
}

#[derive(Deserialize)]
struct FeatureLine {
    id: String,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct FeatureLineOut<'a> {
    id: &'a str,
    values: &'a [f64],
}

#[derive(Deserialize)]
struct TagLine {
    id: String,
    tags: Vec<String>,
}

#[derive(Serialize)]
struct TagLineOut<'a> {
    id: &'a str,
    tags: Vec<&'a str>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Iterates `(line_number, line)` over content lines, skipping `#` metadata
/// and blank lines.
fn content_lines<'p, R: BufRead + 'p>(
    reader: R,
    path: &'p Path,
) -> impl Iterator<Item = Result<(usize, String)>> + 'p {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Err(e) => Some(Err(Error::io(path, e))),
            Ok(l) if l.trim().is_empty() || l.starts_with('#') => None,
            Ok(l) => Some(Ok((i + 1, l))),
        })
}

pub fn read_feature_table<R: BufRead>(reader: R, path: &Path, layer: Layer) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut dim = None;
    for item in content_lines(reader, path) {
        let (lineno, line) = item?;
        let parsed: FeatureLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno, format!("malformed feature record: {e}")))?;
        if parsed.id.is_empty() {
            return Err(Error::parse(path, lineno, "empty id"));
        }
        if !seen.insert(parsed.id.clone()) {
            return Err(Error::parse(path, lineno, format!("duplicate id {:?}", parsed.id)));
        }
        let expected = *dim.get_or_insert(parsed.values.len());
        if parsed.values.len() != expected {
            return Err(Error::parse(
                path,
                lineno,
                format!(
                    "dimension mismatch for {:?}: expected {expected}, found {}",
                    parsed.id,
                    parsed.values.len()
                ),
            ));
        }
        let vector = FeatureVector::new(parsed.values)
            .map_err(|e| Error::parse(path, lineno, format!("{:?}: {e}", parsed.id)))?;
        let mut rec = ImageRecord::new(parsed.id);
        rec.features.insert(layer, vector);
        records.push(rec);
    }
    Dataset::new(records)
}

/// Loads one layer's feature table. Records keep file order.
pub fn load_feature_table(path: &Path, layer: Layer) -> Result<Dataset> {
    read_feature_table(open(path)?, path, layer)
}

pub fn write_feature_table<'a, W, I>(mut out: W, rows: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a FeatureVector)>,
{
    for (id, v) in rows {
        let line = serde_json::to_string(&FeatureLineOut { id, values: v.values() })
            .map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub type RawTagTable = Vec<(String, Vec<String>)>;

pub fn read_tag_table<R: BufRead>(reader: R, path: &Path) -> Result<RawTagTable> {
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for item in content_lines(reader, path) {
        let (lineno, line) = item?;
        let parsed: TagLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno, format!("malformed tag record: {e}")))?;
        if parsed.id.is_empty() {
            return Err(Error::parse(path, lineno, "empty id"));
        }
        if !seen.insert(parsed.id.clone()) {
            return Err(Error::parse(path, lineno, format!("duplicate id {:?}", parsed.id)));
        }
        rows.push((parsed.id, parsed.tags));
    }
    Ok(rows)
}

/// Loads raw, un-normalized tags per id.
pub fn load_tag_table(path: &Path) -> Result<RawTagTable> {
    read_tag_table(open(path)?, path)
}

pub fn write_tag_table<'a, W, I>(mut out: W, rows: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a TagSet)>,
{
    for (id, tags) in rows {
        let line = serde_json::to_string(&TagLineOut {
            id,
            tags: tags.iter().collect(),
        })
        .map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelTable {
    pub rows: Vec<(String, PrivacyLabel)>,
}

impl LabelTable {
    pub fn counts(&self) -> ClassCounts {
        ClassCounts::from_labels(self.rows.iter().map(|(_, l)| *l))
    }

    /// public / private; infinite when there are no private labels.
    pub fn ratio(&self) -> f64 {
        let c = self.counts();
        c.public as f64 / c.private as f64
    }
}

pub fn read_labels<R: std::io::Read>(reader: R, path: &Path) -> Result<LabelTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(Error::parse(path, 1, "expected header `id,label`"));
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let id = rec[0].to_string();
        let label: PrivacyLabel = rec[1]
            .parse()
            .map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
        if id.is_empty() {
            return Err(Error::parse(path, line, "empty id"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate id {id:?}")));
        }
        rows.push((id, label));
    }
    Ok(LabelTable { rows })
}

pub fn load_labels(path: &Path) -> Result<LabelTable> {
    read_labels(open(path)?, path)
}

pub fn write_labels<W: Write>(out: W, rows: &[(String, PrivacyLabel)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::Computation(format!("writing labels: {e}"));
    w.write_record(["id", "label"]).map_err(wrap)?;
    for (id, label) in rows {
        w.write_record([id.as_str(), label.as_str()]).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::Computation(e.to_string()))
}

pub fn read_lexicon<R: BufRead>(reader: R, path: &Path, expected: usize) -> Result<CategoryLexicon> {
    let mut labels = Vec::with_capacity(expected);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let name = line.trim();
        if name.is_empty() {
            return Err(Error::parse(path, i + 1, "blank category name"));
        }
        labels.push(name.to_string());
    }
    if labels.len() != expected {
        return Err(Error::LexiconCount {
            expected,
            found: labels.len(),
        });
    }
    CategoryLexicon::new(labels)
}

/// Loads `expected` category names; line `i + 1` names category `i`.
pub fn load_lexicon(path: &Path, expected: usize) -> Result<CategoryLexicon> {
    read_lexicon(open(path)?, path, expected)
}
