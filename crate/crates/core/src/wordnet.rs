//! WordNet database reader and tag-set expansion over synonym, hypernym and
//! hyponym relations.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotate::{normalize_tag, AnnotationConfig};
use crate::corpus::TagSet;
use crate::error::{Error, Result};

pub const WORDNET_DIR_ENV: &str = "PICPRIV_WORDNET_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
}

impl Pos {
    pub const ALL: [Pos; 4] = [Pos::Noun, Pos::Verb, Pos::Adj, Pos::Adv];

    /// Database file suffix, as in `data.noun`.
    pub fn file_suffix(self) -> &'static str {
        match self {
            Pos::Noun => "noun",
            Pos::Verb => "verb",
            Pos::Adj => "adj",
            Pos::Adv => "adv",
        }
    }

    pub fn code(self) -> char {
        match self {
            Pos::Noun => 'n',
            Pos::Verb => 'v',
            Pos::Adj => 'a',
            Pos::Adv => 'r',
        }
    }

    /// Satellite adjectives (`s`) live with adjectives.
    pub fn from_code(code: &str) -> Option<Pos> {
        match code {
            "n" => Some(Pos::Noun),
            "v" => Some(Pos::Verb),
            "a" | "s" => Some(Pos::Adj),
            "r" => Some(Pos::Adv),
            _ => None,
        }
    }
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pos::ALL
            .into_iter()
            .find(|p| p.file_suffix() == s.to_ascii_lowercase() || p.code().to_string() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown part of speech {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SynsetId {
    pub pos: Pos,
    pub offset: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Synset {
    /// Lowercase lemmas, underscores for spaces.
    pub lemmas: Vec<String>,
    pub hypernyms: Vec<SynsetId>,
    pub hyponyms: Vec<SynsetId>,
}

#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    synsets: HashMap<SynsetId, Synset>,
    index: BTreeMap<(String, Pos), Vec<u32>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Synonym,
    Hypernym,
    Hyponym,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Synonym => "synonym",
            Relation::Hypernym => "hypernym",
            Relation::Hyponym => "hyponym",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "synonym" | "synonyms" => Ok(Relation::Synonym),
            "hypernym" | "hypernyms" => Ok(Relation::Hypernym),
            "hyponym" | "hyponyms" => Ok(Relation::Hyponym),
            other => Err(Error::InvalidArgument(format!(
                "unknown relation {other:?} (expected synonym, hypernym or hyponym)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionSpec {
    pub relation: Relation,
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_depth() -> usize {
    1
}

impl ExpansionSpec {
    pub fn new(relation: Relation, depth: usize) -> Result<Self> {
        let spec = ExpansionSpec { relation, depth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidArgument("expansion depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Lines of a database file that are neither blank nor part of the license
/// header (which is indented by two spaces).
fn database_lines<'p, R: BufRead + 'p>(
    reader: R,
    path: &'p Path,
) -> impl Iterator<Item = Result<(usize, String)>> + 'p {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Err(e) => Some(Err(Error::io(path, e))),
            Ok(l) if l.starts_with("  ") || l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
        })
}

struct Fields<'a> {
    iter: std::str::SplitAsciiWhitespace<'a>,
    path: &'a Path,
    line: usize,
}

impl<'a> Fields<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.iter
            .next()
            .ok_or_else(|| Error::parse(self.path, self.line, format!("missing {what}")))
    }

    fn number(&mut self, what: &str, radix: u32) -> Result<u32> {
        let tok = self.next(what)?;
        u32::from_str_radix(tok, radix)
            .map_err(|_| Error::parse(self.path, self.line, format!("invalid {what} {tok:?}")))
    }
}

fn lemma_from_data(word: &str) -> String {
    // Adjective entries may carry a syntactic marker such as `(a)` or `(ip)`.
    let word = match word.find('(') {
        Some(i) if word.ends_with(')') => &word[..i],
        _ => word,
    };
    word.to_lowercase()
}

/// Parses one part of speech from its `index.<pos>` and `data.<pos>` files.
pub fn parse_wordnet<I: BufRead, D: BufRead>(
    index: I,
    index_path: &Path,
    data: D,
    data_path: &Path,
    pos: Pos,
) -> Result<Lexicon> {
    let mut lex = Lexicon::default();
    lex.add_data(data, data_path, pos)?;
    lex.add_index(index, index_path, pos)?;
    lex.check_pointers(pos)?;
    Ok(lex)
}

/// Loads `index.<pos>`/`data.<pos>` for each requested part of speech.
pub fn load_wordnet(dir: &Path, parts: &[Pos]) -> Result<Lexicon> {
    let mut lex = Lexicon::default();
    let open = |name: String| {
        let path = dir.join(name);
        File::open(&path)
            .map(|f| (BufReader::new(f), path.clone()))
            .map_err(|e| Error::io(&path, e))
    };
    for &pos in parts {
        let (data, data_path) = open(format!("data.{}", pos.file_suffix()))?;
        lex.add_data(data, &data_path, pos)?;
        let (index, index_path) = open(format!("index.{}", pos.file_suffix()))?;
        lex.add_index(index, &index_path, pos)?;
    }
    for &pos in parts {
        lex.check_pointers(pos)?;
    }
    Ok(lex)
}

impl Lexicon {
    fn add_data<R: BufRead>(&mut self, reader: R, path: &Path, pos: Pos) -> Result<()> {
        for item in database_lines(reader, path) {
            let (line, text) = item?;
            let body = text.split(" | ").next().unwrap_or(&text);
            let mut f = Fields {
                iter: body.split_ascii_whitespace(),
                path,
                line,
            };
            let offset = f.number("synset offset", 10)?;
            f.next("lexicographer file number")?;
            let ss_type = f.next("synset type")?;
            if Pos::from_code(ss_type) != Some(pos) {
                return Err(Error::parse(path, line, format!("synset type {ss_type:?} in {} file", pos.file_suffix())));
            }
            let w_cnt = f.number("word count", 16)?;
            let mut synset = Synset::default();
            for _ in 0..w_cnt {
                synset.lemmas.push(lemma_from_data(f.next("word")?));
                f.next("lex id")?;
            }
            let p_cnt = f.number("pointer count", 10)?;
            for _ in 0..p_cnt {
                let symbol = f.next("pointer symbol")?;
                let target = f.number("pointer offset", 10)?;
                let target_pos = f.next("pointer part of speech")?;
                f.next("pointer source/target")?;
                let Some(target_pos) = Pos::from_code(target_pos) else {
                    return Err(Error::parse(path, line, format!("invalid pointer part of speech {target_pos:?}")));
                };
                // Only same-part-of-speech hierarchy links are kept.
                if target_pos != pos {
                    continue;
                }
                let id = SynsetId { pos, offset: target };
                match symbol {
                    "@" => synset.hypernyms.push(id),
                    "~" => synset.hyponyms.push(id),
                    _ => {}
                }
            }
            if self.synsets.insert(SynsetId { pos, offset }, synset).is_some() {
                return Err(Error::parse(path, line, format!("duplicate synset offset {offset:08}")));
            }
        }
        Ok(())
    }

    fn add_index<R: BufRead>(&mut self, reader: R, path: &Path, pos: Pos) -> Result<()> {
        for item in database_lines(reader, path) {
            let (line, text) = item?;
            let mut f = Fields {
                iter: text.split_ascii_whitespace(),
                path,
                line,
            };
            let lemma = f.next("lemma")?.to_lowercase();
            let code = f.next("part of speech")?;
            if Pos::from_code(code) != Some(pos) {
                return Err(Error::parse(path, line, format!("part of speech {code:?} in {} index", pos.file_suffix())));
            }
            let synset_cnt = f.number("synset count", 10)?;
            let p_cnt = f.number("pointer count", 10)?;
            for _ in 0..p_cnt {
                f.next("pointer symbol")?;
            }
            f.number("sense count", 10)?;
            f.number("tagged sense count", 10)?;
            let mut offsets = Vec::with_capacity(synset_cnt as usize);
            for _ in 0..synset_cnt {
                let offset = f.number("synset offset", 10)?;
                if !self.synsets.contains_key(&SynsetId { pos, offset }) {
                    return Err(Error::parse(path, line, format!("{lemma:?} refers to unknown synset {offset:08}")));
                }
                offsets.push(offset);
            }
            if f.iter.next().is_some() {
                return Err(Error::parse(path, line, "trailing fields after synset offsets"));
            }
            self.index.insert((lemma, pos), offsets);
        }
        Ok(())
    }

    fn check_pointers(&self, pos: Pos) -> Result<()> {
        let mut sorted: Vec<(&SynsetId, &Synset)> = self.synsets.iter().filter(|(id, _)| id.pos == pos).collect();
        sorted.sort_by_key(|(id, _)| **id);
        for (id, s) in sorted {
            if let Some(t) = s.hypernyms.iter().chain(&s.hyponyms).find(|t| !self.synsets.contains_key(t)) {
                return Err(Error::MissingData(format!(
                    "WordNet synset {:08} points to missing synset {:08}",
                    id.offset, t.offset
                )));
            }
        }
        Ok(())
    }

    pub fn synset_count(&self) -> usize {
        self.synsets.len()
    }

    pub fn lemma_count(&self) -> usize {
        self.index.len()
    }

    pub fn synset(&self, id: SynsetId) -> Option<&Synset> {
        self.synsets.get(&id)
    }

    /// Senses of `lemma`; spaces are accepted in place of underscores.
    pub fn senses(&self, lemma: &str, pos: Pos) -> &[u32] {
        let key = lemma.trim().to_lowercase().replace(' ', "_");
        self.index.get(&(key, pos)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn index_entries(&self) -> impl Iterator<Item = (&str, Pos, &[u32])> + '_ {
        self.index.iter().map(|((l, p), o)| (l.as_str(), *p, o.as_slice()))
    }

    /// Writes the retained part of the lemma index in `index.<pos>` grammar.
    pub fn write_index<W: Write>(&self, mut out: W, pos: Pos) -> std::io::Result<()> {
        for ((lemma, p), offsets) in &self.index {
            if *p != pos {
                continue;
            }
            write!(out, "{lemma} {} {} 0 {} 0", pos.code(), offsets.len(), offsets.len())?;
            for o in offsets {
                write!(out, " {o:08}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Synsets reachable from `start` in 1..=depth hops of `relation`.
    fn reachable(&self, start: &[SynsetId], relation: Relation, depth: usize) -> BTreeSet<SynsetId> {
        let mut found = BTreeSet::new();
        let mut frontier: Vec<SynsetId> = start.to_vec();
        let mut visited: HashSet<SynsetId> = HashSet::new();
        for _ in 0..depth {
            let mut next = Vec::new();
            for id in frontier {
                let s = &self.synsets[&id];
                let targets = match relation {
                    Relation::Hypernym => &s.hypernyms,
                    Relation::Hyponym => &s.hyponyms,
                    Relation::Synonym => unreachable!("synonyms are not a traversal"),
                };
                for &t in targets {
                    found.insert(t);
                    if visited.insert(t) {
                        next.push(t);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        found
    }

    /// Related lemmas of one tag, with underscores turned into spaces.
    pub fn related_lemmas(&self, tag: &str, spec: &ExpansionSpec) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let parts: BTreeSet<Pos> = self.index.keys().map(|(_, p)| *p).collect();
        for pos in parts {
            let senses: Vec<SynsetId> = self.senses(tag, pos).iter().map(|&offset| SynsetId { pos, offset }).collect();
            let synsets: Vec<SynsetId> = match spec.relation {
                Relation::Synonym => senses,
                rel => self.reachable(&senses, rel, spec.depth).into_iter().collect(),
            };
            for id in synsets {
                out.extend(self.synsets[&id].lemmas.iter().map(|l| l.replace('_', " ")));
            }
        }
        out
    }
}

/// `tags` plus their related lemmas, re-filtered with the default tag
/// normalization.
pub fn expand_tagset(tags: &TagSet, lex: &Lexicon, spec: &ExpansionSpec) -> TagSet {
    expand_tagset_with(tags, lex, spec, &AnnotationConfig::default())
}

pub fn expand_tagset_with(tags: &TagSet, lex: &Lexicon, spec: &ExpansionSpec, cfg: &AnnotationConfig) -> TagSet {
    let mut out = tags.clone();
    for tag in tags.iter() {
        for lemma in lex.related_lemmas(tag, spec) {
            if let Some(clean) = normalize_tag(&lemma, cfg) {
                out.insert_normalized(clean);
            }
        }
    }
    out
}
