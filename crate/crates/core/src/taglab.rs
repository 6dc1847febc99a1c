//! Tag analytics: information-gain ranking, per-class frequency clouds and
//! thresholded co-occurrence graphs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::Serialize;

use crate::corpus::{PrivacyLabel, TagSet};
use crate::error::{Error, Result};
use crate::eval::stratified_folds;

pub const DEFAULT_CLOUD_SIZE: usize = 100;
pub const DEFAULT_EDGE_THRESHOLD: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TagStat {
    pub tag: String,
    /// Information gain in bits.
    pub ig: f64,
    pub freq_public: usize,
    pub freq_private: usize,
}

fn entropy(counts: [usize; 2]) -> f64 {
    let total = counts[0] + counts[1];
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

fn ig_bits(present: [usize; 2], class_totals: [usize; 2]) -> f64 {
    let n = (class_totals[0] + class_totals[1]) as f64;
    let absent = [class_totals[0] - present[0], class_totals[1] - present[1]];
    let p_present = (present[0] + present[1]) as f64 / n;
    let p_absent = (absent[0] + absent[1]) as f64 / n;
    let ig = entropy(class_totals) - (p_present * entropy(present) + p_absent * entropy(absent));
    ig.max(0.0)
}

fn tally<'a, I>(records: I) -> (BTreeMap<&'a str, [usize; 2]>, [usize; 2])
where
    I: IntoIterator<Item = (&'a TagSet, PrivacyLabel)>,
{
    let mut per_tag: BTreeMap<&str, [usize; 2]> = BTreeMap::new();
    let mut totals = [0usize; 2];
    for (tags, label) in records {
        totals[label.index()] += 1;
        for t in tags.iter() {
            per_tag.entry(t).or_default()[label.index()] += 1;
        }
    }
    (per_tag, totals)
}

fn rank(mut stats: Vec<TagStat>) -> Vec<TagStat> {
    stats.sort_by(|a, b| b.ig.total_cmp(&a.ig).then_with(|| a.tag.cmp(&b.tag)));
    stats
}

/// Information gain of each tag's presence about the class, base 2, sorted
/// by decreasing gain with ties broken lexicographically.
pub fn information_gain(records: &[(&TagSet, PrivacyLabel)]) -> Result<Vec<TagStat>> {
    let (per_tag, totals) = tally(records.iter().copied());
    if totals[0] == 0 || totals[1] == 0 {
        return Err(Error::SingleClass);
    }
    Ok(rank(
        per_tag
            .into_iter()
            .map(|(tag, present)| TagStat {
                tag: tag.to_string(),
                ig: ig_bits(present, totals),
                freq_public: present[0],
                freq_private: present[1],
            })
            .collect(),
    ))
}

/// Mean information gain over the training parts of `k` stratified folds.
/// Frequencies are counted over all `records`.
pub fn information_gain_cv(records: &[(&TagSet, PrivacyLabel)], k: usize, seed: u64) -> Result<Vec<TagStat>> {
    let labels: Vec<PrivacyLabel> = records.iter().map(|(_, l)| *l).collect();
    let folds = stratified_folds(&labels, k, seed)?;
    let (all_tags, _) = tally(records.iter().copied());
    let mut sums: BTreeMap<&str, f64> = all_tags.keys().map(|&t| (t, 0.0)).collect();
    for f in 0..k {
        let (train, _) = folds.train_test(f);
        let (per_tag, totals) = tally(train.iter().map(|&i| records[i]));
        for (tag, present) in per_tag {
            *sums.get_mut(tag).expect("tag seen in full corpus") += ig_bits(present, totals);
        }
    }
    Ok(rank(
        all_tags
            .into_iter()
            .map(|(tag, present)| TagStat {
                tag: tag.to_string(),
                ig: sums[tag] / k as f64,
                freq_public: present[0],
                freq_private: present[1],
            })
            .collect(),
    ))
}

/// Writes `rank,tag,ig_bits,source`; `source_of` names where a tag came from.
pub fn write_ig_csv<W: Write>(out: W, stats: &[TagStat], source_of: impl Fn(&str) -> &'static str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::Computation(format!("writing IG table: {e}"));
    w.write_record(["rank", "tag", "ig_bits", "source"]).map_err(wrap)?;
    for (i, s) in stats.iter().enumerate() {
        w.write_record([(i + 1).to_string(), s.tag.clone(), s.ig.to_string(), source_of(&s.tag).to_string()])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::Computation(e.to_string()))
}

/// Most frequent tags among records of `class`, counted once per record.
pub fn frequency_cloud(records: &[(&TagSet, PrivacyLabel)], class: PrivacyLabel, top_n: usize) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (tags, label) in records {
        if *label == class {
            for t in tags.iter() {
                *counts.entry(t).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
    // BTreeMap order is lexicographic and the sort is stable.
    ranked.sort_by_key(|e| std::cmp::Reverse(e.1));
    ranked.truncate(top_n);
    ranked
}

pub fn write_cloud_csv<W: Write>(out: W, cloud: &[(String, usize)], class: PrivacyLabel) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::Computation(format!("writing tag cloud: {e}"));
    w.write_record(["tag", "count", "class"]).map_err(wrap)?;
    for (tag, count) in cloud {
        w.write_record([tag.as_str(), &count.to_string(), class.as_str()]).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::Computation(e.to_string()))
}

/// Undirected weighted graph; edge keys are ordered `(smaller, larger)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CooccurrenceGraph {
    pub class: PrivacyLabel,
    pub nodes: BTreeSet<String>,
    pub edges: BTreeMap<(String, String), usize>,
    pub threshold: usize,
}

impl CooccurrenceGraph {
    fn from_edges(class: PrivacyLabel, threshold: usize, edges: BTreeMap<(String, String), usize>) -> Self {
        let nodes = edges
            .keys()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect();
        CooccurrenceGraph {
            class,
            nodes,
            edges,
            threshold,
        }
    }

    pub fn weight(&self, a: &str, b: &str) -> Option<usize> {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.edges.get(&(key.0.to_string(), key.1.to_string())).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Tab-separated adjacency: `node<TAB>neighbor<TAB>weight`, one line per
    /// edge direction, sorted by node then neighbor.
    pub fn write_adjacency<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut adj: BTreeMap<&str, Vec<(&str, usize)>> = BTreeMap::new();
        for ((a, b), w) in &self.edges {
            adj.entry(a).or_default().push((b, *w));
            adj.entry(b).or_default().push((a, *w));
        }
        for (node, mut nbrs) in adj {
            nbrs.sort();
            for (n, w) in nbrs {
                writeln!(out, "{node}\t{n}\t{w}")?;
            }
        }
        Ok(())
    }

    pub fn write_dot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        fn quote(s: &str) -> String {
            format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
        }
        writeln!(out, "graph {} {{", quote(&format!("{}_cooccurrence", self.class)))?;
        for n in &self.nodes {
            writeln!(out, "  {};", quote(n))?;
        }
        for ((a, b), w) in &self.edges {
            writeln!(out, "  {} -- {} [weight={w}];", quote(a), quote(b))?;
        }
        writeln!(out, "}}")
    }
}

/// Edges between tags appearing together on records of `class`, keeping pairs
/// seen on at least `threshold` records.
pub fn cooccurrence_graph(
    records: &[(&TagSet, PrivacyLabel)],
    class: PrivacyLabel,
    threshold: usize,
) -> Result<CooccurrenceGraph> {
    if threshold == 0 {
        return Err(Error::InvalidArgument("co-occurrence threshold must be at least 1".into()));
    }
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for (tags, label) in records {
        if *label != class {
            continue;
        }
        let list: Vec<&str> = tags.iter().collect();
        for (i, a) in list.iter().enumerate() {
            for b in &list[i + 1..] {
                *counts.entry((a, b)).or_default() += 1;
            }
        }
    }
    let edges = counts
        .into_iter()
        .filter(|&(_, w)| w >= threshold)
        .map(|((a, b), w)| ((a.to_string(), b.to_string()), w))
        .collect();
    Ok(CooccurrenceGraph::from_edges(class, threshold, edges))
}

/// Restriction to edges touching any focus tag.
pub fn ego_subgraph<S: AsRef<str>>(graph: &CooccurrenceGraph, focus: &[S]) -> CooccurrenceGraph {
    let focus: BTreeSet<&str> = focus.iter().map(AsRef::as_ref).collect();
    let edges = graph
        .edges
        .iter()
        .filter(|((a, b), _)| focus.contains(a.as_str()) || focus.contains(b.as_str()))
        .map(|(k, w)| (k.clone(), *w))
        .collect();
    CooccurrenceGraph::from_edges(graph.class, graph.threshold, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use PrivacyLabel::*;

    fn ts(tags: &[&str]) -> TagSet {
        TagSet::try_from_iter(tags.iter().copied()).unwrap()
    }

    #[test]
    fn perfectly_predictive_tag_is_one_bit() {
        let (t, e) = (ts(&["t"]), ts(&[]));
        let recs = [(&t, Private), (&t, Private), (&e, Public), (&e, Public)];
        let stats = information_gain(&recs).unwrap();
        assert_eq!(stats[0].ig, 1.0);
        assert_eq!((stats[0].freq_private, stats[0].freq_public), (2, 0));
    }

    #[test]
    fn constant_tag_has_zero_gain() {
        let a = ts(&["all", "x"]);
        let b = ts(&["all"]);
        let recs = [(&a, Private), (&b, Public), (&b, Private)];
        let stats = information_gain(&recs).unwrap();
        let all = stats.iter().find(|s| s.tag == "all").unwrap();
        assert_eq!(all.ig, 0.0);
    }

    #[test]
    fn three_of_six_example() {
        let (t, e) = (ts(&["t"]), ts(&[]));
        let recs = [
            (&t, Private),
            (&t, Private),
            (&e, Private),
            (&t, Public),
            (&e, Public),
            (&e, Public),
        ];
        let ig = information_gain(&recs).unwrap()[0].ig;
        // 1 - H(2/3), H(2/3) = 0.918295834054...
        assert!((ig - 0.0817).abs() < 1e-4, "{ig}");
        assert!((ig - (1.0 - 0.918_295_834_054_489_6)).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_an_error() {
        let t = ts(&["t"]);
        assert!(information_gain(&[(&t, Public), (&t, Public)]).is_err());
    }

    #[test]
    fn clouds() {
        let a = ts(&["portrait", "girl"]);
        let b = ts(&["portrait"]);
        let c = ts(&["beach"]);
        let recs = [(&a, Private), (&b, Private), (&c, Private), (&c, Public)];
        let cloud = frequency_cloud(&recs, Private, 100);
        assert_eq!(cloud[0], ("portrait".to_string(), 2));
        assert_eq!(cloud.len(), 3);
        assert_eq!(cloud[1].0, "beach");
        assert_eq!(frequency_cloud(&recs, Private, 1).len(), 1);
    }

    #[test]
    fn graph_examples() {
        let pp = ts(&["photo", "portrait"]);
        let single = ts(&["alone"]);
        let recs = [(&pp, Private), (&pp, Private), (&single, Private)];
        let g = cooccurrence_graph(&recs, Private, 1).unwrap();
        assert_eq!(g.weight("portrait", "photo"), Some(2));
        assert!(!g.nodes.contains("alone"));
        assert!(cooccurrence_graph(&recs, Private, 3).unwrap().is_empty());
        assert!(cooccurrence_graph(&recs, Private, 0).is_err());
    }

    #[test]
    fn ego_examples() {
        let a = ts(&["photo", "portrait"]);
        let b = ts(&["beach", "girl"]);
        let recs = [(&a, Private), (&b, Private)];
        let g = cooccurrence_graph(&recs, Private, 1).unwrap();
        let ego = ego_subgraph(&g, &["photo"]);
        assert_eq!(ego.edges.len(), 1);
        assert_eq!(ego.weight("photo", "portrait"), Some(1));
        assert!(ego_subgraph(&g, &["absent"]).is_empty());
    }

    #[test]
    fn dot_export() {
        let a = ts(&["photo", "portrait"]);
        let g = cooccurrence_graph(&[(&a, Private), (&a, Private)], Private, 2).unwrap();
        let mut buf = Vec::new();
        g.write_dot(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"photo\" -- \"portrait\" [weight=2];"), "{text}");
    }

    fn corpus() -> impl Strategy<Value = Vec<(TagSet, PrivacyLabel)>> {
        prop::collection::vec(
            (
                prop::collection::btree_set("[a-e]", 0..4),
                prop::bool::ANY.prop_map(|b| if b { Private } else { Public }),
            ),
            2..50,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(s, l)| (TagSet::try_from_iter(s).unwrap(), l))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn ig_is_bounded_and_label_symmetric(data in corpus()) {
            let recs: Vec<(&TagSet, PrivacyLabel)> = data.iter().map(|(t, l)| (t, *l)).collect();
            prop_assume!(recs.iter().any(|r| r.1 == Private) && recs.iter().any(|r| r.1 == Public));
            let flipped: Vec<(&TagSet, PrivacyLabel)> = recs
                .iter()
                .map(|&(t, l)| (t, if l == Private { Public } else { Private }))
                .collect();
            let a = information_gain(&recs).unwrap();
            let b = information_gain(&flipped).unwrap();
            let n = recs.len();
            let priv_n = recs.iter().filter(|r| r.1 == Private).count();
            let hc = entropy([n - priv_n, priv_n]);
            for s in &a {
                let other = b.iter().find(|o| o.tag == s.tag).unwrap();
                prop_assert!((s.ig - other.ig).abs() < 1e-12);
                let present = s.freq_private + s.freq_public;
                let ht = entropy([present, n - present]);
                prop_assert!(s.ig >= 0.0 && s.ig <= hc.min(ht) + 1e-12);
            }
        }

        #[test]
        fn edge_weight_bounded_by_frequencies(data in corpus(), threshold in 1usize..3) {
            let recs: Vec<(&TagSet, PrivacyLabel)> = data.iter().map(|(t, l)| (t, *l)).collect();
            let g = cooccurrence_graph(&recs, Private, threshold).unwrap();
            let cloud: BTreeMap<String, usize> = frequency_cloud(&recs, Private, usize::MAX).into_iter().collect();
            for ((a, b), w) in &g.edges {
                prop_assert!(a != b);
                prop_assert!(*w >= threshold);
                prop_assert!(*w <= cloud[a].min(cloud[b]));
                prop_assert!(g.nodes.contains(a) && g.nodes.contains(b));
            }
        }
    }
}
