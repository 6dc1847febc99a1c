use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::PrivacyLabel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// 2x2 confusion counts, `counts[truth][prediction]`, order public, private.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[u64; 2]; 2],
}

impl Confusion {
    pub fn from_pairs<I: IntoIterator<Item = (PrivacyLabel, PrivacyLabel)>>(pairs: I) -> Self {
        let mut counts = [[0u64; 2]; 2];
        for (pred, truth) in pairs {
            counts[truth.index()][pred.index()] += 1;
        }
        Confusion { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    pub fn class_metrics(&self, class: PrivacyLabel) -> ClassMetrics {
        let c = class.index();
        let tp = self.counts[c][c];
        let support = self.counts[c][0] + self.counts[c][1];
        let predicted = self.counts[0][c] + self.counts[1][c];
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support,
        }
    }

    /// Support-weighted averages over both classes.
    pub fn weighted(&self) -> WeightedMetrics {
        let n = self.total() as f64;
        let per: Vec<ClassMetrics> = PrivacyLabel::ALL.iter().map(|&l| self.class_metrics(l)).collect();
        let avg = |f: fn(&ClassMetrics) -> f64| per.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / n;
        WeightedMetrics {
            precision: avg(|m| m.precision),
            // support_c * tp_c / support_c summed over classes is the trace.
            recall: self.correct() as f64 / n,
            f1: avg(|m| m.f1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub evaluated: u64,
    pub confusion: Confusion,
    pub accuracy: f64,
    pub public: ClassMetrics,
    pub private: ClassMetrics,
    pub weighted: WeightedMetrics,
    pub pr_curve: Vec<PrPoint>,
}

impl EvalReport {
    /// Builds a report from `(prediction, truth, decision value)` triples.
    pub fn from_predictions(rows: &[(PrivacyLabel, PrivacyLabel, f64)]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("cannot evaluate on an empty test set".into()));
        }
        let confusion = Confusion::from_pairs(rows.iter().map(|&(p, t, _)| (p, t)));
        let scores: Vec<(f64, PrivacyLabel)> = rows.iter().map(|&(_, t, s)| (s, t)).collect();
        let pr = if scores.iter().any(|&(_, t)| t == PrivacyLabel::Private) {
            pr_curve(&scores)?
        } else {
            Vec::new()
        };
        let report = EvalReport {
            evaluated: confusion.total(),
            accuracy: confusion.accuracy(),
            public: confusion.class_metrics(PrivacyLabel::Public),
            private: confusion.class_metrics(PrivacyLabel::Private),
            weighted: confusion.weighted(),
            confusion,
            pr_curve: pr,
        };
        assert_eq!(report.weighted.recall, report.accuracy);
        Ok(report)
    }

    /// Row in the `features,accuracy,f1,precision,recall` comparison layout.
    pub fn summary_row(&self, name: &str) -> [String; 5] {
        [
            name.to_string(),
            format!("{:.4}", self.accuracy),
            format!("{:.3}", self.weighted.f1),
            format!("{:.3}", self.weighted.precision),
            format!("{:.3}", self.weighted.recall),
        ]
    }
}

/// Precision/recall of the private class at each distinct decision threshold,
/// sweeping from the highest score down. Each point counts every instance
/// scoring at or above its threshold as predicted private.
pub fn pr_curve(scores: &[(f64, PrivacyLabel)]) -> Result<Vec<PrPoint>> {
    let positives = scores.iter().filter(|&&(_, t)| t == PrivacyLabel::Private).count();
    if positives == 0 {
        return Err(Error::InvalidArgument("precision/recall curve needs at least one private instance".into()));
    }
    let mut sorted: Vec<(f64, PrivacyLabel)> = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            match sorted[i].1 {
                PrivacyLabel::Private => tp += 1,
                PrivacyLabel::Public => fp += 1,
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    Ok(points)
}

pub fn write_pr_csv<W: Write>(out: W, points: &[PrPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::Computation(format!("writing PR curve: {e}"));
    w.write_record(["threshold", "precision", "recall"]).map_err(wrap)?;
    for p in points {
        w.write_record([p.threshold.to_string(), p.precision.to_string(), p.recall.to_string()])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::Computation(e.to_string()))
}
