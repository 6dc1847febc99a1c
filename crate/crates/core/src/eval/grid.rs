use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::EvalReport;
use super::representation::Representation;
use super::split::stratified_folds;
use crate::corpus::{ImageRecord, PrivacyLabel};
use crate::error::{Error, Result};
use crate::svm::{label_from_decision, solve, KernelSpec, KernelVector, SvmModel, TrainConfig};

pub const DEFAULT_C_VALUES: [f64; 6] = [0.1, 0.5, 1.0, 5.0, 10.0, 50.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c_values: Vec<f64>,
    pub kernels: Vec<KernelSpec>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            c_values: DEFAULT_C_VALUES.to_vec(),
            kernels: vec![KernelSpec::Linear, KernelSpec::Rbf { gamma: None }],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() || self.kernels.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one C value and one kernel".into()));
        }
        if let Some(c) = self.c_values.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::InvalidArgument(format!("grid C values must be positive, got {c}")));
        }
        Ok(())
    }

    /// Grid points in C-major order.
    pub fn points(&self) -> Vec<(f64, KernelSpec)> {
        self.c_values
            .iter()
            .flat_map(|&c| self.kernels.iter().map(move |&k| (c, k)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvRow {
    pub c: f64,
    pub kernel: KernelSpec,
    /// Gamma used by an RBF point, when it is the same in every fold.
    pub gamma: Option<f64>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub error: Option<String>,
}

impl CvRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CvTable {
    pub rows: Vec<CvRow>,
}

impl CvTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Computation(format!("writing CV table: {e}"));
        w.write_record(["c", "kernel", "gamma", "mean_accuracy", "std_accuracy"])
            .map_err(wrap)?;
        for r in &self.rows {
            let gamma = match (r.kernel, r.gamma) {
                (KernelSpec::Linear, _) => String::new(),
                (_, Some(g)) => g.to_string(),
                (_, None) => "auto".to_string(),
            };
            let (mean, std) = if r.failed() {
                ("nan".to_string(), "nan".to_string())
            } else {
                (r.mean_accuracy.to_string(), r.std_accuracy.to_string())
            };
            w.write_record([r.c.to_string(), r.kernel.name().to_string(), gamma, mean, std])
                .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::Computation(e.to_string()))
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct PreparedFold<V> {
    train_x: Vec<V>,
    train_y: Vec<f64>,
    val_x: Vec<V>,
    val_y: Vec<PrivacyLabel>,
}

fn accuracy<V: KernelVector>(model: &SvmModel<V>, xs: &[V], ys: &[PrivacyLabel]) -> Result<f64> {
    let mut correct = 0usize;
    for (x, y) in xs.iter().zip(ys) {
        if label_from_decision(model.decision_value(x)?) == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / xs.len() as f64)
}

/// Cross-validated grid search over C and kernel on the training records.
///
/// Representations are fitted inside each fold's training part. The best point
/// has the highest mean accuracy; ties prefer smaller C, then linear over RBF.
/// `base` supplies solver tolerances and the SMO seed.
pub fn grid_search_cv<R: Representation>(
    records: &[&ImageRecord],
    labels: &[PrivacyLabel],
    rep: &R,
    grid: &GridSpec,
    cv_k: usize,
    base: &TrainConfig,
    seed: u64,
) -> Result<(TrainConfig, CvTable)> {
    grid.validate()?;
    if records.len() != labels.len() {
        return Err(Error::InvalidArgument("records and labels differ in length".into()));
    }
    let folds = stratified_folds(labels, cv_k, seed)?;
    let prepared: Vec<PreparedFold<R::Vector>> = (0..cv_k)
        .into_par_iter()
        .map(|f| {
            let (tr, va) = folds.train_test(f);
            let train_recs: Vec<&ImageRecord> = tr.iter().map(|&i| records[i]).collect();
            let val_recs: Vec<&ImageRecord> = va.iter().map(|&i| records[i]).collect();
            let fitted = rep.fit(&train_recs)?;
            Ok(PreparedFold {
                train_x: rep.transform_all(&fitted, &train_recs)?,
                train_y: tr.iter().map(|&i| labels[i].sign()).collect(),
                val_x: rep.transform_all(&fitted, &val_recs)?,
                val_y: va.iter().map(|&i| labels[i]).collect(),
            })
        })
        .collect::<Result<_>>()?;

    let points = grid.points();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cv_k).map(move |f| (p, f)))
        .collect();
    let outcomes: Vec<Result<(f64, Option<f64>)>> = jobs
        .par_iter()
        .map(|&(p, f)| {
            let (c, kernel) = points[p];
            let fold = &prepared[f];
            let cfg = TrainConfig { c, kernel, ..base.clone() };
            let sol = solve(&fold.train_x, &fold.train_y, &cfg)?;
            let gamma = match sol.model.kernel {
                crate::svm::Kernel::Rbf(g) => Some(g),
                crate::svm::Kernel::Linear => None,
            };
            Ok((accuracy(&sol.model, &fold.val_x, &fold.val_y)?, gamma))
        })
        .collect();

    let mut rows = Vec::with_capacity(points.len());
    for (p, &(c, kernel)) in points.iter().enumerate() {
        let per_fold = &outcomes[p * cv_k..(p + 1) * cv_k];
        let error = per_fold.iter().find_map(|o| o.as_ref().err().map(|e| e.to_string()));
        let ok: Vec<(f64, Option<f64>)> = per_fold.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
        let accs: Vec<f64> = ok.iter().map(|(a, _)| *a).collect();
        let gamma = match ok.first() {
            Some((_, Some(g))) if ok.iter().all(|(_, h)| *h == Some(*g)) => Some(*g),
            _ => None,
        };
        let (mean, std) = if error.is_none() { mean_std(&accs) } else { (f64::NAN, f64::NAN) };
        if let Some(e) = &error {
            log::warn!("grid point C={c} {kernel} failed: {e}");
        }
        rows.push(CvRow {
            c,
            kernel,
            gamma,
            fold_accuracies: accs,
            mean_accuracy: mean,
            std_accuracy: std,
            error,
        });
    }

    let best = rows
        .iter()
        .filter(|r| !r.failed())
        .min_by(|a, b| {
            b.mean_accuracy
                .total_cmp(&a.mean_accuracy)
                .then(a.c.total_cmp(&b.c))
                .then(a.kernel.complexity_rank().cmp(&b.kernel.complexity_rank()))
        })
        .ok_or_else(|| Error::Computation("every grid point failed".into()))?;
    let cfg = TrainConfig {
        c: best.c,
        kernel: best.kernel,
        ..base.clone()
    };
    Ok((cfg, CvTable { rows }))
}

/// Scores `model` on labeled vectors.
pub fn evaluate<V: KernelVector>(model: &SvmModel<V>, xs: &[V], truth: &[PrivacyLabel]) -> Result<EvalReport> {
    if xs.len() != truth.len() {
        return Err(Error::InvalidArgument("test vectors and labels differ in length".into()));
    }
    let rows = xs
        .iter()
        .zip(truth)
        .map(|(x, &t)| {
            let f = model.decision_value(x)?;
            Ok((label_from_decision(f), t, f))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_predictions(&rows)
}
