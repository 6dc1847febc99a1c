//! Soft-margin binary SVM trained with sequential minimal optimization.
//!
//! Targets are `+1` for private and `-1` for public. The decision function is
//! `f(x) = sum_i coef_i K(sv_i, x) + bias` with `coef_i = alpha_i y_i`.

mod io;
mod smo;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureVector, PrivacyLabel};
use crate::error::{Error, Result};
use crate::featurize::SparseVector;

pub use io::{read_model, write_model};
pub use smo::{dual_objective, solve, Solution};

/// Vector types the kernels can consume.
pub trait KernelVector: Clone + Send + Sync + fmt::Debug {
    /// Tag written into model files for this vector type.
    const FORMAT: &'static str;

    fn dim(&self) -> usize;
    fn dot(&self, other: &Self) -> f64;
    fn all_finite(&self) -> bool;

    fn sq_dist(&self, other: &Self) -> f64 {
        (self.dot(self) + other.dot(other) - 2.0 * self.dot(other)).max(0.0)
    }

    fn write_tokens(&self, out: &mut String);
    fn parse_tokens(tokens: &[&str], dim: usize) -> Result<Self>;
}

impl KernelVector for FeatureVector {
    const FORMAT: &'static str = "dense";

    fn dim(&self) -> usize {
        FeatureVector::dim(self)
    }

    fn dot(&self, other: &Self) -> f64 {
        self.values().iter().zip(other.values()).map(|(a, b)| a * b).sum()
    }

    fn all_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    fn sq_dist(&self, other: &Self) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    fn write_tokens(&self, out: &mut String) {
        use std::fmt::Write;
        for v in self.values() {
            let _ = write!(out, " {v:e}");
        }
    }

    fn parse_tokens(tokens: &[&str], dim: usize) -> Result<Self> {
        if tokens.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "expected {dim} values, found {}",
                tokens.len()
            )));
        }
        let values = tokens
            .iter()
            .map(|t| t.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        FeatureVector::new(values)
    }
}

impl KernelVector for SparseVector {
    const FORMAT: &'static str = "sparse";

    fn dim(&self) -> usize {
        SparseVector::dim(self)
    }

    fn dot(&self, other: &Self) -> f64 {
        SparseVector::dot(self, other)
    }

    fn all_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    fn write_tokens(&self, out: &mut String) {
        use std::fmt::Write;
        for (i, v) in self.iter() {
            let _ = write!(out, " {i}:{v:e}");
        }
    }

    fn parse_tokens(tokens: &[&str], dim: usize) -> Result<Self> {
        let pairs = tokens
            .iter()
            .map(|t| {
                let (i, v) = t
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidArgument(format!("expected index:value, found {t:?}")))?;
                let i = i.parse::<u32>().map_err(|e| Error::InvalidArgument(format!("{t:?}: {e}")))?;
                let v = v.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("{t:?}: {e}")))?;
                Ok((i, v))
            })
            .collect::<Result<Vec<_>>>()?;
        SparseVector::new(pairs, dim)
    }
}

/// Kernel choice as configured; RBF gamma defaults to `1 / dimension`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: Option<f64> },
}

impl KernelSpec {
    pub fn resolve(&self, dim: usize) -> Result<Kernel> {
        match *self {
            KernelSpec::Linear => Ok(Kernel::Linear),
            KernelSpec::Rbf { gamma: Some(g) } => Kernel::rbf(g),
            KernelSpec::Rbf { gamma: None } => {
                if dim == 0 {
                    return Err(Error::InvalidArgument("cannot derive gamma for dimension 0".into()));
                }
                Kernel::rbf(1.0 / dim as f64)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
        }
    }

    /// Linear sorts before RBF when breaking ties.
    pub fn complexity_rank(&self) -> u8 {
        match self {
            KernelSpec::Linear => 0,
            KernelSpec::Rbf { .. } => 1,
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => f.write_str("linear"),
            KernelSpec::Rbf { gamma: Some(g) } => write!(f, "rbf(gamma={g})"),
            KernelSpec::Rbf { gamma: None } => f.write_str("rbf(gamma=1/dim)"),
        }
    }
}

/// Kernel with all parameters fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    Rbf(f64),
}

impl Kernel {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("rbf gamma must be positive, got {gamma}")));
        }
        Ok(Kernel::Rbf(gamma))
    }

    #[inline]
    pub(crate) fn eval_unchecked<V: KernelVector>(&self, x: &V, y: &V) -> f64 {
        match *self {
            Kernel::Linear => x.dot(y),
            Kernel::Rbf(gamma) => (-gamma * x.sq_dist(y)).exp(),
        }
    }
}

/// Evaluates the kernel on two vectors of equal dimension.
pub fn kernel_eval<V: KernelVector>(kernel: &Kernel, x: &V, y: &V) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            id: "kernel argument".into(),
            expected: x.dim(),
            found: y.dim(),
        });
    }
    Ok(kernel.eval_unchecked(x, y))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub c: f64,
    pub kernel: KernelSpec,
    /// KKT tolerance on `y_i f(x_i) - 1`.
    pub tol: f64,
    /// Minimum relative alpha change for a pair update to count.
    pub eps: f64,
    /// Full sweeps without progress on the largest KKT violation before the
    /// heuristic phase gives up.
    pub max_passes: usize,
    /// Final maximal-violating-pair stage stops once the violation gap falls
    /// below this value.
    pub polish_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            kernel: KernelSpec::Linear,
            tol: 1e-3,
            eps: 1e-12,
            max_passes: 10,
            polish_tol: 1e-10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::InvalidArgument(format!("C must be positive, got {}", self.c)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.eps.is_nan() || self.eps < 0.0 || self.polish_tol.is_nan() || self.polish_tol <= 0.0 {
            return Err(Error::InvalidArgument("eps must be >= 0 and polish_tol > 0".into()));
        }
        if let KernelSpec::Rbf { gamma: Some(g) } = self.kernel {
            Kernel::rbf(g)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel<V> {
    pub support_vectors: Vec<V>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub kernel: Kernel,
    pub c: f64,
    pub dim: usize,
}

impl<V: KernelVector> SvmModel<V> {
    pub fn decision_value(&self, x: &V) -> Result<f64> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                id: "decision input".into(),
                expected: self.dim,
                found: x.dim(),
            });
        }
        Ok(self.decision_value_unchecked(x))
    }

    fn decision_value_unchecked(&self, x: &V) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, coef)| coef * self.kernel.eval_unchecked(sv, x))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: &V) -> Result<PrivacyLabel> {
        self.decision_value(x).map(label_from_decision)
    }
}

/// Positive decision values are private; zero goes to public, the majority class.
pub fn label_from_decision(f: f64) -> PrivacyLabel {
    if f > 0.0 {
        PrivacyLabel::Private
    } else {
        PrivacyLabel::Public
    }
}

/// Trains a model on `xs` with targets `ys` in {-1, +1}.
pub fn train<V: KernelVector>(xs: &[V], ys: &[f64], cfg: &TrainConfig) -> Result<SvmModel<V>> {
    solve(xs, ys, cfg).map(|s| s.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let x = fv(&[1.0, 2.0]);
        let y = fv(&[3.0, 4.0]);
        assert_eq!(kernel_eval(&Kernel::Linear, &x, &y).unwrap(), 11.0);
        assert_eq!(kernel_eval(&Kernel::rbf(0.7).unwrap(), &x, &x).unwrap(), 1.0);
        let k = kernel_eval(&Kernel::rbf(0.5).unwrap(), &fv(&[0.0, 0.0]), &fv(&[1.0, 1.0])).unwrap();
        assert!((k - 0.367_879_441_171_442_3).abs() < 1e-7);
        assert!(kernel_eval(&Kernel::Linear, &x, &fv(&[1.0])).is_err());
    }

    #[test]
    fn sparse_rbf_self_similarity_is_exact() {
        let s = SparseVector::new(vec![(0, 1.0), (4, 0.3)], 9).unwrap();
        assert_eq!(kernel_eval(&Kernel::rbf(2.0).unwrap(), &s, &s).unwrap(), 1.0);
    }

    #[test]
    fn gamma_defaults_to_inverse_dimension() {
        assert_eq!(KernelSpec::Rbf { gamma: None }.resolve(4).unwrap(), Kernel::Rbf(0.25));
        assert!(KernelSpec::Rbf { gamma: Some(0.0) }.resolve(4).is_err());
    }

    #[test]
    fn predict_sign_rule() {
        assert_eq!(label_from_decision(2.0), PrivacyLabel::Private);
        assert_eq!(label_from_decision(-0.5), PrivacyLabel::Public);
        assert_eq!(label_from_decision(0.0), PrivacyLabel::Public);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { c: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
