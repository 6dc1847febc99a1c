//! Line-oriented model files.
//!
//! ```text
//! picpriv-svm-model 1
//! kernel rbf 5e-1
//! c 5e0
//! bias -1e0
//! vectors dense 3
//! count 2
//! sv <coef> <v1> <v2> <v3>
//! sv <coef> ...
//! ```
//!
//! Sparse models write `index:value` tokens after the coefficient. Floats use
//! shortest round-trip exponent notation, so reloading is exact.

use std::io::{BufRead, Write};
use std::path::Path;

use super::{Kernel, KernelVector, SvmModel};
use crate::error::{Error, Result};

const MAGIC: &str = "picpriv-svm-model";

pub fn write_model<V: KernelVector, W: Write>(model: &SvmModel<V>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{MAGIC} 1")?;
    match model.kernel {
        Kernel::Linear => writeln!(out, "kernel linear")?,
        Kernel::Rbf(g) => writeln!(out, "kernel rbf {g:e}")?,
    }
    writeln!(out, "c {:e}", model.c)?;
    writeln!(out, "bias {:e}", model.bias)?;
    writeln!(out, "vectors {} {}", V::FORMAT, model.dim)?;
    writeln!(out, "count {}", model.support_vectors.len())?;
    let mut line = String::new();
    for (sv, coef) in model.support_vectors.iter().zip(&model.dual_coefs) {
        line.clear();
        line.push_str(&format!("sv {coef:e}"));
        sv.write_tokens(&mut line);
        writeln!(out, "{line}")?;
    }
    Ok(())
}

struct Lines<'p, I> {
    inner: I,
    path: &'p Path,
}

impl<I: Iterator<Item = Result<(usize, String)>>> Lines<'_, I> {
    fn next(&mut self, what: &str) -> Result<(usize, Vec<String>)> {
        let (n, line) = self
            .inner
            .next()
            .ok_or_else(|| Error::parse(self.path, 0, format!("unexpected end of file, expected {what}")))??;
        Ok((n, line.split_whitespace().map(str::to_string).collect()))
    }

    fn scalar(&mut self, key: &str) -> Result<(usize, String)> {
        let (n, t) = self.next(key)?;
        if t.len() != 2 || t[0] != key {
            return Err(Error::parse(self.path, n, format!("expected `{key} <value>`")));
        }
        Ok((n, t[1].clone()))
    }

    fn float(&self, n: usize, t: &str) -> Result<f64> {
        t.parse::<f64>()
            .map_err(|e| Error::parse(self.path, n, format!("bad number {t:?}: {e}")))
    }

    fn count(&self, n: usize, t: &str) -> Result<usize> {
        t.parse::<usize>()
            .map_err(|e| Error::parse(self.path, n, format!("bad integer {t:?}: {e}")))
    }
}

pub fn read_model<V: KernelVector, R: BufRead>(reader: R, path: &Path) -> Result<SvmModel<V>> {
    let inner = reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(|e| Error::io(path, e)))
        .filter(|r| !matches!(r, Ok((_, l)) if l.starts_with('#') || l.trim().is_empty()));
    let mut lines = Lines { inner, path };

    let (n, head) = lines.next("header")?;
    if head.len() != 2 || head[0] != MAGIC || head[1] != "1" {
        return Err(Error::parse(path, n, "not a picpriv model file"));
    }
    let (n, k) = lines.next("kernel")?;
    let kernel = match k.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["kernel", "linear"] => Kernel::Linear,
        ["kernel", "rbf", g] => {
            Kernel::rbf(lines.float(n, g)?).map_err(|e| Error::parse(path, n, e.to_string()))?
        }
        _ => return Err(Error::parse(path, n, "expected `kernel linear` or `kernel rbf <gamma>`")),
    };
    let (n, c) = lines.scalar("c")?;
    let c = lines.float(n, &c)?;
    let (n, bias) = lines.scalar("bias")?;
    let bias = lines.float(n, &bias)?;
    let (n, v) = lines.next("vectors")?;
    if v.len() != 3 || v[0] != "vectors" || v[1] != V::FORMAT {
        return Err(Error::parse(path, n, format!("expected `vectors {} <dim>`", V::FORMAT)));
    }
    let dim = lines.count(n, &v[2])?;
    let (n, count) = lines.scalar("count")?;
    let count = lines.count(n, &count)?;

    let mut support_vectors = Vec::with_capacity(count);
    let mut dual_coefs = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, t) = lines.next("support vector")?;
        if t.len() < 2 || t[0] != "sv" {
            return Err(Error::parse(path, n, "expected `sv <coef> ...`"));
        }
        dual_coefs.push(lines.float(n, &t[1])?);
        let tokens: Vec<&str> = t[2..].iter().map(String::as_str).collect();
        support_vectors.push(V::parse_tokens(&tokens, dim).map_err(|e| Error::parse(path, n, e.to_string()))?);
    }
    Ok(SvmModel {
        support_vectors,
        dual_coefs,
        bias,
        kernel,
        c,
        dim,
    })
}
