//! Pairwise dual solver.
//!
//! The heuristic phase follows the classic outer loop: sweep all examples
//! (seeded random order) or the non-bound ones, pick a KKT violator, then pair
//! it with the example maximizing `|E_i - E_j|`, falling back to scans of the
//! non-bound and then all examples. A final phase repeatedly updates the
//! maximal violating pair until the violation gap is below `polish_tol`.
//!
//! Gradients are cached as `g_i = sum_j alpha_j y_j K_ij - y_i`, so the error
//! of example `i` is `g_i + bias` and bias changes never touch the cache.

use std::collections::VecDeque;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Kernel, KernelVector, SvmModel, TrainConfig};
use crate::error::{Error, Result};

/// Solver output: the model plus the full multiplier vector and diagnostics.
#[derive(Clone, Debug)]
pub struct Solution<V> {
    pub model: SvmModel<V>,
    pub alpha: Vec<f64>,
    pub objective: f64,
    /// Accepted pair updates.
    pub iterations: usize,
    /// Accepted updates whose objective change was negative beyond rounding.
    pub objective_decreases: usize,
    /// Largest violation gap `max_{I_up} -g - min_{I_low} -g` at exit.
    pub final_gap: f64,
}

const CACHE_BUDGET_BYTES: usize = 256 << 20;

/// Multipliers within this fraction of C from a bound are set to the bound.
const BOUND_SNAP: f64 = 1e-12;

struct KernelRows<'a, V> {
    xs: &'a [V],
    kernel: Kernel,
    diag: Vec<f64>,
    rows: Vec<Option<Rc<[f64]>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a, V: KernelVector> KernelRows<'a, V> {
    fn new(xs: &'a [V], kernel: Kernel) -> Self {
        let n = xs.len();
        let diag = xs.iter().map(|x| kernel.eval_unchecked(x, x)).collect();
        let capacity = (CACHE_BUDGET_BYTES / (8 * n.max(1))).clamp(2, n.max(2));
        KernelRows {
            xs,
            kernel,
            diag,
            rows: vec![None; n],
            order: VecDeque::new(),
            capacity,
        }
    }

    fn row(&mut self, i: usize) -> Rc<[f64]> {
        if let Some(r) = &self.rows[i] {
            return Rc::clone(r);
        }
        if self.order.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.rows[old] = None;
            }
        }
        let xi = &self.xs[i];
        let row: Rc<[f64]> = self
            .xs
            .iter()
            .enumerate()
            .map(|(j, xj)| if j == i { self.diag[i] } else { self.kernel.eval_unchecked(xi, xj) })
            .collect();
        self.rows[i] = Some(Rc::clone(&row));
        self.order.push_back(i);
        row
    }
}

struct Smo<'a, V> {
    y: &'a [f64],
    c: f64,
    tol: f64,
    eps: f64,
    alpha: Vec<f64>,
    g: Vec<f64>,
    bias: f64,
    k: KernelRows<'a, V>,
    iterations: usize,
    objective_decreases: usize,
}

impl<V: KernelVector> Smo<'_, V> {
    fn is_free(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    fn error(&self, i: usize) -> f64 {
        self.g[i] + self.bias
    }

    fn in_up(&self, i: usize) -> bool {
        (self.y[i] > 0.0 && self.alpha[i] < self.c) || (self.y[i] < 0.0 && self.alpha[i] > 0.0)
    }

    fn in_low(&self, i: usize) -> bool {
        (self.y[i] > 0.0 && self.alpha[i] > 0.0) || (self.y[i] < 0.0 && self.alpha[i] < self.c)
    }

    /// Analytic update of the pair; returns false when no progress is possible.
    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.error(i1), self.error(i2));
        let s = y1 * y2;
        let c = self.c;
        let (lo, hi) = if s < 0.0 {
            ((a2 - a1).max(0.0), (c + a2 - a1).min(c))
        } else {
            ((a1 + a2 - c).max(0.0), (a1 + a2).min(c))
        };
        if lo >= hi {
            return false;
        }
        let row1 = self.k.row(i1);
        let k11 = self.k.diag[i1];
        let k22 = self.k.diag[i2];
        let k12 = row1[i2];
        let eta = k11 + k22 - 2.0 * k12;

        let mut new_a2 = if eta > 0.0 {
            (a2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // Objective along the constraint line is linear or concave here;
            // take the better endpoint.
            let f1 = y1 * self.g[i1] - a1 * k11 - s * a2 * k12;
            let f2 = y2 * self.g[i2] - s * a1 * k12 - a2 * k22;
            let l1 = a1 + s * (a2 - lo);
            let h1 = a1 + s * (a2 - hi);
            let obj = |a1n: f64, a2n: f64| {
                a1n * f1 + a2n * f2 + 0.5 * a1n * a1n * k11 + 0.5 * a2n * a2n * k22 + s * a1n * a2n * k12
            };
            let (lobj, hobj) = (obj(l1, lo), obj(h1, hi));
            if lobj < hobj - self.eps {
                lo
            } else if lobj > hobj + self.eps {
                hi
            } else {
                a2
            }
        };
        if (new_a2 - a2).abs() < self.eps * (new_a2 + a2 + self.eps) || new_a2 == a2 {
            return false;
        }
        let mut new_a1 = a1 + s * (a2 - new_a2);
        if new_a1 < 0.0 {
            new_a2 += s * new_a1;
            new_a1 = 0.0;
        } else if new_a1 > c {
            new_a2 += s * (new_a1 - c);
            new_a1 = c;
        }
        let snap = |a: f64| {
            if a <= c * BOUND_SNAP {
                0.0
            } else if a >= c * (1.0 - BOUND_SNAP) {
                c
            } else {
                a
            }
        };
        let new_a1 = snap(new_a1);
        let new_a2 = snap(new_a2.clamp(0.0, c));

        let d1 = new_a1 - a1;
        let d2 = new_a2 - a2;
        let grad1 = -y1 * self.g[i1];
        let grad2 = -y2 * self.g[i2];
        let delta_w = grad1 * d1 + grad2 * d2 - 0.5 * (d1 * d1 * k11 + 2.0 * s * d1 * d2 * k12 + d2 * d2 * k22);
        if delta_w < -1e-12 * (1.0 + grad1.abs() * d1.abs() + grad2.abs() * d2.abs()) {
            self.objective_decreases += 1;
        }

        let b1 = self.bias - e1 - y1 * d1 * k11 - y2 * d2 * k12;
        let b2 = self.bias - e2 - y1 * d1 * k12 - y2 * d2 * k22;
        self.alpha[i1] = new_a1;
        self.alpha[i2] = new_a2;
        self.bias = if self.is_free(i1) {
            b1
        } else if self.is_free(i2) {
            b2
        } else {
            0.5 * (b1 + b2)
        };

        let row2 = self.k.row(i2);
        let (u1, u2) = (y1 * d1, y2 * d2);
        for (gk, (k1, k2)) in self.g.iter_mut().zip(row1.iter().zip(row2.iter())) {
            *gk += u1 * k1 + u2 * k2;
        }
        self.iterations += 1;
        true
    }

    fn examine(&mut self, i2: usize, order: &[usize]) -> bool {
        let r2 = self.error(i2) * self.y[i2];
        let violates = (r2 < -self.tol && self.alpha[i2] < self.c) || (r2 > self.tol && self.alpha[i2] > 0.0);
        if !violates {
            return false;
        }
        let e2 = self.error(i2);
        let mut best: Option<(usize, f64)> = None;
        let mut free_count = 0;
        for i in 0..self.alpha.len() {
            if self.is_free(i) {
                free_count += 1;
                let gap = (self.error(i) - e2).abs();
                if best.is_none_or(|(_, g)| gap > g) {
                    best = Some((i, gap));
                }
            }
        }
        if free_count > 1 {
            if let Some((i1, _)) = best {
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        for &i1 in order {
            if self.is_free(i1) && self.take_step(i1, i2) {
                return true;
            }
        }
        for &i1 in order {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }

    /// Maximal violating pair `(i, j)` and the gap `m - M`.
    fn max_violating_pair(&self) -> Option<(usize, usize, f64)> {
        let mut up: Option<(usize, f64)> = None;
        let mut low: Option<(usize, f64)> = None;
        for t in 0..self.alpha.len() {
            let v = -self.g[t];
            if self.in_up(t) && up.is_none_or(|(_, m)| v > m) {
                up = Some((t, v));
            }
            if self.in_low(t) && low.is_none_or(|(_, m)| v < m) {
                low = Some((t, v));
            }
        }
        match (up, low) {
            (Some((i, m)), Some((j, mm))) => Some((i, j, m - mm)),
            _ => None,
        }
    }

    fn kkt_violation(&self) -> f64 {
        self.max_violating_pair().map_or(0.0, |(_, _, gap)| gap.max(0.0))
    }

    fn refresh_gradient(&mut self) {
        let n = self.alpha.len();
        let mut g: Vec<f64> = self.y.iter().map(|y| -y).collect();
        for j in 0..n {
            if self.alpha[j] > 0.0 {
                let coef = self.alpha[j] * self.y[j];
                let row = self.k.row(j);
                for (gi, kij) in g.iter_mut().zip(row.iter()) {
                    *gi += coef * kij;
                }
            }
        }
        self.g = g;
    }

    /// Bias from free vectors, or the midpoint of the feasible interval.
    fn final_bias(&self) -> f64 {
        let free: Vec<f64> = (0..self.alpha.len())
            .filter(|&i| self.is_free(i))
            .map(|i| -self.g[i])
            .collect();
        if !free.is_empty() {
            return free.iter().sum::<f64>() / free.len() as f64;
        }
        let mut lower = f64::NEG_INFINITY;
        let mut upper = f64::INFINITY;
        for i in 0..self.alpha.len() {
            let b = -self.g[i];
            let at_zero = self.alpha[i] <= 0.0;
            if (self.y[i] > 0.0) == at_zero {
                lower = lower.max(b);
            } else {
                upper = upper.min(b);
            }
        }
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => 0.5 * (lower + upper),
            (true, false) => lower,
            (false, true) => upper,
            (false, false) => 0.0,
        }
    }
}

/// Dual objective `sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij`.
pub fn dual_objective<V: KernelVector>(xs: &[V], ys: &[f64], alpha: &[f64], kernel: &Kernel) -> f64 {
    let mut quad = 0.0;
    for i in 0..xs.len() {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..xs.len() {
            if alpha[j] != 0.0 {
                quad += alpha[i] * alpha[j] * ys[i] * ys[j] * kernel.eval_unchecked(&xs[i], &xs[j]);
            }
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

fn validate<V: KernelVector>(xs: &[V], ys: &[f64]) -> Result<usize> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "{} vectors but {} targets",
            xs.len(),
            ys.len()
        )));
    }
    let dim = xs
        .first()
        .map(KernelVector::dim)
        .ok_or_else(|| Error::InvalidArgument("no training data".into()))?;
    for (i, x) in xs.iter().enumerate() {
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                id: format!("training example {i}"),
                expected: dim,
                found: x.dim(),
            });
        }
        if !x.all_finite() {
            return Err(Error::NonFinite(format!("training example {i}")));
        }
    }
    if let Some(bad) = ys.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidArgument(format!("targets must be +1 or -1, found {bad}")));
    }
    if !(ys.contains(&1.0) && ys.contains(&-1.0)) {
        return Err(Error::SingleClass);
    }
    Ok(dim)
}

/// Solves the dual for `xs`/`ys` (targets in {-1, +1}).
pub fn solve<V: KernelVector>(xs: &[V], ys: &[f64], cfg: &TrainConfig) -> Result<Solution<V>> {
    cfg.validate()?;
    let dim = validate(xs, ys)?;
    let kernel = cfg.kernel.resolve(dim)?;
    let n = xs.len();
    let mut smo = Smo {
        y: ys,
        c: cfg.c,
        tol: cfg.tol,
        eps: cfg.eps,
        alpha: vec![0.0; n],
        g: ys.iter().map(|y| -y).collect(),
        bias: 0.0,
        k: KernelRows::new(xs, kernel),
        iterations: 0,
        objective_decreases: 0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut examine_all = true;
    let mut best_violation = f64::INFINITY;
    let mut stalled_sweeps = 0;
    let max_heuristic = 100_000.max(50 * n);
    while smo.iterations < max_heuristic {
        order.shuffle(&mut rng);
        let mut changed = 0;
        let sweep = order.clone();
        for &i in &sweep {
            if (examine_all || smo.is_free(i)) && smo.examine(i, &order) {
                changed += 1;
            }
        }
        if examine_all {
            let violation = smo.kkt_violation();
            if violation < best_violation {
                best_violation = violation;
                stalled_sweeps = 0;
            } else {
                stalled_sweeps += 1;
                if stalled_sweeps >= cfg.max_passes {
                    log::debug!("smo heuristic phase stalled at violation {violation:e}");
                    break;
                }
            }
        }
        if examine_all {
            if changed == 0 {
                break;
            }
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
    }

    smo.refresh_gradient();
    let max_polish = 100_000 + 100 * n;
    let mut final_gap = 0.0;
    for step in 0..=max_polish {
        let Some((i, j, gap)) = smo.max_violating_pair() else {
            break;
        };
        final_gap = gap.max(0.0);
        if gap <= cfg.polish_tol || step == max_polish {
            break;
        }
        if !smo.take_step(i, j) {
            log::debug!("smo polish stopped without progress at gap {gap:e}");
            break;
        }
    }
    smo.refresh_gradient();
    if let Some((_, _, gap)) = smo.max_violating_pair() {
        final_gap = gap.max(0.0);
    }

    let bias = smo.final_bias();
    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for i in 0..n {
        if smo.alpha[i] > 0.0 {
            support_vectors.push(xs[i].clone());
            dual_coefs.push(smo.alpha[i] * ys[i]);
        }
    }
    let objective = dual_objective(xs, ys, &smo.alpha, &kernel);
    Ok(Solution {
        model: SvmModel {
            support_vectors,
            dual_coefs,
            bias,
            kernel,
            c: cfg.c,
            dim,
        },
        alpha: smo.alpha,
        objective,
        iterations: smo.iterations,
        objective_decreases: smo.objective_decreases,
        final_gap,
    })
}
