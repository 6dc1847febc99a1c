//! Independent oracles shared by the integration and acceptance tests. None of
//! these call into the library's numerical code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub enum OracleKernel {
    Linear,
    Rbf(f64),
}

pub fn kernel_matrix(xs: &[Vec<f64>], kernel: OracleKernel) -> DMatrix<f64> {
    let n = xs.len();
    DMatrix::from_fn(n, n, |i, j| match kernel {
        OracleKernel::Linear => xs[i].iter().zip(&xs[j]).map(|(a, b)| a * b).sum(),
        OracleKernel::Rbf(g) => {
            let d: f64 = xs[i].iter().zip(&xs[j]).map(|(a, b)| (a - b).powi(2)).sum();
            (-g * d).exp()
        }
    })
}

pub fn dual_value(q: &DMatrix<f64>, alpha: &[f64]) -> f64 {
    let a = DVector::from_column_slice(alpha);
    a.sum() - 0.5 * (a.transpose() * q * &a)[(0, 0)]
}

/// Exact maximum of the SVM dual by enumerating every face of the box.
///
/// Each variable is fixed at 0, fixed at C, or free; on each face the
/// stationarity system (with the equality multiplier) is solved by SVD, and
/// consistent, feasible solutions are scored. The optimum lies on some face
/// and satisfies that face's stationarity system, so the best score is the
/// global maximum. Practical for n <= 8 (3^8 faces).
pub fn dual_optimum(xs: &[Vec<f64>], ys: &[f64], c: f64, kernel: OracleKernel) -> (f64, Vec<f64>) {
    let n = xs.len();
    assert!(n <= 10);
    let k = kernel_matrix(xs, kernel);
    let q = DMatrix::from_fn(n, n, |i, j| ys[i] * ys[j] * k[(i, j)]);
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    let faces = 3usize.pow(n as u32);
    let mut state = vec![0u8; n];
    for code in 0..faces {
        let mut r = code;
        for s in state.iter_mut() {
            *s = (r % 3) as u8;
            r /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state
            .iter()
            .map(|&s| if s == 1 { c } else { 0.0 })
            .collect();
        let bound_balance: f64 = (0..n).filter(|&i| state[i] != 2).map(|i| ys[i] * alpha[i]).sum();
        if free.is_empty() {
            if bound_balance.abs() > 1e-12 {
                continue;
            }
        } else {
            let m = free.len();
            let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
            let mut b = DVector::<f64>::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = q[(i, j)];
                }
                a[(r, m)] = ys[i];
                a[(m, r)] = ys[i];
                let mut rhs = 1.0;
                for j in 0..n {
                    if state[j] != 2 {
                        rhs -= q[(i, j)] * alpha[j];
                    }
                }
                b[r] = rhs;
            }
            b[m] = -bound_balance;
            let svd = a.clone().svd(true, true);
            let Ok(sol) = svd.solve(&b, 1e-11) else { continue };
            let residual = (&a * &sol - &b).amax();
            if residual > 1e-8 * (1.0 + b.amax()) {
                continue;
            }
            let mut feasible = true;
            for (r, &i) in free.iter().enumerate() {
                let v = sol[r];
                if v < -1e-10 || v > c + 1e-10 {
                    feasible = false;
                    break;
                }
                alpha[i] = v.clamp(0.0, c);
            }
            if !feasible {
                continue;
            }
        }
        let w = dual_value(&q, &alpha);
        if w > best.0 {
            best = (w, alpha);
        }
    }
    best
}

/// Random dataset with both classes present.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    loop {
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let ys: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        if ys.contains(&1.0) && ys.contains(&-1.0) {
            return (xs, ys);
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Binary entropy-style contingency IG, straight from counts.
pub fn ig_from_counts(with_pos: usize, with_neg: usize, without_pos: usize, without_neg: usize) -> f64 {
    fn h(counts: &[usize]) -> f64 {
        let total: usize = counts.iter().sum();
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
    let n = (with_pos + with_neg + without_pos + without_neg) as f64;
    let with = (with_pos + with_neg) as f64;
    let without = (without_pos + without_neg) as f64;
    h(&[with_pos + without_pos, with_neg + without_neg])
        - (with / n) * h(&[with_pos, with_neg])
        - (without / n) * h(&[without_pos, without_neg])
}

/// Naive 2-D DFT: `sign = -1` forward, `+1` inverse (unnormalized).
pub fn naive_dft2(re: &[f64], im: &[f64], h: usize, w: usize, sign: f64) -> (Vec<f64>, Vec<f64>) {
    let mut out_re = vec![0.0; h * w];
    let mut out_im = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            let (mut sr, mut si) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let phase = sign
                        * 2.0
                        * std::f64::consts::PI
                        * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    let (s, c) = phase.sin_cos();
                    let (a, b) = (re[y * w + x], im[y * w + x]);
                    sr += a * c - b * s;
                    si += a * s + b * c;
                }
            }
            out_re[u * w + v] = sr;
            out_im[u * w + v] = si;
        }
    }
    (out_re, out_im)
}

/// Noun database, from `$PICPRIV_WORDNET_DIR` if set, else the vendored
/// gzipped copy.
pub fn wordnet_nouns() -> picpriv::wordnet::Lexicon {
    use picpriv::wordnet::{load_wordnet, parse_wordnet, Pos, WORDNET_DIR_ENV};
    use std::io::BufReader;
    use std::path::PathBuf;

    if let Ok(dir) = std::env::var(WORDNET_DIR_ENV) {
        return load_wordnet(std::path::Path::new(&dir), &[Pos::Noun]).expect("load WordNet");
    }
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/wordnet");
    let open = |name: &str| {
        let path = dir.join(name);
        let file = std::fs::File::open(&path).expect("vendored WordNet file");
        (BufReader::new(flate2::read::GzDecoder::new(file)), path)
    };
    let (index, index_path) = open("index.noun.gz");
    let (data, data_path) = open("data.noun.gz");
    parse_wordnet(index, &index_path, data, &data_path, Pos::Noun).expect("parse WordNet")
}

/// GIST by direct circular convolution with each filter's spatial kernel,
/// the kernel obtained by a naive inverse DFT of the transfer function.
pub fn gist_spatial(pixels: &[f64], h: usize, w: usize, cfg: &picpriv::gist::GistConfig) -> Vec<f64> {
    let bank = picpriv::gist::gabor_bank(cfg, h, w).unwrap();
    let n = (h * w) as f64;
    let mut out = Vec::new();
    for f in &bank {
        let (kr, ki) = naive_dft2(&f.transfer, &vec![0.0; h * w], h, w, 1.0);
        let mut mag = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let (mut sr, mut si) = (0.0, 0.0);
                for v in 0..h {
                    for u in 0..w {
                        let k = ((y + h - v) % h) * w + (x + w - u) % w;
                        sr += pixels[v * w + u] * kr[k] / n;
                        si += pixels[v * w + u] * ki[k] / n;
                    }
                }
                mag[y * w + x] = sr.hypot(si);
            }
        }
        let g = cfg.grid;
        for cy in 0..g {
            for cx in 0..g {
                let r0 = cy * (h / g);
                let r1 = if cy == g - 1 { h } else { r0 + h / g };
                let c0 = cx * (w / g);
                let c1 = if cx == g - 1 { w } else { c0 + w / g };
                let mut sum = 0.0;
                for r in r0..r1 {
                    for c in c0..c1 {
                        sum += mag[r * w + c];
                    }
                }
                out.push(sum / ((r1 - r0) * (c1 - c0)) as f64);
            }
        }
    }
    out
}

pub const LEXICON: [&str; 12] = [
    "maillot", "lakeside", "seashore", "sandbar", "bikini", "tank suit", "dog", "car", "portrait", "church",
    "mountain", "bridge",
];
const USER_POOL: [&str; 12] = [
    "beach", "dog", "car", "sunset", "people", "photo", "travel", "nature", "city", "family", "friend", "flower",
];

/// Paths of a generated corpus.
pub struct Corpus {
    pub fc8: std::path::PathBuf,
    pub lexicon: std::path::PathBuf,
    pub user_tags: std::path::PathBuf,
    pub labels: std::path::PathBuf,
}

/// `n` records, one in four private. Private records carry the user tag
/// `p_marker` with probability 0.95, public ones with 0.05; everything else
/// is label-independent noise.
pub fn synthetic_corpus(dir: &std::path::Path, n: usize, seed: u64) -> Corpus {
    use std::fmt::Write as _;
    let mut r = rng(seed);
    let (mut fc8, mut tags, mut labels) = (String::new(), String::new(), String::from("id,label\n"));
    for i in 0..n {
        let id = format!("img{i:05}");
        let private = i % 4 == 0;
        let logits: Vec<String> = (0..LEXICON.len())
            .map(|_| format!("{}", r.random_range(-3.0..3.0f64)))
            .collect();
        writeln!(fc8, "{{\"id\":\"{id}\",\"values\":[{}]}}", logits.join(",")).unwrap();
        let mut user: Vec<String> = (0..r.random_range(2..6))
            .map(|_| USER_POOL[r.random_range(0..USER_POOL.len())].to_string())
            .collect();
        if r.random_bool(if private { 0.95 } else { 0.05 }) {
            user.push("p_marker".into());
        }
        if r.random_bool(0.2) {
            user.push("2015".into());
            user.push("http://example.com/x".into());
        }
        let quoted: Vec<String> = user.iter().map(|t| format!("\"{t}\"")).collect();
        writeln!(tags, "{{\"id\":\"{id}\",\"tags\":[{}]}}", quoted.join(",")).unwrap();
        writeln!(labels, "{id},{}", if private { "private" } else { "public" }).unwrap();
    }
    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    };
    Corpus {
        fc8: write("fc8.jsonl", &fc8),
        lexicon: write("lexicon.txt", &(LEXICON.join("\n") + "\n")),
        user_tags: write("user_tags.jsonl", &tags),
        labels: write("labels.csv", &labels),
    }
}

/// Decompresses the vendored noun database into `dir`.
pub fn wordnet_dir(dir: &std::path::Path) -> std::path::PathBuf {
    let src = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/wordnet");
    let dst = dir.join("wordnet");
    std::fs::create_dir_all(&dst).unwrap();
    for name in ["index.noun", "data.noun"] {
        let file = std::fs::File::open(src.join(format!("{name}.gz"))).unwrap();
        let mut gz = flate2::read::GzDecoder::new(file);
        let mut out = std::fs::File::create(dst.join(name)).unwrap();
        std::io::copy(&mut gz, &mut out).unwrap();
    }
    dst
}

/// Runs the built binary.
pub fn picpriv<I, S>(args: I) -> std::process::Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    std::process::Command::new(env!("CARGO_BIN_EXE_picpriv"))
        .args(args)
        .env_remove("PICPRIV_WORDNET_DIR")
        .output()
        .expect("run picpriv")
}

/// All files in `dir` by name.
pub fn read_dir_files(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}
