//! GIST scene descriptor: a bank of oriented band-pass filters applied in the
//! frequency domain, response magnitudes averaged over a spatial grid.

mod pgm;

use std::f64::consts::{LN_2, PI};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureVector;
use crate::error::{Error, Result};

pub use pgm::{decode_pgm, load_pgm, read_pgm, write_pgm};

pub const MIN_SIDE: usize = 8;

/// Row-major grayscale raster with samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::InvalidArgument(format!(
                "image is {width}x{height}, both sides must be at least {MIN_SIDE}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(if p.is_finite() {
                Error::InvalidArgument(format!("pixel value {p} outside [0, 1]"))
            } else {
                Error::NonFinite("image pixels".into())
            });
        }
        Ok(GrayImage { height, width, pixels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GistConfig {
    pub scales: usize,
    pub orientations: usize,
    /// Cells per side of the pooling grid.
    pub grid: usize,
    /// Centre frequency of scale 0 in cycles per pixel; each scale halves it.
    pub base_frequency: f64,
    /// Std of the radial Gaussian in octaves.
    pub sigma_octaves: f64,
    /// Std of the angular Gaussian in radians.
    pub sigma_angle: f64,
    /// Local contrast normalization before filtering.
    pub prefilter: bool,
}

impl Default for GistConfig {
    fn default() -> Self {
        GistConfig {
            scales: 4,
            orientations: 8,
            grid: 4,
            base_frequency: 0.25,
            // One octave full width at half maximum.
            sigma_octaves: 1.0 / (2.0 * (2.0 * LN_2).sqrt()),
            sigma_angle: PI / 16.0,
            prefilter: false,
        }
    }
}

impl GistConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales == 0 || self.orientations == 0 || self.grid == 0 {
            return Err(Error::InvalidArgument("GIST scales, orientations and grid must be positive".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.base_frequency) && positive(self.sigma_octaves) && positive(self.sigma_angle)) {
            return Err(Error::InvalidArgument("GIST bandwidths and base frequency must be positive".into()));
        }
        Ok(())
    }

    pub fn filter_count(&self) -> usize {
        self.scales * self.orientations
    }

    pub fn descriptor_len(&self) -> usize {
        self.filter_count() * self.grid * self.grid
    }

    pub fn orientation_angle(&self, o: usize) -> f64 {
        o as f64 * PI / self.orientations as f64
    }

    pub fn scale_frequency(&self, s: usize) -> f64 {
        self.base_frequency * 0.5f64.powi(s as i32)
    }
}

/// Real transfer function over the `height x width` DFT grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GaborFilter {
    pub scale: usize,
    pub orientation: usize,
    pub transfer: Vec<f64>,
}

/// Signed frequency of DFT bin `k` of `n`, in cycles per sample.
fn bin_frequency(k: usize, n: usize) -> f64 {
    let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    k / n as f64
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Filters in scale-major order; each peaks at exactly 1 on the grid and is
/// zero at DC.
pub fn gabor_bank(cfg: &GistConfig, height: usize, width: usize) -> Result<Vec<GaborFilter>> {
    cfg.validate()?;
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::InvalidArgument(format!(
            "filter grid {width}x{height} is smaller than {MIN_SIDE}x{MIN_SIDE}"
        )));
    }
    let mut polar = Vec::with_capacity(height * width);
    for u in 0..height {
        let fy = bin_frequency(u, height);
        for v in 0..width {
            let fx = bin_frequency(v, width);
            polar.push((fx.hypot(fy), fy.atan2(fx)));
        }
    }
    let mut bank = Vec::with_capacity(cfg.filter_count());
    for s in 0..cfg.scales {
        let fs = cfg.scale_frequency(s);
        for o in 0..cfg.orientations {
            let theta = cfg.orientation_angle(o);
            let mut transfer: Vec<f64> = polar
                .iter()
                .map(|&(rho, angle)| {
                    if rho == 0.0 {
                        return 0.0;
                    }
                    let radial = (rho / fs).log2() / cfg.sigma_octaves;
                    let angular = wrap_angle(angle - theta) / cfg.sigma_angle;
                    (-0.5 * (radial * radial + angular * angular)).exp()
                })
                .collect();
            let peak = transfer.iter().copied().fold(0.0, f64::max);
            if peak <= 0.0 || !peak.is_finite() {
                return Err(Error::Computation(format!(
                    "filter for scale {s}, orientation {o} vanishes on a {width}x{height} grid"
                )));
            }
            transfer.iter_mut().for_each(|t| *t /= peak);
            bank.push(GaborFilter {
                scale: s,
                orientation: o,
                transfer,
            });
        }
    }
    Ok(bank)
}

struct Fft2 {
    height: usize,
    width: usize,
    planner: FftPlanner<f64>,
}

impl Fft2 {
    fn new(height: usize, width: usize) -> Self {
        Fft2 {
            height,
            width,
            planner: FftPlanner::new(),
        }
    }

    /// In-place 2-D transform; the inverse is scaled by `1/(h w)`.
    fn run(&mut self, data: &mut [Complex64], inverse: bool) {
        let (h, w) = (self.height, self.width);
        let row = if inverse { self.planner.plan_fft_inverse(w) } else { self.planner.plan_fft_forward(w) };
        row.process(data);
        let col = if inverse { self.planner.plan_fft_inverse(h) } else { self.planner.plan_fft_forward(h) };
        let mut column = vec![Complex64::default(); h];
        for x in 0..w {
            for y in 0..h {
                column[y] = data[y * w + x];
            }
            col.process(&mut column);
            for y in 0..h {
                data[y * w + x] = column[y];
            }
        }
        if inverse {
            let scale = 1.0 / (h * w) as f64;
            data.iter_mut().for_each(|c| *c *= scale);
        }
    }
}

/// Local contrast normalization: log intensities, remove a low-pass
/// component, divide by a low-passed local standard deviation.
fn prefilter(img: &[f64], height: usize, width: usize, fft: &mut Fft2) -> Vec<f64> {
    const CUTOFF: f64 = 4.0;
    let s1 = CUTOFF / LN_2.sqrt();
    let gauss: Vec<f64> = (0..height)
        .flat_map(|u| {
            let fy = bin_frequency(u, height) * height as f64;
            (0..width).map(move |v| {
                let fx = bin_frequency(v, width) * width as f64;
                (-(fx * fx + fy * fy) / (s1 * s1)).exp()
            })
        })
        .collect();
    let mut lowpass = |values: &[f64]| -> Vec<f64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.run(&mut buf, false);
        buf.iter_mut().zip(&gauss).for_each(|(c, g)| *c *= g);
        fft.run(&mut buf, true);
        buf.iter().map(|c| c.re).collect()
    };
    let logged: Vec<f64> = img.iter().map(|&p| (1.0 + 255.0 * p).ln()).collect();
    let low = lowpass(&logged);
    let high: Vec<f64> = logged.iter().zip(&low).map(|(a, b)| a - b).collect();
    let squared: Vec<f64> = high.iter().map(|v| v * v).collect();
    let local = lowpass(&squared);
    high.iter().zip(&local).map(|(h, l)| h / (0.2 + l.abs().sqrt())).collect()
}

/// Mean of `map` over each cell of a `grid x grid` partition, row-major.
/// Leftover rows and columns join the last cell.
pub fn pool_grid(map: &[f64], height: usize, width: usize, grid: usize) -> Vec<f64> {
    let bounds = |n: usize| -> Vec<(usize, usize)> {
        let step = n / grid;
        (0..grid)
            .map(|i| (i * step, if i + 1 == grid { n } else { (i + 1) * step }))
            .collect()
    };
    let (rows, cols) = (bounds(height), bounds(width));
    let mut out = Vec::with_capacity(grid * grid);
    for &(r0, r1) in &rows {
        for &(c0, c1) in &cols {
            let sum: f64 = (r0..r1).flat_map(|r| map[r * width + c0..r * width + c1].iter()).sum();
            out.push(sum / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }
    out
}

/// Response magnitude maps, one per filter in bank order.
pub fn filter_responses(img: &GrayImage, bank: &[GaborFilter], prefilter_first: bool) -> Vec<Vec<f64>> {
    let (h, w) = (img.height, img.width);
    let mut fft = Fft2::new(h, w);
    let input = if prefilter_first { prefilter(&img.pixels, h, w, &mut fft) } else { img.pixels.clone() };
    let mut spectrum: Vec<Complex64> = input.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    fft.run(&mut spectrum, false);
    bank.iter()
        .map(|f| {
            let mut buf: Vec<Complex64> = spectrum.iter().zip(&f.transfer).map(|(s, t)| s * t).collect();
            fft.run(&mut buf, true);
            buf.iter().map(|c| c.norm()).collect()
        })
        .collect()
}

pub fn gist_descriptor(img: &GrayImage, cfg: &GistConfig) -> Result<FeatureVector> {
    let bank = gabor_bank(cfg, img.height, img.width)?;
    let mut out = Vec::with_capacity(cfg.descriptor_len());
    for map in filter_responses(img, &bank, cfg.prefilter) {
        out.extend(pool_grid(&map, img.height, img.width, cfg.grid));
    }
    FeatureVector::new(out)
}

/// Outcome of extracting descriptors from a directory of PGM files.
#[derive(Debug, Default)]
pub struct GistBatch {
    /// `(id, descriptor)` sorted by id, the id being the file stem.
    pub descriptors: Vec<(String, FeatureVector)>,
    pub skipped: Vec<(PathBuf, Error)>,
}

/// Descriptors for every `.pgm` file in `dir`; unreadable images are skipped.
pub fn gist_directory(dir: &Path, cfg: &GistConfig) -> Result<GistBatch> {
    cfg.validate()?;
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::MissingData(format!("no .pgm images in {}", dir.display())));
    }
    let results: Vec<(PathBuf, Result<FeatureVector>)> = paths
        .into_par_iter()
        .map(|p| {
            let r = load_pgm(&p).and_then(|img| gist_descriptor(&img, cfg));
            (p, r)
        })
        .collect();
    let mut batch = GistBatch::default();
    for (path, r) in results {
        match r {
            Ok(v) => {
                let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                batch.descriptors.push((id, v));
            }
            Err(e) => batch.skipped.push((path, e)),
        }
    }
    Ok(batch)
}
