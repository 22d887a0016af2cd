//! Training objectives: MSE, the radially binned frequency loss, the
//! patch-spectral SPHERE loss, their weighted combination, and
//! high-frequency adaptive Gaussian noise.
//!
//! Every loss has a value-level entry point and a graph builder for the
//! gradient tape; the value-level functions run the graph on constants so
//! both paths share one implementation.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::patching::extract_patches;
use crate::spectra::{BandErrors, RadialSpec, DEFAULT_I_HIGH, DEFAULT_I_LOW};
use crate::tensor_fft::{Field, NormMode, PlaneFft};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Low,
    Mid,
    High,
}

impl Band {
    fn index(self) -> usize {
        match self {
            Band::Low => 0,
            Band::Mid => 1,
            Band::High => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Weight of the frequency term, in `[0, 1]`.
    pub lambda: f64,
    pub bands_penalized: Vec<Band>,
    pub reduction: Reduction,
    /// Radial cutoffs `(i_low, i_high)`.
    pub radial_cutoffs: (usize, usize),
    pub noise_alpha: f64,
    pub sphere_alpha: f64,
    pub sphere_p: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            bands_penalized: vec![Band::Mid, Band::High],
            reduction: Reduction::Mean,
            radial_cutoffs: (DEFAULT_I_LOW, DEFAULT_I_HIGH),
            noise_alpha: 0.025,
            sphere_alpha: 1.0,
            sphere_p: 2.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.lambda > 0.0 && self.bands_penalized.is_empty() {
            return Err(Error::config("bands_penalized must be non-empty when lambda > 0"));
        }
        let (lo, hi) = self.radial_cutoffs;
        if lo == 0 || lo >= hi {
            return Err(Error::config(format!(
                "radial cutoffs must satisfy 0 < i_low < i_high, got ({lo}, {hi})"
            )));
        }
        if !(self.noise_alpha >= 0.0 && self.sphere_alpha >= 0.0 && self.sphere_p > 0.0) {
            return Err(Error::config("noise_alpha, sphere_alpha must be >= 0 and sphere_p > 0"));
        }
        Ok(())
    }

    /// Radial bins for an `nx x ny` grid with this config's cutoffs.
    pub fn radial_spec(&self, nx: usize, ny: usize) -> Result<RadialSpec> {
        crate::spectra::radial_bin_map(nx, ny, self.radial_cutoffs.0, self.radial_cutoffs.1)
    }
}

/// Value and per-channel band errors of the frequency loss.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqLoss {
    pub loss: f64,
    pub bands: BandErrors,
}

/// Graph nodes produced by [`radial_freq_loss_graph`].
#[derive(Debug, Clone, Copy)]
pub struct FreqLossVars {
    pub loss: Var,
    /// Normalised error spectrum `[channels, M+1]`.
    pub spectrum: Var,
    /// Band means `[channels, 3]`.
    pub bands: Var,
}

fn check_spec(shape: &[usize], spec: &RadialSpec) -> Result<()> {
    if shape.len() != 4 || shape[2] != spec.nx() || shape[3] != spec.ny() {
        return Err(Error::shape(format!(
            "tensor {shape:?} does not match the {}x{} radial bins",
            spec.nx(),
            spec.ny()
        )));
    }
    Ok(())
}

/// Records the frequency loss. Time steps, if any, are folded into the
/// channel axis of `pred` and `target` (`[b, c, nx, ny]`).
pub fn radial_freq_loss_graph(
    tape: &mut Tape,
    pred: Var,
    target: Var,
    spec: &Rc<RadialSpec>,
    lengths: (f64, f64),
    cfg: &LossConfig,
) -> Result<FreqLossVars> {
    let shape = tape.shape(pred).to_vec();
    check_spec(&shape, spec)?;
    let ranges = spec.band_ranges()?;
    let (nx, ny) = (spec.nx(), spec.ny());
    let (hx, hy) = spec.quadrant();
    let diff = tape.sub(pred, target)?;
    let f = tape.rfft2(diff, NormMode::Backward)?;
    let e = tape.abs_sq(f)?;
    let q = tape.crop(e, hx, hy)?;
    let binned = tape.bin_aggregate(q, Rc::clone(spec))?;
    let batch_mean = tape.mean_axis0(binned)?;
    let root = tape.sqrt(batch_mean);
    let spectrum = tape.scale(root, (lengths.0 / nx as f64) * (lengths.1 / ny as f64));
    let bands = tape.band_means(spectrum, ranges)?;
    let channels = shape[1];
    let w = match cfg.reduction {
        Reduction::Mean => 1.0 / channels as f64,
        Reduction::Sum => 1.0,
    };
    let mut weights = vec![0.0; channels * 3];
    for c in 0..channels {
        for band in &cfg.bands_penalized {
            weights[c * 3 + band.index()] = w;
        }
    }
    let loss = tape.weighted_sum(bands, weights)?;
    Ok(FreqLossVars { loss, spectrum, bands })
}

fn field_const(tape: &mut Tape, f: &Field) -> Var {
    tape.constant(Tensor {
        data: f.data().to_vec(),
        shape: f.shape().to_vec(),
    })
}

fn bands_from(values: &[f64]) -> BandErrors {
    let mut b = BandErrors {
        low: Vec::new(),
        mid: Vec::new(),
        high: Vec::new(),
    };
    for row in values.chunks_exact(3) {
        b.low.push(row[0]);
        b.mid.push(row[1]);
        b.high.push(row[2]);
    }
    b
}

/// Radially binned spectral error loss between `pred` and `target`, using
/// the physical domain lengths carried by `pred`.
pub fn radial_freq_loss(pred: &Field, target: &Field, spec: &RadialSpec, cfg: &LossConfig) -> Result<FreqLoss> {
    pred.check_same_shape(target)?;
    let mut t = Tape::new();
    let p = field_const(&mut t, pred);
    let y = field_const(&mut t, target);
    let v = radial_freq_loss_graph(&mut t, p, y, &Rc::new(spec.clone()), pred.lengths(), cfg)?;
    Ok(FreqLoss {
        loss: t.scalar(v.loss),
        bands: bands_from(&t.value(v.bands).data),
    })
}

/// Normalised radial error spectrum `[channels, M+1]` (row-major).
pub fn radial_error_spectrum(pred: &Field, target: &Field, spec: &RadialSpec) -> Result<Vec<f64>> {
    pred.check_same_shape(target)?;
    let mut t = Tape::new();
    let p = field_const(&mut t, pred);
    let y = field_const(&mut t, target);
    let v = radial_freq_loss_graph(
        &mut t,
        p,
        y,
        &Rc::new(spec.clone()),
        pred.lengths(),
        &LossConfig::default(),
    )?;
    Ok(t.value(v.spectrum).data.clone())
}

pub fn mse_graph(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let d = tape.sub(pred, target)?;
    let sq = tape.square(d);
    Ok(tape.mean_all(sq))
}

pub fn mse(pred: &Field, target: &Field) -> Result<f64> {
    pred.check_same_shape(target)?;
    let mut t = Tape::new();
    let p = field_const(&mut t, pred);
    let y = field_const(&mut t, target);
    let m = mse_graph(&mut t, p, y)?;
    Ok(t.scalar(m))
}

#[derive(Debug, Clone, Copy)]
pub struct CombinedLossVars {
    pub total: Var,
    pub mse: Var,
    pub freq: Option<FreqLossVars>,
}

/// `MSE + lambda * freq`; with `lambda == 0` the frequency term is not built
/// and the total is the MSE node itself.
pub fn combined_loss_graph(
    tape: &mut Tape,
    pred: Var,
    target: Var,
    spec: &Rc<RadialSpec>,
    lengths: (f64, f64),
    cfg: &LossConfig,
) -> Result<CombinedLossVars> {
    let m = mse_graph(tape, pred, target)?;
    if cfg.lambda == 0.0 {
        return Ok(CombinedLossVars {
            total: m,
            mse: m,
            freq: None,
        });
    }
    let f = radial_freq_loss_graph(tape, pred, target, spec, lengths, cfg)?;
    let scaled = tape.scale(f.loss, cfg.lambda);
    let total = tape.add(m, scaled)?;
    Ok(CombinedLossVars {
        total,
        mse: m,
        freq: Some(f),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinedLoss {
    pub total: f64,
    pub mse: f64,
    pub freq: f64,
}

pub fn combined_loss(pred: &Field, target: &Field, cfg: &LossConfig, spec: &RadialSpec) -> Result<CombinedLoss> {
    cfg.validate()?;
    pred.check_same_shape(target)?;
    let mut t = Tape::new();
    let p = field_const(&mut t, pred);
    let y = field_const(&mut t, target);
    let v = combined_loss_graph(&mut t, p, y, &Rc::new(spec.clone()), pred.lengths(), cfg)?;
    Ok(CombinedLoss {
        total: t.scalar(v.total),
        mse: t.scalar(v.mse),
        freq: v.freq.map_or(0.0, |f| t.scalar(f.loss)),
    })
}

/// `fftfreq(n)` with unit spacing.
fn fftfreq(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let s = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
            s / n as f64
        })
        .collect()
}

/// `W = 1 + alpha (FM / (max FM + 1e-8))^p` over a `p_size x p_size` patch spectrum.
pub fn sphere_weights(p_size: usize, alpha: f64, p: f64) -> Vec<f64> {
    let f = fftfreq(p_size);
    let fm: Vec<f64> = f
        .iter()
        .flat_map(|kx| f.iter().map(move |ky| (kx * kx + ky * ky).sqrt()))
        .collect();
    let max = fm.iter().copied().fold(0.0, f64::max);
    fm.iter().map(|v| 1.0 + alpha * (v / (max + 1e-8)).powf(p)).collect()
}

/// Patch-spectral residual energy with high-frequency emphasis: per patch,
/// `sum_k W(k) |FFT_ortho(pred - target)(k)|^2`, averaged over patches and
/// channels, then reduced over the batch by `cfg.reduction`.
pub fn sphere_loss(pred: &Field, target: &Field, p_size: usize, cfg: &LossConfig) -> Result<f64> {
    let diff = pred.sub(target)?;
    let patches = extract_patches(&diff, p_size)?;
    let w = sphere_weights(p_size, cfg.sphere_alpha, cfg.sphere_p);
    let mut plan = PlaneFft::new(p_size, p_size);
    let mut buf = vec![Default::default(); p_size * p_size];
    let inv_n = 1.0 / (p_size * p_size) as f64;
    let per_sample = patches.channels() * patches.n_patches();
    let mut total = 0.0;
    for sample in patches.data().chunks_exact(per_sample * p_size * p_size) {
        let mut acc = 0.0;
        for patch in sample.chunks_exact(p_size * p_size) {
            plan.fft_full(patch, &mut buf);
            acc += buf
                .iter()
                .zip(&w)
                .map(|(z, w)| w * z.norm_sqr() * inv_n)
                .sum::<f64>();
        }
        total += acc / per_sample as f64;
    }
    Ok(match cfg.reduction {
        Reduction::Mean => total / pred.batch() as f64,
        Reduction::Sum => total,
    })
}

/// Standard-deviation stabiliser of [`adaptive_noise`].
pub const NOISE_EPS: f64 = 1e-8;

/// `mu_b + alpha * sigma_b * N(0, 1)` elementwise, with per-sample mean
/// `mu_b` and `sigma_b = std + eps` taken over all non-batch axes of `x_hf`.
pub fn adaptive_noise(x_hf: &Field, alpha: f64, seed: u64) -> Result<Field> {
    if !(alpha >= 0.0) {
        return Err(Error::config(format!("noise alpha must be >= 0, got {alpha}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = x_hf.data().len() / x_hf.batch();
    let mut out = Vec::with_capacity(x_hf.data().len());
    for sample in x_hf.data().chunks_exact(per) {
        let (mu, sigma) = noise_stats(sample);
        for _ in 0..per {
            let n: f64 = StandardNormal.sample(&mut rng);
            out.push(mu + alpha * sigma * n);
        }
    }
    let (lx, ly) = x_hf.lengths();
    Ok(Field::new(out, x_hf.shape())?.with_lengths(lx, ly))
}

/// `(mu, sqrt(var) + eps)` with the population variance.
pub fn noise_stats(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mu = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    (mu, var.sqrt() + NOISE_EPS)
}
