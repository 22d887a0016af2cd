//! Radial wavenumber bins over the first spectral quadrant, binned energy
//! spectra and low/mid/high band grouping.
//!
//! Only the quadrant `[0, nx/2) x [0, ny/2)` of the unshifted spectrum is
//! binned. Bands are closed-open in radius: low `[0, i_low)`, mid
//! `[i_low, i_high)`, high `[i_high, M]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_fft::{rfft2, Field, NormMode};

pub const DEFAULT_I_LOW: usize = 4;
pub const DEFAULT_I_HIGH: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadialSpec {
    nx: usize,
    ny: usize,
    bin_map: Vec<usize>,
    max_radius: usize,
    i_low: usize,
    i_high: usize,
}

impl RadialSpec {
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    /// Quadrant extent `(nx/2, ny/2)`.
    pub fn quadrant(&self) -> (usize, usize) {
        (self.nx / 2, self.ny / 2)
    }
    pub fn bin_map(&self) -> &[usize] {
        &self.bin_map
    }
    pub fn bin(&self, kx: usize, ky: usize) -> usize {
        self.bin_map[kx * (self.ny / 2) + ky]
    }
    pub fn max_radius(&self) -> usize {
        self.max_radius
    }
    pub fn n_bins(&self) -> usize {
        self.max_radius + 1
    }
    pub fn cutoffs(&self) -> (usize, usize) {
        (self.i_low, self.i_high)
    }

    /// Same geometry, different band grouping.
    pub fn with_cutoffs(&self, i_low: usize, i_high: usize) -> Result<Self> {
        check_cutoffs(i_low, i_high)?;
        Ok(Self {
            i_low,
            i_high,
            ..self.clone()
        })
    }

    /// Radius ranges `[start, end)` of the three bands, clamped to the
    /// available bins.
    pub fn band_ranges(&self) -> Result<[(usize, usize); 3]> {
        let n = self.n_bins();
        if self.i_high > n {
            return Err(Error::config(format!(
                "i_high = {} exceeds the {} radial bins available on a {}x{} grid",
                self.i_high, n, self.nx, self.ny
            )));
        }
        Ok([(0, self.i_low), (self.i_low, self.i_high), (self.i_high, n)])
    }
}

fn check_cutoffs(i_low: usize, i_high: usize) -> Result<()> {
    if i_low == 0 || i_low >= i_high {
        return Err(Error::config(format!(
            "radial cutoffs must satisfy 0 < i_low < i_high, got ({i_low}, {i_high})"
        )));
    }
    Ok(())
}

/// Floor-radius bin map over the first quadrant of an `nx x ny` spectrum.
pub fn radial_bin_map(nx: usize, ny: usize, i_low: usize, i_high: usize) -> Result<RadialSpec> {
    if nx < 2 || ny < 2 || nx % 2 != 0 || ny % 2 != 0 {
        return Err(Error::shape(format!(
            "radial binning needs even grid sizes, got {nx}x{ny}"
        )));
    }
    check_cutoffs(i_low, i_high)?;
    let (hx, hy) = (nx / 2, ny / 2);
    let mut bin_map = Vec::with_capacity(hx * hy);
    for kx in 0..hx {
        for ky in 0..hy {
            bin_map.push(isqrt(kx * kx + ky * ky));
        }
    }
    let max_radius = bin_map.iter().copied().max().unwrap_or(0);
    Ok(RadialSpec {
        nx,
        ny,
        bin_map,
        max_radius,
        i_low,
        i_high,
    })
}

/// `floor(sqrt(n))` without floating-point rounding surprises.
fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Sums per-mode values `[rows, nx/2, ny/2]` into `[rows, M+1]` radial bins.
pub fn bin_aggregate(values: &[f64], spec: &RadialSpec) -> Result<Vec<f64>> {
    let q = spec.bin_map.len();
    if q == 0 || values.len() % q != 0 {
        return Err(Error::shape(format!(
            "{} values are not a whole number of {}x{} quadrants",
            values.len(),
            spec.nx / 2,
            spec.ny / 2
        )));
    }
    let nb = spec.n_bins();
    let mut out = vec![0.0; values.len() / q * nb];
    for (src, dst) in values.chunks_exact(q).zip(out.chunks_exact_mut(nb)) {
        aggregate_into(src, &spec.bin_map, dst);
    }
    Ok(out)
}

#[inline]
pub(crate) fn aggregate_into(src: &[f64], bin_map: &[usize], dst: &mut [f64]) {
    for (&v, &r) in src.iter().zip(bin_map) {
        dst[r] += v;
    }
}

/// Radially binned spectrum `[batch, channels, n_bins]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub values: Vec<f64>,
    pub batch: usize,
    pub channels: usize,
    pub n_bins: usize,
}

impl RadialProfile {
    pub fn row(&self, b: usize, c: usize) -> &[f64] {
        let off = (b * self.channels + c) * self.n_bins;
        &self.values[off..off + self.n_bins]
    }
}

/// Squared magnitudes of the backward-normalized spectrum over the first
/// quadrant, as `[b, c, nx/2, ny/2]`.
pub(crate) fn quadrant_energy(f: &Field) -> Result<Vec<f64>> {
    let [b, c, nx, ny] = f.shape();
    let s = rfft2(f, NormMode::Backward)?;
    let nyr = s.shape()[3];
    let (hx, hy) = (nx / 2, ny / 2);
    let mut out = Vec::with_capacity(b * c * hx * hy);
    for plane in s.data().chunks_exact(nx * nyr) {
        for kx in 0..hx {
            for ky in 0..hy {
                out.push(plane[kx * nyr + ky].norm_sqr());
            }
        }
    }
    Ok(out)
}

/// `E(k) = sum_{floor|k| = k} |u_hat|^2` per sample and channel.
pub fn energy_spectrum(f: &Field) -> Result<RadialProfile> {
    let spec = radial_bin_map(f.nx(), f.ny(), DEFAULT_I_LOW, DEFAULT_I_HIGH)?;
    let e = quadrant_energy(f)?;
    Ok(RadialProfile {
        values: bin_aggregate(&e, &spec)?,
        batch: f.batch(),
        channels: f.channels(),
        n_bins: spec.n_bins(),
    })
}

/// Per-row band means plus their averages across rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandErrors {
    pub low: Vec<f64>,
    pub mid: Vec<f64>,
    pub high: Vec<f64>,
}

impl BandErrors {
    pub fn mean_low(&self) -> f64 {
        mean(&self.low)
    }
    pub fn mean_mid(&self) -> f64 {
        mean(&self.mid)
    }
    pub fn mean_high(&self) -> f64 {
        mean(&self.high)
    }
    pub fn means(&self) -> (f64, f64, f64) {
        (self.mean_low(), self.mean_mid(), self.mean_high())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Arithmetic mean of each band along the radius axis of `[rows, M+1]`.
/// A band with no bins (only possible for `high` when `i_high == M+1`)
/// contributes 0.
pub fn band_classify(binned: &[f64], spec: &RadialSpec) -> Result<BandErrors> {
    let nb = spec.n_bins();
    let ranges = spec.band_ranges()?;
    if binned.len() % nb != 0 {
        return Err(Error::shape(format!(
            "{} binned values are not a multiple of {nb} bins",
            binned.len()
        )));
    }
    let mut bands: [Vec<f64>; 3] = Default::default();
    for row in binned.chunks_exact(nb) {
        for (band, &(s, e)) in bands.iter_mut().zip(&ranges) {
            band.push(mean(&row[s..e]));
        }
    }
    let [low, mid, high] = bands;
    Ok(BandErrors { low, mid, high })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn four_by_four_map() {
        let s = radial_bin_map(4, 4, 1, 2).unwrap();
        assert_eq!(s.bin_map(), &[0, 1, 1, 1]);
        assert_eq!(s.max_radius(), 1);
    }

    #[test]
    fn max_radius_values() {
        assert_eq!(radial_bin_map(128, 128, 4, 12).unwrap().max_radius(), 89);
        assert_eq!(radial_bin_map(8, 8, 2, 3).unwrap().max_radius(), 4);
        assert_eq!(radial_bin_map(32, 16, 4, 12).unwrap().max_radius(), 16);
    }

    #[test]
    fn cutoff_validation() {
        assert!(matches!(radial_bin_map(8, 8, 4, 4), Err(Error::Config(_))));
        assert!(matches!(radial_bin_map(8, 8, 5, 3), Err(Error::Config(_))));
        assert!(matches!(radial_bin_map(7, 8, 1, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn aggregate_examples() {
        let s = radial_bin_map(4, 4, 1, 2).unwrap();
        assert_eq!(bin_aggregate(&[1.0; 4], &s).unwrap(), vec![1.0, 3.0]);
        assert_eq!(bin_aggregate(&[0.0; 8], &s).unwrap(), vec![0.0; 4]);
        assert!(matches!(bin_aggregate(&[1.0; 5], &s), Err(Error::Shape(_))));
    }

    #[test]
    fn aggregate_conserves_mass_and_matches_pixel_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [4usize, 6, 8, 16, 32] {
            for m in [4usize, 8, 32] {
                let s = radial_bin_map(n, m, 1, 2).unwrap();
                let (hx, hy) = s.quadrant();
                let vals: Vec<f64> = (0..3 * hx * hy).map(|_| rng.random::<f64>()).collect();
                let out = bin_aggregate(&vals, &s).unwrap();
                let mut oracle = vec![0.0; 3 * s.n_bins()];
                for row in 0..3 {
                    for kx in 0..hx {
                        for ky in 0..hy {
                            let r = ((kx * kx + ky * ky) as f64).sqrt().floor() as usize;
                            oracle[row * s.n_bins() + r] += vals[(row * hx + kx) * hy + ky];
                        }
                    }
                }
                assert_eq!(out, oracle);
                let total: f64 = vals.iter().sum();
                assert!((out.iter().sum::<f64>() - total).abs() <= 1e-12 * total);
            }
        }
    }

    #[test]
    fn spectrum_of_single_mode_and_zero() {
        let z = Field::zeros([1, 1, 8, 8]).unwrap();
        assert!(energy_spectrum(&z).unwrap().values.iter().all(|&v| v == 0.0));

        let f = Field::from_fn([1, 1, 8, 8], |_, _, _, y| {
            (2.0 * std::f64::consts::PI * y as f64 / 8.0).sin()
        })
        .unwrap();
        let e = energy_spectrum(&f).unwrap();
        for (r, &v) in e.row(0, 0).iter().enumerate() {
            if r == 1 {
                assert!((v - 1024.0).abs() < 1e-9);
            } else {
                assert!(v < 1e-20);
            }
        }
    }

    #[test]
    fn spectrum_matches_brute_force_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = Field::from_fn([1, 1, 6, 6], |_, _, _, _| rng.random_range(-1.0..1.0)).unwrap();
        let e = energy_spectrum(&f).unwrap();
        let mut oracle = vec![0.0; e.n_bins];
        for kx in 0..3 {
            for ky in 0..3 {
                let (mut re, mut im) = (0.0, 0.0);
                for x in 0..6 {
                    for y in 0..6 {
                        let th = -2.0 * std::f64::consts::PI * (kx * x + ky * y) as f64 / 6.0;
                        re += f.get(0, 0, x, y) * th.cos();
                        im += f.get(0, 0, x, y) * th.sin();
                    }
                }
                let r = ((kx * kx + ky * ky) as f64).sqrt().floor() as usize;
                oracle[r] += re * re + im * im;
            }
        }
        for (a, b) in e.values.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn band_examples() {
        let s = radial_bin_map(32, 32, 4, 12).unwrap();
        let n = s.n_bins();
        let uniform = vec![0.7; n];
        let b = band_classify(&uniform, &s).unwrap();
        let (l, m, h) = b.means();
        for v in [l, m, h] {
            assert!((v - 0.7).abs() < 1e-15);
        }

        let mut step = vec![0.0; n];
        step[..4].iter_mut().for_each(|v| *v = 1.0);
        assert_eq!(band_classify(&step, &s).unwrap().means(), (1.0, 0.0, 0.0));
        assert_eq!(band_classify(&vec![0.0; n], &s).unwrap().means(), (0.0, 0.0, 0.0));

        let small = radial_bin_map(8, 8, 4, 12).unwrap();
        assert!(matches!(band_classify(&[0.0; 5], &small), Err(Error::Config(_))));
    }

    #[test]
    fn cutoffs_only_regroup() {
        let s = radial_bin_map(32, 32, 4, 12).unwrap();
        let binned: Vec<f64> = (0..s.n_bins()).map(|r| r as f64).collect();
        for (lo, hi) in [(2, 10), (4, 12), (6, 15)] {
            let alt = s.with_cutoffs(lo, hi).unwrap();
            assert_eq!(alt.bin_map(), s.bin_map());
            let b = band_classify(&binned, &alt).unwrap();
            assert_eq!(b.mean_low(), (lo - 1) as f64 / 2.0);
        }
    }
}
