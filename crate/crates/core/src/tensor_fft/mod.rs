//! Dense real/complex field arrays and the 2D FFT, pooling and
//! interpolation primitives everything else is built on.

pub(crate) mod fft;
pub(crate) mod resample;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fft::half_len;
pub(crate) use fft::PlaneFft;
pub use resample::InterpMode;

/// Real field `[batch, channels, nx, ny]`, row-major, on a periodic
/// rectangle of physical size `lengths`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    data: Vec<f64>,
    shape: [usize; 4],
    lengths: (f64, f64),
}

impl Field {
    pub fn new(data: Vec<f64>, shape: [usize; 4]) -> Result<Self> {
        let [b, c, nx, ny] = shape;
        if b == 0 || c == 0 {
            return Err(Error::shape(format!("batch and channels must be >= 1, got {shape:?}")));
        }
        if nx < 2 || ny < 2 {
            return Err(Error::shape(format!("spatial sizes must be >= 2, got {shape:?}")));
        }
        if data.len() != b * c * nx * ny {
            return Err(Error::shape(format!(
                "{} elements do not match shape {shape:?}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at flat index {i}")));
        }
        Ok(Self {
            data,
            shape,
            lengths: (1.0, 1.0),
        })
    }

    pub fn zeros(shape: [usize; 4]) -> Result<Self> {
        Self::new(vec![0.0; shape.iter().product()], shape)
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let [b, c, nx, ny] = shape;
        let mut data = Vec::with_capacity(b * c * nx * ny);
        for ib in 0..b {
            for ic in 0..c {
                for x in 0..nx {
                    for y in 0..ny {
                        data.push(f(ib, ic, x, y));
                    }
                }
            }
        }
        Self::new(data, shape)
    }

    pub fn with_lengths(mut self, lx: f64, ly: f64) -> Self {
        self.lengths = (lx, ly);
        self
    }

    /// Skips the finiteness scan; for kernels whose outputs are finite by
    /// construction from finite inputs.
    pub(crate) fn from_parts(data: Vec<f64>, shape: [usize; 4], lengths: (f64, f64)) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        Self { data, shape, lengths }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }
    pub fn batch(&self) -> usize {
        self.shape[0]
    }
    pub fn channels(&self) -> usize {
        self.shape[1]
    }
    pub fn nx(&self) -> usize {
        self.shape[2]
    }
    pub fn ny(&self) -> usize {
        self.shape[3]
    }
    pub fn lengths(&self) -> (f64, f64) {
        self.lengths
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    /// The `[nx, ny]` plane of sample `b`, channel `c`.
    pub fn plane(&self, b: usize, c: usize) -> &[f64] {
        let n = self.plane_len();
        let off = (b * self.shape[1] + c) * n;
        &self.data[off..off + n]
    }

    pub fn planes(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.plane_len())
    }

    pub fn get(&self, b: usize, c: usize, x: usize, y: usize) -> f64 {
        self.plane(b, c)[x * self.shape[3] + y]
    }

    /// Elementwise map; errors if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Ok(Self::new(self.data.iter().map(|&v| f(v)).collect(), self.shape)?.with_lengths(self.lengths.0, self.lengths.1))
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &Field, b: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self::from_parts(data, self.shape, self.lengths))
    }

    pub fn sub(&self, other: &Field) -> Result<Self> {
        self.axpby(1.0, other, -1.0)
    }

    pub(crate) fn check_same_shape(&self, other: &Field) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Selects a contiguous range of samples along the batch axis.
    pub fn batch_range(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.batch() {
            return Err(Error::shape(format!(
                "batch range {start}..{end} out of bounds for batch {}",
                self.batch()
            )));
        }
        let per = self.shape[1] * self.plane_len();
        let mut shape = self.shape;
        shape[0] = end - start;
        Ok(Self::from_parts(
            self.data[start * per..end * per].to_vec(),
            shape,
            self.lengths,
        ))
    }

    /// Stacks fields of identical `[c, nx, ny]` along the batch axis.
    pub fn concat_batch(parts: &[Field]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("cannot concatenate zero fields"))?;
        let mut data = Vec::new();
        let mut b = 0;
        for p in parts {
            if p.shape[1..] != first.shape[1..] {
                return Err(Error::shape(format!(
                    "cannot concatenate {:?} with {:?}",
                    p.shape, first.shape
                )));
            }
            data.extend_from_slice(&p.data);
            b += p.batch();
        }
        let mut shape = first.shape;
        shape[0] = b;
        Ok(Self::from_parts(data, shape, first.lengths))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// Unscaled forward transform, `1/N` on the inverse.
    #[default]
    Backward,
    /// `1/sqrt(N)` on both directions.
    Ortho,
}

impl NormMode {
    fn forward_scale(self, n: usize) -> f64 {
        match self {
            NormMode::Backward => 1.0,
            NormMode::Ortho => 1.0 / (n as f64).sqrt(),
        }
    }

    /// Extra factor applied after the `1/N` inverse kernel.
    fn inverse_scale(self, n: usize) -> f64 {
        match self {
            NormMode::Backward => 1.0,
            NormMode::Ortho => (n as f64).sqrt(),
        }
    }
}

/// Half spectrum `[batch, channels, nx, ny/2 + 1]` of a real field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    data: Vec<Complex64>,
    shape: [usize; 4],
    ny: usize,
    norm: NormMode,
}

impl SpectralField {
    pub fn new(data: Vec<Complex64>, shape: [usize; 4], ny: usize, norm: NormMode) -> Result<Self> {
        if shape[3] != half_len(ny) {
            return Err(Error::shape(format!(
                "half-spectrum width {} inconsistent with ny = {ny}",
                shape[3]
            )));
        }
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::shape("spectral data length does not match shape"));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite spectral coefficient".into()));
        }
        Ok(Self { data, shape, ny, norm })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
    pub fn norm(&self) -> NormMode {
        self.norm
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn get(&self, b: usize, c: usize, kx: usize, ky: usize) -> Complex64 {
        let [_, nc, nkx, nky] = self.shape;
        self.data[((b * nc + c) * nkx + kx) * nky + ky]
    }
}

/// Forward real-input 2D DFT over the two spatial axes.
pub fn rfft2(f: &Field, norm: NormMode) -> Result<SpectralField> {
    let [b, c, nx, ny] = f.shape;
    if f.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in rfft2 input".into()));
    }
    let nyr = half_len(ny);
    let mut out = vec![Complex64::default(); b * c * nx * nyr];
    let mut plan = PlaneFft::new(nx, ny);
    let scale = norm.forward_scale(nx * ny);
    for (src, dst) in f.planes().zip(out.chunks_exact_mut(nx * nyr)) {
        plan.rfft(src, dst);
        if scale != 1.0 {
            dst.iter_mut().for_each(|z| *z *= scale);
        }
    }
    Ok(SpectralField {
        data: out,
        shape: [b, c, nx, nyr],
        ny,
        norm,
    })
}

/// Inverse of [`rfft2`] onto an `nx x ny` grid.
pub fn irfft2(s: &SpectralField, nx: usize, ny: usize, norm: NormMode) -> Result<Field> {
    let [b, c, kx, kyr] = s.shape;
    if kx != nx || kyr != half_len(ny) {
        return Err(Error::shape(format!(
            "spectrum [{kx}, {kyr}] inconsistent with grid {nx}x{ny}"
        )));
    }
    if nx < 2 || ny < 2 {
        return Err(Error::shape("grid sizes must be >= 2"));
    }
    let mut out = vec![0.0; b * c * nx * ny];
    let mut plan = PlaneFft::new(nx, ny);
    let scale = norm.inverse_scale(nx * ny);
    for (src, dst) in s.data.chunks_exact(nx * kyr).zip(out.chunks_exact_mut(nx * ny)) {
        plan.irfft(src, dst);
        if scale != 1.0 {
            dst.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Ok(Field::from_parts(out, [b, c, nx, ny], (1.0, 1.0)))
}

pub(crate) fn check_pool(nx: usize, ny: usize, kernel: usize, stride: usize) -> Result<()> {
    if kernel == 0 || stride == 0 {
        return Err(Error::config("pooling kernel and stride must be >= 1"));
    }
    if kernel > nx || kernel > ny {
        return Err(Error::shape(format!(
            "pooling kernel {kernel} exceeds grid {nx}x{ny}"
        )));
    }
    if kernel == stride && (nx % stride != 0 || ny % stride != 0) {
        return Err(Error::shape(format!(
            "grid {nx}x{ny} not divisible by pooling stride {stride}"
        )));
    }
    Ok(())
}

/// Mean over `kernel x kernel` windows taken every `stride` cells.
pub fn avg_pool2(f: &Field, kernel: usize, stride: usize) -> Result<Field> {
    let [b, c, nx, ny] = f.shape;
    check_pool(nx, ny, kernel, stride)?;
    let ox = resample::pooled_len(nx, kernel, stride);
    let oy = resample::pooled_len(ny, kernel, stride);
    let mut out = vec![0.0; b * c * ox * oy];
    for (src, dst) in f.planes().zip(out.chunks_exact_mut(ox * oy)) {
        resample::avg_pool_plane(src, nx, ny, kernel, stride, dst);
    }
    // pooled planes may be smaller than 2x2, which `Field` rejects
    Ok(Field {
        data: out,
        shape: [b, c, ox, oy],
        lengths: f.lengths,
    })
}

/// Upsamples to `out_nx x out_ny`. Bilinear uses the half-pixel
/// (`align_corners = false`) source mapping.
pub fn interpolate2(f: &Field, out_nx: usize, out_ny: usize, mode: InterpMode) -> Result<Field> {
    let [b, c, nx, ny] = f.shape;
    if out_nx < nx || out_ny < ny {
        return Err(Error::shape(format!(
            "interpolation target {out_nx}x{out_ny} smaller than input {nx}x{ny}"
        )));
    }
    let interp = resample::Interp2::new(nx, ny, out_nx, out_ny, mode);
    let mut out = vec![0.0; b * c * out_nx * out_ny];
    for (src, dst) in f.planes().zip(out.chunks_exact_mut(out_nx * out_ny)) {
        interp.apply(src, dst);
    }
    Ok(Field::from_parts(out, [b, c, out_nx, out_ny], f.lengths))
}

/// Builds a field whose planes may be smaller than 2x2 (pooling outputs).
pub fn small_field(data: Vec<f64>, shape: [usize; 4]) -> Result<Field> {
    if data.len() != shape.iter().product::<usize>() || shape.contains(&0) {
        return Err(Error::shape(format!("data does not match shape {shape:?}")));
    }
    Ok(Field {
        data,
        shape,
        lengths: (1.0, 1.0),
    })
}

#[cfg(test)]
mod tests;
