//! Plane-level 2D FFT kernels over row-major `[nx, ny]` slices.
//!
//! All kernels here are unnormalized in the forward direction and apply
//! `1/(nx*ny)` on the inverse, matching the "backward" convention. Callers
//! rescale for ortho mode.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// Number of retained bins along the last axis of a real-input transform.
#[inline]
pub fn half_len(ny: usize) -> usize {
    ny / 2 + 1
}

/// Weight of a half-spectrum column when the full spectrum is rebuilt by
/// Hermitian symmetry: 1 for DC (and Nyquist for even `ny`), 2 otherwise.
#[inline]
pub(crate) fn hermitian_weight(ky: usize, ny: usize) -> f64 {
    if ky == 0 || (ny % 2 == 0 && ky == ny / 2) {
        1.0
    } else {
        2.0
    }
}

fn transpose(src: &[Complex64], rows: usize, cols: usize, dst: &mut [Complex64]) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// Scratch space reused across planes of identical geometry.
pub(crate) struct PlaneFft {
    nx: usize,
    ny: usize,
    nyr: usize,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    rows: Vec<Complex64>,
    cols: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl PlaneFft {
    pub(crate) fn new(nx: usize, ny: usize) -> Self {
        let fwd_y = plan(ny, FftDirection::Forward);
        let inv_y = plan(ny, FftDirection::Inverse);
        let fwd_x = plan(nx, FftDirection::Forward);
        let inv_x = plan(nx, FftDirection::Inverse);
        let scratch_len = [&fwd_y, &inv_y, &fwd_x, &inv_x]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        let nyr = half_len(ny);
        Self {
            nx,
            ny,
            nyr,
            fwd_y,
            inv_y,
            fwd_x,
            inv_x,
            rows: vec![Complex64::default(); nx * ny],
            cols: vec![Complex64::default(); nx * nyr],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    /// Unnormalized forward real-to-half-complex transform.
    pub(crate) fn rfft(&mut self, input: &[f64], out: &mut [Complex64]) {
        let (nx, ny, nyr) = (self.nx, self.ny, self.nyr);
        debug_assert_eq!(input.len(), nx * ny);
        debug_assert_eq!(out.len(), nx * nyr);
        for (dst, &v) in self.rows.iter_mut().zip(input) {
            *dst = Complex64::new(v, 0.0);
        }
        self.fwd_y.process_with_scratch(&mut self.rows, &mut self.scratch);
        for x in 0..nx {
            for ky in 0..nyr {
                self.cols[ky * nx + x] = self.rows[x * ny + ky];
            }
        }
        self.fwd_x.process_with_scratch(&mut self.cols, &mut self.scratch);
        transpose(&self.cols, nyr, nx, out);
    }

    /// Inverse half-complex-to-real transform including the `1/(nx*ny)`
    /// factor. Imaginary parts that are inconsistent with a real signal
    /// (DC/Nyquist columns) are discarded.
    pub(crate) fn irfft(&mut self, input: &[Complex64], out: &mut [f64]) {
        let (nx, ny, nyr) = (self.nx, self.ny, self.nyr);
        debug_assert_eq!(input.len(), nx * nyr);
        debug_assert_eq!(out.len(), nx * ny);
        transpose(input, nx, nyr, &mut self.cols);
        self.inv_x.process_with_scratch(&mut self.cols, &mut self.scratch);
        for x in 0..nx {
            let row = &mut self.rows[x * ny..(x + 1) * ny];
            for ky in 0..nyr {
                row[ky] = self.cols[ky * nx + x];
            }
            for ky in nyr..ny {
                row[ky] = row[ny - ky].conj();
            }
        }
        self.inv_y.process_with_scratch(&mut self.rows, &mut self.scratch);
        let scale = 1.0 / (nx * ny) as f64;
        for (o, v) in out.iter_mut().zip(&self.rows) {
            *o = v.re * scale;
        }
    }

    /// Adjoint of the unnormalized `rfft`: `Re(sum_k g[k] e^{+i k.x})` over
    /// the half spectrum only (no Hermitian doubling, no scaling).
    pub(crate) fn rfft_adjoint(&mut self, grad: &[Complex64], out: &mut [f64]) {
        let (nx, ny, nyr) = (self.nx, self.ny, self.nyr);
        transpose(grad, nx, nyr, &mut self.cols);
        self.inv_x.process_with_scratch(&mut self.cols, &mut self.scratch);
        for x in 0..nx {
            let row = &mut self.rows[x * ny..(x + 1) * ny];
            for ky in 0..nyr {
                row[ky] = self.cols[ky * nx + x];
            }
            for v in row[nyr..].iter_mut() {
                *v = Complex64::default();
            }
        }
        self.inv_y.process_with_scratch(&mut self.rows, &mut self.scratch);
        for (o, v) in out.iter_mut().zip(&self.rows) {
            *o = v.re;
        }
    }

    /// Adjoint of `irfft` (which carries `1/(nx*ny)`).
    pub(crate) fn irfft_adjoint(&mut self, grad: &[f64], out: &mut [Complex64]) {
        self.rfft(grad, out);
        let (nx, ny, nyr) = (self.nx, self.ny, self.nyr);
        let inv_n = 1.0 / (nx * ny) as f64;
        for x in 0..nx {
            for ky in 0..nyr {
                out[x * nyr + ky] *= hermitian_weight(ky, ny) * inv_n;
            }
        }
    }

    /// Unnormalized full complex 2D forward transform.
    pub(crate) fn fft_full(&mut self, input: &[f64], out: &mut [Complex64]) {
        let (nx, ny) = (self.nx, self.ny);
        for (dst, &v) in self.rows.iter_mut().zip(input) {
            *dst = Complex64::new(v, 0.0);
        }
        self.fwd_y.process_with_scratch(&mut self.rows, &mut self.scratch);
        let mut t = vec![Complex64::default(); nx * ny];
        transpose(&self.rows, nx, ny, &mut t);
        self.fwd_x.process_with_scratch(&mut t, &mut self.scratch);
        transpose(&t, ny, nx, out);
    }
}
