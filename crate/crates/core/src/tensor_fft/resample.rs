//! Average pooling and upsampling kernels on single `[nx, ny]` planes,
//! together with their adjoints for the gradient tape.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpMode {
    Bilinear,
    #[default]
    Nearest,
}

impl FromStr for InterpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bilinear" => Ok(InterpMode::Bilinear),
            "nearest" => Ok(InterpMode::Nearest),
            other => Err(Error::config(format!("unknown interpolation mode `{other}`"))),
        }
    }
}

pub(crate) fn pooled_len(n: usize, kernel: usize, stride: usize) -> usize {
    (n - kernel) / stride + 1
}

pub(crate) fn avg_pool_plane(
    input: &[f64],
    nx: usize,
    ny: usize,
    kernel: usize,
    stride: usize,
    out: &mut [f64],
) {
    let ox = pooled_len(nx, kernel, stride);
    let oy = pooled_len(ny, kernel, stride);
    let inv = 1.0 / (kernel * kernel) as f64;
    let mut window = Vec::with_capacity(kernel * kernel);
    for i in 0..ox {
        for j in 0..oy {
            window.clear();
            for di in 0..kernel {
                window.extend_from_slice(&input[(i * stride + di) * ny + j * stride..][..kernel]);
            }
            out[i * oy + j] = pairwise_sum(&window) * inv;
        }
    }
}

/// Tree summation. Exact for a constant window whose length is a power of
/// two, so pooling a block-constant field reproduces the block values.
fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

pub(crate) fn avg_pool_plane_adjoint(
    grad: &[f64],
    nx: usize,
    ny: usize,
    kernel: usize,
    stride: usize,
    out: &mut [f64],
) {
    let ox = pooled_len(nx, kernel, stride);
    let oy = pooled_len(ny, kernel, stride);
    let inv = 1.0 / (kernel * kernel) as f64;
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..ox {
        for j in 0..oy {
            let g = grad[i * oy + j] * inv;
            for di in 0..kernel {
                for v in out[(i * stride + di) * ny + j * stride..][..kernel].iter_mut() {
                    *v += g;
                }
            }
        }
    }
}

/// Source taps `(i0, i1, w1)` for one axis; the output value is
/// `(1 - w1) * in[i0] + w1 * in[i1]`.
pub(crate) fn axis_taps(n_in: usize, n_out: usize, mode: InterpMode) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|d| match mode {
            InterpMode::Nearest => {
                let s = ((d as f64 * scale).floor() as usize).min(n_in - 1);
                (s, s, 0.0)
            }
            InterpMode::Bilinear => {
                // align_corners = false
                let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(n_in - 1);
                let i1 = if i0 + 1 < n_in { i0 + 1 } else { i0 };
                (i0, i1, src - i0 as f64)
            }
        })
        .collect()
}

pub(crate) struct Interp2 {
    ny: usize,
    oy: usize,
    tx: Vec<(usize, usize, f64)>,
    ty: Vec<(usize, usize, f64)>,
}

impl Interp2 {
    pub(crate) fn new(nx: usize, ny: usize, ox: usize, oy: usize, mode: InterpMode) -> Self {
        Self {
            ny,
            oy,
            tx: axis_taps(nx, ox, mode),
            ty: axis_taps(ny, oy, mode),
        }
    }

    pub(crate) fn apply(&self, input: &[f64], out: &mut [f64]) {
        let ny = self.ny;
        for (i, &(x0, x1, wx)) in self.tx.iter().enumerate() {
            for (j, &(y0, y1, wy)) in self.ty.iter().enumerate() {
                let a = (1.0 - wy) * input[x0 * ny + y0] + wy * input[x0 * ny + y1];
                let b = (1.0 - wy) * input[x1 * ny + y0] + wy * input[x1 * ny + y1];
                out[i * self.oy + j] = (1.0 - wx) * a + wx * b;
            }
        }
    }

    pub(crate) fn adjoint(&self, grad: &[f64], out: &mut [f64]) {
        let ny = self.ny;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &(x0, x1, wx)) in self.tx.iter().enumerate() {
            for (j, &(y0, y1, wy)) in self.ty.iter().enumerate() {
                let g = grad[i * self.oy + j];
                let ga = (1.0 - wx) * g;
                let gb = wx * g;
                out[x0 * ny + y0] += (1.0 - wy) * ga;
                out[x0 * ny + y1] += wy * ga;
                out[x1 * ny + y0] += (1.0 - wy) * gb;
                out[x1 * ny + y1] += wy * gb;
            }
        }
    }
}
