use serde::Serialize;

use crate::error::{Error, Result};

/// Leading-order spectral parameter counts of the global and local branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamBudget {
    pub global: u64,
    pub local: u64,
}

/// `global = d_c^2 K^dim L`; `local = d_c^2 p^(dim-1) (p/2 + 1) L`.
pub fn param_budget(dim: u32, d_c: u64, k: u64, l: u64, p: u64) -> Result<ParamBudget> {
    if !(2..=3).contains(&dim) {
        return Err(Error::config(format!("dimension must be 2 or 3, got {dim}")));
    }
    if d_c == 0 || k == 0 || l == 0 || p == 0 {
        return Err(Error::config("budget arguments must be positive"));
    }
    let dd = d_c * d_c;
    Ok(ParamBudget {
        global: dd * k.pow(dim) * l,
        local: dd * p.pow(dim - 1) * (p / 2 + 1) * l,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FftFlops {
    pub global_fwd: f64,
    pub global_inv: f64,
    pub local_fwd: f64,
    pub local_inv: f64,
}

/// FLOP estimates `5 N C prod(n) log2(prod(n))` for the forward transform of
/// the `c_in` input channels and the inverse of the `c_out` output channels.
/// The local variants replace the log factor by `log2(p^dim)`. `nz` selects
/// the 3D formulas; `p` defaults to the full grid (`nx`).
#[allow(clippy::too_many_arguments)]
pub fn fft_flops(
    b: usize,
    c_in: usize,
    c_out: usize,
    nx: usize,
    ny: usize,
    nz: Option<usize>,
    p: Option<usize>,
) -> FftFlops {
    let points = (nx * ny * nz.unwrap_or(1)) as f64;
    let dim = if nz.is_some() { 3 } else { 2 };
    let p = p.unwrap_or(nx) as f64;
    let glog = points.log2();
    let llog = p.powi(dim).log2();
    let f = |c: usize, lg: f64| 5.0 * b as f64 * c as f64 * points * lg;
    FftFlops {
        global_fwd: f(c_in, glog),
        global_inv: f(c_out, glog),
        local_fwd: f(c_in, llog),
        local_inv: f(c_out, llog),
    }
}
