//! Dense inner loops shared by the tape ops.

/// Dot product with eight independent accumulators so the reduction
/// vectorizes; the summation order is fixed, so results are reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub(crate) fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let c = a.chunks_exact(8);
    let r = c.remainder();
    for x in c {
        for k in 0..8 {
            acc[k] += x[k];
        }
    }
    let tail: f64 = r.iter().sum();
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Width of the register tile used by the channel-mixing kernels.
const TILE: usize = 8;

/// `out[s] = init + sum_k coef[k] * rows[k][s]` for `s` in `0..len`, where
/// `rows[k]` starts at `src[k * stride]`. Terms are added in order of `k`.
#[inline]
fn mix_rows(src: &[f64], stride: usize, coef: impl Fn(usize) -> f64, n: usize, init: f64, out: &mut [f64]) {
    let len = out.len();
    let full = len / TILE * TILE;
    let mut s = 0;
    while s < full {
        let mut acc = [init; TILE];
        for k in 0..n {
            let c = coef(k);
            let row: &[f64; TILE] = src[k * stride + s..k * stride + s + TILE].try_into().unwrap();
            for t in 0..TILE {
                acc[t] += c * row[t];
            }
        }
        out[s..s + TILE].copy_from_slice(&acc);
        s += TILE;
    }
    for s in full..len {
        let mut acc = init;
        for k in 0..n {
            acc += coef(k) * src[k * stride + s];
        }
        out[s] = acc;
    }
}

/// `out[b, o, s] = sum_i w[o, i] * x[b, i, s] (+ bias[o])`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_forward(
    x: &[f64],
    w: &[f64],
    bias: Option<&[f64]>,
    batch: usize,
    cin: usize,
    cout: usize,
    inner: usize,
    out: &mut [f64],
) {
    for b in 0..batch {
        let xb = &x[b * cin * inner..(b + 1) * cin * inner];
        for o in 0..cout {
            let row = &mut out[(b * cout + o) * inner..(b * cout + o + 1) * inner];
            let b0 = bias.map_or(0.0, |bv| bv[o]);
            mix_rows(xb, inner, |i| w[o * cin + i], cin, b0, row);
        }
    }
}

/// `gx[b, i, s] = sum_o w[o, i] * g[b, o, s]`.
pub(crate) fn linear_input_grad(g: &[f64], w: &[f64], batch: usize, cin: usize, cout: usize, inner: usize, gx: &mut [f64]) {
    for b in 0..batch {
        let gb = &g[b * cout * inner..(b + 1) * cout * inner];
        for i in 0..cin {
            let row = &mut gx[(b * cin + i) * inner..(b * cin + i + 1) * inner];
            mix_rows(gb, inner, |o| w[o * cin + i], cout, 0.0, row);
        }
    }
}

pub(crate) const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
pub(crate) const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf form) GELU and its Gaussian CDF factor.
#[inline]
pub(crate) fn gelu_with_cdf(x: f64) -> (f64, f64) {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    (x * cdf, cdf)
}

#[inline]
pub(crate) fn gelu_grad(x: f64, cdf: f64) -> f64 {
    cdf + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn gelu(x: f64) -> f64 {
    gelu_with_cdf(x).0
}

/// Retained modes of a spectrum in split real/imaginary form, laid out as
/// `[block][mode][channel]` where a block is one `(batch, group)` pair.
pub(crate) struct Packed {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Offsets (in f64 units, pointing at the real part) of the retained modes
/// inside one interleaved spectrum plane, in weight order.
pub(crate) fn mode_offsets(kx: &[usize], nyr: usize, kyr: usize) -> Vec<usize> {
    kx.iter()
        .flat_map(|&k| (0..kyr).map(move |ky| (k * nyr + ky) * 2))
        .collect()
}

/// Gathers `x[b, c, g, plane]` into `[b * groups + g][mode][c]`.
pub(crate) fn pack_spectrum(x: &[f64], batch: usize, chans: usize, groups: usize, plane: usize, offs: &[usize]) -> Packed {
    let m = offs.len();
    let len = batch * groups * m * chans;
    let (mut re, mut im) = (vec![0.0; len], vec![0.0; len]);
    for b in 0..batch {
        for c in 0..chans {
            for g in 0..groups {
                let src = &x[((b * chans + c) * groups + g) * plane..][..plane];
                let base = (b * groups + g) * m * chans + c;
                for (k, &off) in offs.iter().enumerate() {
                    re[base + k * chans] = src[off];
                    im[base + k * chans] = src[off + 1];
                }
            }
        }
    }
    Packed { re, im }
}

/// Inverse of [`pack_spectrum`]: scatters into a zeroed interleaved buffer.
pub(crate) fn unpack_spectrum(p: &Packed, batch: usize, chans: usize, groups: usize, plane: usize, offs: &[usize]) -> Vec<f64> {
    let m = offs.len();
    let mut out = vec![0.0; batch * chans * groups * plane];
    for b in 0..batch {
        for c in 0..chans {
            for g in 0..groups {
                let dst = &mut out[((b * chans + c) * groups + g) * plane..][..plane];
                let base = (b * groups + g) * m * chans + c;
                for (k, &off) in offs.iter().enumerate() {
                    dst[off] = p.re[base + k * chans];
                    dst[off + 1] = p.im[base + k * chans];
                }
            }
        }
    }
    out
}

/// Reorders weights `[i][o][mode]` (interleaved complex) into split form
/// `[mode][i][o]`, or `[mode][o][i]` when `transpose` is set.
pub(crate) fn pack_weights(w: &[f64], cin: usize, cout: usize, m: usize, transpose: bool) -> Packed {
    let len = cin * cout * m;
    let (mut re, mut im) = (vec![0.0; len], vec![0.0; len]);
    for i in 0..cin {
        for o in 0..cout {
            let src = &w[(i * cout + o) * m * 2..][..m * 2];
            for k in 0..m {
                let d = if transpose { (k * cout + o) * cin + i } else { (k * cin + i) * cout + o };
                re[d] = src[2 * k];
                im[d] = src[2 * k + 1];
            }
        }
    }
    Packed { re, im }
}

/// Per block and mode: `y[o] += sum_i a[i][o] * x[i]` over complex values,
/// with `a` conjugated when `conj` is set. `a` is `[mode][n_in][n_out]`,
/// `x` is `[block][mode][n_in]`, `y` is `[block][mode][n_out]`.
pub(crate) fn modal_matvec(a: &Packed, x: &Packed, y: &mut Packed, n_in: usize, n_out: usize, m: usize, conj: bool) {
    let s = if conj { -1.0 } else { 1.0 };
    let blocks = x.re.len() / (m * n_in);
    for blk in 0..blocks {
        for k in 0..m {
            let xo = (blk * m + k) * n_in;
            let yo = (blk * m + k) * n_out;
            let (yr, yi) = (&mut y.re[yo..yo + n_out], &mut y.im[yo..yo + n_out]);
            for i in 0..n_in {
                let (xr, xi) = (x.re[xo + i], x.im[xo + i]);
                let ao = (k * n_in + i) * n_out;
                let (ar, ai) = (&a.re[ao..ao + n_out], &a.im[ao..ao + n_out]);
                for o in 0..n_out {
                    let ai_o = s * ai[o];
                    yr[o] += ar[o] * xr - ai_o * xi;
                    yi[o] += ar[o] * xi + ai_o * xr;
                }
            }
        }
    }
}

/// Weight gradient: `gw[mode][i][o] += conj(x[blk][mode][i]) * g[blk][mode][o]`
/// summed over blocks in order.
pub(crate) fn modal_outer_acc(x: &Packed, g: &Packed, gw: &mut Packed, cin: usize, cout: usize, m: usize) {
    let blocks = x.re.len() / (m * cin);
    for blk in 0..blocks {
        for k in 0..m {
            let xo = (blk * m + k) * cin;
            let go = (blk * m + k) * cout;
            let (gr, gi) = (&g.re[go..go + cout], &g.im[go..go + cout]);
            for i in 0..cin {
                let (xr, xi) = (x.re[xo + i], x.im[xo + i]);
                let wo = (k * cin + i) * cout;
                let (wr, wi) = (&mut gw.re[wo..wo + cout], &mut gw.im[wo..wo + cout]);
                for o in 0..cout {
                    wr[o] += xr * gr[o] + xi * gi[o];
                    wi[o] += xr * gi[o] - xi * gr[o];
                }
            }
        }
    }
}

/// Inverse of [`pack_weights`] with `transpose == false`.
pub(crate) fn unpack_weights(p: &Packed, cin: usize, cout: usize, m: usize) -> Vec<f64> {
    let mut w = vec![0.0; cin * cout * m * 2];
    for i in 0..cin {
        for o in 0..cout {
            let dst = &mut w[(i * cout + o) * m * 2..][..m * 2];
            for k in 0..m {
                let s = (k * cin + i) * cout + o;
                dst[2 * k] = p.re[s];
                dst[2 * k + 1] = p.im[s];
            }
        }
    }
    w
}
