use std::rc::Rc;

use num_complex::Complex64;

use super::kernels::{self, dot};
use super::{Op, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::operator::ModeSelection;
use crate::patching;
use crate::spectra::{self, RadialSpec};
use crate::tensor_fft::{half_len, resample, InterpMode, NormMode, PlaneFft};

fn plane_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    let n = shape.len();
    if n < 2 {
        return Err(Error::shape(format!("expected a spatial tensor, got {shape:?}")));
    }
    let (nx, ny) = (shape[n - 2], shape[n - 1]);
    let planes = shape[..n - 2].iter().product();
    Ok((planes, nx, ny))
}

fn to_complex(src: &[f64], dst: &mut Vec<Complex64>) {
    dst.clear();
    dst.extend(src.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])));
}

fn from_complex(src: &[Complex64], dst: &mut [f64]) {
    for (d, z) in dst.chunks_exact_mut(2).zip(src) {
        d[0] = z.re;
        d[1] = z.im;
    }
}

fn ortho_factor(norm: NormMode, n: usize) -> f64 {
    match norm {
        NormMode::Backward => 1.0,
        NormMode::Ortho => 1.0 / (n as f64).sqrt(),
    }
}

impl Tape {
    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "operand shapes differ: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| f(*x, *y)).collect();
        let t = Tensor {
            data,
            shape: va.shape.clone(),
        };
        Ok(self.push(t, op, &[a, b]))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(x);
        let t = Tensor {
            data: v.data.iter().map(|&a| f(a)).collect(),
            shape: v.shape.clone(),
        };
        self.push(t, op, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, Op::Scale(x, s), |a| a * s)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |a| a * a)
    }

    /// Square root; its adjoint is taken as 0 at exactly 0.
    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sqrt(x), f64::sqrt)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let mut cdf = Vec::with_capacity(v.numel());
        let data = v
            .data
            .iter()
            .map(|&a| {
                let (y, c) = kernels::gelu_with_cdf(a);
                cdf.push(c);
                y
            })
            .collect();
        let t = Tensor {
            data,
            shape: v.shape.clone(),
        };
        self.push(t, Op::Gelu { x, cdf }, &[x])
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = kernels::sum(&self.value(x).data);
        self.push(Tensor::scalar(s), Op::SumAll(x), &[x])
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let v = &self.value(x).data;
        let s = kernels::sum(v) / v.len() as f64;
        self.push(Tensor::scalar(s), Op::MeanAll(x), &[x])
    }

    /// Maximum element; ties resolve to the first maximal index.
    pub fn max_all(&mut self, x: Var) -> Var {
        let v = &self.value(x).data;
        let mut argmax = 0;
        for (i, &a) in v.iter().enumerate() {
            if a > v[argmax] {
                argmax = i;
            }
        }
        let m = v[argmax];
        self.push(Tensor::scalar(m), Op::MaxAll { x, argmax }, &[x])
    }

    /// `sum_i weights[i] * x[i]`.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        if weights.len() != self.value(x).numel() {
            return Err(Error::shape("weight vector length does not match tensor"));
        }
        let s = dot(&self.value(x).data, &weights);
        Ok(self.push(
            Tensor::scalar(s),
            Op::WeightedSum {
                x,
                weights: Rc::new(weights),
            },
            &[x],
        ))
    }

    /// Pointwise channel map over axis 1: `[B, Cin, ...] -> [B, Cout, ...]`
    /// with `w: [Cout, Cin]` and optional `b: [Cout]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() < 2 || ws.len() != 2 || ws[1] != xs[1] {
            return Err(Error::shape(format!(
                "linear: input {xs:?} incompatible with weight {ws:?}"
            )));
        }
        let (batch, cin, cout) = (xs[0], xs[1], ws[0]);
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::shape("linear: bias length must equal output channels"));
            }
        }
        let inner: usize = xs[2..].iter().product();
        let mut out = vec![0.0; batch * cout * inner];
        kernels::linear_forward(
            &self.value(x).data,
            &self.value(w).data,
            b.map(|b| self.value(b).data.as_slice()),
            batch,
            cin,
            cout,
            inner,
            &mut out,
        );
        let mut shape = xs;
        shape[1] = cout;
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(Tensor { data: out, shape }, Op::Linear { x, w, b }, &parents))
    }

    /// `out[b, c, ...] = scale[c] * x[b, c, ...] + bias[c]`.
    pub fn soft_gate(&mut self, x: Var, scale: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let c = xs[1];
        if self.shape(scale) != [c] || self.shape(bias) != [c] {
            return Err(Error::shape("soft gate parameters must have one entry per channel"));
        }
        let inner: usize = xs[2..].iter().product();
        let (sv, bv) = (&self.value(scale).data, &self.value(bias).data);
        let vx = &self.value(x).data;
        let mut data = Vec::with_capacity(vx.len());
        for (row, chunk) in vx.chunks_exact(inner).enumerate() {
            let (a, b) = (sv[row % c], bv[row % c]);
            data.extend(chunk.iter().map(|&v| a * v + b));
        }
        Ok(self.push(
            Tensor { data, shape: xs },
            Op::SoftGate { x, scale, bias },
            &[x, scale, bias],
        ))
    }

    /// Real-input 2D FFT over the last two axes: `[..., nx, ny] -> [..., nx, ny/2+1, 2]`.
    pub fn rfft2(&mut self, x: Var, norm: NormMode) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (planes, nx, ny) = plane_dims(&xs)?;
        let nyr = half_len(ny);
        let mut plan = PlaneFft::new(nx, ny);
        let s = ortho_factor(norm, nx * ny);
        let mut out = vec![0.0; planes * nx * nyr * 2];
        let mut buf = vec![Complex64::default(); nx * nyr];
        for (src, dst) in self
            .value(x)
            .data
            .chunks_exact(nx * ny)
            .zip(out.chunks_exact_mut(nx * nyr * 2))
        {
            plan.rfft(src, &mut buf);
            if s != 1.0 {
                buf.iter_mut().for_each(|z| *z *= s);
            }
            from_complex(&buf, dst);
        }
        let mut shape = xs[..xs.len() - 1].to_vec();
        shape.push(nyr);
        shape.push(2);
        Ok(self.push(Tensor { data: out, shape }, Op::Rfft2 { x, norm }, &[x]))
    }

    /// Inverse of [`Tape::rfft2`] onto `ny` points along the last axis.
    pub fn irfft2(&mut self, x: Var, ny: usize, norm: NormMode) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let n = xs.len();
        if n < 3 || xs[n - 1] != 2 || xs[n - 2] != half_len(ny) {
            return Err(Error::shape(format!(
                "irfft2: spectrum {xs:?} inconsistent with ny = {ny}"
            )));
        }
        let nx = xs[n - 3];
        let nyr = xs[n - 2];
        let planes: usize = xs[..n - 3].iter().product();
        let mut plan = PlaneFft::new(nx, ny);
        let s = 1.0 / ortho_factor(norm, nx * ny);
        let mut out = vec![0.0; planes * nx * ny];
        let mut buf = Vec::with_capacity(nx * nyr);
        for (src, dst) in self
            .value(x)
            .data
            .chunks_exact(nx * nyr * 2)
            .zip(out.chunks_exact_mut(nx * ny))
        {
            to_complex(src, &mut buf);
            plan.irfft(&buf, dst);
            if s != 1.0 {
                dst.iter_mut().for_each(|v| *v *= s);
            }
        }
        let mut shape = xs[..n - 2].to_vec();
        shape.push(ny);
        Ok(self.push(Tensor { data: out, shape }, Op::Irfft2 { x, ny, norm }, &[x]))
    }

    /// Per-mode complex channel contraction,
    /// `out[b, o, .., m] = sum_i w[i, o, m] * x[b, i, .., m]`, on the
    /// retained modes only; all other modes of the output are zero.
    pub fn mode_contract(&mut self, x: Var, w: Var, modes: Rc<ModeSelection>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let n = xs.len();
        if n < 5 || xs[n - 1] != 2 || xs[n - 3] != modes.nx() || xs[n - 2] != modes.nyr() {
            return Err(Error::shape(format!(
                "mode_contract: spectrum {xs:?} does not match the {}x{} grid",
                modes.nx(),
                modes.ny()
            )));
        }
        if ws.len() != 5 || ws[0] != xs[1] || ws[2] != modes.kx().len() || ws[3] != modes.kyr() || ws[4] != 2 {
            return Err(Error::shape(format!(
                "mode_contract: weight {ws:?} incompatible with input {xs:?}"
            )));
        }
        let (batch, cin, cout) = (xs[0], xs[1], ws[1]);
        let groups: usize = xs[2..n - 3].iter().product();
        let plane = modes.nx() * modes.nyr() * 2;
        let offs = kernels::mode_offsets(modes.kx(), modes.nyr(), modes.kyr());
        let m = offs.len();
        let xp = kernels::pack_spectrum(&self.value(x).data, batch, cin, groups, plane, &offs);
        let wp = kernels::pack_weights(&self.value(w).data, cin, cout, m, false);
        let len = batch * groups * m * cout;
        let mut yp = kernels::Packed { re: vec![0.0; len], im: vec![0.0; len] };
        kernels::modal_matvec(&wp, &xp, &mut yp, cin, cout, m, false);
        let out = kernels::unpack_spectrum(&yp, batch, cout, groups, plane, &offs);
        let mut shape = xs;
        shape[1] = cout;
        Ok(self.push(Tensor { data: out, shape }, Op::ModeContract { x, w, modes }, &[x, w]))
    }

    pub fn avg_pool(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (planes, nx, ny) = plane_dims(&xs)?;
        crate::tensor_fft::check_pool(nx, ny, kernel, stride)?;
        let ox = resample::pooled_len(nx, kernel, stride);
        let oy = resample::pooled_len(ny, kernel, stride);
        let mut out = vec![0.0; planes * ox * oy];
        for (src, dst) in self.value(x).data.chunks_exact(nx * ny).zip(out.chunks_exact_mut(ox * oy)) {
            resample::avg_pool_plane(src, nx, ny, kernel, stride, dst);
        }
        let mut shape = xs;
        let n = shape.len();
        shape[n - 2] = ox;
        shape[n - 1] = oy;
        Ok(self.push(Tensor { data: out, shape }, Op::AvgPool { x, kernel, stride }, &[x]))
    }

    pub fn interpolate(&mut self, x: Var, ox: usize, oy: usize, mode: InterpMode) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (planes, nx, ny) = plane_dims(&xs)?;
        if ox < nx || oy < ny {
            return Err(Error::shape("interpolation target smaller than input"));
        }
        let interp = resample::Interp2::new(nx, ny, ox, oy, mode);
        let mut out = vec![0.0; planes * ox * oy];
        for (src, dst) in self.value(x).data.chunks_exact(nx * ny).zip(out.chunks_exact_mut(ox * oy)) {
            interp.apply(src, dst);
        }
        let mut shape = xs;
        let n = shape.len();
        shape[n - 2] = ox;
        shape[n - 1] = oy;
        Ok(self.push(Tensor { data: out, shape }, Op::Interp { x, mode }, &[x]))
    }

    /// `[B, C, nx, ny] -> [B, C, M, p, p]`.
    pub fn extract_patches(&mut self, x: Var, p: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return Err(Error::shape("extract_patches expects [B, C, nx, ny]"));
        }
        let (nx, ny) = (xs[2], xs[3]);
        patching::check_patch(nx, ny, p)?;
        let mut out = vec![0.0; self.value(x).numel()];
        for (src, dst) in self.value(x).data.chunks_exact(nx * ny).zip(out.chunks_exact_mut(nx * ny)) {
            patching::extract_plane(src, nx, ny, p, dst);
        }
        let shape = vec![xs[0], xs[1], (nx / p) * (ny / p), p, p];
        Ok(self.push(Tensor { data: out, shape }, Op::ExtractPatches { x, p }, &[x]))
    }

    /// `[B, C, M, p, p] -> [B, C, nx, ny]`.
    pub fn reassemble(&mut self, x: Var, nx: usize, ny: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 5 || xs[3] != xs[4] {
            return Err(Error::shape("reassemble expects [B, C, M, p, p]"));
        }
        let p = xs[3];
        patching::check_patch(nx, ny, p)?;
        if (nx / p) * (ny / p) != xs[2] {
            return Err(Error::shape("patch count does not tile the target grid"));
        }
        let mut out = vec![0.0; self.value(x).numel()];
        for (src, dst) in self.value(x).data.chunks_exact(nx * ny).zip(out.chunks_exact_mut(nx * ny)) {
            patching::reassemble_plane(src, nx, ny, p, dst);
        }
        let shape = vec![xs[0], xs[1], nx, ny];
        Ok(self.push(Tensor { data: out, shape }, Op::Reassemble { x, p }, &[x]))
    }

    /// `|z|^2` of a complex tensor `[..., 2] -> [...]`.
    pub fn abs_sq(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.last() != Some(&2) {
            return Err(Error::shape("abs_sq expects a trailing complex axis"));
        }
        let data = self
            .value(x)
            .data
            .chunks_exact(2)
            .map(|z| z[0] * z[0] + z[1] * z[1])
            .collect();
        let shape = xs[..xs.len() - 1].to_vec();
        Ok(self.push(Tensor { data, shape }, Op::AbsSq(x), &[x]))
    }

    /// Top-left `hx x hy` window of the last two axes.
    pub fn crop(&mut self, x: Var, hx: usize, hy: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (planes, nx, ny) = plane_dims(&xs)?;
        if hx > nx || hy > ny {
            return Err(Error::shape("crop window larger than input"));
        }
        let mut out = Vec::with_capacity(planes * hx * hy);
        for plane in self.value(x).data.chunks_exact(nx * ny) {
            for r in 0..hx {
                out.extend_from_slice(&plane[r * ny..r * ny + hy]);
            }
        }
        let mut shape = xs;
        let n = shape.len();
        shape[n - 2] = hx;
        shape[n - 1] = hy;
        Ok(self.push(Tensor { data: out, shape }, Op::Crop { x }, &[x]))
    }

    /// Radial sums `[..., nx/2, ny/2] -> [..., M+1]`.
    pub fn bin_aggregate(&mut self, x: Var, spec: Rc<RadialSpec>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (hx, hy) = spec.quadrant();
        let n = xs.len();
        if n < 2 || xs[n - 2] != hx || xs[n - 1] != hy {
            return Err(Error::shape(format!(
                "bin_aggregate: input {xs:?} does not match quadrant {hx}x{hy}"
            )));
        }
        let data = spectra::bin_aggregate(&self.value(x).data, &spec)?;
        let mut shape = xs[..n - 2].to_vec();
        shape.push(spec.n_bins());
        Ok(self.push(Tensor { data, shape }, Op::BinAggregate { x, spec }, &[x]))
    }

    /// Mean over the leading axis.
    pub fn mean_axis0(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(Error::shape("mean_axis0 needs at least two axes"));
        }
        let rest: usize = xs[1..].iter().product();
        let inv = 1.0 / xs[0] as f64;
        let mut out = vec![0.0; rest];
        for row in self.value(x).data.chunks_exact(rest) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|v| *v *= inv);
        Ok(self.push(
            Tensor {
                data: out,
                shape: xs[1..].to_vec(),
            },
            Op::MeanAxis0(x),
            &[x],
        ))
    }

    /// Means of three radius ranges along the last axis: `[..., R] -> [..., 3]`.
    /// Empty ranges yield 0.
    pub fn band_means(&mut self, x: Var, ranges: [(usize, usize); 3]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let r = *xs.last().ok_or_else(|| Error::shape("band_means on a scalar"))?;
        if ranges.iter().any(|&(s, e)| s > e || e > r) {
            return Err(Error::config(format!("band ranges {ranges:?} exceed {r} bins")));
        }
        let mut out = Vec::with_capacity(self.value(x).numel() / r * 3);
        for row in self.value(x).data.chunks_exact(r) {
            for &(s, e) in &ranges {
                out.push(if e > s {
                    row[s..e].iter().sum::<f64>() / (e - s) as f64
                } else {
                    0.0
                });
            }
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = 3;
        Ok(self.push(Tensor { data: out, shape }, Op::BandMeans { x, ranges }, &[x]))
    }

    pub(super) fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                if self.wants(*b) {
                    self.accumulate(grads, *b, g.iter().map(|v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                if self.wants(*a) {
                    self.accumulate(grads, *a, g.iter().zip(vb).map(|(g, y)| g * y).collect());
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, g.iter().zip(va).map(|(g, x)| g * x).collect());
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.iter().map(|v| v * s).collect()),
            Op::Square(a) => {
                let va = &self.value(*a).data;
                self.accumulate(grads, *a, g.iter().zip(va).map(|(g, x)| 2.0 * x * g).collect());
            }
            Op::Sqrt(a) => {
                let y = &node.value.data;
                let contrib = g
                    .iter()
                    .zip(y)
                    .map(|(g, &y)| if y > 0.0 { 0.5 * g / y } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, contrib);
            }
            Op::Gelu { x, cdf } => {
                let vx = &self.value(*x).data;
                let contrib = g
                    .iter()
                    .zip(vx)
                    .zip(cdf)
                    .map(|((g, &x), &c)| g * kernels::gelu_grad(x, c))
                    .collect();
                self.accumulate(grads, *x, contrib);
            }
            Op::SumAll(x) => {
                let n = self.value(*x).numel();
                self.accumulate(grads, *x, vec![g[0]; n]);
            }
            Op::MeanAll(x) => {
                let n = self.value(*x).numel();
                self.accumulate(grads, *x, vec![g[0] / n as f64; n]);
            }
            Op::MaxAll { x, argmax } => {
                let mut v = vec![0.0; self.value(*x).numel()];
                v[*argmax] = g[0];
                self.accumulate(grads, *x, v);
            }
            Op::WeightedSum { x, weights } => {
                self.accumulate(grads, *x, weights.iter().map(|w| w * g[0]).collect());
            }
            Op::Linear { x, w, b } => self.linear_backward(*x, *w, *b, g, grads),
            Op::SoftGate { x, scale, bias } => {
                let xs = self.shape(*x);
                let c = xs[1];
                let inner: usize = xs[2..].iter().product();
                let vx = &self.value(*x).data;
                let sv = &self.value(*scale).data;
                if self.wants(*x) {
                    let mut contrib = Vec::with_capacity(g.len());
                    for (row, ch) in g.chunks_exact(inner).enumerate() {
                        let a = sv[row % c];
                        contrib.extend(ch.iter().map(|v| v * a));
                    }
                    self.accumulate(grads, *x, contrib);
                }
                let mut gs = vec![0.0; c];
                let mut gb = vec![0.0; c];
                for (row, (gc, xc)) in g.chunks_exact(inner).zip(vx.chunks_exact(inner)).enumerate() {
                    gs[row % c] += dot(gc, xc);
                    gb[row % c] += kernels::sum(gc);
                }
                self.accumulate(grads, *scale, gs);
                self.accumulate(grads, *bias, gb);
            }
            Op::Rfft2 { x, norm } => {
                let xs = self.shape(*x);
                let (_, nx, ny) = plane_dims(xs)?;
                let nyr = half_len(ny);
                let s = ortho_factor(*norm, nx * ny);
                let mut plan = PlaneFft::new(nx, ny);
                let mut buf = Vec::with_capacity(nx * nyr);
                let mut out = vec![0.0; self.value(*x).numel()];
                for (src, dst) in g.chunks_exact(nx * nyr * 2).zip(out.chunks_exact_mut(nx * ny)) {
                    to_complex(src, &mut buf);
                    plan.rfft_adjoint(&buf, dst);
                    if s != 1.0 {
                        dst.iter_mut().for_each(|v| *v *= s);
                    }
                }
                self.accumulate(grads, *x, out);
            }
            Op::Irfft2 { x, ny, norm } => {
                let xs = self.shape(*x);
                let n = xs.len();
                let (nx, nyr) = (xs[n - 3], xs[n - 2]);
                let s = 1.0 / ortho_factor(*norm, nx * ny);
                let mut plan = PlaneFft::new(nx, *ny);
                let mut buf = vec![Complex64::default(); nx * nyr];
                let mut out = vec![0.0; self.value(*x).numel()];
                for (src, dst) in g.chunks_exact(nx * ny).zip(out.chunks_exact_mut(nx * nyr * 2)) {
                    plan.irfft_adjoint(src, &mut buf);
                    if s != 1.0 {
                        buf.iter_mut().for_each(|z| *z *= s);
                    }
                    from_complex(&buf, dst);
                }
                self.accumulate(grads, *x, out);
            }
            Op::ModeContract { x, w, modes } => self.mode_contract_backward(*x, *w, modes, g, grads),
            Op::AvgPool { x, kernel, stride } => {
                let (_, nx, ny) = plane_dims(self.shape(*x))?;
                let (_, ox, oy) = plane_dims(&node.value.shape)?;
                let mut out = vec![0.0; self.value(*x).numel()];
                for (src, dst) in g.chunks_exact(ox * oy).zip(out.chunks_exact_mut(nx * ny)) {
                    resample::avg_pool_plane_adjoint(src, nx, ny, *kernel, *stride, dst);
                }
                self.accumulate(grads, *x, out);
            }
            Op::Interp { x, mode } => {
                let (_, nx, ny) = plane_dims(self.shape(*x))?;
                let (_, ox, oy) = plane_dims(&node.value.shape)?;
                let interp = resample::Interp2::new(nx, ny, ox, oy, *mode);
                let mut out = vec![0.0; self.value(*x).numel()];
                for (src, dst) in g.chunks_exact(ox * oy).zip(out.chunks_exact_mut(nx * ny)) {
                    interp.adjoint(src, dst);
                }
                self.accumulate(grads, *x, out);
            }
            Op::ExtractPatches { x, p } => {
                let xs = self.shape(*x);
                let (nx, ny) = (xs[2], xs[3]);
                let mut out = vec![0.0; g.len()];
                for (src, dst) in g.chunks_exact(nx * ny).zip(out.chunks_exact_mut(nx * ny)) {
                    patching::reassemble_plane(src, nx, ny, *p, dst);
                }
                self.accumulate(grads, *x, out);
            }
            Op::Reassemble { x, p } => {
                let (nx, ny) = (node.value.shape[2], node.value.shape[3]);
                let mut out = vec![0.0; g.len()];
                for (src, dst) in g.chunks_exact(nx * ny).zip(out.chunks_exact_mut(nx * ny)) {
                    patching::extract_plane(src, nx, ny, *p, dst);
                }
                self.accumulate(grads, *x, out);
            }
            Op::AbsSq(x) => {
                let vx = &self.value(*x).data;
                let mut out = vec![0.0; vx.len()];
                for ((o, z), gv) in out.chunks_exact_mut(2).zip(vx.chunks_exact(2)).zip(g) {
                    o[0] = 2.0 * z[0] * gv;
                    o[1] = 2.0 * z[1] * gv;
                }
                self.accumulate(grads, *x, out);
            }
            Op::Crop { x } => {
                let (_, nx, ny) = plane_dims(self.shape(*x))?;
                let (_, hx, hy) = plane_dims(&node.value.shape)?;
                let mut out = vec![0.0; self.value(*x).numel()];
                for (src, dst) in g.chunks_exact(hx * hy).zip(out.chunks_exact_mut(nx * ny)) {
                    for r in 0..hx {
                        dst[r * ny..r * ny + hy].copy_from_slice(&src[r * hy..(r + 1) * hy]);
                    }
                }
                self.accumulate(grads, *x, out);
            }
            Op::BinAggregate { x, spec } => {
                let nb = spec.n_bins();
                let q = spec.bin_map().len();
                let mut out = Vec::with_capacity(self.value(*x).numel());
                for row in g.chunks_exact(nb) {
                    out.extend(spec.bin_map().iter().map(|&r| row[r]));
                }
                debug_assert_eq!(out.len() % q, 0);
                self.accumulate(grads, *x, out);
            }
            Op::MeanAxis0(x) => {
                let b = self.shape(*x)[0];
                let inv = 1.0 / b as f64;
                let mut out = Vec::with_capacity(g.len() * b);
                for _ in 0..b {
                    out.extend(g.iter().map(|v| v * inv));
                }
                self.accumulate(grads, *x, out);
            }
            Op::BandMeans { x, ranges } => {
                let r = *self.shape(*x).last().unwrap();
                let mut out = vec![0.0; self.value(*x).numel()];
                for (dst, gb) in out.chunks_exact_mut(r).zip(g.chunks_exact(3)) {
                    for (&(s, e), gv) in ranges.iter().zip(gb) {
                        if e > s {
                            let share = gv / (e - s) as f64;
                            dst[s..e].iter_mut().for_each(|v| *v += share);
                        }
                    }
                }
                self.accumulate(grads, *x, out);
            }
            Op::NonDiff { name, .. } => {
                if g.iter().any(|&v| v != 0.0) {
                    return Err(Error::UnsupportedOp((*name).to_string()));
                }
            }
        }
        Ok(())
    }

    fn linear_backward(&self, x: Var, w: Var, b: Option<Var>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let xs = self.shape(x);
        let (batch, cin) = (xs[0], xs[1]);
        let cout = self.shape(w)[0];
        let inner: usize = xs[2..].iter().product();
        let vx = &self.value(x).data;
        let vw = &self.value(w).data;
        if self.wants(x) {
            let mut gx = vec![0.0; vx.len()];
            kernels::linear_input_grad(g, vw, batch, cin, cout, inner, &mut gx);
            self.accumulate(grads, x, gx);
        }
        if self.wants(w) {
            let mut gw = vec![0.0; vw.len()];
            for bi in 0..batch {
                for o in 0..cout {
                    let go = &g[(bi * cout + o) * inner..][..inner];
                    for i in 0..cin {
                        gw[o * cin + i] += dot(go, &vx[(bi * cin + i) * inner..][..inner]);
                    }
                }
            }
            self.accumulate(grads, w, gw);
        }
        if let Some(b) = b {
            if self.wants(b) {
                let mut gb = vec![0.0; cout];
                for bi in 0..batch {
                    for (o, gbo) in gb.iter_mut().enumerate() {
                        *gbo += kernels::sum(&g[(bi * cout + o) * inner..][..inner]);
                    }
                }
                self.accumulate(grads, b, gb);
            }
        }
    }

    fn mode_contract_backward(
        &self,
        x: Var,
        w: Var,
        modes: &ModeSelection,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let xs = self.shape(x);
        let ws = self.shape(w);
        let n = xs.len();
        let (batch, cin, cout) = (xs[0], xs[1], ws[1]);
        let groups: usize = xs[2..n - 3].iter().product();
        let plane = modes.nx() * modes.nyr() * 2;
        let offs = kernels::mode_offsets(modes.kx(), modes.nyr(), modes.kyr());
        let m = offs.len();
        let want_x = self.wants(x);
        let want_w = self.wants(w);
        let gp = kernels::pack_spectrum(g, batch, cout, groups, plane, &offs);
        let mut gx = Vec::new();
        let mut gw = Vec::new();
        if want_x {
            let wt = kernels::pack_weights(&self.value(w).data, cin, cout, m, true);
            let len = batch * groups * m * cin;
            let mut xg = kernels::Packed { re: vec![0.0; len], im: vec![0.0; len] };
            kernels::modal_matvec(&wt, &gp, &mut xg, cout, cin, m, true);
            gx = kernels::unpack_spectrum(&xg, batch, cin, groups, plane, &offs);
        }
        if want_w {
            let xp = kernels::pack_spectrum(&self.value(x).data, batch, cin, groups, plane, &offs);
            let len = cin * cout * m;
            let mut wg = kernels::Packed { re: vec![0.0; len], im: vec![0.0; len] };
            kernels::modal_outer_acc(&xp, &gp, &mut wg, cin, cout, m);
            gw = kernels::unpack_weights(&wg, cin, cout, m);
        }
        if want_x {
            self.accumulate(grads, x, gx);
        }
        if want_w {
            self.accumulate(grads, w, gw);
        }
    }
}
