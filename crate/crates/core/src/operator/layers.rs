use std::rc::Rc;

use rayon::prelude::*;

use super::{LayerIdx, LinearIdx, LogloModel, MlpIdx, ModeSelection};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::patching::PatchSet;
use crate::tensor_fft::{Field, InterpMode, NormMode};

/// Pointwise channel map: `weight` is `[c_out, c_in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWeights {
    pub weight: Tensor,
    pub bias: Option<Vec<f64>>,
}

impl LinearWeights {
    pub fn new(weight: Vec<f64>, c_out: usize, c_in: usize, bias: Option<Vec<f64>>) -> Result<Self> {
        Ok(Self {
            weight: Tensor::new(weight, vec![c_out, c_in])?,
            bias,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMlpWeights {
    pub fc1: LinearWeights,
    pub fc2: LinearWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalWeights {
    pub spectral: Tensor,
    pub conv: LinearWeights,
    pub gate_scale: Vec<f64>,
    pub gate_bias: Vec<f64>,
    pub mlp: ChannelMlpWeights,
}

/// Weights of one LOGLO layer. Without `local` and `hfp_mlp` this is the
/// plain FNO layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub spectral: Tensor,
    pub global_modes: (usize, usize),
    pub conv: LinearWeights,
    pub gate_scale: Vec<f64>,
    pub gate_bias: Vec<f64>,
    pub mlp: ChannelMlpWeights,
    pub local: Option<LocalWeights>,
    pub hfp_mlp: Option<ChannelMlpWeights>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LinearVars {
    pub w: Var,
    pub b: Option<Var>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MlpVars {
    pub l1: LinearVars,
    pub l2: LinearVars,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BranchVars {
    pub spectral: Var,
    pub conv: LinearVars,
    pub gate: (Var, Var),
    pub mlp: MlpVars,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerVars {
    pub global: BranchVars,
    pub local: Option<BranchVars>,
    pub hfp: Option<MlpVars>,
}

/// Grid-dependent pieces shared by all layers of a forward pass.
pub(crate) struct LayerCtx {
    pub global: Rc<ModeSelection>,
    pub local: Option<(Rc<ModeSelection>, usize)>,
    pub nx: usize,
    pub ny: usize,
}

fn field_const(t: &mut Tape, f: &Field) -> Var {
    t.constant(Tensor {
        data: f.data().to_vec(),
        shape: f.shape().to_vec(),
    })
}

fn patch_const(t: &mut Tape, ps: &PatchSet) -> Var {
    t.constant(Tensor {
        data: ps.data().to_vec(),
        shape: ps.shape().to_vec(),
    })
}

fn to_field(t: &Tape, v: Var, lengths: (f64, f64)) -> Result<Field> {
    let s = t.shape(v);
    if s.len() != 4 {
        return Err(Error::shape(format!("expected a 4D result, got {s:?}")));
    }
    Ok(Field::new(t.value(v).data.clone(), [s[0], s[1], s[2], s[3]])?.with_lengths(lengths.0, lengths.1))
}

fn to_patches(t: &Tape, v: Var, like: &PatchSet) -> Result<PatchSet> {
    let s = t.shape(v);
    PatchSet::new(
        t.value(v).data.clone(),
        s[0],
        s[1],
        like.patch_size(),
        like.grid(),
        like.origin_shape(),
    )
}

fn linear_const(t: &mut Tape, w: &LinearWeights) -> Result<LinearVars> {
    let wv = t.constant(w.weight.clone());
    let b = match &w.bias {
        Some(b) => Some(t.constant(Tensor::new(b.clone(), vec![b.len()])?)),
        None => None,
    };
    Ok(LinearVars { w: wv, b })
}

fn mlp_const(t: &mut Tape, m: &ChannelMlpWeights) -> Result<MlpVars> {
    Ok(MlpVars {
        l1: linear_const(t, &m.fc1)?,
        l2: linear_const(t, &m.fc2)?,
    })
}

fn gate_const(t: &mut Tape, scale: &[f64], bias: &[f64]) -> Result<(Var, Var)> {
    Ok((
        t.constant(Tensor::new(scale.to_vec(), vec![scale.len()])?),
        t.constant(Tensor::new(bias.to_vec(), vec![bias.len()])?),
    ))
}

pub(crate) fn linear_t(t: &mut Tape, x: Var, l: LinearVars) -> Result<Var> {
    t.linear(x, l.w, l.b)
}

pub(crate) fn mlp_t(t: &mut Tape, x: Var, m: MlpVars) -> Result<Var> {
    let h = linear_t(t, x, m.l1)?;
    let h = t.gelu(h);
    linear_t(t, h, m.l2)
}

/// rfft2 -> per-mode channel contraction -> irfft2, orthonormal scaling.
pub(crate) fn spectral_t(t: &mut Tape, x: Var, w: Var, modes: &Rc<ModeSelection>) -> Result<Var> {
    let s = t.rfft2(x, NormMode::Ortho)?;
    let s = t.mode_contract(s, w, Rc::clone(modes))?;
    t.irfft2(s, modes.ny(), NormMode::Ortho)
}

pub(crate) fn hfp_t(t: &mut Tape, x: Var, kernel: usize, stride: usize, mode: InterpMode) -> Result<Var> {
    let s = t.shape(x).to_vec();
    let (nx, ny) = (s[s.len() - 2], s[s.len() - 1]);
    let pooled = t.avg_pool(x, kernel, stride)?;
    let blurred = t.interpolate(pooled, nx, ny, mode)?;
    t.sub(x, blurred)
}

/// `sigma(K(z) + W z)`.
fn branch_mix(t: &mut Tape, z: Var, b: &BranchVars, modes: &Rc<ModeSelection>) -> Result<Var> {
    let k = spectral_t(t, z, b.spectral, modes)?;
    let c = linear_t(t, z, b.conv)?;
    let s = t.add(k, c)?;
    Ok(t.gelu(s))
}

/// `MLP(y) + gate(z)`.
fn branch_out(t: &mut Tape, y: Var, z: Var, b: &BranchVars) -> Result<Var> {
    let m = mlp_t(t, y, b.mlp)?;
    let g = t.soft_gate(z, b.gate.0, b.gate.1)?;
    t.add(m, g)
}

pub(crate) fn loglo_layer_t(
    t: &mut Tape,
    z: Var,
    zhat: Option<Var>,
    zprime: Option<Var>,
    lv: &LayerVars,
    ctx: &LayerCtx,
    is_last: bool,
) -> Result<(Var, Option<Var>, Option<Var>)> {
    let y_g = branch_mix(t, z, &lv.global, &ctx.global)?;
    let mut fused = branch_out(t, y_g, z, &lv.global)?;
    if let Some(local) = &lv.local {
        let (Some(zhat), Some((modes, _))) = (zhat, &ctx.local) else {
            return Err(Error::shape("local branch needs patched input"));
        };
        let y_l = branch_mix(t, zhat, local, modes)?;
        let out_l = branch_out(t, y_l, zhat, local)?;
        let out_l = t.reassemble(out_l, ctx.nx, ctx.ny)?;
        fused = t.add(fused, out_l)?;
    }
    let mut h_next = None;
    if let Some(hfp) = &lv.hfp {
        let zprime = zprime.ok_or_else(|| Error::shape("high-pass branch needs its input stream"))?;
        let h = mlp_t(t, zprime, *hfp)?;
        fused = t.add(fused, h)?;
        h_next = Some(h);
    }
    let z_next = if is_last { fused } else { t.gelu(fused) };
    let zhat_next = match &ctx.local {
        Some((_, p)) if lv.local.is_some() => Some(t.extract_patches(z_next, *p)?),
        _ => None,
    };
    Ok((z_next, zhat_next, h_next))
}

/// Appends normalised `x` and `y` coordinate channels.
pub(crate) fn with_coords(f: &Field) -> Result<Field> {
    let [b, c, nx, ny] = f.shape();
    let (lx, ly) = f.lengths();
    Ok(Field::from_fn([b, c + 2, nx, ny], |ib, ic, x, y| {
        if ic < c {
            f.get(ib, ic, x, y)
        } else if ic == c {
            x as f64 / nx as f64
        } else {
            y as f64 / ny as f64
        }
    })?
    .with_lengths(lx, ly))
}

impl LogloModel {
    fn lin(vars: &[Var], l: LinearIdx) -> LinearVars {
        LinearVars {
            w: vars[l.w],
            b: Some(vars[l.b]),
        }
    }

    fn mlp(vars: &[Var], m: MlpIdx) -> MlpVars {
        MlpVars {
            l1: Self::lin(vars, m.l1),
            l2: Self::lin(vars, m.l2),
        }
    }

    fn layer_vars(vars: &[Var], l: &LayerIdx) -> LayerVars {
        LayerVars {
            global: BranchVars {
                spectral: vars[l.spectral],
                conv: Self::lin(vars, l.conv),
                gate: (vars[l.gate.scale], vars[l.gate.bias]),
                mlp: Self::mlp(vars, l.mlp),
            },
            local: l.local.map(|lo| BranchVars {
                spectral: vars[lo.spectral],
                conv: Self::lin(vars, lo.conv),
                gate: (vars[lo.gate.scale], vars[lo.gate.bias]),
                mlp: Self::mlp(vars, lo.mlp),
            }),
            hfp: l.hfp_mlp.map(|m| Self::mlp(vars, m)),
        }
    }

    fn check_input(&self, x: &Field) -> Result<()> {
        if x.channels() != self.config.in_channels {
            return Err(Error::shape(format!(
                "model expects {} input channels, got {}",
                self.config.in_channels,
                x.channels()
            )));
        }
        self.config.check_grid(x.nx(), x.ny())
    }

    /// Records the full forward pass on `tape`; `vars` come from
    /// [`LogloModel::place`]. Returns the `[b, out_channels, nx, ny]` output.
    pub fn forward_graph(&self, tape: &mut Tape, vars: &[Var], x: &Field) -> Result<Var> {
        self.forward_graph_noisy(tape, vars, x, None)
    }

    /// As [`LogloModel::forward_graph`], with `noise` added to the input of
    /// the global and patch streams. The high-pass stream sees the clean input.
    pub fn forward_graph_noisy(&self, tape: &mut Tape, vars: &[Var], x: &Field, noise: Option<&Field>) -> Result<Var> {
        self.check_input(x)?;
        let cfg = &self.config;
        let (nx, ny) = (x.nx(), x.ny());
        let prep = |f: &Field| if cfg.append_coord_grid { with_coords(f) } else { Ok(f.clone()) };
        let clean = field_const(tape, &prep(x)?);
        let xv = match noise {
            Some(n) => field_const(tape, &prep(&x.axpby(1.0, n, 1.0)?)?),
            None => clean,
        };
        let lift = Self::lin(vars, self.layout.lift);
        let ctx = LayerCtx {
            global: Rc::new(ModeSelection::new(nx, ny, cfg.global_modes.0, cfg.global_modes.1)?),
            local: if cfg.use_local {
                Some((Rc::new(ModeSelection::full(cfg.patch_size)?), cfg.patch_size))
            } else {
                None
            },
            nx,
            ny,
        };

        let mut z = linear_t(tape, xv, lift)?;
        let mut zhat = if cfg.use_local {
            let patches = tape.extract_patches(xv, cfg.patch_size)?;
            Some(linear_t(tape, patches, lift)?)
        } else {
            None
        };
        let mut zprime = if cfg.use_hfp {
            let xh = hfp_t(tape, clean, cfg.hfp_pool, cfg.hfp_pool, cfg.hfp_interp)?;
            Some(linear_t(tape, xh, lift)?)
        } else {
            None
        };
        let n = self.layout.layers.len();
        for (l, idx) in self.layout.layers.iter().enumerate() {
            let lv = Self::layer_vars(vars, idx);
            (z, zhat, zprime) = loglo_layer_t(tape, z, zhat, zprime, &lv, &ctx, l + 1 == n)?;
        }
        let h = linear_t(tape, z, Self::lin(vars, self.layout.proj1))?;
        let h = tape.gelu(h);
        linear_t(tape, h, Self::lin(vars, self.layout.proj2))
    }

    /// Evaluates the model; batch items run independently (in parallel when
    /// threads are available) and are concatenated in order.
    pub fn forward(&self, x: &Field) -> Result<Field> {
        let (data, shape) = self.forward_values(x)?;
        Ok(Field::new(data, shape)?.with_lengths(x.lengths().0, x.lengths().1))
    }

    /// Like [`Self::forward`] but returns the raw output values, which may
    /// be non-finite.
    pub(crate) fn forward_values(&self, x: &Field) -> Result<(Vec<f64>, [usize; 4])> {
        self.check_input(x)?;
        let outs: Vec<Vec<f64>> = (0..x.batch())
            .into_par_iter()
            .map(|b| {
                let xb = x.batch_range(b, b + 1)?;
                let mut tape = Tape::new();
                let vars = self.place(&mut tape, false);
                let out = self.forward_graph(&mut tape, &vars, &xb)?;
                Ok(tape.value(out).data.clone())
            })
            .collect::<Result<_>>()?;
        let shape = [x.batch(), self.config.out_channels, x.nx(), x.ny()];
        Ok((outs.concat(), shape))
    }

    fn linear_weights(&self, l: LinearIdx) -> LinearWeights {
        LinearWeights {
            weight: self.params[l.w].tensor.clone(),
            bias: Some(self.params[l.b].tensor.data.clone()),
        }
    }

    fn mlp_weights(&self, m: MlpIdx) -> ChannelMlpWeights {
        ChannelMlpWeights {
            fc1: self.linear_weights(m.l1),
            fc2: self.linear_weights(m.l2),
        }
    }

    pub fn lift_weights(&self) -> LinearWeights {
        self.linear_weights(self.layout.lift)
    }

    pub fn projection_weights(&self) -> (LinearWeights, LinearWeights) {
        (
            self.linear_weights(self.layout.proj1),
            self.linear_weights(self.layout.proj2),
        )
    }

    pub fn layer_weights(&self, layer: usize) -> Option<LayerWeights> {
        let l = self.layout.layers.get(layer)?;
        let p = |i: usize| self.params[i].tensor.clone();
        Some(LayerWeights {
            spectral: p(l.spectral),
            global_modes: self.config.global_modes,
            conv: self.linear_weights(l.conv),
            gate_scale: p(l.gate.scale).data,
            gate_bias: p(l.gate.bias).data,
            mlp: self.mlp_weights(l.mlp),
            local: l.local.map(|lo| LocalWeights {
                spectral: p(lo.spectral),
                conv: self.linear_weights(lo.conv),
                gate_scale: p(lo.gate.scale).data,
                gate_bias: p(lo.gate.bias).data,
                mlp: self.mlp_weights(lo.mlp),
            }),
            hfp_mlp: l.hfp_mlp.map(|m| self.mlp_weights(m)),
        })
    }
}

/// Pointwise lifting of a field to `weights.weight.shape[0]` channels.
pub fn lift(f: &Field, weights: &LinearWeights) -> Result<Field> {
    pointwise_conv(f, weights)
}

/// Lifting applied to every patch with the same weights.
pub fn lift_patches(ps: &PatchSet, weights: &LinearWeights) -> Result<PatchSet> {
    let mut t = Tape::new();
    let x = patch_const(&mut t, ps);
    let l = linear_const(&mut t, weights)?;
    let y = linear_t(&mut t, x, l)?;
    to_patches(&t, y, ps)
}

pub fn pointwise_conv(z: &Field, weights: &LinearWeights) -> Result<Field> {
    let mut t = Tape::new();
    let x = field_const(&mut t, z);
    let l = linear_const(&mut t, weights)?;
    let y = linear_t(&mut t, x, l)?;
    to_field(&t, y, z.lengths())
}

pub fn channel_mlp(z: &Field, weights: &ChannelMlpWeights) -> Result<Field> {
    let mut t = Tape::new();
    let x = field_const(&mut t, z);
    let m = mlp_const(&mut t, weights)?;
    let y = mlp_t(&mut t, x, m)?;
    to_field(&t, y, z.lengths())
}

pub fn soft_gating(z: &Field, scale: &[f64], bias: &[f64]) -> Result<Field> {
    let mut t = Tape::new();
    let x = field_const(&mut t, z);
    let (s, b) = gate_const(&mut t, scale, bias)?;
    let y = t.soft_gate(x, s, b)?;
    to_field(&t, y, z.lengths())
}

/// Global spectral convolution keeping `modes = (Kx, Ky)`; `weights` has
/// shape `[c_in, c_out, Kx, Ky/2 + 1, 2]`.
pub fn spectral_conv(z: &Field, weights: &Tensor, modes: (usize, usize)) -> Result<Field> {
    let sel = Rc::new(ModeSelection::new(z.nx(), z.ny(), modes.0, modes.1)?);
    let mut t = Tape::new();
    let x = field_const(&mut t, z);
    let w = t.constant(weights.clone());
    let y = spectral_t(&mut t, x, w, &sel)?;
    to_field(&t, y, z.lengths())
}

/// Spectral convolution on each patch separately, keeping every patch mode.
pub fn local_spectral_conv(ps: &PatchSet, weights: &Tensor) -> Result<PatchSet> {
    let sel = Rc::new(ModeSelection::full(ps.patch_size())?);
    let mut t = Tape::new();
    let x = patch_const(&mut t, ps);
    let w = t.constant(weights.clone());
    let y = spectral_t(&mut t, x, w, &sel)?;
    to_patches(&t, y, ps)
}

/// High-frequency residual `x - upsample(avg_pool(x))` with
/// nearest-neighbour upsampling.
pub fn hfp_extract(x: &Field, kernel: usize, stride: usize) -> Result<Field> {
    hfp_extract_with(x, kernel, stride, InterpMode::Nearest)
}

pub fn hfp_extract_with(x: &Field, kernel: usize, stride: usize, mode: InterpMode) -> Result<Field> {
    let mut t = Tape::new();
    let v = field_const(&mut t, x);
    let y = hfp_t(&mut t, v, kernel, stride, mode)?;
    to_field(&t, y, x.lengths())
}

/// One LOGLO layer on its three input streams. Returns the next full-grid
/// state, its patches (when the local branch exists) and the high-pass
/// stream (when it exists).
pub fn loglo_layer(
    z: &Field,
    zhat: Option<&PatchSet>,
    zprime: Option<&Field>,
    weights: &LayerWeights,
    is_last: bool,
) -> Result<(Field, Option<PatchSet>, Option<Field>)> {
    let (nx, ny) = (z.nx(), z.ny());
    let mut t = Tape::new();
    let zv = field_const(&mut t, z);
    let zhat_v = zhat.map(|p| patch_const(&mut t, p));
    let zprime_v = zprime.map(|f| field_const(&mut t, f));
    let branch = |t: &mut Tape, spectral: &Tensor, conv, scale: &[f64], bias: &[f64], mlp| -> Result<BranchVars> {
        Ok(BranchVars {
            spectral: t.constant(spectral.clone()),
            conv: linear_const(t, conv)?,
            gate: gate_const(t, scale, bias)?,
            mlp: mlp_const(t, mlp)?,
        })
    };
    let global = branch(
        &mut t,
        &weights.spectral,
        &weights.conv,
        &weights.gate_scale,
        &weights.gate_bias,
        &weights.mlp,
    )?;
    let local = match &weights.local {
        Some(lw) => Some(branch(&mut t, &lw.spectral, &lw.conv, &lw.gate_scale, &lw.gate_bias, &lw.mlp)?),
        None => None,
    };
    let hfp = match &weights.hfp_mlp {
        Some(m) => Some(mlp_const(&mut t, m)?),
        None => None,
    };
    let ctx = LayerCtx {
        global: Rc::new(ModeSelection::new(nx, ny, weights.global_modes.0, weights.global_modes.1)?),
        local: match (&weights.local, zhat) {
            (Some(_), Some(p)) => Some((Rc::new(ModeSelection::full(p.patch_size())?), p.patch_size())),
            (Some(_), None) => return Err(Error::shape("local branch needs patched input")),
            _ => None,
        },
        nx,
        ny,
    };
    let lv = LayerVars { global, local, hfp };
    let (zn, zhn, zpn) = loglo_layer_t(&mut t, zv, zhat_v, zprime_v, &lv, &ctx, is_last)?;
    let z_next = to_field(&t, zn, z.lengths())?;
    let zhat_next = match (zhn, zhat) {
        (Some(v), Some(like)) => Some(to_patches(&t, v, like)?),
        _ => None,
    };
    let zprime_next = zpn.map(|v| to_field(&t, v, z.lengths())).transpose()?;
    Ok((z_next, zhat_next, zprime_next))
}
