use std::rc::Rc;

use super::layers::{linear_t, mlp_t, spectral_t, with_coords, LinearVars, MlpVars};
use super::{ChannelMlpWeights, LinearWeights, LogloModel, ModeSelection};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::tensor_fft::Field;

#[derive(Debug, Clone, PartialEq)]
pub struct FnoLayer {
    pub spectral: Tensor,
    pub conv: LinearWeights,
    pub gate_scale: Vec<f64>,
    pub gate_bias: Vec<f64>,
    pub mlp: ChannelMlpWeights,
}

/// The plain Fourier neural operator: lift, `L` layers of
/// `sigma(MLP(sigma(K z + W z)) + gate(z))`, projection.
#[derive(Debug, Clone, PartialEq)]
pub struct FnoStack {
    pub lift: LinearWeights,
    pub layers: Vec<FnoLayer>,
    pub proj: (LinearWeights, LinearWeights),
    pub modes: (usize, usize),
    pub append_coord_grid: bool,
}

fn put_linear(t: &mut Tape, w: &LinearWeights) -> LinearVars {
    LinearVars {
        w: t.constant(w.weight.clone()),
        b: w.bias.as_ref().map(|b| {
            t.constant(Tensor {
                data: b.clone(),
                shape: vec![b.len()],
            })
        }),
    }
}

fn put_mlp(t: &mut Tape, m: &ChannelMlpWeights) -> MlpVars {
    MlpVars {
        l1: put_linear(t, &m.fc1),
        l2: put_linear(t, &m.fc2),
    }
}

fn put_vec(t: &mut Tape, v: &[f64]) -> Var {
    t.constant(Tensor {
        data: v.to_vec(),
        shape: vec![v.len()],
    })
}

impl FnoStack {
    /// Copies the global-branch weights of `model`.
    pub fn from_model(model: &LogloModel) -> Self {
        let layers = (0..model.config().n_layers)
            .map(|l| {
                let w = model.layer_weights(l).expect("layer index in range");
                FnoLayer {
                    spectral: w.spectral,
                    conv: w.conv,
                    gate_scale: w.gate_scale,
                    gate_bias: w.gate_bias,
                    mlp: w.mlp,
                }
            })
            .collect();
        Self {
            lift: model.lift_weights(),
            layers,
            proj: model.projection_weights(),
            modes: model.config().global_modes,
            append_coord_grid: model.config().append_coord_grid,
        }
    }

    pub fn forward(&self, x: &Field) -> Result<Field> {
        let input = if self.append_coord_grid { with_coords(x)? } else { x.clone() };
        let (nx, ny) = (x.nx(), x.ny());
        let modes = Rc::new(ModeSelection::new(nx, ny, self.modes.0, self.modes.1)?);
        let mut t = Tape::new();
        let xv = t.constant(Tensor {
            data: input.data().to_vec(),
            shape: input.shape().to_vec(),
        });
        let lift = put_linear(&mut t, &self.lift);
        let mut z = linear_t(&mut t, xv, lift)?;
        for (l, layer) in self.layers.iter().enumerate() {
            let w = t.constant(layer.spectral.clone());
            let conv = put_linear(&mut t, &layer.conv);
            let scale = put_vec(&mut t, &layer.gate_scale);
            let bias = put_vec(&mut t, &layer.gate_bias);
            let mlp = put_mlp(&mut t, &layer.mlp);

            let k = spectral_t(&mut t, z, w, &modes)?;
            let c = linear_t(&mut t, z, conv)?;
            let y = t.add(k, c)?;
            let y = t.gelu(y);
            let m = mlp_t(&mut t, y, mlp)?;
            let g = t.soft_gate(z, scale, bias)?;
            let s = t.add(m, g)?;
            z = if l + 1 == self.layers.len() { s } else { t.gelu(s) };
        }
        let p1 = put_linear(&mut t, &self.proj.0);
        let p2 = put_linear(&mut t, &self.proj.1);
        let h = linear_t(&mut t, z, p1)?;
        let h = t.gelu(h);
        let out = linear_t(&mut t, h, p2)?;
        let s = t.shape(out).to_vec();
        if s.len() != 4 {
            return Err(Error::shape("unexpected output rank"));
        }
        let (lx, ly) = x.lengths();
        Ok(Field::new(t.value(out).data.clone(), [s[0], s[1], s[2], s[3]])?.with_lengths(lx, ly))
    }
}
