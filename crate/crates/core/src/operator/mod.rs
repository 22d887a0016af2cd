//! Learnable layers, the assembled LOGLO model and its FNO special case,
//! parameter accounting and checkpoints.

mod budget;
mod checkpoint;
mod fno;
mod layers;
mod modes;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::tensor_fft::InterpMode;

pub use budget::{fft_flops, param_budget, FftFlops, ParamBudget};
pub use checkpoint::{checkpoint_paths, load_checkpoint, save_checkpoint, Checkpoint};
pub use fno::{FnoLayer, FnoStack};
pub use layers::{
    channel_mlp, hfp_extract, hfp_extract_with, lift, lift_patches, local_spectral_conv, loglo_layer, pointwise_conv, soft_gating,
    spectral_conv, ChannelMlpWeights, LayerWeights, LinearWeights, LocalWeights,
};
pub use modes::{spectral_weight_shape, ModeSelection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_layers")]
    pub n_layers: usize,
    #[serde(default = "default_modes")]
    pub global_modes: (usize, usize),
    #[serde(default = "default_patch")]
    pub patch_size: usize,
    #[serde(default = "yes")]
    pub use_local: bool,
    #[serde(default = "yes")]
    pub use_hfp: bool,
    #[serde(default)]
    pub append_coord_grid: bool,
    /// Pooling kernel (and stride) of the high-pass stream.
    #[serde(default = "default_hfp_pool")]
    pub hfp_pool: usize,
    /// Upsampling used by the high-pass stream.
    #[serde(default)]
    pub hfp_interp: InterpMode,
}

fn default_width() -> usize {
    65
}
fn default_layers() -> usize {
    4
}
fn default_modes() -> (usize, usize) {
    (40, 40)
}
fn default_patch() -> usize {
    16
}
fn default_hfp_pool() -> usize {
    4
}
fn yes() -> bool {
    true
}

impl Default for ModelConfig {
    /// One input and one output channel.
    fn default() -> Self {
        Self::new(1, 1)
    }
}

impl ModelConfig {
    pub fn new(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            width: default_width(),
            n_layers: default_layers(),
            global_modes: default_modes(),
            patch_size: default_patch(),
            use_local: true,
            use_hfp: true,
            append_coord_grid: false,
            hfp_pool: default_hfp_pool(),
            hfp_interp: InterpMode::Nearest,
        }
    }

    /// The plain FNO: no local branch, no high-pass stream.
    pub fn fno(mut self) -> Self {
        self.use_local = false;
        self.use_hfp = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.width == 0 {
            return Err(Error::config("channel counts and width must be positive"));
        }
        if self.global_modes.0 == 0 || self.global_modes.1 == 0 {
            return Err(Error::config("global modes must be positive"));
        }
        if self.use_local && (self.patch_size < 2 || self.patch_size % 2 != 0) {
            return Err(Error::config("patch size must be even and at least 2"));
        }
        if self.use_hfp && self.hfp_pool == 0 {
            return Err(Error::config("hfp pooling size must be positive"));
        }
        Ok(())
    }

    /// Channels seen by the lifting layer.
    pub fn lifted_in_channels(&self) -> usize {
        self.in_channels + if self.append_coord_grid { 2 } else { 0 }
    }

    /// Checks that an `nx x ny` grid satisfies every constraint of the model.
    pub fn check_grid(&self, nx: usize, ny: usize) -> Result<()> {
        ModeSelection::new(nx, ny, self.global_modes.0, self.global_modes.1)?;
        if self.use_local {
            crate::patching::check_patch(nx, ny, self.patch_size)?;
        }
        if self.use_hfp {
            crate::tensor_fft::check_pool(nx, ny, self.hfp_pool, self.hfp_pool)?;
        }
        Ok(())
    }
}

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub component: &'static str,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LinearIdx {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MlpIdx {
    pub l1: LinearIdx,
    pub l2: LinearIdx,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GateIdx {
    pub scale: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LocalIdx {
    pub spectral: usize,
    pub conv: LinearIdx,
    pub gate: GateIdx,
    pub mlp: MlpIdx,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerIdx {
    pub spectral: usize,
    pub conv: LinearIdx,
    pub gate: GateIdx,
    pub mlp: MlpIdx,
    pub local: Option<LocalIdx>,
    pub hfp_mlp: Option<MlpIdx>,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub lift: LinearIdx,
    pub layers: Vec<LayerIdx>,
    pub proj1: LinearIdx,
    pub proj2: LinearIdx,
}

enum Init {
    Uniform(f64),
    Const(f64),
}

struct Builder<'a> {
    params: Vec<Param>,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl Builder<'_> {
    fn push(&mut self, name: String, component: &'static str, shape: Vec<usize>, init: Init) -> usize {
        let n: usize = shape.iter().product();
        let data = match (init, self.rng.as_deref_mut()) {
            (Init::Const(v), _) => vec![v; n],
            (Init::Uniform(s), Some(rng)) => (0..n).map(|_| rng.random_range(-s..=s)).collect(),
            (Init::Uniform(_), None) => vec![0.0; n],
        };
        self.params.push(Param {
            name,
            component,
            tensor: Tensor { data, shape },
        });
        self.params.len() - 1
    }

    fn linear(&mut self, name: &str, component: &'static str, cin: usize, cout: usize) -> LinearIdx {
        let s = 1.0 / (cin as f64).sqrt();
        LinearIdx {
            w: self.push(format!("{name}.weight"), component, vec![cout, cin], Init::Uniform(s)),
            b: self.push(format!("{name}.bias"), component, vec![cout], Init::Uniform(s)),
        }
    }

    fn mlp(&mut self, name: &str, component: &'static str, width: usize) -> MlpIdx {
        MlpIdx {
            l1: self.linear(&format!("{name}.fc1"), component, width, width),
            l2: self.linear(&format!("{name}.fc2"), component, width, width),
        }
    }

    fn gate(&mut self, name: &str, width: usize) -> GateIdx {
        GateIdx {
            scale: self.push(format!("{name}.scale"), "gates", vec![width], Init::Const(1.0)),
            bias: self.push(format!("{name}.bias"), "gates", vec![width], Init::Const(0.0)),
        }
    }

    fn spectral(&mut self, name: &str, component: &'static str, width: usize, mx: usize, my: usize) -> usize {
        let s = 1.0 / (width * width) as f64;
        self.push(
            name.to_string(),
            component,
            spectral_weight_shape(width, width, mx, my),
            Init::Uniform(s),
        )
    }
}

fn build(config: &ModelConfig, rng: Option<&mut ChaCha8Rng>) -> (Vec<Param>, Layout) {
    let d = config.width;
    let mut b = Builder {
        params: Vec::new(),
        rng,
    };
    let lift = b.linear("lift", "lifting", config.lifted_in_channels(), d);
    let (mx, my) = config.global_modes;
    let p = config.patch_size;
    let layers = (0..config.n_layers)
        .map(|l| {
            let spectral = b.spectral(&format!("layers.{l}.global.spectral"), "global_spectral", d, mx, my);
            let conv = b.linear(&format!("layers.{l}.global.conv"), "pointwise", d, d);
            let gate = b.gate(&format!("layers.{l}.global.gate"), d);
            let mlp = b.mlp(&format!("layers.{l}.global.mlp"), "channel_mlp", d);
            let local = config.use_local.then(|| LocalIdx {
                spectral: b.spectral(&format!("layers.{l}.local.spectral"), "local_spectral", d, p, p),
                conv: b.linear(&format!("layers.{l}.local.conv"), "pointwise", d, d),
                gate: b.gate(&format!("layers.{l}.local.gate"), d),
                mlp: b.mlp(&format!("layers.{l}.local.mlp"), "channel_mlp", d),
            });
            let hfp_mlp = config
                .use_hfp
                .then(|| b.mlp(&format!("layers.{l}.hfp.mlp"), "channel_mlp", d));
            LayerIdx {
                spectral,
                conv,
                gate,
                mlp,
                local,
                hfp_mlp,
            }
        })
        .collect();
    let proj1 = b.linear("proj.fc1", "projection", d, d);
    let proj2 = b.linear("proj.fc2", "projection", d, config.out_channels);
    (
        b.params,
        Layout {
            lift,
            layers,
            proj1,
            proj2,
        },
    )
}

/// Exact parameter count with a per-component breakdown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub total: usize,
    pub by_component: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct LogloModel {
    config: ModelConfig,
    params: Vec<Param>,
    layout: Layout,
}

impl LogloModel {
    /// Randomly initialised model; identical seeds give identical weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (params, layout) = build(&config, Some(&mut rng));
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    /// Model with every weight zero except the identity-initialised gates.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (params, layout) = build(&config, None);
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn count_params(&self) -> ParamCount {
        count_params(&self.config)
    }

    /// Records every parameter on `tape`, differentiable or not.
    pub fn place(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.tensor.clone())
                } else {
                    tape.constant(p.tensor.clone())
                }
            })
            .collect()
    }

    /// Replaces all parameter values; shapes must match.
    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.params.iter().map(|p| p.tensor.numel()).sum();
        if values.len() != total {
            return Err(Error::shape(format!("expected {total} values, got {}", values.len())));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.tensor.numel();
            p.tensor.data.copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.tensor.data.iter().copied()).collect()
    }
}

/// Exact parameter count for a configuration.
pub fn count_params(config: &ModelConfig) -> ParamCount {
    let (params, _) = build(config, None);
    let mut by_component = BTreeMap::new();
    for p in &params {
        *by_component.entry(p.component.to_string()).or_insert(0) += p.tensor.numel();
    }
    ParamCount {
        total: by_component.values().sum(),
        by_component,
    }
}
