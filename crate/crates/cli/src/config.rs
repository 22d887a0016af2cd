//! Run configuration: one JSON document for data, model and training.

use std::path::{Path, PathBuf};

use loglo_core::datagen::{gen_advdiff, gen_heat, gen_kolmogorov, Dataset, IcSpec, KolmogorovParams};
use loglo_core::train::TrainConfig;
use loglo_core::{Error, ModelConfig, Result};
use serde::{Deserialize, Serialize};

pub const RESOLVED_CONFIG: &str = "resolved_config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pde {
    #[default]
    Heat,
    Advdiff,
    Kolmogorov,
}

/// Generator parameters. Fields left out take PDE-specific defaults when
/// the config is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_traj: usize,
    pub n_t: usize,
    pub nx: usize,
    pub ny: usize,
    /// Snapshot interval.
    pub dt: Option<f64>,
    pub nu: f64,
    pub velocity: (f64, f64),
    pub re: f64,
    pub forcing_n: u32,
    pub substeps: usize,
    pub warmup: usize,
    pub k_max: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        let k = KolmogorovParams::default();
        Self {
            n_traj: 50,
            n_t: 11,
            nx: 64,
            ny: 64,
            dt: None,
            nu: 1e-2,
            velocity: (1.0, 0.5),
            re: k.re,
            forcing_n: k.forcing_n,
            substeps: k.substeps,
            warmup: k.warmup,
            k_max: None,
        }
    }
}

impl DataConfig {
    pub fn default_dt(pde: Pde) -> f64 {
        match pde {
            Pde::Heat | Pde::Advdiff => 0.01,
            Pde::Kolmogorov => KolmogorovParams::default().dt,
        }
    }

    /// The IC band limit, resolved against the grid.
    pub fn ic(&self) -> IcSpec {
        IcSpec { k_max: self.k_max }
    }

    /// Runs the generator for `pde` with this config and `seed`.
    pub fn generate(&self, pde: Pde, seed: u64) -> Result<Dataset> {
        let dt = self.dt.unwrap_or(Self::default_dt(pde));
        match pde {
            Pde::Heat => gen_heat(self.n_traj, self.nx, self.ny, self.n_t, self.nu, dt, seed, self.ic()),
            Pde::Advdiff => gen_advdiff(self.n_traj, self.nx, self.ny, self.n_t, self.nu, self.velocity, dt, seed, self.ic()),
            Pde::Kolmogorov => {
                let p = KolmogorovParams {
                    re: self.re,
                    forcing_n: self.forcing_n,
                    dt,
                    substeps: self.substeps,
                    warmup: self.warmup,
                    ic_amplitude: 1.0,
                    ic: self.ic(),
                };
                gen_kolmogorov(self.n_traj, self.nx, self.ny, self.n_t, &p, seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pde: Pde,
    pub data: DataConfig,
    /// Existing FLDB directories; when absent, data is generated from `data`.
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
    /// Master seed for generation and training (copied into `train.seed`).
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pde: Pde::Heat,
            data: DataConfig::default(),
            train_data: None,
            test_data: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            out_dir: PathBuf::from("runs/default"),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Fills derived values and checks every section.
    pub fn resolve(mut self) -> Result<Self> {
        self.data.dt.get_or_insert(DataConfig::default_dt(self.pde));
        self.train.seed = self.seed;
        self.model.validate()?;
        self.train.validate()?;
        let d = &self.data;
        if d.n_traj == 0 || d.n_t < 2 {
            return Err(Error::Config("data needs n_traj >= 1 and n_t >= 2".into()));
        }
        if !(d.nu >= 0.0) || !(d.dt.unwrap() > 0.0) {
            return Err(Error::Config("data needs nu >= 0 and dt > 0".into()));
        }
        d.ic().resolve(d.nx, d.ny)?;
        if self.train_data.is_none() {
            self.model.check_grid(d.nx, d.ny)?;
            self.train.loss.radial_spec(d.nx, d.ny)?;
        }
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Writes `resolved_config.json` into `dir` (created if missing).
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let p = dir.join(RESOLVED_CONFIG);
        std::fs::write(&p, self.to_json()).map_err(|e| io_err(&p, e))?;
        Ok(p)
    }
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses JSON text into a resolved config. Schema errors name the
/// offending field path.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("at `{path}`: {}", e.inner()))
    })?;
    cfg.resolve()
}

/// Reads and resolves a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_config_str(&text)
}
