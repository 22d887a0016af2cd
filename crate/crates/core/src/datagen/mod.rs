//! Synthetic datasets and the FLDB on-disk format.
//!
//! An FLDB dataset is a directory with `meta.json` (UTF-8) and `data.bin`,
//! the values as little-endian `f32` in row-major `[traj][t][c][x][y]` order.

mod exact;
mod kolmogorov;
#[cfg(test)]
mod tests;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_fft::Field;

pub use exact::{advdiff_evolve, gen_advdiff, gen_heat, random_ic, IcSpec};
pub use kolmogorov::{gen_kolmogorov, KolmogorovParams, KolmogorovSolver, CFL_LIMIT};

pub const FLDB_MAGIC: &str = "LOGLO-FLDB/1";
pub const SCHEMA_VERSION: u32 = 1;
pub const META_FILE: &str = "meta.json";
pub const DATA_FILE: &str = "data.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub magic: String,
    pub schema_version: u32,
    pub pde: String,
    /// Generator parameters by name (viscosity, velocity, Reynolds number...).
    pub params: BTreeMap<String, f64>,
    pub dt: f64,
    pub lengths: (f64, f64),
    pub field_names: Vec<String>,
    pub seed: u64,
    pub n_traj: usize,
    pub n_t: usize,
    pub n_c: usize,
    pub nx: usize,
    pub ny: usize,
}

impl DatasetMeta {
    pub fn new(pde: &str, dims: [usize; 5], dt: f64, lengths: (f64, f64), field_names: Vec<String>, seed: u64) -> Self {
        let [n_traj, n_t, n_c, nx, ny] = dims;
        Self {
            magic: FLDB_MAGIC.into(),
            schema_version: SCHEMA_VERSION,
            pde: pde.into(),
            params: BTreeMap::new(),
            dt,
            lengths,
            field_names,
            seed,
            n_traj,
            n_t,
            n_c,
            nx,
            ny,
        }
    }

    pub fn numel(&self) -> usize {
        self.n_traj * self.n_t * self.n_c * self.nx * self.ny
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.magic != FLDB_MAGIC {
            return Err(format!("bad magic {:?}", self.magic));
        }
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.n_t < 2 || self.n_traj == 0 || self.n_c == 0 || self.nx == 0 || self.ny == 0 {
            return Err("dataset needs n_t >= 2 and nonzero dimensions".into());
        }
        if self.field_names.len() != self.n_c {
            return Err(format!("{} field names for {} channels", self.field_names.len(), self.n_c));
        }
        Ok(())
    }
}

/// Trajectories `[n_traj, n_t, n_c, nx, ny]` held as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    data: Vec<f64>,
}

impl Dataset {
    pub fn new(meta: DatasetMeta, data: Vec<f64>) -> Result<Self> {
        meta.validate().map_err(Error::InvalidInput)?;
        if data.len() != meta.numel() {
            return Err(Error::shape(format!("{} values for {} expected", data.len(), meta.numel())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset contains non-finite values".into()));
        }
        Ok(Self { meta, data })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn frame_len(&self) -> usize {
        self.meta.n_c * self.meta.nx * self.meta.ny
    }

    /// Snapshot `t` of trajectory `traj` as a `[1, c, nx, ny]` field.
    pub fn frame(&self, traj: usize, t: usize) -> Result<Field> {
        self.frames(&[(traj, t)])
    }

    /// Stacks the requested `(traj, t)` snapshots along the batch axis.
    pub fn frames(&self, idx: &[(usize, usize)]) -> Result<Field> {
        let m = &self.meta;
        let fl = self.frame_len();
        let mut data = Vec::with_capacity(idx.len() * fl);
        for &(traj, t) in idx {
            if traj >= m.n_traj || t >= m.n_t {
                return Err(Error::shape(format!("frame ({traj}, {t}) out of range")));
            }
            let off = (traj * m.n_t + t) * fl;
            data.extend_from_slice(&self.data[off..off + fl]);
        }
        Ok(Field::new(data, [idx.len(), m.n_c, m.nx, m.ny])?.with_lengths(m.lengths.0, m.lengths.1))
    }

    /// All consecutive `(u_t, u_{t+1})` pairs of the given trajectories as
    /// (inputs, targets).
    pub fn one_step_pairs(&self, trajs: std::ops::Range<usize>) -> Result<(Field, Field)> {
        let src: Vec<(usize, usize)> = trajs.flat_map(|j| (0..self.meta.n_t - 1).map(move |t| (j, t))).collect();
        let dst: Vec<(usize, usize)> = src.iter().map(|&(j, t)| (j, t + 1)).collect();
        Ok((self.frames(&src)?, self.frames(&dst)?))
    }

    /// `(u_{t0}, [u_{t0+1}, ..., u_{t0+k}])` for the given trajectories.
    pub fn rollout_window(&self, trajs: std::ops::Range<usize>, t0: usize, k: usize) -> Result<(Field, Vec<Field>)> {
        if t0 + k >= self.meta.n_t {
            return Err(Error::shape(format!(
                "window {t0}+{k} exceeds {} time steps",
                self.meta.n_t
            )));
        }
        let at = |t: usize| self.frames(&trajs.clone().map(|j| (j, t)).collect::<Vec<_>>());
        Ok((at(t0)?, (1..=k).map(|s| at(t0 + s)).collect::<Result<_>>()?))
    }

    /// Writes `meta.json` and `data.bin` into `dir` (created if missing).
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta serialises");
        let mp = dir.join(META_FILE);
        std::fs::write(&mp, meta).map_err(|e| Error::io(&mp, e))?;
        let bytes: Vec<u8> = self.data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        let dp = dir.join(DATA_FILE);
        std::fs::write(&dp, bytes).map_err(|e| Error::io(&dp, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let mp = dir.join(META_FILE);
        let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| Error::format(&mp, e.to_string()))?;
        meta.validate().map_err(|m| Error::format(&mp, m))?;
        let dp = dir.join(DATA_FILE);
        let bytes = std::fs::read(&dp).map_err(|e| Error::io(&dp, e))?;
        if bytes.len() != 4 * meta.numel() {
            return Err(Error::format(
                &dp,
                format!("{} bytes, header implies {}", bytes.len(), 4 * meta.numel()),
            ));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(&dp, "non-finite value in blob"));
        }
        Ok(Self { meta, data })
    }
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.write(dir)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::read(dir)
}
