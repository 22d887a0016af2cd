//! Heat and advection-diffusion on a periodic box, evaluated in closed form
//! from band-limited random initial conditions.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::tensor_fft::fft::{half_len, PlaneFft};
use crate::tensor_fft::Field;

/// Band limit of random initial conditions. `k_max = None` uses
/// `min(nx, ny) / 4`. Coefficients are drawn in an order that does not
/// depend on the grid, so one seed and one `k_max` describe the same
/// continuous field at every resolution that resolves it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcSpec {
    pub k_max: Option<usize>,
}

impl IcSpec {
    pub fn resolve(&self, nx: usize, ny: usize) -> Result<usize> {
        let k = self.k_max.unwrap_or(nx.min(ny) / 4);
        if 2 * k >= nx || 2 * k >= ny {
            return Err(Error::config(format!(
                "initial-condition band limit {k} is not resolved on {nx}x{ny}"
            )));
        }
        Ok(k)
    }
}

fn signed(k: usize, n: usize) -> f64 {
    if 2 * k <= n {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Real field with Gaussian Fourier coefficients on `|k| <= k_max`
/// (Hermitian-symmetric, so the field is real), scaled to unit expected
/// variance.
pub fn random_ic(nx: usize, ny: usize, k_max: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = k_max as i64;
    let mut modes = Vec::new();
    for kx in -k..=k {
        for ky in 0..=k {
            let upper = ky > 0 || kx >= 0;
            if upper && kx * kx + ky * ky <= k * k {
                modes.push((kx, ky));
            }
        }
    }
    let pairs = modes.len() - 1;
    // each conjugate pair carries 4 s^2 of variance, the mean mode s^2
    let s = 1.0 / ((4 * pairs + 1) as f64).sqrt();
    let nyr = half_len(ny);
    let n = (nx * ny) as f64;
    let mut spec = vec![Complex64::default(); nx * nyr];
    for (kx, ky) in modes {
        let a: f64 = StandardNormal.sample(rng);
        let c = if kx == 0 && ky == 0 {
            Complex64::new(a * s, 0.0)
        } else {
            let b: f64 = StandardNormal.sample(rng);
            Complex64::new(a, b) * s
        };
        let ix = kx.rem_euclid(nx as i64) as usize;
        spec[ix * nyr + ky as usize] = c * n;
        if ky == 0 && kx != 0 {
            let jx = (-kx).rem_euclid(nx as i64) as usize;
            spec[jx * nyr] = c.conj() * n;
        }
    }
    let mut out = vec![0.0; nx * ny];
    PlaneFft::new(nx, ny).irfft(&spec, &mut out);
    out
}

/// Exact solution of `u_t + v.grad u = nu lap u` at time `t` from `u0`,
/// on the periodic box given by `u0`'s domain lengths.
pub fn advdiff_evolve(u0: &Field, nu: f64, vel: (f64, f64), t: f64) -> Result<Field> {
    let [_, _, nx, ny] = u0.shape();
    let (lx, ly) = u0.lengths();
    let nyr = half_len(ny);
    let mut plan = PlaneFft::new(nx, ny);
    let mut spec = vec![Complex64::default(); nx * nyr];
    let mut data = vec![0.0; u0.data().len()];
    let factor: Vec<Complex64> = (0..nx * nyr)
        .map(|i| {
            let kx = 2.0 * PI * signed(i / nyr, nx) / lx;
            let ky = 2.0 * PI * (i % nyr) as f64 / ly;
            let re = -nu * (kx * kx + ky * ky) * t;
            let im = -(kx * vel.0 + ky * vel.1) * t;
            Complex64::new(re, im).exp()
        })
        .collect();
    for (src, dst) in u0.planes().zip(data.chunks_exact_mut(nx * ny)) {
        plan.rfft(src, &mut spec);
        spec.iter_mut().zip(&factor).for_each(|(z, f)| *z *= f);
        plan.irfft(&spec, dst);
    }
    Ok(Field::new(data, u0.shape())?.with_lengths(lx, ly))
}

/// Generator parameters shared by the closed-form datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactParams {
    pub nu: f64,
    pub velocity: (f64, f64),
    pub dt: f64,
    pub ic: IcSpec,
}

pub(crate) fn gen_exact(pde: &str, n_traj: usize, nx: usize, ny: usize, n_t: usize, p: ExactParams, seed: u64) -> Result<Dataset> {
    if !(p.nu >= 0.0) || !(p.dt > 0.0) || !p.velocity.0.is_finite() || !p.velocity.1.is_finite() {
        return Err(Error::config("need nu >= 0, dt > 0 and a finite velocity"));
    }
    if n_t < 2 || n_traj == 0 {
        return Err(Error::config("need n_t >= 2 and at least one trajectory"));
    }
    let k = p.ic.resolve(nx, ny)?;
    let trajs: Vec<Vec<f64>> = (0..n_traj)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let u0 = Field::new(random_ic(nx, ny, k, &mut rng), [1, 1, nx, ny])?;
            let mut out = Vec::with_capacity(n_t * nx * ny);
            for t in 0..n_t {
                let u = if t == 0 { u0.clone() } else { advdiff_evolve(&u0, p.nu, p.velocity, t as f64 * p.dt)? };
                out.extend_from_slice(u.data());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut meta = DatasetMeta::new(pde, [n_traj, n_t, 1, nx, ny], p.dt, (1.0, 1.0), vec!["u".into()], seed);
    meta.params.insert("nu".into(), p.nu);
    meta.params.insert("k_max".into(), k as f64);
    if pde != "heat" {
        meta.params.insert("vx".into(), p.velocity.0);
        meta.params.insert("vy".into(), p.velocity.1);
    }
    Dataset::new(meta, trajs.concat())
}

/// Heat equation `u_t = nu lap u` on `[0, 1)^2`.
pub fn gen_heat(n_traj: usize, nx: usize, ny: usize, n_t: usize, nu: f64, dt: f64, seed: u64, ic: IcSpec) -> Result<Dataset> {
    let p = ExactParams {
        nu,
        velocity: (0.0, 0.0),
        dt,
        ic,
    };
    gen_exact("heat", n_traj, nx, ny, n_t, p, seed)
}

/// Advection-diffusion `u_t + v.grad u = nu lap u` on `[0, 1)^2`.
pub fn gen_advdiff(n_traj: usize, nx: usize, ny: usize, n_t: usize, nu: f64, vel: (f64, f64), dt: f64, seed: u64, ic: IcSpec) -> Result<Dataset> {
    let p = ExactParams { nu, velocity: vel, dt, ic };
    gen_exact("advdiff", n_traj, nx, ny, n_t, p, seed)
}
