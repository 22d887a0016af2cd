//! Pseudo-spectral solver for 2D incompressible Navier-Stokes in vorticity
//! form on `[0, 2 pi)^2`:
//! `w_t + u.grad w = lap w / Re - n cos(n y)`, the curl of the body force
//! `sin(n y) x_hat`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exact::{random_ic, IcSpec};
use super::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::tensor_fft::fft::{half_len, PlaneFft};

/// Largest accepted advective CFL number per internal step.
pub const CFL_LIMIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KolmogorovParams {
    pub re: f64,
    pub forcing_n: u32,
    /// Interval between stored snapshots.
    pub dt: f64,
    /// Solver steps per stored snapshot.
    pub substeps: usize,
    /// Snapshots simulated and discarded before recording starts.
    pub warmup: usize,
    /// Scale of the random initial vorticity (unit variance times this).
    pub ic_amplitude: f64,
    pub ic: IcSpec,
}

impl Default for KolmogorovParams {
    fn default() -> Self {
        Self {
            re: 500.0,
            forcing_n: 4,
            dt: 0.2,
            substeps: 10,
            warmup: 50,
            ic_amplitude: 1.0,
            ic: IcSpec::default(),
        }
    }
}

/// Solver state and precomputed operators for one grid and step size.
pub struct KolmogorovSolver {
    nx: usize,
    ny: usize,
    nyr: usize,
    h: f64,
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// `1 / |k|^2` (0 at the mean mode).
    inv_k2: Vec<f64>,
    mask: Vec<bool>,
    e1: Vec<f64>,
    e2: Vec<f64>,
    forcing: Vec<Complex64>,
    fft: PlaneFft,
    bufs: [Vec<f64>; 4],
    tmp: Vec<Complex64>,
}

impl KolmogorovSolver {
    /// `h` is the internal time step; `forcing_n = 0` disables forcing.
    pub fn new(nx: usize, ny: usize, re: f64, forcing_n: u32, h: f64) -> Result<Self> {
        if nx < 4 || ny < 4 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::shape(format!("solver needs even grids >= 4, got {nx}x{ny}")));
        }
        if !(re > 0.0) || !(h > 0.0) {
            return Err(Error::config("need Re > 0 and a positive step"));
        }
        if 3 * forcing_n as usize >= ny {
            return Err(Error::config(format!("forcing wavenumber {forcing_n} is dealiased away on ny = {ny}")));
        }
        let nyr = half_len(ny);
        let n = nx * nyr;
        let mut kx = vec![0.0; n];
        let mut ky = vec![0.0; n];
        let mut inv_k2 = vec![0.0; n];
        let mut mask = vec![false; n];
        let mut e1 = vec![0.0; n];
        let mut e2 = vec![0.0; n];
        for i in 0..nx {
            let sx = if 2 * i < nx { i as f64 } else { i as f64 - nx as f64 };
            for j in 0..nyr {
                let m = i * nyr + j;
                let sy = j as f64;
                kx[m] = sx;
                ky[m] = sy;
                let k2 = sx * sx + sy * sy;
                inv_k2[m] = if k2 > 0.0 { 1.0 / k2 } else { 0.0 };
                // 2/3 rule; also removes the Nyquist rows
                mask[m] = 3.0 * sx.abs() < nx as f64 && 3.0 * sy < ny as f64;
                e1[m] = (-k2 * h / re).exp();
                e2[m] = (-k2 * h / (2.0 * re)).exp();
            }
        }
        let mut fft = PlaneFft::new(nx, ny);
        let mut forcing = vec![Complex64::default(); n];
        if forcing_n > 0 {
            let fnf = forcing_n as f64;
            let f: Vec<f64> = (0..nx * ny)
                .map(|idx| -fnf * (fnf * 2.0 * PI * (idx % ny) as f64 / ny as f64).cos())
                .collect();
            fft.rfft(&f, &mut forcing);
        }
        Ok(Self {
            nx,
            ny,
            nyr,
            h,
            kx,
            ky,
            inv_k2,
            mask,
            e1,
            e2,
            forcing,
            fft,
            bufs: std::array::from_fn(|_| vec![0.0; nx * ny]),
            tmp: vec![Complex64::default(); n],
        })
    }

    pub fn to_spectral(&mut self, w: &[f64]) -> Vec<Complex64> {
        let mut s = vec![Complex64::default(); self.nx * self.nyr];
        self.fft.rfft(w, &mut s);
        s.iter_mut().zip(&self.mask).for_each(|(z, &m)| {
            if !m {
                *z = Complex64::default()
            }
        });
        s
    }

    pub fn to_physical(&mut self, s: &[Complex64]) -> Vec<f64> {
        let mut w = vec![0.0; self.nx * self.ny];
        self.fft.irfft(s, &mut w);
        w
    }

    /// Dealiased `-(u.grad w) + f` in spectral space; also returns the CFL
    /// number of the velocity field.
    fn rhs(&mut self, w: &[Complex64], out: &mut [Complex64]) -> f64 {
        let i = Complex64::i();
        let fields: [&dyn Fn(usize) -> Complex64; 4] = [
            &|m| i * self.ky[m] * self.inv_k2[m] * w[m],
            &|m| -i * self.kx[m] * self.inv_k2[m] * w[m],
            &|m| i * self.kx[m] * w[m],
            &|m| i * self.ky[m] * w[m],
        ];
        let mut bufs = std::mem::take(&mut self.bufs);
        for (buf, f) in bufs.iter_mut().zip(fields) {
            for m in 0..self.tmp.len() {
                self.tmp[m] = f(m);
            }
            self.fft.irfft(&self.tmp, buf);
        }
        let [u, v, wx, wy] = &mut bufs;
        let (mut umax, mut vmax) = (0.0_f64, 0.0_f64);
        for p in 0..u.len() {
            umax = umax.max(u[p].abs());
            vmax = vmax.max(v[p].abs());
            u[p] = -(u[p] * wx[p] + v[p] * wy[p]);
        }
        self.fft.rfft(u, out);
        self.bufs = bufs;
        for m in 0..out.len() {
            out[m] = if self.mask[m] && m != 0 { out[m] + self.forcing[m] } else { Complex64::default() };
        }
        self.h * (umax * self.nx as f64 + vmax * self.ny as f64) / (2.0 * PI)
    }

    /// One integrating-factor RK4 step of size `h`.
    pub fn step(&mut self, w: &mut [Complex64]) -> Result<()> {
        let n = w.len();
        let h = self.h;
        let mut a = vec![Complex64::default(); n];
        let mut b = a.clone();
        let mut c = a.clone();
        let mut d = a.clone();
        let mut stage = a.clone();
        let cfl = self.rhs(w, &mut a);
        if !(cfl <= CFL_LIMIT) {
            return Err(Error::StepSize { cfl, limit: CFL_LIMIT });
        }
        for m in 0..n {
            stage[m] = self.e2[m] * (w[m] + 0.5 * h * a[m]);
        }
        self.rhs(&stage, &mut b);
        for m in 0..n {
            stage[m] = self.e2[m] * w[m] + 0.5 * h * b[m];
        }
        self.rhs(&stage, &mut c);
        for m in 0..n {
            stage[m] = self.e1[m] * w[m] + self.e2[m] * h * c[m];
        }
        self.rhs(&stage, &mut d);
        for m in 0..n {
            w[m] = self.e1[m] * w[m] + h / 6.0 * (self.e1[m] * a[m] + 2.0 * self.e2[m] * (b[m] + c[m]) + d[m]);
        }
        Ok(())
    }
}

/// Vorticity trajectories of forced 2D turbulence.
pub fn gen_kolmogorov(n_traj: usize, nx: usize, ny: usize, n_t: usize, p: &KolmogorovParams, seed: u64) -> Result<Dataset> {
    if n_t < 2 || n_traj == 0 || p.substeps == 0 {
        return Err(Error::config("need n_t >= 2, at least one trajectory and substeps >= 1"));
    }
    if !(p.dt > 0.0) {
        return Err(Error::config("dt must be positive"));
    }
    let k = p.ic.resolve(nx, ny)?;
    let h = p.dt / p.substeps as f64;
    let trajs: Vec<Vec<f64>> = (0..n_traj)
        .into_par_iter()
        .map(|j| {
            let mut solver = KolmogorovSolver::new(nx, ny, p.re, p.forcing_n, h)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let w0: Vec<f64> = random_ic(nx, ny, k, &mut rng).iter().map(|v| v * p.ic_amplitude).collect();
            let mut w = solver.to_spectral(&w0);
            let mut out = Vec::with_capacity(n_t * nx * ny);
            for snap in 0..p.warmup + n_t {
                if snap > 0 {
                    for _ in 0..p.substeps {
                        solver.step(&mut w)?;
                    }
                }
                if snap >= p.warmup {
                    out.extend(solver.to_physical(&w));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut meta = DatasetMeta::new(
        "kolmogorov",
        [n_traj, n_t, 1, nx, ny],
        p.dt,
        (2.0 * PI, 2.0 * PI),
        vec!["vorticity".into()],
        seed,
    );
    for (name, v) in [
        ("re", p.re),
        ("forcing_n", p.forcing_n as f64),
        ("substeps", p.substeps as f64),
        ("warmup", p.warmup as f64),
        ("ic_amplitude", p.ic_amplitude),
        ("k_max", k as f64),
    ] {
        meta.params.insert(name.into(), v);
    }
    Dataset::new(meta, trajs.concat())
}
