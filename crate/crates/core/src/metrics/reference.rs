//! Direct loop implementations of the metrics, written for clarity rather
//! than speed. Used as test oracles for the main implementations.

use std::f64::consts::PI;

use crate::tensor_fft::Field;

fn dims(f: &Field) -> (usize, usize, usize, usize) {
    let [b, c, nx, ny] = f.shape();
    (b, c, nx, ny)
}

pub fn rmse(p: &Field, y: &Field) -> f64 {
    let (b, c, nx, ny) = dims(p);
    let mut total = 0.0;
    for bi in 0..b {
        for ci in 0..c {
            let mut s = 0.0;
            for x in 0..nx {
                for yy in 0..ny {
                    s += (p.get(bi, ci, x, yy) - y.get(bi, ci, x, yy)).powi(2);
                }
            }
            total += (s / (nx * ny) as f64).sqrt();
        }
    }
    total / (b * c) as f64
}

pub fn nrmse(p: &Field, y: &Field) -> f64 {
    let (b, c, nx, ny) = dims(p);
    let mut total = 0.0;
    for bi in 0..b {
        for ci in 0..c {
            let (mut e, mut n) = (0.0, 0.0);
            for x in 0..nx {
                for yy in 0..ny {
                    e += (p.get(bi, ci, x, yy) - y.get(bi, ci, x, yy)).powi(2);
                    n += y.get(bi, ci, x, yy).powi(2);
                }
            }
            total += (e / (nx * ny) as f64).sqrt() / (n / (nx * ny) as f64).sqrt();
        }
    }
    total / (b * c) as f64
}

pub fn max_error(p: &Field, y: &Field) -> f64 {
    let (b, c, nx, ny) = dims(p);
    let mut total = 0.0;
    for ci in 0..c {
        let mut m = 0.0_f64;
        for bi in 0..b {
            for x in 0..nx {
                for yy in 0..ny {
                    m = m.max((p.get(bi, ci, x, yy) - y.get(bi, ci, x, yy)).abs());
                }
            }
        }
        total += m;
    }
    total / c as f64
}

pub fn brmse(p: &Field, y: &Field) -> f64 {
    let (b, c, nx, ny) = dims(p);
    let d2 = |bi, ci, x, yy| (p.get(bi, ci, x, yy) - y.get(bi, ci, x, yy)).powi(2);
    let mut total = 0.0;
    for bi in 0..b {
        for ci in 0..c {
            let mut s = 0.0;
            for yy in 0..ny {
                s += d2(bi, ci, 0, yy);
                s += d2(bi, ci, nx - 1, yy);
            }
            for x in 0..nx {
                s += d2(bi, ci, x, 0);
                s += d2(bi, ci, x, ny - 1);
            }
            total += (s / (2 * nx + 2 * ny) as f64).sqrt();
        }
    }
    total / (b * c) as f64
}

pub fn crmse(p: &Field, y: &Field) -> f64 {
    let (b, c, nx, ny) = dims(p);
    let mut total = 0.0;
    for ci in 0..c {
        let mut acc = 0.0;
        for bi in 0..b {
            let mut d = 0.0;
            for x in 0..nx {
                for yy in 0..ny {
                    d += p.get(bi, ci, x, yy) - y.get(bi, ci, x, yy);
                }
            }
            acc += d * d;
        }
        total += (acc / b as f64).sqrt() / (nx * ny) as f64;
    }
    total / c as f64
}

pub fn vrmse(p: &Field, y: &Field, eps: f64) -> f64 {
    let (b, c, nx, ny) = dims(p);
    let n = (nx * ny) as f64;
    let mut total = 0.0;
    for bi in 0..b {
        for ci in 0..c {
            let (mut mse, mut mu) = (0.0, 0.0);
            for x in 0..nx {
                for yy in 0..ny {
                    mse += (p.get(bi, ci, x, yy) - y.get(bi, ci, x, yy)).powi(2) / n;
                    mu += y.get(bi, ci, x, yy) / n;
                }
            }
            let mut var = 0.0;
            for x in 0..nx {
                for yy in 0..ny {
                    var += (y.get(bi, ci, x, yy) - mu).powi(2) / n;
                }
            }
            total += (mse / (var + eps)).sqrt();
        }
    }
    total / (b * c) as f64
}

/// `|sum_x f(x) exp(-2 pi i k.x / n)|^2` by direct summation.
pub fn dft_energy(f: &Field, b: usize, c: usize, kx: usize, ky: usize) -> f64 {
    let (_, _, nx, ny) = dims(f);
    let (mut re, mut im) = (0.0, 0.0);
    for x in 0..nx {
        for yy in 0..ny {
            let th = -2.0 * PI * ((kx * x) as f64 / nx as f64 + (ky * yy) as f64 / ny as f64);
            let v = f.get(b, c, x, yy);
            re += v * th.cos();
            im += v * th.sin();
        }
    }
    re * re + im * im
}

fn radius(kx: usize, ky: usize) -> usize {
    ((kx * kx + ky * ky) as f64).sqrt().floor() as usize
}

/// Radial energy spectrum of slice `(b, c)` over the first quadrant.
pub fn energy_spectrum(f: &Field, b: usize, c: usize) -> Vec<f64> {
    let (_, _, nx, ny) = dims(f);
    let m = radius(nx / 2 - 1, ny / 2 - 1);
    let mut e = vec![0.0; m + 1];
    for kx in 0..nx / 2 {
        for ky in 0..ny / 2 {
            e[radius(kx, ky)] += dft_energy(f, b, c, kx, ky);
        }
    }
    e
}

pub fn melr_wlr(p: &Field, y: &Field) -> (f64, f64) {
    let (b, c, _, _) = dims(p);
    let (mut melr, mut wlr) = (0.0, 0.0);
    for bi in 0..b {
        for ci in 0..c {
            let ep = energy_spectrum(p, bi, ci);
            let er = energy_spectrum(y, bi, ci);
            let (mut s, mut n, mut ws, mut tot) = (0.0, 0.0, 0.0, 0.0);
            for k in 0..er.len() {
                if er[k] > 0.0 {
                    let l = (ep[k].max(f64::MIN_POSITIVE) / er[k]).ln().abs();
                    s += l;
                    n += 1.0;
                    ws += er[k] * l;
                    tot += er[k];
                }
            }
            melr += s / n;
            wlr += ws / tot;
        }
    }
    (melr / (b * c) as f64, wlr / (b * c) as f64)
}

/// Band spectral RMSE with bins `[0, i_low)`, `[i_low, i_high)`,
/// `[i_high, M]`; an empty band scores 0.
pub fn frmse_bands(p: &Field, y: &Field, i_low: usize, i_high: usize) -> (f64, f64, f64) {
    let (b, c, nx, ny) = dims(p);
    let (lx, ly) = p.lengths();
    let m = radius(nx / 2 - 1, ny / 2 - 1);
    let d = p.sub(y).expect("same shape");
    let mut bands = [0.0; 3];
    for ci in 0..c {
        let mut per_bin = vec![0.0; m + 1];
        for bi in 0..b {
            for kx in 0..nx / 2 {
                for ky in 0..ny / 2 {
                    per_bin[radius(kx, ky)] += dft_energy(&d, bi, ci, kx, ky) / b as f64;
                }
            }
        }
        let spectrum: Vec<f64> = per_bin.iter().map(|v| v.sqrt() * (lx / nx as f64) * (ly / ny as f64)).collect();
        for (band, (s, e)) in [(0, i_low), (i_low, i_high), (i_high, m + 1)].into_iter().enumerate() {
            if e > s {
                bands[band] += spectrum[s..e].iter().sum::<f64>() / (e - s) as f64 / c as f64;
            }
        }
    }
    (bands[0], bands[1], bands[2])
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = (0..x.len()).map(|i| (x[i] - mx) * (y[i] - my)).sum();
    let vx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    cov / (vx * vy).sqrt().max(f64::MIN_POSITIVE)
}

pub fn pearson_by_timestep(p: &[Field], y: &[Field]) -> Vec<f64> {
    p.iter()
        .zip(y)
        .map(|(pt, yt)| {
            let (b, c, nx, ny) = dims(pt);
            let mut acc = 0.0;
            for bi in 0..b {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for ci in 0..c {
                    for x in 0..nx {
                        for yy in 0..ny {
                            xs.push(pt.get(bi, ci, x, yy));
                            ys.push(yt.get(bi, ci, x, yy));
                        }
                    }
                }
                acc += pearson(&xs, &ys);
            }
            acc / b as f64
        })
        .collect()
}
