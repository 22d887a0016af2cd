//! Evaluation metrics. Inputs are `[b, c, nx, ny]` fields; when a time axis
//! is present it is folded into the channel axis, so every "(c, t)" slice
//! below is one channel of the folded field.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{radial_freq_loss, LossConfig};
use crate::spectra::{energy_spectrum, RadialSpec};
use crate::tensor_fft::Field;

pub mod reference;
#[cfg(test)]
mod tests;

/// Added to the target variance in [`vrmse`].
pub const VRMSE_EPS: f64 = 1e-8;
/// Lower clamp of the Pearson denominator.
pub const PEARSON_EPS: f64 = f64::MIN_POSITIVE;

fn check(pred: &Field, target: &Field) -> Result<()> {
    pred.check_same_shape(target)
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    s / n as f64
}

fn slices<'a>(pred: &'a Field, target: &'a Field) -> impl Iterator<Item = (&'a [f64], &'a [f64])> {
    pred.planes().zip(target.planes())
}

fn sse(p: &[f64], y: &[f64]) -> f64 {
    p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Mean over (b, c, t) of the spatial RMSE.
pub fn rmse(pred: &Field, target: &Field) -> Result<f64> {
    check(pred, target)?;
    let n = pred.plane_len() as f64;
    Ok(mean(slices(pred, target).map(|(p, y)| (sse(p, y) / n).sqrt())))
}

/// Mean over (b, c, t) of spatial RMSE divided by the spatial RMS of the target.
pub fn nrmse(pred: &Field, target: &Field) -> Result<f64> {
    check(pred, target)?;
    let mut out = Vec::with_capacity(pred.batch() * pred.channels());
    for (i, (p, y)) in slices(pred, target).enumerate() {
        let norm: f64 = y.iter().map(|v| v * v).sum();
        if norm == 0.0 {
            let (b, c) = (i / pred.channels(), i % pred.channels());
            return Err(Error::DegenerateTarget(format!("target slice (b={b}, c={c}) is identically zero")));
        }
        out.push((sse(p, y) / norm).sqrt());
    }
    Ok(mean(out))
}

/// Maximum of |pred - target| over (b, x, y), averaged over (c, t).
pub fn max_error(pred: &Field, target: &Field) -> Result<f64> {
    check(pred, target)?;
    let [b, c, _, _] = pred.shape();
    Ok(mean((0..c).map(|ch| {
        (0..b)
            .flat_map(|bi| pred.plane(bi, ch).iter().zip(target.plane(bi, ch)))
            .map(|(p, y)| (p - y).abs())
            .fold(0.0, f64::max)
    })))
}

/// RMSE over the four domain edges. Each edge is summed in full, so the
/// corner cells enter twice and the divisor is `2 nx + 2 ny`.
pub fn brmse(pred: &Field, target: &Field) -> Result<f64> {
    check(pred, target)?;
    let (nx, ny) = (pred.nx(), pred.ny());
    let denom = (2 * nx + 2 * ny) as f64;
    Ok(mean(slices(pred, target).map(|(p, y)| {
        let sq = |x: usize, yy: usize| {
            let d = p[x * ny + yy] - y[x * ny + yy];
            d * d
        };
        let mut s = 0.0;
        for j in 0..ny {
            s += sq(0, j) + sq(nx - 1, j);
        }
        for i in 0..nx {
            s += sq(i, 0) + sq(i, ny - 1);
        }
        (s / denom).sqrt()
    })))
}

/// Error of the spatial sum: RMS over the batch, divided by `nx ny`,
/// averaged over (c, t).
pub fn crmse(pred: &Field, target: &Field) -> Result<f64> {
    check(pred, target)?;
    let [b, c, nx, ny] = pred.shape();
    Ok(mean((0..c).map(|ch| {
        let ms = mean((0..b).map(|bi| {
            let d: f64 = pred.plane(bi, ch).iter().zip(target.plane(bi, ch)).map(|(p, y)| p - y).sum();
            d * d
        }));
        ms.sqrt() / (nx * ny) as f64
    })))
}

/// Low/mid/high spectral RMSE, computed by the frequency-loss machinery and
/// averaged over (c, t).
pub fn frmse_bands(pred: &Field, target: &Field, spec: &RadialSpec) -> Result<(f64, f64, f64)> {
    Ok(radial_freq_loss(pred, target, spec, &LossConfig::default())?.bands.means())
}

/// Mean over (b, c, t) of `sqrt(MSE / (Var(target) + eps))`.
pub fn vrmse(pred: &Field, target: &Field) -> Result<f64> {
    check(pred, target)?;
    let n = pred.plane_len() as f64;
    Ok(mean(slices(pred, target).map(|(p, y)| {
        let mu = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        (sse(p, y) / n / (var + VRMSE_EPS)).sqrt()
    })))
}

/// Log-ratio statistics of two binned energy spectra. Bins where the
/// reference has no energy are skipped; predicted zeros are clamped to the
/// smallest normal double. Returns `None` when every reference bin is empty.
pub fn log_ratio(e_pred: &[f64], e_ref: &[f64]) -> Option<(f64, f64)> {
    let (mut sum, mut n, mut wsum, mut total) = (0.0, 0usize, 0.0, 0.0);
    for (&p, &r) in e_pred.iter().zip(e_ref) {
        if r > 0.0 {
            let l = (p.max(f64::MIN_POSITIVE) / r).ln().abs();
            sum += l;
            n += 1;
            wsum += r * l;
            total += r;
        }
    }
    (n > 0).then(|| (sum / n as f64, wsum / total))
}

/// MELR and WLR of the radial energy spectra, per (b, c, t) slice and then
/// averaged.
pub fn melr_wlr(pred: &Field, target: &Field) -> Result<(f64, f64)> {
    check(pred, target)?;
    let ep = energy_spectrum(pred)?;
    let er = energy_spectrum(target)?;
    let mut acc = Vec::with_capacity(ep.batch * ep.channels);
    for b in 0..ep.batch {
        for c in 0..ep.channels {
            let v = log_ratio(ep.row(b, c), er.row(b, c)).ok_or_else(|| {
                Error::DegenerateTarget(format!("reference spectrum of slice (b={b}, c={c}) is all zero"))
            })?;
            acc.push(v);
        }
    }
    Ok((mean(acc.iter().map(|v| v.0)), mean(acc.iter().map(|v| v.1))))
}

/// Pearson correlation of two samples with the denominator clamped.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    sxy / (sxx * syy).sqrt().max(PEARSON_EPS)
}

/// Per time step, the batch-mean Pearson correlation of each sample
/// flattened over channels and space.
pub fn pearson_by_timestep(pred: &[Field], target: &[Field]) -> Result<Vec<f64>> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!("{} predicted steps vs {} target steps", pred.len(), target.len())));
    }
    pred.iter()
        .zip(target)
        .map(|(p, y)| {
            check(p, y)?;
            let per = p.data().len() / p.batch();
            Ok(mean(p.data().chunks_exact(per).zip(y.data().chunks_exact(per)).map(|(a, b)| pearson(a, b))))
        })
        .collect()
}

/// Relative difference in percent; negative means the candidate is lower.
pub fn rel_pct_diff(candidate: f64, baseline: f64) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::DegenerateBaseline);
    }
    Ok((candidate - baseline) / baseline * 100.0)
}

/// Stacks fields with equal batch and grid along the channel axis.
pub fn concat_channels(parts: &[Field]) -> Result<Field> {
    let first = parts.first().ok_or_else(|| Error::shape("nothing to concatenate"))?;
    let [b, _, nx, ny] = first.shape();
    let mut c = 0;
    for p in parts {
        let s = p.shape();
        if s[0] != b || s[2] != nx || s[3] != ny {
            return Err(Error::shape(format!("cannot stack {:?} with {:?}", s, first.shape())));
        }
        c += s[1];
    }
    let mut data = Vec::with_capacity(b * c * nx * ny);
    for bi in 0..b {
        for p in parts {
            for ch in 0..p.channels() {
                data.extend_from_slice(p.plane(bi, ch));
            }
        }
    }
    let (lx, ly) = first.lengths();
    Ok(Field::new(data, [b, c, nx, ny])?.with_lengths(lx, ly))
}

/// All scalar metrics for one set of slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub rmse: f64,
    pub nrmse: f64,
    pub brmse: f64,
    pub crmse: f64,
    pub max_error: f64,
    pub frmse_low: f64,
    pub frmse_mid: f64,
    pub frmse_high: f64,
    pub vrmse: f64,
    pub melr: f64,
    pub wlr: f64,
}

impl ScalarMetrics {
    pub fn compute(pred: &Field, target: &Field, spec: &RadialSpec) -> Result<Self> {
        let (frmse_low, frmse_mid, frmse_high) = frmse_bands(pred, target, spec)?;
        let (melr, wlr) = melr_wlr(pred, target)?;
        Ok(Self {
            rmse: rmse(pred, target)?,
            nrmse: nrmse(pred, target)?,
            brmse: brmse(pred, target)?,
            crmse: crmse(pred, target)?,
            max_error: max_error(pred, target)?,
            frmse_low,
            frmse_mid,
            frmse_high,
            vrmse: vrmse(pred, target)?,
            melr,
            wlr,
        })
    }

    pub fn named(&self) -> [(&'static str, f64); 11] {
        [
            ("rmse", self.rmse),
            ("nrmse", self.nrmse),
            ("brmse", self.brmse),
            ("crmse", self.crmse),
            ("max_error", self.max_error),
            ("frmse_low", self.frmse_low),
            ("frmse_mid", self.frmse_mid),
            ("frmse_high", self.frmse_high),
            ("vrmse", self.vrmse),
            ("melr", self.melr),
            ("wlr", self.wlr),
        ]
    }
}

/// Metrics over a sequence of predicted steps: aggregate values (time
/// folded into channels), per-step values, and Pearson correlation per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(flatten)]
    pub overall: ScalarMetrics,
    pub pearson_by_t: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub by_step: Vec<ScalarMetrics>,
}

impl MetricReport {
    /// `pred[t]` and `target[t]` are `[b, c, nx, ny]` fields at step `t`.
    pub fn evaluate(pred: &[Field], target: &[Field], spec: &RadialSpec) -> Result<Self> {
        let pearson_by_t = pearson_by_timestep(pred, target)?;
        let overall = ScalarMetrics::compute(&concat_channels(pred)?, &concat_channels(target)?, spec)?;
        let by_step = if pred.len() > 1 {
            pred.iter()
                .zip(target)
                .map(|(p, y)| ScalarMetrics::compute(p, y, spec))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Self {
            overall,
            pearson_by_t,
            by_step,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// CSV with columns `metric,timestep,value`; aggregate rows use the
    /// timestep label `all`.
    pub fn write_csv_to<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["metric", "timestep", "value"])?;
        for (name, v) in self.overall.named() {
            out.serialize((name, "all", v))?;
        }
        for (t, step) in self.by_step.iter().enumerate() {
            for (name, v) in step.named() {
                out.serialize((name, t.to_string(), v))?;
            }
        }
        for (t, v) in self.pearson_by_t.iter().enumerate() {
            out.serialize(("pearson", t.to_string(), v))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file).map_err(|e| Error::format(path, e.to_string()))
    }
}
