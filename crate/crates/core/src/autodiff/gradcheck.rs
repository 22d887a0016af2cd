//! Central finite-difference verification of tape gradients.

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Relative error `|g_analytic - g_fd| / |g_fd|` per input (Euclidean norms).
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub rel_errors: Vec<f64>,
}

impl GradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Fixed, irregular cotangent used to reduce non-scalar outputs.
fn probe(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i as f64 + 1.0) * 0.754_877_666).sin() + 0.3).collect()
}

fn evaluate<F>(inputs: &[Tensor], f: &F, trainable: bool) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
        .collect();
    let out = f(&mut tape, &vars)?;
    let n = tape.value(out).numel();
    let out = if n == 1 { out } else { tape.weighted_sum(out, probe(n))? };
    Ok((tape, vars, out))
}

/// Compares reverse-mode gradients of `f` against central differences with
/// step `h` for every element of every input.
pub fn gradcheck<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, vars, out) = evaluate(inputs, &f, true)?;
    let grads = tape.backward(out)?;
    let mut rel_errors = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*v, inputs[i].numel());
        let mut diff2 = 0.0;
        let mut ref2 = 0.0;
        for k in 0..inputs[i].numel() {
            let x0 = inputs[i].data[k];
            work[i].data[k] = x0 + h;
            let (t, _, o) = evaluate(&work, &f, false)?;
            let fp = t.scalar(o);
            work[i].data[k] = x0 - h;
            let (t, _, o) = evaluate(&work, &f, false)?;
            let fm = t.scalar(o);
            work[i].data[k] = x0;
            let fd = (fp - fm) / (2.0 * h);
            diff2 += (analytic[k] - fd).powi(2);
            ref2 += fd * fd;
        }
        rel_errors.push(if ref2 > 0.0 {
            (diff2 / ref2).sqrt()
        } else {
            diff2.sqrt()
        });
    }
    Ok(GradCheck { rel_errors })
}
