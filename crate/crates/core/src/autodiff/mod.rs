//! Reverse-mode differentiation over tensor-valued operations.
//!
//! A [`Tape`] records every operation as a node holding its forward value.
//! Nodes are appended in evaluation order, so walking the node list
//! backwards is a reverse topological order and each node's adjoint rule
//! runs exactly once. Complex tensors are stored as interleaved `(re, im)`
//! pairs in a trailing axis of length 2; their gradients use the
//! `dL/dRe + i dL/dIm` convention.

mod gradcheck;
pub(crate) mod kernels;
mod ops;

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::operator::ModeSelection;
use crate::spectra::RadialSpec;
use crate::tensor_fft::{InterpMode, NormMode};

pub use gradcheck::{gradcheck, GradCheck};
pub use kernels::gelu;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Tensor {
    pub fn new(data: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::shape(format!(
                "{} elements do not fit shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self { data, shape })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Self {
            data: vec![0.0; shape.iter().product()],
            shape,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            data: vec![v],
            shape: vec![1],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Square(Var),
    Sqrt(Var),
    Gelu { x: Var, cdf: Vec<f64> },
    SumAll(Var),
    MeanAll(Var),
    MaxAll { x: Var, argmax: usize },
    WeightedSum { x: Var, weights: Rc<Vec<f64>> },
    Linear { x: Var, w: Var, b: Option<Var> },
    SoftGate { x: Var, scale: Var, bias: Var },
    Rfft2 { x: Var, norm: NormMode },
    Irfft2 { x: Var, ny: usize, norm: NormMode },
    ModeContract { x: Var, w: Var, modes: Rc<ModeSelection> },
    AvgPool { x: Var, kernel: usize, stride: usize },
    Interp { x: Var, mode: InterpMode },
    ExtractPatches { x: Var, p: usize },
    Reassemble { x: Var, p: usize },
    AbsSq(Var),
    Crop { x: Var },
    BinAggregate { x: Var, spec: Rc<RadialSpec> },
    MeanAxis0(Var),
    BandMeans { x: Var, ranges: [(usize, usize); 3] },
    NonDiff { name: &'static str },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records tensor operations for a single forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` for nodes that do not influence
/// the differentiated output or do not require gradients.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros of `len` when it was not reached.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    /// Differentiable input (parameter).
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push_raw(t, Op::Leaf, true)
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_raw(t, Op::Leaf, false)
    }

    fn push_raw(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let needs = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.push_raw(value, op, needs)
    }

    /// Records a value computed outside the tape from `parents`. It has no
    /// adjoint; backpropagating a gradient through it is an error.
    pub fn non_differentiable(&mut self, name: &'static str, parents: &[Var], value: Tensor) -> Var {
        self.push(
            value,
            Op::NonDiff { name },
            parents,
        )
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let n = self.nodes[output.0].value.numel();
        if n != 1 {
            return Err(Error::shape(format!(
                "backward() needs a scalar output, got {n} elements"
            )));
        }
        self.backward_with_seed(output, vec![1.0])
    }

    /// Reverse pass seeded with an arbitrary output cotangent.
    pub fn backward_with_seed(&self, output: Var, seed: Vec<f64>) -> Result<Gradients> {
        if seed.len() != self.nodes[output.0].value.numel() {
            return Err(Error::shape("seed length does not match output"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(contrib),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }
}
