#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;

use crate::autodiff::{Graph, NodeId};
use crate::rng::Rng;
use crate::{Error, Result, Tensor};

/// Dense affine map `y = W x + bias` with `W` of shape `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearParams {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let ok = weight.shape().len() == 2 && bias.shape() == [weight.shape()[0]];
        if !ok {
            return Err(Error::ShapeMismatch {
                op: "linear",
                lhs: weight.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        Ok(Self { weight, bias })
    }

    /// Uniform `±1/√in` for weights and bias.
    pub fn init_uniform(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
        let weight = Tensor::new(vec![out_dim, in_dim], draw(out_dim * in_dim)).expect("shape");
        let bias = Tensor::vector(draw(out_dim));
        Self { weight, bias }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Batched forward on `x` of shape `[N, in]`.
    pub fn forward_graph(g: &mut Graph, weight: NodeId, bias: NodeId, x: NodeId) -> Result<NodeId> {
        let wt = g.transpose(weight)?;
        let y = g.matmul(x, wt)?;
        g.add_bias(y, bias)
    }
}

/// `W x + bias` for a single input vector.
pub fn linear_forward(p: &LinearParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != p.in_dim() {
        return Err(Error::ShapeMismatch {
            op: "linear",
            lhs: p.weight.shape().to_vec(),
            rhs: vec![x.len()],
        });
    }
    let mut g = Graph::new();
    let w = g.constant(p.weight.clone());
    let b = g.constant(p.bias.clone());
    let xn = g.constant(Tensor::new(vec![1, x.len()], x.to_vec())?);
    let y = LinearParams::forward_graph(&mut g, w, b, xn)?;
    Ok(g.value(y).data().to_vec())
}
