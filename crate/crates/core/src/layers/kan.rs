//! KAN layer: every (input, output) edge carries
//! `φ(x) = w1·swish(x) + w2·Σ_b n_b B_b(x)`, and each output sums its edges.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;

use crate::activation::{fixed_eval, ActivationKind, FixedOp};
use crate::autodiff::{Function, Graph, NodeId};
use crate::rng::{normal, seeded};
use crate::spline::{BsplineBasisOp, KnotGrid};
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct KanLayerParams {
    pub grid: KnotGrid,
    /// `w1`, shape `[out, in]`.
    pub base_weight: Tensor,
    /// Control points `n`, shape `[out, in, G + κ]`.
    pub spline_coef: Tensor,
    /// `w2`, shape `[out, in]`.
    pub spline_scale: Tensor,
}

impl KanLayerParams {
    pub fn new(grid: KnotGrid, base_weight: Tensor, spline_coef: Tensor, spline_scale: Tensor) -> Result<Self> {
        let &[j, i] = base_weight.shape() else {
            return Err(invalid_shape(&base_weight, &spline_scale));
        };
        if spline_scale.shape() != [j, i] {
            return Err(invalid_shape(&base_weight, &spline_scale));
        }
        if spline_coef.shape() != [j, i, grid.num_basis()] {
            return Err(invalid_shape(&base_weight, &spline_coef));
        }
        Ok(Self {
            grid,
            base_weight,
            spline_coef,
            spline_scale,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.base_weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.base_weight.shape()[0]
    }

    /// Control points of edge `input → output`.
    pub fn edge_coef(&self, input: usize, output: usize) -> &[f64] {
        let nb = self.grid.num_basis();
        let start = (output * self.in_dim() + input) * nb;
        &self.spline_coef.data()[start..start + nb]
    }

    /// Batched forward on `x` of shape `[N, in]`. Parameter nodes are
    /// `[base_weight, spline_coef, spline_scale]`.
    pub fn forward_graph(&self, g: &mut Graph, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        let n = g.value(x).shape()[0];
        let (i, nb) = (self.in_dim(), self.grid.num_basis());
        let act = g.apply(FixedOp(ActivationKind::Swish), &[x])?;
        let w1t = g.transpose(params[0])?;
        let base = g.matmul(act, w1t)?;
        let basis = g.apply(BsplineBasisOp { grid: self.grid.clone() }, &[x])?;
        let basis = g.reshape(basis, &[n, i * nb])?;
        let w = g.apply(EdgeScaleOp, &[params[1], params[2]])?;
        let wt = g.transpose(w)?;
        let spline = g.matmul(basis, wt)?;
        g.add(base, spline)
    }
}

fn invalid_shape(a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op: "kan_layer",
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

/// Edge function `input → output` at `x`.
pub fn kan_edge_eval(p: &KanLayerParams, input: usize, output: usize, x: f64) -> f64 {
    let e = output * p.in_dim() + input;
    let spline: f64 = p
        .edge_coef(input, output)
        .iter()
        .zip(p.grid.basis(x))
        .map(|(n, b)| n * b)
        .sum();
    p.base_weight.data()[e] * fixed_eval(ActivationKind::Swish, x) + p.spline_scale.data()[e] * spline
}

/// Layer output for a single input vector: `y_j = Σ_i φ_{i,j}(x_i)`.
pub fn kan_layer_forward(p: &KanLayerParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != p.in_dim() {
        return Err(Error::ShapeMismatch {
            op: "kan_layer",
            lhs: p.base_weight.shape().to_vec(),
            rhs: vec![x.len()],
        });
    }
    let mut g = Graph::new();
    let params = [
        g.constant(p.base_weight.clone()),
        g.constant(p.spline_coef.clone()),
        g.constant(p.spline_scale.clone()),
    ];
    let xn = g.constant(Tensor::new(vec![1, x.len()], x.to_vec())?);
    let y = p.forward_graph(&mut g, &params, xn)?;
    Ok(g.value(y).data().to_vec())
}

/// `E[swish(z)²]` for `z ~ N(0, 1)` by composite Simpson quadrature.
pub(crate) fn swish_second_moment() -> f64 {
    let (lo, hi, n) = (-12.0, 12.0, 4800);
    let h = (hi - lo) / n as f64;
    let dens = 1.0 / (2.0 * core::f64::consts::PI).sqrt();
    let f = |z: f64| fixed_eval(ActivationKind::Swish, z).powi(2) * dens * (-0.5 * z * z).exp();
    let mut s = f(lo) + f(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + k as f64 * h);
    }
    s * h / 3.0
}

/// Spline control points are drawn from `N(0, (0.1 / (G + κ))²)`.
pub const SPLINE_INIT_SCALE: f64 = 0.1;

/// Base weights are Kaiming-uniform with the variance-preserving gain of
/// swish (`bound = gain·√(3 / in)`), control points small Gaussian noise and
/// spline scales one.
pub fn kan_layer_init(in_dim: usize, out_dim: usize, grid: &KnotGrid, seed: u64) -> KanLayerParams {
    let mut rng = seeded(seed);
    let gain = 1.0 / swish_second_moment().sqrt();
    let bound = gain * (3.0 / in_dim as f64).sqrt();
    let edges = in_dim * out_dim;
    let nb = grid.num_basis();
    let base: Vec<f64> = (0..edges).map(|_| rng.random_range(-bound..bound)).collect();
    let std = SPLINE_INIT_SCALE / nb as f64;
    let coef: Vec<f64> = (0..edges * nb).map(|_| std * normal(&mut rng)).collect();
    KanLayerParams {
        grid: grid.clone(),
        base_weight: Tensor::new(vec![out_dim, in_dim], base).expect("shape"),
        spline_coef: Tensor::new(vec![out_dim, in_dim, nb], coef).expect("shape"),
        spline_scale: Tensor::full(&[out_dim, in_dim], 1.0),
    }
}

/// `(coef [J, I, B], scale [J, I]) → [J, I·B]` with each edge's control
/// points multiplied by its scale.
#[derive(Debug, Clone, Copy)]
struct EdgeScaleOp;

impl Function for EdgeScaleOp {
    fn name(&self) -> &'static str {
        "kan_edge_scale"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let (coef, scale) = (inputs[0], inputs[1]);
        let &[j, i, nb] = coef.shape() else {
            return Err(invalid_shape(coef, scale));
        };
        if scale.shape() != [j, i] {
            return Err(invalid_shape(coef, scale));
        }
        let mut out = coef.data().to_vec();
        for (chunk, s) in out.chunks_mut(nb).zip(scale.data()) {
            for v in chunk {
                *v *= s;
            }
        }
        Tensor::new(vec![j, i * nb], out)
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let (coef, scale) = (inputs[0], inputs[1]);
        let nb = coef.shape()[2];
        let gc = needs[0].then(|| {
            grad.chunks(nb)
                .zip(scale.data())
                .flat_map(|(g, s)| g.iter().map(move |v| v * s))
                .collect()
        });
        let gs = needs[1].then(|| {
            grad.chunks(nb)
                .zip(coef.data().chunks(nb))
                .map(|(g, c)| g.iter().zip(c).map(|(a, b)| a * b).sum())
                .collect()
        });
        vec![gc, gs]
    }
}
