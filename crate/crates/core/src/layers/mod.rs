//! Layers and the sequential container used by every toy model.

mod grkan;
mod kan;
mod linear;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;

pub use grkan::{
    grkan_forward, grkan_init_variance_preserving, grkan_init_with_fit, rational_second_moment, GrKanLayerParams,
    FIT_DOMAIN, FIT_SAMPLES, GAIN_SAMPLES, GAIN_SEED,
};
pub use kan::{kan_edge_eval, kan_layer_forward, kan_layer_init, KanLayerParams, SPLINE_INIT_SCALE};
pub use linear::{linear_forward, LinearParams};

use crate::activation::{ActivationKind, AplOp, FixedOp, GroupRationalOp, PReluOp, RationalCoeffs, DEN_DEGREE, NUM_DEGREE, PRELU_INIT};
use crate::autodiff::{Graph, NodeId};
use crate::module::{Module, ParamEntry};
use crate::rng::Rng;
use crate::{Result, Tensor};

/// Elementwise activation applied over channel axis 1 (rationals) or the
/// last axis (APL).
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Fixed(ActivationKind),
    PRelu { slope: Tensor },
    /// Grouped safe rationals; a single group is a PAU.
    Rational { numerators: Tensor, denominators: Tensor },
    Apl { slopes: Tensor, offsets: Tensor, lambda: f64 },
}

impl Activation {
    pub fn prelu() -> Self {
        Activation::PRelu {
            slope: Tensor::scalar(PRELU_INIT),
        }
    }

    /// `groups` copies of `init`.
    pub fn rational(init: &RationalCoeffs, groups: usize) -> Self {
        let num: Vec<f64> = (0..groups).flat_map(|_| init.numerator.iter().copied()).collect();
        let den: Vec<f64> = (0..groups).flat_map(|_| init.denominator.iter().copied()).collect();
        Activation::Rational {
            numerators: Tensor::new(vec![groups, NUM_DEGREE + 1], num).expect("shape"),
            denominators: Tensor::new(vec![groups, DEN_DEGREE], den).expect("shape"),
        }
    }

    /// Slopes `U(-0.1, 0.1)` and hinge locations `U(-1, 1)`.
    pub fn apl(units: usize, hinges: usize, lambda: f64, rng: &mut Rng) -> Self {
        let n = units * hinges;
        let slopes = (0..n).map(|_| rng.random_range(-0.1..0.1)).collect();
        let offsets = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Activation::Apl {
            slopes: Tensor::new(vec![units, hinges], slopes).expect("shape"),
            offsets: Tensor::new(vec![units, hinges], offsets).expect("shape"),
            lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Linear(LinearParams),
    Kan(KanLayerParams),
    GrKan(GrKanLayerParams),
    Activation(Activation),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Linear(_) => "linear",
            Layer::Kan(_) => "kan",
            Layer::GrKan(_) => "grkan",
            Layer::Activation(Activation::Fixed(_)) => "activation",
            Layer::Activation(Activation::PRelu { .. }) => "prelu",
            Layer::Activation(Activation::Rational { .. }) => "rational",
            Layer::Activation(Activation::Apl { .. }) => "apl",
        }
    }

    pub fn named_parameters(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            Layer::Linear(p) => vec![("weight", &p.weight), ("bias", &p.bias)],
            Layer::Kan(p) => vec![
                ("base_weight", &p.base_weight),
                ("spline_coef", &p.spline_coef),
                ("spline_scale", &p.spline_scale),
            ],
            Layer::GrKan(p) => vec![
                ("numerators", &p.numerators),
                ("denominators", &p.denominators),
                ("weight", &p.linear.weight),
                ("bias", &p.linear.bias),
            ],
            Layer::Activation(a) => match a {
                Activation::Fixed(_) => vec![],
                Activation::PRelu { slope } => vec![("slope", slope)],
                Activation::Rational {
                    numerators,
                    denominators,
                } => vec![("numerators", numerators), ("denominators", denominators)],
                Activation::Apl { slopes, offsets, .. } => vec![("slopes", slopes), ("offsets", offsets)],
            },
        }
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Linear(p) => vec![&mut p.weight, &mut p.bias],
            Layer::Kan(p) => vec![&mut p.base_weight, &mut p.spline_coef, &mut p.spline_scale],
            Layer::GrKan(p) => vec![
                &mut p.numerators,
                &mut p.denominators,
                &mut p.linear.weight,
                &mut p.linear.bias,
            ],
            Layer::Activation(a) => match a {
                Activation::Fixed(_) => vec![],
                Activation::PRelu { slope } => vec![slope],
                Activation::Rational {
                    numerators,
                    denominators,
                } => vec![numerators, denominators],
                Activation::Apl { slopes, offsets, .. } => vec![slopes, offsets],
            },
        }
    }

    /// Forward on a batch; `params` are this layer's nodes in
    /// [`Layer::named_parameters`] order.
    pub fn forward(&self, g: &mut Graph, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        match self {
            Layer::Linear(_) => LinearParams::forward_graph(g, params[0], params[1], x),
            Layer::Kan(p) => p.forward_graph(g, params, x),
            Layer::GrKan(_) => GrKanLayerParams::forward_graph(g, params, x),
            Layer::Activation(a) => match a {
                Activation::Fixed(kind) => g.apply(FixedOp(*kind), &[x]),
                Activation::PRelu { .. } => g.apply(PReluOp, &[x, params[0]]),
                Activation::Rational { .. } => g.apply(GroupRationalOp { channel_axis: 1 }, &[x, params[0], params[1]]),
                Activation::Apl { .. } => g.apply(AplOp, &[x, params[0], params[1]]),
            },
        }
    }

    fn penalty(&self, g: &mut Graph, params: &[NodeId]) -> Result<Option<NodeId>> {
        let Layer::Activation(Activation::Apl { lambda, .. }) = self else {
            return Ok(None);
        };
        let a = g.mul(params[0], params[0])?;
        let a = g.sum(a);
        let b = g.mul(params[1], params[1])?;
        let b = g.sum(b);
        let s = g.add(a, b)?;
        Ok(Some(g.scale(s, *lambda)))
    }
}

/// Layers applied in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    fn split<'a>(&self, params: &'a [NodeId]) -> Vec<&'a [NodeId]> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for l in &self.layers {
            let n = l.named_parameters().len();
            out.push(&params[at..at + n]);
            at += n;
        }
        out
    }
}

impl Module for Sequential {
    fn parameters(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| l.named_parameters().into_iter().map(|(_, t)| t))
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.parameters_mut()).collect()
    }

    fn forward(&self, g: &mut Graph, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for (l, p) in self.layers.iter().zip(self.split(params)) {
            h = l.forward(g, p, h)?;
        }
        Ok(h)
    }

    fn penalty(&self, g: &mut Graph, params: &[NodeId]) -> Result<Option<NodeId>> {
        let mut total: Option<NodeId> = None;
        for (l, p) in self.layers.iter().zip(self.split(params)) {
            if let Some(term) = l.penalty(g, p)? {
                total = Some(match total {
                    Some(t) => g.add(t, term)?,
                    None => term,
                });
            }
        }
        Ok(total)
    }

    fn param_table(&self) -> Vec<ParamEntry> {
        let mut rows = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let layer: String = format!("{i}:{}", l.kind());
            for (name, t) in l.named_parameters() {
                rows.push(ParamEntry {
                    layer: layer.clone(),
                    name: name.into(),
                    count: t.numel(),
                });
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests;
