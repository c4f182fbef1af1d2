//! Group-rational KAN layer `L(x) = LIN(GR(x))`: channel `i` passes through
//! the rational function of group `⌊i / (I/k)⌋`, then a dense map mixes the
//! channels. Entrywise this is `y_j = Σ_i w_{i,j} F_{⌊i/I_k⌋}(x_i) + bias_j`.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use super::LinearParams;
use crate::activation::{rational_eval, rational_fit_init, ActivationKind, GroupRationalOp, RationalCoeffs, RationalFit, DEN_DEGREE, NUM_DEGREE};
use crate::autodiff::{Graph, NodeId};
use crate::error::invalid;
use crate::rng::{normal, seeded};
use crate::{Error, Result, Tensor};

/// Domain and sample count used to fit group rationals to a target
/// activation at initialization.
pub const FIT_DOMAIN: (f64, f64) = (-3.0, 3.0);
pub const FIT_SAMPLES: usize = 1000;
/// Monte Carlo draws and seed for the rational's second moment.
pub const GAIN_SAMPLES: usize = 100_000;
pub const GAIN_SEED: u64 = 0x5EED_6A1A;

#[derive(Debug, Clone, PartialEq)]
pub struct GrKanLayerParams {
    groups: usize,
    /// Numerator coefficients, shape `[k, m + 1]`.
    pub numerators: Tensor,
    /// Denominator coefficients, shape `[k, n]`.
    pub denominators: Tensor,
    pub linear: LinearParams,
}

impl GrKanLayerParams {
    pub fn new(rationals: &[RationalCoeffs], linear: LinearParams) -> Result<Self> {
        let k = rationals.len();
        let channels = linear.in_dim();
        if k == 0 || !channels.is_multiple_of(k) {
            return Err(invalid!("{k} rational groups do not divide {channels} input channels"));
        }
        let num: Vec<f64> = rationals.iter().flat_map(|r| r.numerator.iter().copied()).collect();
        let den: Vec<f64> = rationals.iter().flat_map(|r| r.denominator.iter().copied()).collect();
        Ok(Self {
            groups: k,
            numerators: Tensor::new(vec![k, NUM_DEGREE + 1], num)?,
            denominators: Tensor::new(vec![k, DEN_DEGREE], den)?,
            linear,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.linear.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.linear.out_dim()
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn group_width(&self) -> usize {
        self.in_dim() / self.groups
    }

    pub fn rational(&self, group: usize) -> RationalCoeffs {
        let n = &self.numerators.data()[group * (NUM_DEGREE + 1)..(group + 1) * (NUM_DEGREE + 1)];
        let d = &self.denominators.data()[group * DEN_DEGREE..(group + 1) * DEN_DEGREE];
        RationalCoeffs {
            numerator: n.to_vec(),
            denominator: d.to_vec(),
        }
    }

    /// Batched forward on `[N, in]`. Parameter nodes are
    /// `[numerators, denominators, weight, bias]`.
    pub fn forward_graph(g: &mut Graph, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        let y = g.apply(GroupRationalOp { channel_axis: 1 }, &[x, params[0], params[1]])?;
        LinearParams::forward_graph(g, params[2], params[3], y)
    }
}

pub fn grkan_forward(p: &GrKanLayerParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != p.in_dim() {
        return Err(Error::ShapeMismatch {
            op: "grkan_layer",
            lhs: p.linear.weight.shape().to_vec(),
            rhs: vec![x.len()],
        });
    }
    let mut g = Graph::new();
    let params = [
        g.constant(p.numerators.clone()),
        g.constant(p.denominators.clone()),
        g.constant(p.linear.weight.clone()),
        g.constant(p.linear.bias.clone()),
    ];
    let xn = g.constant(Tensor::new(vec![1, x.len()], x.to_vec())?);
    let y = GrKanLayerParams::forward_graph(&mut g, &params, xn)?;
    Ok(g.value(y).data().to_vec())
}

/// `E[F(z)²]` for `z ~ N(0, 1)` by Monte Carlo with a fixed seed.
pub fn rational_second_moment(c: &RationalCoeffs) -> f64 {
    let mut rng = seeded(GAIN_SEED);
    let s: f64 = (0..GAIN_SAMPLES).map(|_| rational_eval(c, normal(&mut rng)).powi(2)).sum();
    s / GAIN_SAMPLES as f64
}

/// Variance-preserving initialization from a precomputed fit: every group
/// starts at `fit`, weights are `N(0, 1/(α²·I))` with `α² = E[F(z)²]`, bias 0.
pub fn grkan_init_with_fit(in_dim: usize, out_dim: usize, groups: usize, fit: &RationalFit, seed: u64) -> Result<GrKanLayerParams> {
    if groups == 0 || !in_dim.is_multiple_of(groups) {
        return Err(invalid!("{groups} rational groups do not divide {in_dim} input channels"));
    }
    let alpha2 = rational_second_moment(&fit.coeffs);
    if !(alpha2 >= 1e-8) {
        return Err(invalid!("degenerate rational fit: second moment {alpha2:e}"));
    }
    let std = 1.0 / (alpha2 * in_dim as f64).sqrt();
    let mut rng = seeded(seed);
    let w: Vec<f64> = (0..in_dim * out_dim).map(|_| std * normal(&mut rng)).collect();
    let linear = LinearParams::new(Tensor::new(vec![out_dim, in_dim], w)?, Tensor::zeros(&[out_dim]))?;
    GrKanLayerParams::new(&vec![fit.coeffs.clone(); groups], linear)
}

pub fn grkan_init_variance_preserving(in_dim: usize, out_dim: usize, groups: usize, target: ActivationKind, seed: u64) -> Result<GrKanLayerParams> {
    let fit = rational_fit_init(target, FIT_DOMAIN.0, FIT_DOMAIN.1, FIT_SAMPLES)?;
    grkan_init_with_fit(in_dim, out_dim, groups, &fit, seed)
}
