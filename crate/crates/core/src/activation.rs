//! Fixed and learnable activations.
//!
//! Besides the scalar evaluators, each activation has a graph kernel so the
//! training loop can differentiate through it without expanding it into
//! primitive nodes.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sign, Function};
use crate::error::invalid;
use crate::{Error, Result, Tensor};

/// Numerator degree of every rational activation.
pub const NUM_DEGREE: usize = 5;
/// Denominator degree of every rational activation.
pub const DEN_DEGREE: usize = 4;
/// Trainable scalars in one rational function.
pub const RATIONAL_PARAMS: usize = NUM_DEGREE + 1 + DEN_DEGREE;
/// Negative slope of the fixed leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;
/// Initial PReLU slope.
pub const PRELU_INIT: f64 = 0.25;
/// Hinges per APL unit.
pub const APL_HINGES: usize = 5;
/// Default APL L2 penalty weight.
pub const APL_PENALTY: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Identity,
    Relu,
    LeakyRelu,
    Gelu,
    Swish,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.044_715;

fn gelu_inner_scale() -> f64 {
    (2.0 / PI).sqrt()
}

pub fn fixed_eval(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Identity => x,
        ActivationKind::Relu => x.max(0.0),
        ActivationKind::LeakyRelu => {
            if x >= 0.0 {
                x
            } else {
                LEAKY_SLOPE * x
            }
        }
        ActivationKind::Gelu => {
            let u = gelu_inner_scale() * (x + GELU_C * x * x * x);
            0.5 * x * (1.0 + u.tanh())
        }
        ActivationKind::Swish => x * sigmoid(x),
    }
}

/// Derivative of [`fixed_eval`]; kinks take the right-hand slope except ReLU
/// at zero, which takes 0.
pub fn fixed_derivative(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Identity => 1.0,
        ActivationKind::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        ActivationKind::LeakyRelu => {
            if x >= 0.0 {
                1.0
            } else {
                LEAKY_SLOPE
            }
        }
        ActivationKind::Gelu => {
            let s = gelu_inner_scale();
            let u = s * (x + GELU_C * x * x * x);
            let t = u.tanh();
            0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * s * (1.0 + 3.0 * GELU_C * x * x)
        }
        ActivationKind::Swish => {
            let s = sigmoid(x);
            s + x * s * (1.0 - s)
        }
    }
}

pub fn prelu_eval(a: f64, x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        a * x
    }
}

/// Safe rational function `P(x) / (1 + |Q(x)|)` with
/// `P = Σ_{p=0..m} a_p xᵖ` and `Q = Σ_{q=1..n} b_q x^q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalCoeffs {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

impl RationalCoeffs {
    pub fn new(numerator: Vec<f64>, denominator: Vec<f64>) -> Result<Self> {
        if numerator.len() != NUM_DEGREE + 1 || denominator.len() != DEN_DEGREE {
            return Err(invalid!(
                "rational needs {} numerator and {} denominator coefficients, got {} and {}",
                NUM_DEGREE + 1,
                DEN_DEGREE,
                numerator.len(),
                denominator.len()
            ));
        }
        if !numerator.iter().chain(&denominator).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("rational coefficient".into()));
        }
        Ok(Self {
            numerator,
            denominator,
        })
    }

    pub fn identity() -> Self {
        let mut numerator = vec![0.0; NUM_DEGREE + 1];
        numerator[1] = 1.0;
        Self {
            numerator,
            denominator: vec![0.0; DEN_DEGREE],
        }
    }

    pub fn zero() -> Self {
        Self {
            numerator: vec![0.0; NUM_DEGREE + 1],
            denominator: vec![0.0; DEN_DEGREE],
        }
    }

    /// The ten coefficients numerator-first.
    pub fn flat(&self) -> Vec<f64> {
        self.numerator.iter().chain(&self.denominator).copied().collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        rational_eval(self, x)
    }
}

/// Numerator, numerator derivative, `Q` and `Q'` at `x`.
#[inline]
fn rational_parts(num: &[f64], den: &[f64], x: f64) -> (f64, f64, f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &a in num.iter().rev() {
        dp = dp * x + p;
        p = p * x + a;
    }
    // Q has no constant term: Q = x·(b1 + b2 x + …)
    let mut r = 0.0;
    let mut dr = 0.0;
    for &b in den.iter().rev() {
        dr = dr * x + r;
        r = r * x + b;
    }
    (p, dp, x * r, r + x * dr)
}

pub fn rational_eval(c: &RationalCoeffs, x: f64) -> f64 {
    let (p, _, q, _) = rational_parts(&c.numerator, &c.denominator, x);
    p / (1.0 + q.abs())
}

/// Value and partial derivatives of a rational at `x`, written into the
/// coefficient slices: `(y, dy/dx)`.
#[inline]
fn rational_grads(num: &[f64], den: &[f64], x: f64, dnum: &mut [f64], dden: &mut [f64]) -> (f64, f64) {
    let (p, dp, q, dq) = rational_parts(num, den, x);
    let s = sign(q);
    let d = 1.0 + q.abs();
    let inv = 1.0 / d;
    let y = p * inv;
    let mut xp = 1.0;
    for g in dnum.iter_mut() {
        *g = xp * inv;
        xp *= x;
    }
    // ∂y/∂b_q = -P·sign(Q)·x^q / D²
    let common = -y * s * inv;
    let mut xq = x;
    for g in dden.iter_mut() {
        *g = common * xq;
        xq *= x;
    }
    (y, dp * inv + common * dq)
}

/// Result of [`rational_fit_init`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalFit {
    pub coeffs: RationalCoeffs,
    pub max_abs_error: f64,
    pub refine_steps: usize,
}

const REFINE_MAX_STEPS: usize = 5000;
const REFINE_CHECK_EVERY: usize = 100;
const REFINE_MIN_GAIN: f64 = 1e-6;
const REFINE_LR: f64 = 1e-3;
/// Starting denominator for the refinement stage. A zero denominator has a
/// zero subgradient everywhere and would never move.
const REFINE_DEN_SEED: f64 = 1e-3;

/// Fits a rational to `target` on `samples` uniform points of `[lo, hi]`.
///
/// Stage one solves the polynomial least-squares problem for the numerator
/// with the denominator at zero. Stage two refines numerator and denominator
/// jointly with Adam on the mean squared error, stopping once the max
/// absolute error gains less than 1e-6 between consecutive 100-step
/// checkpoints or after 5000 steps.
/// The coefficients with the lowest max absolute error are returned.
pub fn rational_fit_init(target: ActivationKind, lo: f64, hi: f64, samples: usize) -> Result<RationalFit> {
    if samples < 10 * (NUM_DEGREE + DEN_DEGREE) {
        return Err(invalid!(
            "rational fit needs at least {} samples, got {samples}",
            10 * (NUM_DEGREE + DEN_DEGREE)
        ));
    }
    if !(lo < hi) {
        return Err(invalid!("rational fit needs lo < hi"));
    }
    let xs: Vec<f64> = (0..samples)
        .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| fixed_eval(target, x)).collect();

    let cols = NUM_DEGREE + 1;
    let vander: Vec<f64> = xs
        .iter()
        .flat_map(|&x| (0..cols).map(move |p| x.powi(p as i32)))
        .collect();
    let numerator = crate::linalg::lstsq(&vander, samples, cols, &ys)?;
    let max_err = |c: &RationalCoeffs| {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (rational_eval(c, x) - y).abs())
            .fold(0.0, f64::max)
    };
    let stage1 = RationalCoeffs {
        numerator,
        denominator: vec![0.0; DEN_DEGREE],
    };
    let mut best_err = max_err(&stage1);
    let mut best = stage1.clone();

    let mut theta: Vec<f64> = stage1.numerator.clone();
    theta.extend(core::iter::repeat_n(REFINE_DEN_SEED, DEN_DEGREE));
    let mut m = [0.0; RATIONAL_PARAMS];
    let mut v = [0.0; RATIONAL_PARAMS];
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut grad = [0.0; RATIONAL_PARAMS];
    let mut dn = [0.0; NUM_DEGREE + 1];
    let mut dd = [0.0; DEN_DEGREE];
    let mut last_check = f64::INFINITY;
    let mut steps = 0;
    for step in 1..=REFINE_MAX_STEPS {
        steps = step;
        grad.fill(0.0);
        let (num, den) = theta.split_at(NUM_DEGREE + 1);
        for (&x, &y) in xs.iter().zip(&ys) {
            let (f, _) = rational_grads(num, den, x, &mut dn, &mut dd);
            let r = 2.0 * (f - y) / samples as f64;
            for (g, d) in grad.iter_mut().zip(dn.iter().chain(&dd)) {
                *g += r * d;
            }
        }
        let bc1 = 1.0 - b1.powi(step as i32);
        let bc2 = 1.0 - b2.powi(step as i32);
        for i in 0..RATIONAL_PARAMS {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            theta[i] -= REFINE_LR * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
        }
        if step % REFINE_CHECK_EVERY == 0 {
            let cand = RationalCoeffs {
                numerator: theta[..NUM_DEGREE + 1].to_vec(),
                denominator: theta[NUM_DEGREE + 1..].to_vec(),
            };
            let e = max_err(&cand);
            if e < best_err {
                best_err = e;
                best = cand;
            }
            if last_check - e < REFINE_MIN_GAIN {
                break;
            }
            last_check = e;
        }
    }
    Ok(RationalFit {
        coeffs: best,
        max_abs_error: best_err,
        refine_steps: steps,
    })
}

/// Adaptive piecewise-linear activation parameters for one activation site:
/// `hinges` slope/offset pairs per unit, stored unit-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AplParams {
    pub units: usize,
    pub hinges: usize,
    pub slopes: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl AplParams {
    pub fn zeros(units: usize, hinges: usize) -> Self {
        Self {
            units,
            hinges,
            slopes: vec![0.0; units * hinges],
            offsets: vec![0.0; units * hinges],
        }
    }

    pub fn eval(&self, unit: usize, x: f64) -> f64 {
        let r = unit * self.hinges..(unit + 1) * self.hinges;
        apl_eval(&self.slopes[r.clone()], &self.offsets[r], x)
    }
}

/// `max(0, x) + Σ_s a_s · max(0, b_s − x)`.
pub fn apl_eval(slopes: &[f64], offsets: &[f64], x: f64) -> f64 {
    x.max(0.0)
        + slopes
            .iter()
            .zip(offsets)
            .map(|(a, b)| a * (b - x).max(0.0))
            .sum::<f64>()
}

/// `λ · Σ (a² + b²)` over every unit and hinge.
pub fn apl_l2_penalty(p: &AplParams, lambda: f64) -> f64 {
    lambda * p.slopes.iter().chain(&p.offsets).map(|v| v * v).sum::<f64>()
}

/// Graph kernel for a fixed activation.
#[derive(Debug, Clone, Copy)]
pub struct FixedOp(pub ActivationKind);

impl Function for FixedOp {
    fn name(&self) -> &'static str {
        "fixed_activation"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        Ok(inputs[0].map(|x| fixed_eval(self.0, x)))
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &[f64], _needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let gx = inputs[0]
            .data()
            .iter()
            .zip(grad)
            .map(|(&x, g)| g * fixed_derivative(self.0, x))
            .collect();
        vec![Some(gx)]
    }
}

/// Graph kernel: inputs `(x, a)` with a one-element slope `a`.
#[derive(Debug, Clone, Copy)]
pub struct PReluOp;

impl Function for PReluOp {
    fn name(&self) -> &'static str {
        "prelu"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let a = inputs[1].item().ok_or_else(|| Error::ShapeMismatch {
            op: "prelu",
            lhs: inputs[0].shape().to_vec(),
            rhs: inputs[1].shape().to_vec(),
        })?;
        Ok(inputs[0].map(|x| prelu_eval(a, x)))
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let a = inputs[1].data()[0];
        let x = inputs[0].data();
        let gx = needs[0].then(|| {
            x.iter()
                .zip(grad)
                .map(|(&x, g)| if x >= 0.0 { *g } else { a * g })
                .collect()
        });
        let ga = needs[1].then(|| {
            vec![x.iter().zip(grad).map(|(&x, g)| if x < 0.0 { x * g } else { 0.0 }).sum()]
        });
        vec![gx, ga]
    }
}

/// Graph kernel for grouped safe rationals.
///
/// Inputs are `(x, numerators [k, m+1], denominators [k, n])`. Channels run
/// along `channel_axis` of `x`; channel `c` uses group `c / (C / k)`.
#[derive(Debug, Clone, Copy)]
pub struct GroupRationalOp {
    pub channel_axis: usize,
}

struct GroupLayout {
    outer: usize,
    channels: usize,
    inner: usize,
    width: usize,
}

impl GroupRationalOp {
    fn layout(&self, x: &Tensor, num: &Tensor, den: &Tensor) -> Result<GroupLayout> {
        let shape = x.shape();
        let bad = |rhs: &Tensor| Error::ShapeMismatch {
            op: "group_rational",
            lhs: shape.to_vec(),
            rhs: rhs.shape().to_vec(),
        };
        if self.channel_axis >= shape.len() {
            return Err(bad(num));
        }
        let &[k, nn] = num.shape() else { return Err(bad(num)) };
        if nn != NUM_DEGREE + 1 {
            return Err(bad(num));
        }
        if den.shape() != [k, DEN_DEGREE] {
            return Err(bad(den));
        }
        let channels = shape[self.channel_axis];
        if k == 0 || !channels.is_multiple_of(k) {
            return Err(invalid!("{k} rational groups do not divide {channels} channels"));
        }
        Ok(GroupLayout {
            outer: shape[..self.channel_axis].iter().product(),
            channels,
            inner: shape[self.channel_axis + 1..].iter().product(),
            width: channels / k,
        })
    }
}

impl Function for GroupRationalOp {
    fn name(&self) -> &'static str {
        "group_rational"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let (x, num, den) = (inputs[0], inputs[1], inputs[2]);
        let l = self.layout(x, num, den)?;
        let mut out = x.clone();
        let data = out.data_mut();
        for o in 0..l.outer {
            for c in 0..l.channels {
                let g = c / l.width;
                let a = &num.data()[g * (NUM_DEGREE + 1)..(g + 1) * (NUM_DEGREE + 1)];
                let b = &den.data()[g * DEN_DEGREE..(g + 1) * DEN_DEGREE];
                let base = (o * l.channels + c) * l.inner;
                for v in &mut data[base..base + l.inner] {
                    let (p, _, q, _) = rational_parts(a, b, *v);
                    *v = p / (1.0 + q.abs());
                }
            }
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let (x, num, den) = (inputs[0], inputs[1], inputs[2]);
        let l = self.layout(x, num, den).expect("validated in forward");
        let k = l.channels / l.width;
        let mut gx = vec![0.0; x.numel()];
        let mut gn = vec![0.0; k * (NUM_DEGREE + 1)];
        let mut gd = vec![0.0; k * DEN_DEGREE];
        let mut dn = [0.0; NUM_DEGREE + 1];
        let mut dd = [0.0; DEN_DEGREE];
        for o in 0..l.outer {
            for c in 0..l.channels {
                let g = c / l.width;
                let a = &num.data()[g * (NUM_DEGREE + 1)..(g + 1) * (NUM_DEGREE + 1)];
                let b = &den.data()[g * DEN_DEGREE..(g + 1) * DEN_DEGREE];
                let base = (o * l.channels + c) * l.inner;
                let gn_g = &mut gn[g * (NUM_DEGREE + 1)..(g + 1) * (NUM_DEGREE + 1)];
                let gd_g = &mut gd[g * DEN_DEGREE..(g + 1) * DEN_DEGREE];
                for idx in base..base + l.inner {
                    let up = grad[idx];
                    let (_, dx) = rational_grads(a, b, x.data()[idx], &mut dn, &mut dd);
                    gx[idx] = up * dx;
                    for (acc, d) in gn_g.iter_mut().zip(&dn) {
                        *acc += up * d;
                    }
                    for (acc, d) in gd_g.iter_mut().zip(&dd) {
                        *acc += up * d;
                    }
                }
            }
        }
        vec![needs[0].then_some(gx), needs[1].then_some(gn), needs[2].then_some(gd)]
    }
}

/// Graph kernel for APL over the last axis of `x`: inputs
/// `(x [.., C], slopes [C, S], offsets [C, S])`.
#[derive(Debug, Clone, Copy)]
pub struct AplOp;

impl Function for AplOp {
    fn name(&self) -> &'static str {
        "apl"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let (x, a, b) = (inputs[0], inputs[1], inputs[2]);
        let c = x.shape().last().copied().unwrap_or(0);
        if a.shape().len() != 2 || a.shape()[0] != c || a.shape() != b.shape() {
            return Err(Error::ShapeMismatch {
                op: "apl",
                lhs: x.shape().to_vec(),
                rhs: a.shape().to_vec(),
            });
        }
        let s = a.shape()[1];
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(c) {
            for (u, v) in row.iter_mut().enumerate() {
                *v = apl_eval(&a.data()[u * s..(u + 1) * s], &b.data()[u * s..(u + 1) * s], *v);
            }
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let (x, a, b) = (inputs[0], inputs[1], inputs[2]);
        let (c, s) = (a.shape()[0], a.shape()[1]);
        let mut gx = vec![0.0; x.numel()];
        let mut ga = vec![0.0; c * s];
        let mut gb = vec![0.0; c * s];
        for (idx, (&xv, &up)) in x.data().iter().zip(grad).enumerate() {
            let u = idx % c;
            let mut d = if xv > 0.0 { 1.0 } else { 0.0 };
            for h in 0..s {
                let j = u * s + h;
                let hinge = b.data()[j] - xv;
                if hinge > 0.0 {
                    d -= a.data()[j];
                    ga[j] += up * hinge;
                    gb[j] += up * a.data()[j];
                }
            }
            gx[idx] = up * d;
        }
        vec![needs[0].then_some(gx), needs[1].then_some(ga), needs[2].then_some(gb)]
    }
}
