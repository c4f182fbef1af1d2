//! Losses, Adam/AdamW and the full-batch training loop.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::error::invalid;
use crate::module::{bind_params, Module};
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
    L1,
}

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "loss",
            lhs: vec![pred.len()],
            rhs: vec![target.len()],
        });
    }
    Ok(())
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

pub fn l1_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

impl Loss {
    pub fn eval(self, pred: &[f64], target: &[f64]) -> Result<f64> {
        match self {
            Loss::Mse => mse_loss(pred, target),
            Loss::L1 => l1_loss(pred, target),
        }
    }

    /// Scalar loss node; `pred` and `target` must have equal shapes.
    pub fn graph(self, g: &mut Graph, pred: NodeId, target: NodeId) -> Result<NodeId> {
        if g.value(pred).shape() != g.value(target).shape() {
            return Err(Error::ShapeMismatch {
                op: "loss",
                lhs: g.value(pred).shape().to_vec(),
                rhs: g.value(target).shape().to_vec(),
            });
        }
        let d = g.sub(pred, target)?;
        let e = match self {
            Loss::Mse => g.mul(d, d)?,
            Loss::L1 => g.abs(d),
        };
        Ok(g.mean(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64 },
    AdamW { beta1: f64, beta2: f64, weight_decay: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

impl Optimizer {
    fn betas(&self) -> (f64, f64) {
        match *self {
            Optimizer::Adam { beta1, beta2 } | Optimizer::AdamW { beta1, beta2, .. } => (beta1, beta2),
        }
    }

    fn weight_decay(&self) -> f64 {
        match *self {
            Optimizer::Adam { .. } => 0.0,
            Optimizer::AdamW { weight_decay, .. } => weight_decay,
        }
    }
}

/// Stop once the best loss seen improves by less than `rel_tol` (relative)
/// over `window` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub window: usize,
    pub rel_tol: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            window: 10_000,
            rel_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub eps: f64,
    pub seed: u64,
    pub loss: Loss,
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 300_000,
            lr: 1e-3,
            optimizer: Optimizer::default(),
            eps: 1e-8,
            seed: 0,
            loss: Loss::Mse,
            early_stop: None,
        }
    }
}

/// Loss above which a run counts as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;
/// Checkpoints per run, excluding the one at step 0.
pub const CHECKPOINTS: usize = 100;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.optimizer.betas();
        if self.steps == 0 {
            return Err(invalid!("steps must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid!("lr must be positive, got {}", self.lr));
        }
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(invalid!("betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if !(self.eps > 0.0) {
            return Err(invalid!("eps must be positive"));
        }
        if let Some(es) = self.early_stop {
            if es.window == 0 || !(es.rel_tol >= 0.0) {
                return Err(invalid!("early stop needs a positive window and non-negative tolerance"));
            }
        }
        Ok(())
    }

    pub fn checkpoint_every(&self) -> usize {
        (self.steps / CHECKPOINTS).max(1)
    }
}

/// Adam moments for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let m: Vec<Vec<f64>> = sizes.into_iter().map(|n| vec![0.0; n]).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    pub fn for_params(params: &[&Tensor]) -> Self {
        Self::new(params.iter().map(|p| p.numel()))
    }
}

/// One Adam (or AdamW) update of every parameter.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [&mut Tensor],
    grads: &[&[f64]],
    opt: &Optimizer,
    lr: f64,
    eps: f64,
) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != params.len() {
        return Err(invalid!(
            "adam state tracks {} tensors, got {} params and {} grads",
            state.m.len(),
            params.len(),
            grads.len()
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.numel() != state.m[i].len() || g.len() != p.numel() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: vec![g.len()],
            });
        }
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter {i} at index {j}")));
        }
    }
    let (b1, b2) = opt.betas();
    let wd = opt.weight_decay();
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((theta, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            if wd != 0.0 {
                *theta -= lr * wd * *theta;
            }
            *theta -= lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    /// Training objective, including any regularization penalty.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StopReason {
    Completed,
    EarlyStop,
    Diverged { step: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
    /// Gradient steps actually taken.
    pub steps_run: usize,
    /// Data loss of the final parameters, without penalty; `None` after
    /// divergence.
    pub final_loss: Option<f64>,
    pub stop: StopReason,
}

impl RunTrace {
    pub fn diverged(&self) -> bool {
        matches!(self.stop, StopReason::Diverged { .. })
    }
}

struct Evaluated {
    objective: f64,
    data: f64,
    grads: Option<Vec<Vec<f64>>>,
}

fn evaluate<M: Module + ?Sized>(model: &M, x: &Tensor, y: &Tensor, loss: Loss, with_grad: bool) -> Result<Evaluated> {
    let mut g = Graph::new();
    let ids = bind_params(&mut g, model);
    let xn = g.constant(x.clone());
    let yn = g.constant(y.clone());
    let pred = model.forward(&mut g, &ids, xn)?;
    let data = loss.graph(&mut g, pred, yn)?;
    let total = match model.penalty(&mut g, &ids)? {
        Some(p) => g.add(data, p)?,
        None => data,
    };
    let objective = g.value(total).data()[0];
    let data = g.value(data).data()[0];
    let grads = if with_grad && objective.is_finite() {
        g.backward(total)?;
        Some(ids.iter().map(|&id| g.grad(id).data().to_vec()).collect())
    } else {
        None
    };
    Ok(Evaluated { objective, data, grads })
}

/// Data loss of `model` on `(x, y)`, without penalty.
pub fn evaluate_loss<M: Module + ?Sized>(model: &M, x: &Tensor, y: &Tensor, loss: Loss) -> Result<f64> {
    Ok(evaluate(model, x, y, loss, false)?.data)
}

fn diverged(loss: f64) -> Option<String> {
    if !loss.is_finite() {
        Some(format!("non-finite loss {loss}"))
    } else if loss > DIVERGENCE_LOSS {
        Some(format!("loss {loss:e} exceeds {DIVERGENCE_LOSS:e}"))
    } else {
        None
    }
}

/// Full-batch training of `model` on inputs `x` and targets `y`.
///
/// Checkpoints are recorded at step 0, every `steps / 100` steps and at the
/// last step taken. A divergent loss or gradient ends the run early with
/// [`StopReason::Diverged`]; the trace up to that point is kept.
pub fn train_run<M: Module + ?Sized>(model: &mut M, x: &Tensor, y: &Tensor, cfg: &TrainConfig) -> Result<RunTrace> {
    cfg.validate()?;
    let every = cfg.checkpoint_every();
    let mut state = AdamState::for_params(&model.parameters());
    let mut trace = RunTrace {
        seed: cfg.seed,
        checkpoints: Vec::with_capacity(CHECKPOINTS + 2),
        steps_run: 0,
        final_loss: None,
        stop: StopReason::Completed,
    };
    let mut best = f64::INFINITY;
    let mut best_at_window = f64::INFINITY;
    for step in 0..cfg.steps {
        let ev = evaluate(model, x, y, cfg.loss, true)?;
        if let Some(reason) = diverged(ev.objective) {
            if ev.objective.is_finite() {
                trace.checkpoints.push(Checkpoint {
                    step,
                    loss: ev.objective,
                });
            }
            trace.stop = StopReason::Diverged { step, reason };
            return Ok(trace);
        }
        if step % every == 0 {
            trace.checkpoints.push(Checkpoint {
                step,
                loss: ev.objective,
            });
        }
        best = best.min(ev.objective);
        if let Some(es) = cfg.early_stop {
            if step > 0 && step % es.window == 0 {
                if best > best_at_window * (1.0 - es.rel_tol) {
                    trace.stop = StopReason::EarlyStop;
                    break;
                }
                best_at_window = best;
            } else if step == 0 {
                best_at_window = best;
            }
        }
        let grads = ev.grads.expect("finite objective has gradients");
        let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
        let mut params = model.parameters_mut();
        if let Err(e) = adam_step(&mut state, &mut params, &grad_refs, &cfg.optimizer, cfg.lr, cfg.eps) {
            trace.stop = StopReason::Diverged {
                step,
                reason: format!("{e}"),
            };
            return Ok(trace);
        }
        trace.steps_run = step + 1;
    }
    let ev = evaluate(model, x, y, cfg.loss, false)?;
    if let Some(reason) = diverged(ev.objective) {
        trace.stop = StopReason::Diverged {
            step: trace.steps_run,
            reason,
        };
        return Ok(trace);
    }
    if trace.checkpoints.last().map(|c| c.step) != Some(trace.steps_run) {
        trace.checkpoints.push(Checkpoint {
            step: trace.steps_run,
            loss: ev.objective,
        });
    }
    trace.final_loss = Some(ev.data);
    Ok(trace)
}
