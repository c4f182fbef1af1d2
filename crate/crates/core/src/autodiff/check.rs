//! Central-difference gradient oracle.

use alloc::vec::Vec;

use super::{Graph, NodeId};
use crate::{Error, Result, Tensor};

/// Largest `|analytic − central| / max(1, |central|)` over all coordinates.
///
/// `f` is evaluated at `x ± eps·eᵢ` for every coordinate `i`.
pub fn finite_diff_check<F>(mut f: F, analytic: &[f64], x: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(crate::error::invalid!("eps must be positive, got {eps}"));
    }
    if analytic.len() != x.len() {
        return Err(Error::ShapeMismatch {
            op: "finite_diff_check",
            lhs: alloc::vec![analytic.len()],
            rhs: alloc::vec![x.len()],
        });
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe);
        probe[i] = x[i] - eps;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(alloc::format!(
                "f is not finite around coordinate {i}"
            )));
        }
        let central = (up - down) / (2.0 * eps);
        let err = (analytic[i] - central).abs() / central.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Checks every gradient of a graph-built scalar function against central
/// differences. `build` receives one parameter node per entry of `inputs`.
pub fn check_graph_gradients<B>(inputs: &[Tensor], eps: f64, build: B) -> Result<f64>
where
    B: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let root = build(&mut g, &ids)?;
    g.backward(root)?;
    let analytic: Vec<f64> = ids.iter().flat_map(|&id| g.grad(id).data().to_vec()).collect();
    let x: Vec<f64> = inputs.iter().flat_map(|t| t.data().to_vec()).collect();

    let eval = |flat: &[f64]| -> f64 {
        let mut g = Graph::new();
        let mut offset = 0;
        let ids: Vec<NodeId> = inputs
            .iter()
            .map(|t| {
                let n = t.numel();
                let v = Tensor::new(t.shape().to_vec(), flat[offset..offset + n].to_vec())
                    .expect("shape preserved");
                offset += n;
                g.constant(v)
            })
            .collect();
        match build(&mut g, &ids) {
            Ok(root) => g.value(root).data()[0],
            Err(_) => f64::NAN,
        }
    };
    finite_diff_check(eval, &analytic, &x, eps)
}
