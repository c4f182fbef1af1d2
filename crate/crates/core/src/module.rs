//! Trainable models as flat parameter lists plus a graph-building forward.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::{Result, Tensor};

/// One line of an itemized parameter table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub layer: String,
    pub name: String,
    pub count: usize,
}

/// A model whose parameters are an ordered list of tensors.
///
/// `forward` receives one graph node per parameter, in the order returned by
/// [`Module::parameters`].
pub trait Module {
    fn parameters(&self) -> Vec<&Tensor>;

    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    fn forward(&self, g: &mut Graph, params: &[NodeId], x: NodeId) -> Result<NodeId>;

    /// Regularization added to the training loss, if any.
    fn penalty(&self, _g: &mut Graph, _params: &[NodeId]) -> Result<Option<NodeId>> {
        Ok(None)
    }

    fn param_table(&self) -> Vec<ParamEntry>;

    fn param_count(&self) -> usize {
        self.parameters().iter().map(|t| t.numel()).sum()
    }
}

/// Registers every parameter of `m` as a graph leaf.
pub fn bind_params<M: Module + ?Sized>(g: &mut Graph, m: &M) -> Vec<NodeId> {
    m.parameters().into_iter().map(|t| g.param(t.clone())).collect()
}

/// Runs `m` on `x` without tracking gradients.
pub fn predict<M: Module + ?Sized>(m: &M, x: Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let params: Vec<NodeId> = m.parameters().into_iter().map(|t| g.constant(t.clone())).collect();
    let xn = g.constant(x);
    let y = m.forward(&mut g, &params, xn)?;
    Ok(g.value(y).clone())
}
