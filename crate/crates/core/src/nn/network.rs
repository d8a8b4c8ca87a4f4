//! Layer stacks with a forward tape for manual backpropagation.

use super::{adam_step, AdamState, LayerParams, ParamGrads, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Node<T = f32> {
    Layer(LayerParams<T>),
    /// Reinterpret each batch item with the given per-item shape.
    Reshape(Vec<usize>),
}

/// Inputs seen by each node during a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape<T = f32> {
    inputs: Vec<Tensor<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { inputs: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential<T = f32> {
    pub nodes: Vec<Node<T>>,
}

/// Per-node parameter gradients, aligned with `Sequential::nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32> {
    pub nodes: Vec<ParamGrads<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(net: &Sequential<T>) -> Self {
        Self {
            nodes: net
                .nodes
                .iter()
                .map(|n| match n {
                    Node::Layer(l) if l.kind.has_params() => ParamGrads::zeros_like(l),
                    _ => ParamGrads::empty(),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.nodes.len() != other.nodes.len() {
            return Err(Error::shape("gradient sets have different depths"));
        }
        for (a, b) in self.nodes.iter_mut().zip(&other.nodes) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    /// All gradient values in node order.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for g in &self.nodes {
            out.extend_from_slice(g.weights.data());
            out.extend_from_slice(g.bias.data());
        }
        out
    }
}

impl<T: Real> Sequential<T> {
    pub fn new(nodes: Vec<Node<T>>) -> Self {
        Self { nodes }
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerParams<T>> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Layer(l) => Some(l),
            Node::Reshape(_) => None,
        })
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut LayerParams<T>> {
        self.nodes.iter_mut().filter_map(|n| match n {
            Node::Layer(l) => Some(l),
            Node::Reshape(_) => None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(LayerParams::param_count).sum()
    }

    fn apply(node: &Node<T>, x: Tensor<T>) -> Result<Tensor<T>> {
        match node {
            Node::Layer(l) => l.forward(&x),
            Node::Reshape(item) => {
                let mut shape = vec![x.batch()];
                shape.extend_from_slice(item);
                x.reshape(shape)
            }
        }
    }

    /// Forward pass without recording a tape.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for node in &self.nodes {
            h = Self::apply(node, h)?;
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tape<T>)> {
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.nodes.len()),
        };
        let mut h = x.clone();
        for node in &self.nodes {
            tape.inputs.push(h.clone());
            h = Self::apply(node, h)?;
        }
        Ok((h, tape))
    }

    /// Backpropagate `upstream` through the recorded tape. Returns the
    /// gradient w.r.t. the network input and, when requested, per-node
    /// parameter gradients (otherwise every entry is empty).
    pub fn backward(
        &self,
        tape: &Tape<T>,
        upstream: &Tensor<T>,
        want_param_grads: bool,
    ) -> Result<(Tensor<T>, Gradients<T>)> {
        if tape.inputs.len() != self.nodes.len() {
            return Err(Error::State(format!(
                "missing forward cache: tape holds {} inputs for {} nodes",
                tape.inputs.len(),
                self.nodes.len()
            )));
        }
        let mut grads = vec![ParamGrads::empty(); self.nodes.len()];
        let mut g = upstream.clone();
        for (i, node) in self.nodes.iter().enumerate().rev() {
            let input = &tape.inputs[i];
            g = match node {
                Node::Layer(l) => {
                    let (dx, pg) = l.backward(input, &g, want_param_grads && l.kind.has_params())?;
                    grads[i] = pg;
                    dx
                }
                Node::Reshape(_) => g.reshape(input.shape().to_vec())?,
            };
        }
        Ok((g, Gradients { nodes: grads }))
    }
}

/// Adam states for every parameterized layer of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkAdam<T = f32> {
    /// `(weights, bias)` states per node; `None` for parameter-free nodes.
    pub states: Vec<Option<(AdamState<T>, AdamState<T>)>>,
}

impl<T: Real> NetworkAdam<T> {
    pub fn new(net: &Sequential<T>, lr: f64) -> Self {
        Self {
            states: net
                .nodes
                .iter()
                .map(|n| match n {
                    Node::Layer(l) if l.kind.has_params() => {
                        Some((AdamState::new(&l.weights, lr), AdamState::new(&l.bias, lr)))
                    }
                    _ => None,
                })
                .collect(),
        }
    }

    pub fn step(&mut self, net: &mut Sequential<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.nodes.len() != net.nodes.len() || self.states.len() != net.nodes.len() {
            return Err(Error::State("optimizer does not belong to this network".into()));
        }
        for ((node, g), state) in net.nodes.iter_mut().zip(&grads.nodes).zip(&mut self.states) {
            if let (Node::Layer(l), Some((sw, sb))) = (node, state) {
                adam_step(&mut l.weights, &g.weights, sw)?;
                adam_step(&mut l.bias, &g.bias, sb)?;
            }
        }
        Ok(())
    }
}
