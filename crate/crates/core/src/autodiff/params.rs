use std::collections::HashMap;

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::tensor::Tensor;

/// Ordered, named parameter collection. Order is the insertion order
/// and fixes the checkpoint layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Parameters {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        debug_assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).copied().map(move |i| &mut self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

/// Parameters inserted into a graph as leaves, by name.
pub struct Binding {
    ids: Vec<NodeId>,
    index: HashMap<String, usize>,
}

impl Binding {
    /// Inserts every parameter as a leaf. `trainable` controls whether
    /// gradients flow back to them.
    pub fn bind(graph: &mut Graph, params: &Parameters, trainable: bool) -> Self {
        let mut ids = Vec::with_capacity(params.len());
        let mut index = HashMap::with_capacity(params.len());
        for (name, tensor) in params.iter() {
            index.insert(name.to_string(), ids.len());
            ids.push(graph.leaf(tensor.clone(), trainable));
        }
        Binding { ids, index }
    }

    pub fn id(&self, name: &str) -> NodeId {
        self.ids[*self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))]
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.ids
    }

    /// Gradients in parameter order; zero tensors where the graph never
    /// reached the leaf.
    pub fn grads(&self, graph: &Graph, params: &Parameters) -> Vec<Tensor> {
        self.ids
            .iter()
            .zip(params.iter())
            .map(|(&id, (_, t))| {
                graph
                    .grad(id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.shape()))
            })
            .collect()
    }
}
