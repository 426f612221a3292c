use lsx_autodiff::{Graph, NodeId, Tensor};
use rand::Rng;

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.push((name.into(), value));
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn push_uniform(&mut self, name: &str, shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.push(name, Tensor::new(shape, data).expect("shape sized from data"));
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

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().map(Tensor::numel).sum()
    }

    /// Records every parameter as a leaf: differentiable when `trainable`,
    /// constant otherwise.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<NodeId> {
        self.tensors()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect()
    }

    /// True when every value has the same bit pattern as in `other`.
    pub fn bit_identical(&self, other: &ParamSet) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((na, a), (nb, b))| {
                na == nb
                    && a.shape() == b.shape()
                    && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}
