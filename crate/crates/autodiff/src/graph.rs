use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::ops::{Op, OpKind};
use crate::tensor::Tensor;

/// Handle to a node recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only, define-by-run computation graph.
///
/// Values are computed eagerly when a node is recorded. Every backward rule
/// is itself expressed through recorded ops, so gradients obtained with
/// `build_graph = true` can be differentiated again.
pub struct Graph {
    nodes: Vec<Node>,
    grad_enabled: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    /// Nodes recorded while disabled never require gradients.
    pub fn set_grad_enabled(&mut self, enabled: bool) {
        self.grad_enabled = enabled;
    }

    /// A leaf that gradients flow into.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        let requires_grad = self.grad_enabled;
        self.push_leaf(value, requires_grad)
    }

    /// A leaf treated as a constant when building higher-order graphs.
    /// Gradients with respect to it can still be requested.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value,
            requires_grad,
        });
        id
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    pub fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Rebinds a leaf; call [`Graph::forward`] to refresh dependent values.
    pub fn set_leaf(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        let node = self
            .nodes
            .get_mut(id.0)
            .ok_or(AutodiffError::UnknownNode(id))?;
        if !matches!(node.op, Op::Leaf) {
            return Err(AutodiffError::NotALeaf(id));
        }
        if node.value.shape() != value.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "set_leaf",
                node: Some(id),
                detail: format!("{:?} vs {:?}", node.value.shape(), value.shape()),
            });
        }
        node.value = value;
        Ok(())
    }

    /// Re-evaluates every ancestor of `root` from the current leaf bindings
    /// and returns the value at `root`.
    pub fn forward(&mut self, root: NodeId) -> Result<Tensor> {
        if root.0 >= self.nodes.len() {
            return Err(AutodiffError::UnknownNode(root));
        }
        let mut needed = vec![false; root.0 + 1];
        needed[root.0] = true;
        for i in (0..=root.0).rev() {
            if needed[i] {
                for inp in &self.nodes[i].inputs {
                    needed[inp.0] = true;
                }
            }
        }
        for i in 0..=root.0 {
            if !needed[i] || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let value = self.eval_node(i)?;
            self.nodes[i].value = value;
        }
        Ok(self.nodes[root.0].value.clone())
    }

    fn eval_node(&self, i: usize) -> Result<Tensor> {
        let node = &self.nodes[i];
        let inputs: Vec<&Tensor> = node.inputs.iter().map(|id| &self.nodes[id.0].value).collect();
        let value = node
            .op
            .eval(&inputs)
            .map_err(|detail| AutodiffError::ShapeMismatch {
                op: node.op.name(),
                node: Some(NodeId(i)),
                detail,
            })?;
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite {
                op: node.op.name(),
                node: NodeId(i),
            });
        }
        Ok(value)
    }

    fn push(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        let id = NodeId(self.nodes.len());
        for inp in inputs {
            if inp.0 >= self.nodes.len() {
                return Err(AutodiffError::UnknownNode(*inp));
            }
        }
        let value = {
            let values: Vec<&Tensor> = inputs.iter().map(|i| &self.nodes[i.0].value).collect();
            op.eval(&values)
                .map_err(|detail| AutodiffError::ShapeMismatch {
                    op: op.name(),
                    node: Some(id),
                    detail: format!(
                        "{detail} (inputs {:?})",
                        inputs.iter().map(|i| i.0).collect::<Vec<_>>()
                    ),
                })?
        };
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: op.name(), node: id });
        }
        let requires_grad = self.grad_enabled
            && !matches!(op, Op::Step)
            && inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            inputs: inputs.to_vec(),
            value,
            requires_grad,
        });
        Ok(id)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub, &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.push(Op::Scale(factor), &[a])
    }

    pub fn add_scalar(&mut self, a: NodeId, offset: f64) -> Result<NodeId> {
        self.push(Op::AddScalar(offset), &[a])
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul, &[a, b])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Transpose, &[a])
    }

    /// Valid, stride-1 convolution of `[N,C,H,W]` with `[O,C,KH,KW]`.
    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId) -> Result<NodeId> {
        self.push(Op::Conv2d, &[input, kernel])
    }

    fn conv2d_input_grad(&mut self, grad: NodeId, kernel: NodeId, h: usize, w: usize) -> Result<NodeId> {
        self.push(Op::Conv2dInputGrad { h, w }, &[grad, kernel])
    }

    fn conv2d_weight_grad(&mut self, input: NodeId, grad: NodeId, kh: usize, kw: usize) -> Result<NodeId> {
        self.push(Op::Conv2dWeightGrad { kh, kw }, &[input, grad])
    }

    /// Adds `bias[j]` to every element whose index along `axis` is `j`.
    pub fn add_bias(&mut self, input: NodeId, bias: NodeId, axis: usize) -> Result<NodeId> {
        self.push(Op::AddBias { axis }, &[input, bias])
    }

    pub fn sum_to_axis(&mut self, input: NodeId, axis: usize) -> Result<NodeId> {
        self.push(Op::SumToAxis { axis }, &[input])
    }

    pub fn broadcast_axis(&mut self, input: NodeId, axis: usize, shape: Vec<usize>) -> Result<NodeId> {
        self.push(Op::BroadcastAxis { axis, shape }, &[input])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Relu, &[a])
    }

    /// Heaviside step (`1` where positive); has zero derivative everywhere.
    pub fn step(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Step, &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid, &[a])
    }

    pub fn avgpool2d(&mut self, a: NodeId, k: usize) -> Result<NodeId> {
        self.push(Op::AvgPool2d { k }, &[a])
    }

    fn avgpool2d_grad(&mut self, a: NodeId, k: usize, h: usize, w: usize) -> Result<NodeId> {
        self.push(Op::AvgPool2dGrad { k, h, w }, &[a])
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        self.push(Op::Reshape(shape), &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum, &[a])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Mean, &[a])
    }

    /// Broadcasts a one-element tensor to `shape`.
    pub fn expand(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        self.push(Op::Expand(shape), &[a])
    }

    /// Row maxima of a `[N,K]` tensor.
    pub fn max_last_axis(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::MaxLastAxis, &[a])
    }

    /// `out[r] = a[r, indices[r]]` for a `[N,K]` tensor.
    pub fn pick_last_axis(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        self.push(Op::PickLastAxis(Rc::from(indices)), &[a])
    }

    fn scatter_last_axis(&mut self, a: NodeId, indices: Rc<[usize]>, width: usize) -> Result<NodeId> {
        self.push(Op::ScatterLastAxis { indices, width }, &[a])
    }

    /// Softmax over the trailing axis.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Softmax, &[a])
    }

    fn row_sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::RowSum, &[a])
    }

    /// Mean cross-entropy of `[N,K]` logits against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        self.push(Op::SoftmaxCrossEntropy(Rc::from(labels)), &[logits])
    }

    /// Mean squared difference.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mse, &[a, b])
    }

    pub fn gather_rows(&mut self, a: NodeId, rows: &[usize]) -> Result<NodeId> {
        self.push(Op::GatherRows(Rc::from(rows)), &[a])
    }

    fn scatter_rows(&mut self, a: NodeId, rows: Rc<[usize]>, n: usize) -> Result<NodeId> {
        self.push(Op::ScatterRows { rows, n }, &[a])
    }

    /// Reverse-mode gradients of the scalar `root` with respect to `wrt`.
    ///
    /// Returned ids are nodes of this graph, in the order of `wrt`. A node
    /// that `root` does not depend on gets a zero constant of its shape.
    /// With `build_graph` the gradient nodes are recorded as differentiable,
    /// so a second `backward` through them yields second derivatives.
    pub fn backward(&mut self, root: NodeId, wrt: &[NodeId], build_graph: bool) -> Result<Vec<NodeId>> {
        if root.0 >= self.nodes.len() {
            return Err(AutodiffError::UnknownNode(root));
        }
        if let Some(bad) = wrt.iter().find(|w| w.0 >= self.nodes.len()) {
            return Err(AutodiffError::UnknownNode(*bad));
        }
        let root_shape = self.shape(root).to_vec();
        if root_shape.iter().product::<usize>() != 1 {
            return Err(AutodiffError::RootNotScalar(root_shape));
        }

        let n = root.0 + 1;
        // leads[i]: some wrt node is reachable from i through differentiable edges.
        let mut leads = vec![false; n];
        for w in wrt {
            if w.0 < n {
                leads[w.0] = true;
            }
        }
        for i in 0..n {
            if leads[i] || matches!(self.nodes[i].op, Op::Step) {
                continue;
            }
            leads[i] = self.nodes[i].inputs.iter().any(|inp| leads[inp.0]);
        }

        let saved = self.grad_enabled;
        self.grad_enabled = build_graph;
        let result = self.propagate(root, &root_shape, &leads, wrt);
        self.grad_enabled = saved;
        result
    }

    fn propagate(&mut self, root: NodeId, root_shape: &[usize], leads: &[bool], wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        let n = leads.len();
        let mut grads: Vec<Option<NodeId>> = vec![None; n];
        if leads[root.0] {
            grads[root.0] = Some(self.constant(Tensor::ones(root_shape.to_vec())));
        }
        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let need: Vec<bool> = self.nodes[i].inputs.iter().map(|inp| leads[inp.0]).collect();
            if !need.iter().any(|&b| b) {
                continue;
            }
            let input_grads = self.backward_rule(NodeId(i), g, &need)?;
            let inputs = self.nodes[i].inputs.clone();
            for ((inp, gi), needed) in inputs.into_iter().zip(input_grads).zip(need) {
                let Some(gi) = gi else { continue };
                if !needed {
                    continue;
                }
                grads[inp.0] = Some(match grads[inp.0] {
                    None => gi,
                    Some(acc) => self.add(acc, gi)?,
                });
            }
        }
        wrt.iter()
            .map(|w| match grads.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let shape = self.shape(*w).to_vec();
                    Ok(self.constant(Tensor::zeros(shape)))
                }
            })
            .collect()
    }

    /// Gradients of `node`'s inputs given the upstream gradient `g`,
    /// expressed as new graph nodes. Only inputs flagged in `need` are built.
    fn backward_rule(&mut self, node: NodeId, g: NodeId, need: &[bool]) -> Result<Vec<Option<NodeId>>> {
        let op = self.nodes[node.0].op.clone();
        let inputs = self.nodes[node.0].inputs.clone();
        let want = |k: usize| need.get(k).copied().unwrap_or(false);
        let in_shape = |graph: &Self, k: usize| graph.shape(inputs[k]).to_vec();

        let grads = match op {
            Op::Leaf => vec![],
            Op::Add => vec![Some(g), Some(g)],
            Op::Sub => {
                let gb = if want(1) { Some(self.scale(g, -1.0)?) } else { None };
                vec![Some(g), gb]
            }
            Op::Mul => {
                let ga = if want(0) { Some(self.mul(g, inputs[1])?) } else { None };
                let gb = if want(1) { Some(self.mul(g, inputs[0])?) } else { None };
                vec![ga, gb]
            }
            Op::Scale(c) => vec![Some(self.scale(g, c)?)],
            Op::AddScalar(_) => vec![Some(g)],
            Op::MatMul => {
                let ga = if want(0) {
                    let bt = self.transpose(inputs[1])?;
                    Some(self.matmul(g, bt)?)
                } else {
                    None
                };
                let gb = if want(1) {
                    let at = self.transpose(inputs[0])?;
                    Some(self.matmul(at, g)?)
                } else {
                    None
                };
                vec![ga, gb]
            }
            Op::Transpose => vec![Some(self.transpose(g)?)],
            Op::Conv2d => {
                let xs = in_shape(self, 0);
                let ks = in_shape(self, 1);
                let gx = if want(0) {
                    Some(self.conv2d_input_grad(g, inputs[1], xs[2], xs[3])?)
                } else {
                    None
                };
                let gk = if want(1) {
                    Some(self.conv2d_weight_grad(inputs[0], g, ks[2], ks[3])?)
                } else {
                    None
                };
                vec![gx, gk]
            }
            Op::Conv2dInputGrad { .. } => {
                // out = conv2d_input_grad(dy, k); bilinear in (dy, k).
                let ks = in_shape(self, 1);
                let gdy = if want(0) { Some(self.conv2d(g, inputs[1])?) } else { None };
                let gk = if want(1) {
                    Some(self.conv2d_weight_grad(g, inputs[0], ks[2], ks[3])?)
                } else {
                    None
                };
                vec![gdy, gk]
            }
            Op::Conv2dWeightGrad { .. } => {
                // out = conv2d_weight_grad(x, dy); bilinear in (x, dy).
                let xs = in_shape(self, 0);
                let gx = if want(0) {
                    Some(self.conv2d_input_grad(inputs[1], g, xs[2], xs[3])?)
                } else {
                    None
                };
                let gdy = if want(1) { Some(self.conv2d(inputs[0], g)?) } else { None };
                vec![gx, gdy]
            }
            Op::AddBias { axis } => {
                let gb = if want(1) { Some(self.sum_to_axis(g, axis)?) } else { None };
                vec![Some(g), gb]
            }
            Op::SumToAxis { axis } => {
                let shape = in_shape(self, 0);
                vec![Some(self.broadcast_axis(g, axis, shape)?)]
            }
            Op::BroadcastAxis { axis, .. } => vec![Some(self.sum_to_axis(g, axis)?)],
            Op::Relu => {
                let mask = self.step(inputs[0])?;
                vec![Some(self.mul(g, mask)?)]
            }
            Op::Step => vec![None],
            Op::Sigmoid => {
                let y = node;
                let yy = self.mul(y, y)?;
                let dy = self.sub(y, yy)?;
                vec![Some(self.mul(g, dy)?)]
            }
            Op::AvgPool2d { k } => {
                let xs = in_shape(self, 0);
                vec![Some(self.avgpool2d_grad(g, k, xs[2], xs[3])?)]
            }
            Op::AvgPool2dGrad { k, .. } => vec![Some(self.avgpool2d(g, k)?)],
            Op::Reshape(_) => {
                let shape = in_shape(self, 0);
                vec![Some(self.reshape(g, shape)?)]
            }
            Op::Sum => {
                let shape = in_shape(self, 0);
                vec![Some(self.expand(g, shape)?)]
            }
            Op::Mean => {
                let shape = in_shape(self, 0);
                let count = shape.iter().product::<usize>() as f64;
                let e = self.expand(g, shape)?;
                vec![Some(self.scale(e, 1.0 / count)?)]
            }
            Op::Expand(_) => {
                let shape = in_shape(self, 0);
                let s = self.sum(g)?;
                let s = if shape == [1] { s } else { self.reshape(s, shape)? };
                vec![Some(s)]
            }
            Op::MaxLastAxis => {
                let x = self.value(inputs[0]);
                let k = x.shape()[1];
                let argmax: Rc<[usize]> = x
                    .data()
                    .chunks(k)
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                            .0
                    })
                    .collect();
                vec![Some(self.scatter_last_axis(g, argmax, k)?)]
            }
            Op::PickLastAxis(indices) => {
                let k = in_shape(self, 0)[1];
                vec![Some(self.scatter_last_axis(g, indices, k)?)]
            }
            Op::ScatterLastAxis { indices, .. } => {
                vec![Some(self.push(Op::PickLastAxis(indices), &[g])?)]
            }
            Op::Softmax => {
                // dx = s*g - s*rowsum(s*g)
                let s = node;
                let sg = self.mul(s, g)?;
                let rs = self.row_sum(sg)?;
                let srs = self.mul(s, rs)?;
                vec![Some(self.sub(sg, srs)?)]
            }
            Op::RowSum => vec![Some(self.row_sum(g)?)],
            Op::SoftmaxCrossEntropy(labels) => {
                let shape = in_shape(self, 0);
                let (rows, k) = (shape[0], shape[1]);
                let mut onehot = Tensor::zeros(shape.clone());
                for (r, &y) in labels.iter().enumerate() {
                    onehot.data_mut()[r * k + y] = 1.0;
                }
                let onehot = self.constant(onehot);
                let p = self.softmax(inputs[0])?;
                let d = self.sub(p, onehot)?;
                let ge = self.expand(g, shape)?;
                let gd = self.mul(d, ge)?;
                vec![Some(self.scale(gd, 1.0 / rows as f64)?)]
            }
            Op::Mse => {
                let shape = in_shape(self, 0);
                let count = shape.iter().product::<usize>() as f64;
                let d = self.sub(inputs[0], inputs[1])?;
                let ge = self.expand(g, shape)?;
                let gd = self.mul(d, ge)?;
                let ga = self.scale(gd, 2.0 / count)?;
                let gb = if want(1) { Some(self.scale(ga, -1.0)?) } else { None };
                vec![Some(ga), gb]
            }
            Op::GatherRows(rows) => {
                let n = in_shape(self, 0)[0];
                vec![Some(self.scatter_rows(g, rows, n)?)]
            }
            Op::ScatterRows { rows, .. } => vec![Some(self.push(Op::GatherRows(rows), &[g])?)],
        };
        Ok(grads)
    }
}
