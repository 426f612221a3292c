use lsx_autodiff::{Graph, NodeId, Tensor};

use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::seed;

/// A differentiable classifier producing `[batch, K]` logits.
pub trait Classifier: Send + Sync {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    /// Shape of a single input, without the batch axis.
    fn input_shape(&self) -> &[usize];
    fn num_classes(&self) -> usize;
    /// Records the forward pass for input node `x` using bound parameters.
    fn forward(&self, g: &mut Graph, params: &[NodeId], x: NodeId) -> Result<NodeId>;
    /// Draws fresh parameters from the initialisation distribution.
    fn reinit(&mut self, seed: u64);

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.rank() != self.input_shape().len() + 1 || &batch.shape()[1..] != self.input_shape() {
            return Err(Error::Shape(format!(
                "batch {:?} for input shape {:?}",
                batch.shape(),
                self.input_shape()
            )));
        }
        Ok(())
    }

    /// Logits for a batch, without recording anything differentiable.
    fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        let p = self.params().bind(&mut g, false);
        let x = g.constant(batch.clone());
        let y = self.forward(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }

    /// [`predict`](Self::predict) over row chunks of at most `chunk` samples.
    fn predict_batched(&self, inputs: &Tensor, chunk: usize) -> Result<Tensor> {
        let n = inputs.shape()[0];
        let parts = (0..n)
            .step_by(chunk.max(1))
            .map(|s| self.predict(&inputs.slice_rows(s, (s + chunk).min(n))))
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(n * self.num_classes());
        for p in parts {
            data.extend_from_slice(p.data());
        }
        Ok(Tensor::new(vec![n, self.num_classes()], data)?)
    }
}

/// Row-wise argmax of `[N,K]` logits; ties go to the lower class.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CnnSpec {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub kernel: usize,
    pub pool: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl CnnSpec {
    /// Default geometry for 28x28 digit images.
    pub fn mnist(in_channels: usize, classes: usize) -> Self {
        Self {
            in_channels,
            height: 28,
            width: 28,
            conv1: 8,
            conv2: 16,
            kernel: 5,
            pool: 2,
            hidden: 128,
            classes,
        }
    }

    fn pooled(&self) -> (usize, usize) {
        let shrink = 2 * (self.kernel - 1);
        ((self.height - shrink) / self.pool, (self.width - shrink) / self.pool)
    }

    pub fn flat_features(&self) -> usize {
        let (ph, pw) = self.pooled();
        self.conv2 * ph * pw
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.in_channels,
            self.conv1,
            self.conv2,
            self.kernel,
            self.pool,
            self.hidden,
            self.classes,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidSpec(format!("zero dimension in {self:?}")));
        }
        let shrink = 2 * (self.kernel - 1);
        if self.height <= shrink || self.width <= shrink {
            return Err(Error::InvalidSpec(format!(
                "{}x{} input too small for two {}x{} convolutions",
                self.height, self.width, self.kernel, self.kernel
            )));
        }
        let (ph, pw) = self.pooled();
        if ph == 0 || pw == 0 {
            return Err(Error::InvalidSpec(format!("pool {} larger than feature map", self.pool)));
        }
        Ok(())
    }
}

/// conv -> relu -> conv -> relu -> avgpool -> linear -> relu -> linear.
#[derive(Debug, Clone)]
pub struct CnnClassifier {
    spec: CnnSpec,
    input_shape: [usize; 3],
    params: ParamSet,
}

impl CnnClassifier {
    pub fn new(spec: CnnSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut model = Self {
            spec,
            input_shape: [spec.in_channels, spec.height, spec.width],
            params: ParamSet::new(),
        };
        model.reinit(seed);
        Ok(model)
    }

    pub fn spec(&self) -> &CnnSpec {
        &self.spec
    }

    /// Penultimate activations (after the first linear layer and relu).
    pub fn features(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        let p = self.params.bind(&mut g, false);
        let x = g.constant(batch.clone());
        let h = self.trunk(&mut g, &p, x)?;
        Ok(g.value(h).clone())
    }

    fn trunk(&self, g: &mut Graph, p: &[NodeId], x: NodeId) -> Result<NodeId> {
        let batch = g.shape(x)[0];
        let h = g.conv2d(x, p[0])?;
        let h = g.add_bias(h, p[1], 1)?;
        let h = g.relu(h)?;
        let h = g.conv2d(h, p[2])?;
        let h = g.add_bias(h, p[3], 1)?;
        let h = g.relu(h)?;
        let h = g.avgpool2d(h, self.spec.pool)?;
        let h = g.reshape(h, vec![batch, self.spec.flat_features()])?;
        let h = g.matmul(h, p[4])?;
        let h = g.add_bias(h, p[5], 1)?;
        Ok(g.relu(h)?)
    }

    /// Replaces the parameters; names and shapes must match.
    pub fn with_params(spec: CnnSpec, params: ParamSet) -> Result<Self> {
        let model = Self::new(spec, 0)?;
        check_layout(&model.params, &params)?;
        Ok(Self { params, ..model })
    }
}

pub(crate) fn check_layout(expected: &ParamSet, got: &ParamSet) -> Result<()> {
    let same = expected.len() == got.len()
        && expected
            .iter()
            .zip(got.iter())
            .all(|((na, a), (nb, b))| na == nb && a.shape() == b.shape());
    if same {
        Ok(())
    } else {
        Err(Error::Shape("parameter layout does not match the model".into()))
    }
}

impl Classifier for CnnClassifier {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    fn num_classes(&self) -> usize {
        self.spec.classes
    }

    fn reinit(&mut self, seed: u64) {
        let s = &self.spec;
        let mut rng = seed::rng(seed, "init/cnn");
        let k2 = s.kernel * s.kernel;
        let mut p = ParamSet::new();
        p.push_uniform("conv1.weight", vec![s.conv1, s.in_channels, s.kernel, s.kernel], s.in_channels * k2, &mut rng);
        p.push_uniform("conv1.bias", vec![s.conv1], s.in_channels * k2, &mut rng);
        p.push_uniform("conv2.weight", vec![s.conv2, s.conv1, s.kernel, s.kernel], s.conv1 * k2, &mut rng);
        p.push_uniform("conv2.bias", vec![s.conv2], s.conv1 * k2, &mut rng);
        let flat = s.flat_features();
        p.push_uniform("fc1.weight", vec![flat, s.hidden], flat, &mut rng);
        p.push_uniform("fc1.bias", vec![s.hidden], flat, &mut rng);
        p.push_uniform("fc2.weight", vec![s.hidden, s.classes], s.hidden, &mut rng);
        p.push_uniform("fc2.bias", vec![s.classes], s.hidden, &mut rng);
        self.params = p;
    }

    fn forward(&self, g: &mut Graph, p: &[NodeId], x: NodeId) -> Result<NodeId> {
        let h = self.trunk(g, p, x)?;
        let h = g.matmul(h, p[6])?;
        Ok(g.add_bias(h, p[7], 1)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpSpec {
    pub slots: usize,
    pub attributes: usize,
    /// Hidden width; 0 gives a single linear layer.
    pub hidden: usize,
    pub classes: usize,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 || self.attributes == 0 || self.classes == 0 {
            return Err(Error::InvalidSpec(format!("zero dimension in {self:?}")));
        }
        Ok(())
    }
}

/// Predictor head over a flattened concept matrix.
#[derive(Debug, Clone)]
pub struct ConceptPredictor {
    spec: MlpSpec,
    input_shape: [usize; 2],
    params: ParamSet,
}

impl ConceptPredictor {
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut model = Self {
            spec,
            input_shape: [spec.slots, spec.attributes],
            params: ParamSet::new(),
        };
        model.reinit(seed);
        Ok(model)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn with_params(spec: MlpSpec, params: ParamSet) -> Result<Self> {
        let model = Self::new(spec, 0)?;
        check_layout(&model.params, &params)?;
        Ok(Self { params, ..model })
    }
}

impl Classifier for ConceptPredictor {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    fn num_classes(&self) -> usize {
        self.spec.classes
    }

    fn reinit(&mut self, seed: u64) {
        let s = &self.spec;
        let mut rng = seed::rng(seed, "init/mlp");
        let inputs = s.slots * s.attributes;
        let mut p = ParamSet::new();
        if s.hidden == 0 {
            p.push_uniform("out.weight", vec![inputs, s.classes], inputs, &mut rng);
            p.push_uniform("out.bias", vec![s.classes], inputs, &mut rng);
        } else {
            p.push_uniform("hidden.weight", vec![inputs, s.hidden], inputs, &mut rng);
            p.push_uniform("hidden.bias", vec![s.hidden], inputs, &mut rng);
            p.push_uniform("out.weight", vec![s.hidden, s.classes], s.hidden, &mut rng);
            p.push_uniform("out.bias", vec![s.classes], s.hidden, &mut rng);
        }
        self.params = p;
    }

    fn forward(&self, g: &mut Graph, p: &[NodeId], x: NodeId) -> Result<NodeId> {
        let batch = g.shape(x)[0];
        let mut h = g.reshape(x, vec![batch, self.spec.slots * self.spec.attributes])?;
        let mut rest = p;
        if self.spec.hidden > 0 {
            h = g.matmul(h, p[0])?;
            h = g.add_bias(h, p[1], 1)?;
            h = g.relu(h)?;
            rest = &p[2..];
        }
        let h = g.matmul(h, rest[0])?;
        Ok(g.add_bias(h, rest[1], 1)?)
    }
}
