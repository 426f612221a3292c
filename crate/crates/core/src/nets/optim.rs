use lsx_autodiff::{Graph, NodeId, Tensor};

use super::params::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First-order optimizer. A step applies `param -= update` and nothing else.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            steps: 0,
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::adam(), lr)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors_mut().zip(grads) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.first_moment.is_empty() {
                    self.first_moment = grads.iter().map(|g| Tensor::zeros(g.shape().to_vec())).collect();
                    self.second_moment = self.first_moment.clone();
                }
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .tensors_mut()
                    .zip(grads)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
                    for i in 0..pd.len() {
                        let d = g.data()[i];
                        md[i] = beta1 * md[i] + (1.0 - beta1) * d;
                        vd[i] = beta2 * vd[i] + (1.0 - beta2) * d * d;
                        let update = self.lr * (md[i] / c1) / ((vd[i] / c2).sqrt() + eps);
                        pd[i] -= update;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Differentiates `loss` with respect to the bound parameters and applies
/// one optimizer step. Returns the loss value before the step.
pub fn train_step(
    g: &mut Graph,
    loss: NodeId,
    bound: &[NodeId],
    params: &mut ParamSet,
    optimizer: &mut Optimizer,
) -> Result<f64> {
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::Divergence {
            value,
            context: format!("optimizer step {}", optimizer.steps() + 1),
        });
    }
    let grads = g.backward(loss, bound, false)?;
    let grads: Vec<Tensor> = grads.into_iter().map(|id| g.value(id).clone()).collect();
    optimizer.step(params, &grads)?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(w: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", Tensor::vector(vec![w]));
        p
    }

    fn square_loss_step(params: &mut ParamSet, opt: &mut Optimizer) -> f64 {
        let mut g = Graph::new();
        let bound = params.bind(&mut g, true);
        let sq = g.mul(bound[0], bound[0]).unwrap();
        let loss = g.sum(sq).unwrap();
        train_step(&mut g, loss, &bound, params, opt).unwrap()
    }

    #[test]
    fn sgd_step_on_square() {
        let mut p = one_param(1.0);
        let mut opt = Optimizer::sgd(0.1);
        let before = square_loss_step(&mut p, &mut opt);
        assert_eq!(before, 1.0);
        assert!((p.get("w").unwrap().item() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_leaves_parameters_bit_identical() {
        for mut opt in [Optimizer::sgd(0.0), Optimizer::adam(0.0)] {
            let mut p = one_param(0.37);
            let snapshot = p.clone();
            for _ in 0..5 {
                square_loss_step(&mut p, &mut opt);
            }
            assert!(p.bit_identical(&snapshot));
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = one_param(1.0);
        let mut opt = Optimizer::adam(0.01);
        square_loss_step(&mut p, &mut opt);
        assert!((p.get("w").unwrap().item() - 0.99).abs() < 1e-6);
    }

    #[test]
    fn overflow_surfaces_as_error() {
        let mut p = one_param(1.0);
        let mut g = Graph::new();
        let bound = p.bind(&mut g, true);
        let big = g.scale(bound[0], 1e300).unwrap();
        let err = crate::Error::from(g.mul(big, big).unwrap_err());
        assert!(err.to_string().contains("non-finite"));
        let s = g.sum(bound[0]).unwrap();
        assert!(train_step(&mut g, s, &bound, &mut p, &mut Optimizer::sgd(0.1)).is_ok());
    }
}
