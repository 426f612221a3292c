use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Comparison of reverse-mode gradients against central finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Tensor,
    pub numeric: Tensor,
    /// `|a - n| / max(|a|, |n|, 1)`, maximised over elements.
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks `d build(x) / dx` at `point`.
///
/// `build` records a scalar-valued function of the leaf it is given. It may
/// call [`Graph::backward`] itself (with `build_graph = true`) to check
/// second derivatives: the finite differences replay every recorded node,
/// gradient nodes included.
pub fn grad_check<F>(build: F, point: &Tensor, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, NodeId) -> Result<NodeId>,
{
    assert!(eps > 0.0, "eps must be positive");
    let mut g = Graph::new();
    let x = g.param(point.clone());
    let root = build(&mut g, x)?;
    let grad = g.backward(root, &[x], false)?[0];
    let analytic = g.value(grad).clone();

    let mut numeric = Tensor::zeros(point.shape().to_vec());
    let mut probe = point.clone();
    for i in 0..point.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        g.set_leaf(x, probe.clone())?;
        let up = g.forward(root)?.item();
        probe.data_mut()[i] = orig - eps;
        g.set_leaf(x, probe.clone())?;
        let down = g.forward(root)?.item();
        probe.data_mut()[i] = orig;
        numeric.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    g.set_leaf(x, point.clone())?;
    g.forward(root)?;

    let (mut max_rel_error, mut worst_index) = (0.0f64, 0);
    for (i, (a, n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1.0);
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_index = i;
        }
    }
    Ok(GradCheckReport {
        analytic,
        numeric,
        max_rel_error,
        worst_index,
        tolerance: tol,
        passed: max_rel_error < tol,
    })
}
