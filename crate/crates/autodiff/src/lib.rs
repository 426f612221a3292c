//! Dense `f64` tensors and a define-by-run reverse-mode differentiation graph.
//!
//! Every backward rule is written in terms of recorded ops, so a gradient
//! built with `build_graph = true` is an ordinary node that can be
//! differentiated again. That is what input-attribution training needs: the
//! attribution `x * d logit / dx` is a function of the model parameters.
//!
//! ```
//! use lsx_autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::vector(vec![2.0]));
//! let x2 = g.mul(x, x).unwrap();
//! let x3 = g.mul(x2, x).unwrap();
//! let y = g.sum(x3).unwrap();
//! let dx = g.backward(y, &[x], true).unwrap()[0]; // 3x^2
//! let s = g.sum(dx).unwrap();
//! let ddx = g.backward(s, &[x], false).unwrap()[0]; // 6x
//! assert_eq!(g.value(ddx).item(), 12.0);
//! ```

mod error;
mod gradcheck;
mod graph;
mod kernels;
mod ops;
mod tensor;

pub use error::{AutodiffError, Result};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Graph, NodeId};
pub use ops::OpKind;
pub use tensor::Tensor;
