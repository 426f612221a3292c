use thiserror::Error;

use crate::graph::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("shape mismatch in {op}{}: {detail}", fmt_node(.node))]
    ShapeMismatch {
        op: &'static str,
        node: Option<NodeId>,
        detail: String,
    },
    #[error("non-finite value produced by {op} at node {node:?}")]
    NonFinite { op: &'static str, node: NodeId },
    #[error("backward root must be scalar, got shape {0:?}")]
    RootNotScalar(Vec<usize>),
    #[error("unknown node {0:?}")]
    UnknownNode(NodeId),
    #[error("node {0:?} is not a leaf")]
    NotALeaf(NodeId),
}

fn fmt_node(node: &Option<NodeId>) -> String {
    match node {
        Some(id) => format!(" (node {})", id.index()),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
