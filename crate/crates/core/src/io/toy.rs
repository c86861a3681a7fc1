//! A tiny fixed graph for smoke runs and examples.

use crate::error::Result;
use crate::graph::{GraphBuilder, HetGraph, Labels, Masks, NodeTypeId, RelationId, Schema};
use crate::tensor::Tensor;

pub const TOY_A: usize = 12;
pub const TOY_B: usize = 12;
pub const TOY_C: usize = 6;

/// Types `A` (12 nodes, 4 features, 2 classes), `B` (12) and `C` (6),
/// relations `A-B` and `B-C`. Node `a` links to `b = a` and
/// `b = (a + 2) % 12`, so `A-B-A` neighbors share the parity class.
/// Node `b` links to `c = b / 2`. `B` and `C` use identity features.
pub fn toy_graph() -> Result<HetGraph> {
    let schema = Schema::from_symbols(&[("alpha", "A"), ("beta", "B"), ("gamma", "C")], &[("A", "B"), ("B", "C")])?;
    let (ab, bc) = (RelationId(0), RelationId(1));
    let a = NodeTypeId(0);
    let mut edges = Vec::new();
    for i in 0..TOY_A {
        edges.push((ab, i, i));
        edges.push((ab, i, (i + 2) % TOY_B));
    }
    for j in 0..TOY_B {
        edges.push((bc, j, j / 2));
    }
    let mut x = Vec::with_capacity(TOY_A * 4);
    for i in 0..TOY_A {
        let t = i as f64;
        x.extend([(t * 0.7).cos(), (t * 0.7).sin(), (i % 2) as f64 - 0.5, t / TOY_A as f64]);
    }
    GraphBuilder::new(schema, vec![TOY_A, TOY_B, TOY_C])
        .edges(edges)
        .features(a, Tensor::matrix(TOY_A, 4, x)?)
        .labels(
            a,
            Labels {
                classes: (0..TOY_A).map(|i| Some(i % 2)).collect(),
                num_classes: 2,
            },
        )
        .masks(
            a,
            Masks {
                train: (0..4).collect(),
                val: (4..8).collect(),
                test: (8..12).collect(),
            },
        )
        .build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_of_the_toy_graph() {
        let g = toy_graph().unwrap();
        assert_eq!(g.total_nodes(), 30);
        assert_eq!(g.num_edges(RelationId(0)), 24);
        assert_eq!(g.num_edges(RelationId(1)), 12);
        assert_eq!(g.features(NodeTypeId(0)).dim(), 4);
        assert_eq!(g.labeled_type(), Some(NodeTypeId(0)));
    }
}
