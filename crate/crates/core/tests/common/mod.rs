//! Test-only oracles shared by integration and acceptance tests.
//!
//! Nothing here calls into the code paths it is used to check: the walk
//! oracle extends prefixes forward by testing raw edge membership, while
//! the library walks compressed adjacency backwards from each target.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use magnn::graph::{GraphBuilder, HetGraph, Metapath, NodeTypeId, RelationId, Schema};
use rand::Rng;

pub struct RandomGraph {
    pub graph: HetGraph,
    pub counts: Vec<usize>,
    /// `(relation, source type, target type)`
    pub relations: Vec<(usize, usize, usize)>,
    pub edges: Vec<(usize, usize, usize)>,
}

/// Random heterogeneous graph with at most `max_nodes` nodes over
/// `2..=max_types` types.
pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize, max_types: usize) -> RandomGraph {
    let n_types = rng.random_range(2..=max_types);
    let mut counts: Vec<usize> = (0..n_types).map(|_| 1).collect();
    let total = rng.random_range(n_types..=max_nodes);
    for _ in n_types..total {
        let t = rng.random_range(0..n_types);
        counts[t] += 1;
    }
    let symbols: Vec<String> = (0..n_types).map(|i| format!("T{i}")).collect();
    let mut rels: Vec<(usize, usize, usize)> = Vec::new();
    // a chain so that every type is touched, then a few extra relations
    for t in 1..n_types {
        rels.push((rels.len(), rng.random_range(0..t), t));
    }
    for _ in 0..rng.random_range(0..=2) {
        let a = rng.random_range(0..n_types);
        let b = rng.random_range(0..n_types);
        rels.push((rels.len(), a, b));
    }
    let types: Vec<(&str, &str)> = symbols.iter().map(|s| (s.as_str(), s.as_str())).collect();
    let schema = Schema::new(
        types
            .iter()
            .map(|(n, s)| magnn::graph::NodeTypeDecl {
                name: n.to_string(),
                symbol: s.to_string(),
            })
            .collect(),
        rels.iter()
            .map(|&(i, a, b)| magnn::graph::RelationDecl {
                name: format!("r{i}"),
                source: NodeTypeId(a),
                target: NodeTypeId(b),
            })
            .collect(),
    )
    .unwrap();

    let mut edges = Vec::new();
    for &(r, a, b) in &rels {
        let p = 1.6 / counts[a].max(counts[b]) as f64;
        for u in 0..counts[a] {
            for v in 0..counts[b] {
                if a == b && v < u {
                    continue;
                }
                if rng.random::<f64>() < p {
                    edges.push((r, u, v));
                }
            }
        }
    }
    let graph = GraphBuilder::new(schema, counts.clone())
        .edges(edges.iter().map(|&(r, u, v)| (RelationId(r), u, v)))
        .build()
        .unwrap();
    RandomGraph {
        graph,
        counts,
        relations: rels,
        edges,
    }
}

/// Every metapath of 1..=`max_len` steps over the schema.
pub fn all_metapaths(rg: &RandomGraph, max_len: usize) -> Vec<Metapath> {
    let mut out = Vec::new();
    let mut frontier: Vec<(Vec<usize>, Vec<usize>)> =
        (0..rg.counts.len()).map(|t| (vec![t], vec![])).collect();
    for _ in 0..max_len {
        let mut next = Vec::new();
        for (types, rels) in &frontier {
            let last = *types.last().unwrap();
            for &(r, a, b) in &rg.relations {
                let mut step = |to: usize| {
                    let mut t = types.clone();
                    t.push(to);
                    let mut rr = rels.clone();
                    rr.push(r);
                    next.push((t, rr));
                };
                if a == last {
                    step(b);
                } else if b == last {
                    step(a);
                }
            }
        }
        for (t, r) in &next {
            out.push(Metapath::new(
                t.iter().map(|&x| NodeTypeId(x)).collect(),
                r.iter().map(|&x| RelationId(x)).collect(),
            ));
        }
        frontier = next;
    }
    out
}

/// Brute-force walks following `path`, grouped by their last node and
/// sorted, as local indices `(t0, ..., tn)`.
pub fn brute_force_walks(rg: &RandomGraph, path: &Metapath) -> BTreeMap<usize, Vec<Vec<usize>>> {
    let edge_set: HashSet<(usize, usize, usize)> = rg.edges.iter().copied().collect();
    let connected = |r: usize, from_t: usize, x: usize, to_t: usize, y: usize| -> bool {
        let (_, a, b) = rg.relations[r];
        (a == from_t && b == to_t && edge_set.contains(&(r, x, y)))
            || (b == from_t && a == to_t && edge_set.contains(&(r, y, x)))
    };
    let types: Vec<usize> = path.types().iter().map(|t| t.0).collect();
    let rels: Vec<usize> = path.relations().iter().map(|r| r.0).collect();
    let mut walks: Vec<Vec<usize>> = (0..rg.counts[types[0]]).map(|u| vec![u]).collect();
    for (i, &r) in rels.iter().enumerate() {
        let mut next = Vec::new();
        for w in &walks {
            let x = *w.last().unwrap();
            for y in 0..rg.counts[types[i + 1]] {
                if connected(r, types[i], x, types[i + 1], y) {
                    let mut nw = w.clone();
                    nw.push(y);
                    next.push(nw);
                }
            }
        }
        walks = next;
    }
    let mut by_target: BTreeMap<usize, Vec<Vec<usize>>> = BTreeMap::new();
    for v in 0..rg.counts[*types.last().unwrap()] {
        by_target.insert(v, Vec::new());
    }
    for w in walks {
        by_target.get_mut(w.last().unwrap()).unwrap().push(w);
    }
    for b in by_target.values_mut() {
        b.sort();
    }
    by_target
}
