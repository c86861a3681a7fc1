//! Typed heterogeneous graphs.
//!
//! Nodes are addressed per type with dense 0-based indices; a global handle
//! is the pair `(NodeTypeId, index)`. Every relation connects two declared
//! node types and is stored as compressed neighbor lists in both
//! directions. Edges are undirected: a relation declared `M -> D` can be
//! walked from `M` to `D` and back.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct NodeTypeId(pub usize);

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct RelationId(pub usize);

/// Global node handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeHandle {
    pub ty: NodeTypeId,
    pub index: usize,
}

impl NodeHandle {
    pub fn new(ty: NodeTypeId, index: usize) -> Self {
        Self { ty, index }
    }
}

impl fmt::Display for NodeHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ty.0, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTypeDecl {
    pub name: String,
    /// Short symbol used in metapath strings, e.g. `M` for movie.
    pub symbol: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationDecl {
    pub name: String,
    pub source: NodeTypeId,
    pub target: NodeTypeId,
}

impl RelationDecl {
    pub fn is_self_relation(&self) -> bool {
        self.source == self.target
    }
}

/// Node types and relations of a heterogeneous graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    node_types: Vec<NodeTypeDecl>,
    relations: Vec<RelationDecl>,
}

impl Schema {
    pub fn new(node_types: Vec<NodeTypeDecl>, relations: Vec<RelationDecl>) -> Result<Self> {
        if node_types.is_empty() {
            return Err(Error::Schema("schema declares no node types".into()));
        }
        for (i, a) in node_types.iter().enumerate() {
            if a.symbol.is_empty() || a.symbol.contains(['-', '[', ']']) {
                return Err(Error::Schema(format!("invalid type symbol {:?}", a.symbol)));
            }
            if node_types[..i].iter().any(|b| b.symbol == a.symbol) {
                return Err(Error::Schema(format!("duplicate type symbol {:?}", a.symbol)));
            }
        }
        for (i, r) in relations.iter().enumerate() {
            if r.source.0 >= node_types.len() || r.target.0 >= node_types.len() {
                return Err(Error::Schema(format!(
                    "relation {:?} references an undeclared node type",
                    r.name
                )));
            }
            if relations[..i].iter().any(|o| o.name == r.name) {
                return Err(Error::Schema(format!("duplicate relation name {:?}", r.name)));
            }
        }
        Ok(Self {
            node_types,
            relations,
        })
    }

    /// Convenience constructor from `(name, symbol)` pairs and
    /// `(source symbol, target symbol)` relations named `"S-T"`.
    pub fn from_symbols(types: &[(&str, &str)], relations: &[(&str, &str)]) -> Result<Self> {
        let node_types: Vec<NodeTypeDecl> = types
            .iter()
            .map(|(name, symbol)| NodeTypeDecl {
                name: (*name).to_string(),
                symbol: (*symbol).to_string(),
            })
            .collect();
        let find = |s: &str| {
            node_types
                .iter()
                .position(|t| t.symbol == s)
                .map(NodeTypeId)
                .ok_or_else(|| Error::Schema(format!("unknown type symbol {s:?}")))
        };
        let relations = relations
            .iter()
            .map(|(s, t)| {
                Ok(RelationDecl {
                    name: format!("{s}-{t}"),
                    source: find(s)?,
                    target: find(t)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Schema::new(node_types, relations)
    }

    pub fn num_types(&self) -> usize {
        self.node_types.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn node_type(&self, id: NodeTypeId) -> &NodeTypeDecl {
        &self.node_types[id.0]
    }

    pub fn node_types(&self) -> &[NodeTypeDecl] {
        &self.node_types
    }

    pub fn relation(&self, id: RelationId) -> &RelationDecl {
        &self.relations[id.0]
    }

    pub fn relations(&self) -> &[RelationDecl] {
        &self.relations
    }

    pub fn type_by_symbol(&self, symbol: &str) -> Option<NodeTypeId> {
        self.node_types
            .iter()
            .position(|t| t.symbol == symbol)
            .map(NodeTypeId)
    }

    pub fn relation_by_name(&self, name: &str) -> Option<RelationId> {
        self.relations
            .iter()
            .position(|r| r.name == name)
            .map(RelationId)
    }

    /// Relations that can be walked from `a` to `b` in either direction.
    pub fn relations_between(&self, a: NodeTypeId, b: NodeTypeId) -> Vec<RelationId> {
        self.relations
            .iter()
            .enumerate()
            .filter(|(_, r)| (r.source == a && r.target == b) || (r.source == b && r.target == a))
            .map(|(i, _)| RelationId(i))
            .collect()
    }

    /// Direction in which `rel` is walked when stepping from `from` to `to`.
    pub fn direction(&self, rel: RelationId, from: NodeTypeId, to: NodeTypeId) -> Option<Direction> {
        let r = self.relations.get(rel.0)?;
        if r.source == from && r.target == to {
            Some(Direction::Forward)
        } else if r.source == to && r.target == from {
            Some(Direction::Reverse)
        } else {
            None
        }
    }
}

/// Orientation of a relation step relative to its declaration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Reverse,
}

/// Compressed sparse neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Csr {
    /// Builds from `(row, col)` pairs; each row's neighbors are sorted.
    pub fn from_pairs(rows: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
        pairs.sort_unstable();
        let mut offsets = vec![0usize; rows + 1];
        for &(r, _) in &pairs {
            offsets[r + 1] += 1;
        }
        for i in 0..rows {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = pairs.into_iter().map(|(_, c)| c).collect();
        Self { offsets, neighbors }
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, row: usize) -> &[usize] {
        &self.neighbors[self.offsets[row]..self.offsets[row + 1]]
    }

    pub fn degree(&self, row: usize) -> usize {
        self.offsets[row + 1] - self.offsets[row]
    }

    pub fn nnz(&self) -> usize {
        self.neighbors.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows()).flat_map(move |r| self.neighbors(r).iter().map(move |&c| (r, c)))
    }
}

/// Adjacency of one relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    /// source -> target
    pub forward: Csr,
    /// target -> source
    pub reverse: Csr,
    /// Symmetric neighbor lists, only for relations whose endpoints share a type.
    undirected: Option<Csr>,
}

impl Adjacency {
    pub fn num_edges(&self) -> usize {
        self.forward.nnz()
    }
}

/// Node feature matrix of one type.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Dense(Tensor),
    /// One-hot id vectors, i.e. the `n x n` identity, kept implicit.
    Identity(usize),
}

impl Features {
    pub fn rows(&self) -> usize {
        match self {
            Features::Dense(t) => t.rows(),
            Features::Identity(n) => *n,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Features::Dense(t) => t.cols(),
            Features::Identity(n) => *n,
        }
    }

    pub fn to_dense(&self) -> Tensor {
        match self {
            Features::Dense(t) => t.clone(),
            Features::Identity(n) => Tensor::identity(*n),
        }
    }
}

/// Class labels for the nodes of one type. Unlabeled nodes hold `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    pub classes: Vec<Option<usize>>,
    pub num_classes: usize,
}

/// Train/validation/test index lists over the nodes of one type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Masks {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// An immutable heterogeneous graph.
#[derive(Debug, Clone)]
pub struct HetGraph {
    schema: Schema,
    node_counts: Vec<usize>,
    adjacency: Vec<Adjacency>,
    features: Vec<Features>,
    labels: Vec<Option<Labels>>,
    masks: Vec<Option<Masks>>,
}

/// Collects the pieces of a [`HetGraph`] and validates them in [`GraphBuilder::build`].
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    schema: Schema,
    node_counts: Vec<usize>,
    edges: Vec<(RelationId, usize, usize)>,
    features: Vec<Option<Tensor>>,
    labels: Vec<Option<Labels>>,
    masks: Vec<Option<Masks>>,
}

impl GraphBuilder {
    pub fn new(schema: Schema, node_counts: Vec<usize>) -> Self {
        let n = schema.num_types();
        Self {
            schema,
            node_counts,
            edges: Vec::new(),
            features: vec![None; n],
            labels: vec![None; n],
            masks: vec![None; n],
        }
    }

    pub fn edge(mut self, rel: RelationId, u: usize, v: usize) -> Self {
        self.edges.push((rel, u, v));
        self
    }

    pub fn edges(mut self, edges: impl IntoIterator<Item = (RelationId, usize, usize)>) -> Self {
        self.edges.extend(edges);
        self
    }

    pub fn features(mut self, ty: NodeTypeId, x: Tensor) -> Self {
        if ty.0 < self.features.len() {
            self.features[ty.0] = Some(x);
        }
        self
    }

    pub fn labels(mut self, ty: NodeTypeId, labels: Labels) -> Self {
        if ty.0 < self.labels.len() {
            self.labels[ty.0] = Some(labels);
        }
        self
    }

    pub fn masks(mut self, ty: NodeTypeId, masks: Masks) -> Self {
        if ty.0 < self.masks.len() {
            self.masks[ty.0] = Some(masks);
        }
        self
    }

    pub fn build(self) -> Result<HetGraph> {
        let GraphBuilder {
            schema,
            node_counts,
            edges,
            features,
            labels,
            masks,
        } = self;
        if node_counts.len() != schema.num_types() {
            return Err(Error::Dimension(format!(
                "{} node counts for {} declared types",
                node_counts.len(),
                schema.num_types()
            )));
        }

        let mut per_rel: Vec<Vec<(usize, usize)>> = vec![Vec::new(); schema.num_relations()];
        for &(rel, u, v) in &edges {
            let decl = schema
                .relations
                .get(rel.0)
                .ok_or_else(|| Error::Schema(format!("unknown relation id {}", rel.0)))?;
            let (ns, nt) = (node_counts[decl.source.0], node_counts[decl.target.0]);
            if u >= ns || v >= nt {
                return Err(Error::Schema(format!(
                    "edge ({u}, {v}) of relation {} out of range for {} x {} nodes",
                    decl.name, ns, nt
                )));
            }
            // Undirected storage: for a self relation (u, v) and (v, u) are the same edge.
            let e = if decl.is_self_relation() && v < u { (v, u) } else { (u, v) };
            per_rel[rel.0].push(e);
        }

        let mut adjacency = Vec::with_capacity(per_rel.len());
        for (ri, mut list) in per_rel.into_iter().enumerate() {
            let decl = &schema.relations[ri];
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::DuplicateEdge {
                    relation: decl.name.clone(),
                    u: w[0].0,
                    v: w[0].1,
                });
            }
            let (ns, nt) = (node_counts[decl.source.0], node_counts[decl.target.0]);
            let forward = Csr::from_pairs(ns, list.iter().copied());
            let reverse = Csr::from_pairs(nt, list.iter().map(|&(u, v)| (v, u)));
            let undirected = decl.is_self_relation().then(|| {
                Csr::from_pairs(
                    ns,
                    list.iter()
                        .flat_map(|&(u, v)| {
                            let back = (u != v).then_some((v, u));
                            std::iter::once((u, v)).chain(back)
                        }),
                )
            });
            adjacency.push(Adjacency {
                forward,
                reverse,
                undirected,
            });
        }

        let mut feats = Vec::with_capacity(features.len());
        for (t, x) in features.into_iter().enumerate() {
            let n = node_counts[t];
            match x {
                Some(x) => {
                    if x.rank() != 2 || x.rows() != n {
                        return Err(Error::Dimension(format!(
                            "feature matrix of type {} has shape {:?}, expected {} rows",
                            schema.node_types[t].symbol,
                            x.shape(),
                            n
                        )));
                    }
                    feats.push(Features::Dense(x));
                }
                None => feats.push(Features::Identity(n)),
            }
        }

        for (t, l) in labels.iter().enumerate() {
            if let Some(l) = l {
                if l.classes.len() != node_counts[t] {
                    return Err(Error::Dimension(format!(
                        "{} labels for {} nodes of type {}",
                        l.classes.len(),
                        node_counts[t],
                        schema.node_types[t].symbol
                    )));
                }
                if let Some(c) = l.classes.iter().flatten().find(|&&c| c >= l.num_classes) {
                    return Err(Error::InvalidInput(format!(
                        "label {c} out of range for {} classes",
                        l.num_classes
                    )));
                }
            }
        }
        for (t, m) in masks.iter().enumerate() {
            if let Some(m) = m {
                let n = node_counts[t];
                if let Some(&i) = m.train.iter().chain(&m.val).chain(&m.test).find(|&&i| i >= n) {
                    return Err(Error::InvalidInput(format!(
                        "mask index {i} out of range for {n} nodes"
                    )));
                }
            }
        }

        Ok(HetGraph {
            schema,
            node_counts,
            adjacency,
            features: feats,
            labels,
            masks,
        })
    }
}

impl HetGraph {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn num_nodes(&self, ty: NodeTypeId) -> usize {
        self.node_counts[ty.0]
    }

    pub fn node_counts(&self) -> &[usize] {
        &self.node_counts
    }

    pub fn total_nodes(&self) -> usize {
        self.node_counts.iter().sum()
    }

    /// `|types| + |relations| > 2`.
    pub fn is_heterogeneous(&self) -> bool {
        self.schema.num_types() + self.schema.num_relations() > 2
    }

    pub fn adjacency(&self, rel: RelationId) -> &Adjacency {
        &self.adjacency[rel.0]
    }

    pub fn num_edges(&self, rel: RelationId) -> usize {
        self.adjacency[rel.0].num_edges()
    }

    /// Neighbors reached from `node` by walking `rel` in `dir`.
    pub fn step(&self, rel: RelationId, dir: Direction, node: usize) -> &[usize] {
        let adj = &self.adjacency[rel.0];
        if let Some(u) = &adj.undirected {
            return u.neighbors(node);
        }
        match dir {
            Direction::Forward => adj.forward.neighbors(node),
            Direction::Reverse => adj.reverse.neighbors(node),
        }
    }

    /// Edges of `rel` as sorted `(source, target)` pairs.
    pub fn edges(&self, rel: RelationId) -> Vec<(usize, usize)> {
        self.adjacency[rel.0].forward.iter().collect()
    }

    pub fn features(&self, ty: NodeTypeId) -> &Features {
        &self.features[ty.0]
    }

    pub fn labels(&self, ty: NodeTypeId) -> Option<&Labels> {
        self.labels[ty.0].as_ref()
    }

    pub fn masks(&self, ty: NodeTypeId) -> Option<&Masks> {
        self.masks[ty.0].as_ref()
    }

    /// The first node type carrying labels, if any.
    pub fn labeled_type(&self) -> Option<NodeTypeId> {
        self.labels.iter().position(Option::is_some).map(NodeTypeId)
    }

    /// Same structure and labels with every type's features replaced by one-hot ids.
    pub fn with_identity_features(&self) -> HetGraph {
        let mut g = self.clone();
        g.features = self.node_counts.iter().map(|&n| Features::Identity(n)).collect();
        g
    }

    /// Copy of the graph with `rel` restricted to the given edges.
    pub fn with_relation_edges(&self, rel: RelationId, keep: &[(usize, usize)]) -> Result<HetGraph> {
        let mut b = GraphBuilder::new(self.schema.clone(), self.node_counts.clone());
        for r in 0..self.schema.num_relations() {
            let rid = RelationId(r);
            if rid == rel {
                b = b.edges(keep.iter().map(|&(u, v)| (rid, u, v)));
            } else {
                b = b.edges(self.edges(rid).into_iter().map(|(u, v)| (rid, u, v)));
            }
        }
        for t in 0..self.schema.num_types() {
            let ty = NodeTypeId(t);
            if let Features::Dense(x) = &self.features[t] {
                b = b.features(ty, x.clone());
            }
            if let Some(l) = &self.labels[t] {
                b = b.labels(ty, l.clone());
            }
            if let Some(m) = &self.masks[t] {
                b = b.masks(ty, m.clone());
            }
        }
        b.build()
    }
}

/// A schema path `A1 -R1- A2 ... -Rl- A(l+1)`.
///
/// Instances of a metapath end at a node of the last type (the target).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Metapath {
    types: Vec<NodeTypeId>,
    relations: Vec<RelationId>,
    symmetric: bool,
}

impl Metapath {
    /// Unvalidated path; see [`validate_metapath`].
    pub fn new(types: Vec<NodeTypeId>, relations: Vec<RelationId>) -> Self {
        let symmetric = Self::is_palindrome(&types, &relations);
        Self {
            types,
            relations,
            symmetric,
        }
    }

    fn is_palindrome(types: &[NodeTypeId], relations: &[RelationId]) -> bool {
        types.iter().eq(types.iter().rev()) && relations.iter().eq(relations.iter().rev())
    }

    pub fn types(&self) -> &[NodeTypeId] {
        &self.types
    }

    pub fn relations(&self) -> &[RelationId] {
        &self.relations
    }

    /// Number of relation steps `l`.
    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn start_type(&self) -> NodeTypeId {
        self.types[0]
    }

    pub fn target_type(&self) -> NodeTypeId {
        *self.types.last().expect("metapath has at least one type")
    }

    pub fn reversed(&self) -> Metapath {
        Metapath::new(
            self.types.iter().rev().copied().collect(),
            self.relations.iter().rev().copied().collect(),
        )
    }

    /// Walk direction of every step, relative to each relation's declaration.
    pub fn directions(&self, schema: &Schema) -> Vec<Direction> {
        (0..self.len())
            .map(|i| {
                schema
                    .direction(self.relations[i], self.types[i], self.types[i + 1])
                    .unwrap_or(Direction::Forward)
            })
            .collect()
    }

    /// Text form using type symbols, e.g. `M-D-M`.
    pub fn display(&self, schema: &Schema) -> String {
        self.types
            .iter()
            .map(|t| schema.node_type(*t).symbol.as_str())
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Checks a metapath against a schema and recomputes its symmetry flag.
pub fn validate_metapath(schema: &Schema, path: &Metapath) -> Result<Metapath> {
    if path.relations.is_empty() {
        return Err(Error::Metapath {
            step: 0,
            reason: "a metapath needs at least one relation".into(),
        });
    }
    if path.types.len() != path.relations.len() + 1 {
        return Err(Error::Metapath {
            step: 0,
            reason: format!(
                "{} types for {} relations",
                path.types.len(),
                path.relations.len()
            ),
        });
    }
    if let Some(t) = path.types.iter().find(|t| t.0 >= schema.num_types()) {
        return Err(Error::Metapath {
            step: 0,
            reason: format!("unknown node type id {}", t.0),
        });
    }
    for (i, &rel) in path.relations.iter().enumerate() {
        if rel.0 >= schema.num_relations() {
            return Err(Error::Metapath {
                step: i,
                reason: format!("unknown relation id {}", rel.0),
            });
        }
        if schema.direction(rel, path.types[i], path.types[i + 1]).is_none() {
            let r = schema.relation(rel);
            return Err(Error::Metapath {
                step: i,
                reason: format!(
                    "relation {} does not connect {} and {}",
                    r.name,
                    schema.node_type(path.types[i]).symbol,
                    schema.node_type(path.types[i + 1]).symbol
                ),
            });
        }
    }
    Ok(Metapath::new(path.types.clone(), path.relations.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lastfm_schema() -> Schema {
        Schema::from_symbols(
            &[("user", "U"), ("artist", "A"), ("tag", "T")],
            &[("U", "U"), ("U", "A"), ("A", "T")],
        )
        .unwrap()
    }

    fn imdb_schema() -> Schema {
        Schema::from_symbols(
            &[("movie", "M"), ("director", "D"), ("actor", "A")],
            &[("M", "D"), ("M", "A")],
        )
        .unwrap()
    }

    #[test]
    fn featureless_type_gets_identity() {
        let schema = Schema::from_symbols(&[("user", "U"), ("artist", "A")], &[("U", "A")]).unwrap();
        let g = GraphBuilder::new(schema, vec![2, 1])
            .edge(RelationId(0), 0, 0)
            .build()
            .unwrap();
        assert_eq!(g.features(NodeTypeId(0)).to_dense(), Tensor::identity(2));
        assert_eq!(g.features(NodeTypeId(0)).dim(), 2);
    }

    #[test]
    fn supplied_features_override_one_hot() {
        let schema = Schema::from_symbols(&[("user", "U"), ("artist", "A")], &[("U", "A")]).unwrap();
        let x = Tensor::from_vec(vec![2, 3], vec![1.0; 6]).unwrap();
        let g = GraphBuilder::new(schema, vec![2, 1])
            .features(NodeTypeId(0), x.clone())
            .build()
            .unwrap();
        assert_eq!(g.features(NodeTypeId(0)), &Features::Dense(x));
    }

    #[test]
    fn empty_single_type_graph() {
        let schema = Schema::from_symbols(&[("thing", "X")], &[]).unwrap();
        let g = GraphBuilder::new(schema, vec![3]).build().unwrap();
        assert_eq!(g.total_nodes(), 3);
        assert!(!g.is_heterogeneous());
    }

    #[test]
    fn out_of_range_edge_is_schema_error() {
        let schema = Schema::from_symbols(&[("user", "U"), ("artist", "A")], &[("U", "A")]).unwrap();
        let err = GraphBuilder::new(schema, vec![2, 1])
            .edge(RelationId(0), 5, 0)
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn duplicates_are_rejected() {
        let g = GraphBuilder::new(lastfm_schema(), vec![3, 2, 1])
            .edge(RelationId(1), 0, 1)
            .edge(RelationId(1), 0, 1)
            .build();
        assert!(matches!(g, Err(Error::DuplicateEdge { .. })));
        // self relation: (0,1) and (1,0) are one undirected edge
        let g = GraphBuilder::new(lastfm_schema(), vec![3, 2, 1])
            .edge(RelationId(0), 0, 1)
            .edge(RelationId(0), 1, 0)
            .build();
        assert!(matches!(g, Err(Error::DuplicateEdge { .. })));
    }

    #[test]
    fn feature_row_mismatch() {
        let schema = Schema::from_symbols(&[("user", "U"), ("artist", "A")], &[("U", "A")]).unwrap();
        let err = GraphBuilder::new(schema, vec![2, 1])
            .features(NodeTypeId(1), Tensor::zeros(&[3, 2]))
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn self_relation_is_walked_both_ways() {
        let g = GraphBuilder::new(lastfm_schema(), vec![3, 1, 1])
            .edge(RelationId(0), 2, 0)
            .edge(RelationId(0), 1, 1)
            .build()
            .unwrap();
        assert_eq!(g.step(RelationId(0), Direction::Forward, 0), &[2]);
        assert_eq!(g.step(RelationId(0), Direction::Forward, 2), &[0]);
        assert_eq!(g.step(RelationId(0), Direction::Forward, 1), &[1]);
        assert_eq!(g.edges(RelationId(0)), vec![(0, 2), (1, 1)]);
    }

    #[test]
    fn mdm_is_symmetric() {
        let s = imdb_schema();
        let (m, d) = (NodeTypeId(0), NodeTypeId(1));
        let p = validate_metapath(&s, &Metapath::new(vec![m, d, m], vec![RelationId(0), RelationId(0)]))
            .unwrap();
        assert!(p.is_symmetric());
        assert_eq!(p.display(&s), "M-D-M");
        assert_eq!(p.directions(&s), vec![Direction::Forward, Direction::Reverse]);
    }

    #[test]
    fn uata_is_not_symmetric() {
        let s = lastfm_schema();
        let (u, a, t) = (NodeTypeId(0), NodeTypeId(1), NodeTypeId(2));
        let p = validate_metapath(
            &s,
            &Metapath::new(vec![u, a, t, a], vec![RelationId(1), RelationId(2), RelationId(2)]),
        )
        .unwrap();
        assert!(!p.is_symmetric());
        assert_eq!(p.target_type(), a);
    }

    #[test]
    fn relation_not_touching_type_is_rejected() {
        let s = lastfm_schema();
        let (u, a) = (NodeTypeId(0), NodeTypeId(1));
        // A-T relation used between U and A
        let err = validate_metapath(&s, &Metapath::new(vec![u, a], vec![RelationId(2)])).unwrap_err();
        assert!(matches!(err, Error::Metapath { step: 0, .. }));
    }
}
