//! Metapath instance enumeration.
//!
//! An instance of a metapath `A1 ... A(l+1)` is a node sequence
//! `(t0, ..., tn)` following the schema, with `tn` the target node and
//! `t0` its metapath-based neighbor. Walks may revisit nodes, so a
//! symmetric metapath yields the target itself as one of its neighbors.
//! Instances are grouped per target in an [`InstanceTable`]; two distinct
//! instances with the same endpoints are kept as two entries.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{validate_metapath, Direction, HetGraph, Metapath, NodeHandle, NodeTypeId, RelationId};
use crate::rng::SeedTree;
use crate::tensor::SegmentLayout;

/// One concrete walk, `t0` (neighbor) first and the target last.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetapathInstance {
    pub nodes: Vec<NodeHandle>,
}

impl MetapathInstance {
    pub fn neighbor(&self) -> NodeHandle {
        self.nodes[0]
    }

    pub fn target(&self) -> NodeHandle {
        *self.nodes.last().expect("nonempty instance")
    }
}

/// All instances of one metapath, in contiguous per-target blocks.
///
/// Node ids are stored as local indices; the node type of position `i` is
/// the `i`-th type of the metapath.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceTable {
    metapath: Metapath,
    targets: Vec<usize>,
    offsets: Vec<usize>,
    nodes: Vec<usize>,
    position: HashMap<usize, usize>,
}

impl InstanceTable {
    fn new(metapath: Metapath, targets: Vec<usize>, offsets: Vec<usize>, nodes: Vec<usize>) -> Self {
        let position = targets.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        Self {
            metapath,
            targets,
            offsets,
            nodes,
            position,
        }
    }

    pub fn metapath(&self) -> &Metapath {
        &self.metapath
    }

    /// Nodes per instance (`l + 1`).
    pub fn width(&self) -> usize {
        self.metapath.len() + 1
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn num_instances(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Local node indices of instance `i`, `t0` first.
    pub fn instance(&self, i: usize) -> &[usize] {
        let w = self.width();
        &self.nodes[i * w..(i + 1) * w]
    }

    /// Local index of position `pos` for every instance, in table order.
    pub fn column(&self, pos: usize) -> Vec<usize> {
        let w = self.width();
        self.nodes.iter().skip(pos).step_by(w).copied().collect()
    }

    /// Instance index range of the block of target `v`.
    pub fn block_range(&self, v: usize) -> Result<std::ops::Range<usize>> {
        let &p = self.position.get(&v).ok_or(Error::UnknownTarget(v))?;
        Ok(self.offsets[p]..self.offsets[p + 1])
    }

    pub fn block(&self, v: usize) -> Result<Vec<MetapathInstance>> {
        Ok(self.block_range(v)?.map(|i| self.handles(i)).collect())
    }

    pub fn handles(&self, i: usize) -> MetapathInstance {
        MetapathInstance {
            nodes: self
                .instance(i)
                .iter()
                .zip(self.metapath.types())
                .map(|(&n, &t)| NodeHandle::new(t, n))
                .collect(),
        }
    }

    /// Segment layout of the per-target blocks, in target order.
    pub fn layout(&self) -> SegmentLayout {
        SegmentLayout::new(self.offsets.clone()).expect("offsets are nondecreasing from 0")
    }

    /// Writes the table in the versioned text format documented in the repository README.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let join = |xs: &mut dyn Iterator<Item = usize>| {
            xs.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
        };
        writeln!(w, "magnn-instances 1")?;
        writeln!(w, "types {}", join(&mut self.metapath.types().iter().map(|t| t.0)))?;
        writeln!(w, "relations {}", join(&mut self.metapath.relations().iter().map(|r| r.0)))?;
        writeln!(
            w,
            "counts {} {} {}",
            self.targets.len(),
            self.num_instances(),
            self.width()
        )?;
        writeln!(w, "targets {}", join(&mut self.targets.iter().copied()))?;
        writeln!(w, "offsets {}", join(&mut self.offsets.iter().copied()))?;
        for i in 0..self.num_instances() {
            writeln!(w, "{}", join(&mut self.instance(i).iter().copied()))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("instance dump truncated before {what}")))?
                .map_err(|e| Error::Format(e.to_string()))
        };
        fn nums(line: &str, key: &str) -> Result<Vec<usize>> {
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| Error::Format(format!("expected {key:?} line, got {line:?}")))?;
            rest.split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Format(format!("bad number {t:?}"))))
                .collect()
        }
        let header = next("header")?;
        if header.trim() != "magnn-instances 1" {
            return Err(Error::Format(format!("unsupported instance dump header {header:?}")));
        }
        let types = nums(&next("types")?, "types")?;
        let rels = nums(&next("relations")?, "relations")?;
        let counts = nums(&next("counts")?, "counts")?;
        if counts.len() != 3 || types.len() != rels.len() + 1 || counts[2] != types.len() {
            return Err(Error::Format("inconsistent instance dump counts".into()));
        }
        let targets = nums(&next("targets")?, "targets")?;
        let offsets = nums(&next("offsets")?, "offsets")?;
        if targets.len() != counts[0]
            || offsets.len() != counts[0] + 1
            || offsets.last() != Some(&counts[1])
            || offsets.first() != Some(&0)
            || offsets.windows(2).any(|w| w[1] < w[0])
        {
            return Err(Error::Format("inconsistent instance dump offsets".into()));
        }
        let mut nodes = Vec::with_capacity(counts[1] * counts[2]);
        for _ in 0..counts[1] {
            let row = nums(&next("instance")?, "")?;
            if row.len() != counts[2] {
                return Err(Error::Format("instance row has wrong width".into()));
            }
            nodes.extend(row);
        }
        let metapath = Metapath::new(
            types.into_iter().map(NodeTypeId).collect(),
            rels.into_iter().map(RelationId).collect(),
        );
        Ok(Self::new(metapath, targets, offsets, nodes))
    }
}

struct Walker<'g> {
    graph: &'g HetGraph,
    relations: Vec<RelationId>,
    /// Direction for stepping from position `i + 1` back to position `i`.
    back: Vec<Direction>,
}

impl Walker<'_> {
    /// Depth-first from the target (last position) towards `t0`, calling
    /// `emit` with every complete sequence.
    fn walk(&self, pos: usize, seq: &mut [usize], emit: &mut dyn FnMut(&[usize])) {
        if pos == 0 {
            emit(seq);
            return;
        }
        let i = pos - 1;
        for &n in self.graph.step(self.relations[i], self.back[i], seq[pos]) {
            seq[i] = n;
            self.walk(i, seq, emit);
        }
    }
}

/// Enumerates the instances of `path` ending at each of `targets` (local
/// indices of the path's last type).
///
/// Blocks are sorted lexicographically by `(t0, ..., tn)`. With a cap, a
/// block larger than the cap is replaced by a uniform sample of `cap`
/// instances drawn by reservoir sampling from a generator keyed on
/// `(seed, target)`, so the result does not depend on the target order.
pub fn enumerate_instances(
    graph: &HetGraph,
    path: &Metapath,
    targets: &[usize],
    cap: Option<usize>,
    seed: u64,
) -> Result<InstanceTable> {
    let path = validate_metapath(graph.schema(), path)?;
    if cap == Some(0) {
        return Err(Error::Config("instance cap must be positive".into()));
    }
    let n_targets = graph.num_nodes(path.target_type());
    if let Some(&bad) = targets.iter().find(|&&v| v >= n_targets) {
        return Err(Error::UnknownTarget(bad));
    }
    let back = path
        .directions(graph.schema())
        .into_iter()
        .map(|d| match d {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        })
        .collect();
    let walker = Walker {
        graph,
        relations: path.relations().to_vec(),
        back,
    };
    let width = path.len() + 1;
    let seeds = SeedTree::new(seed);

    let blocks: Vec<Vec<usize>> = targets
        .par_iter()
        .map(|&v| {
            let mut seq = vec![0usize; width];
            seq[width - 1] = v;
            let mut rows: Vec<Vec<usize>> = Vec::new();
            match cap {
                None => walker.walk(width - 1, &mut seq, &mut |s| rows.push(s.to_vec())),
                Some(cap) => {
                    let mut rng = seeds.indexed("instances", v as u64);
                    let mut seen = 0usize;
                    walker.walk(width - 1, &mut seq, &mut |s| {
                        if seen < cap {
                            rows.push(s.to_vec());
                        } else {
                            let j = rng.random_range(0..=seen);
                            if j < cap {
                                rows[j] = s.to_vec();
                            }
                        }
                        seen += 1;
                    });
                }
            }
            rows.sort_unstable();
            rows.concat()
        })
        .collect();

    let mut offsets = Vec::with_capacity(targets.len() + 1);
    offsets.push(0);
    for b in &blocks {
        offsets.push(offsets.last().unwrap() + b.len() / width);
    }
    Ok(InstanceTable::new(path, targets.to_vec(), offsets, blocks.concat()))
}

/// Instances for every node of the path's target type.
pub fn enumerate_all(graph: &HetGraph, path: &Metapath, cap: Option<usize>, seed: u64) -> Result<InstanceTable> {
    let targets: Vec<usize> = (0..graph.num_nodes(path.target_type())).collect();
    enumerate_instances(graph, path, &targets, cap, seed)
}

/// The multiset of metapath-based neighbors of `v`: the `t0` of every
/// instance in its block.
pub fn metapath_neighbors(table: &InstanceTable, v: usize) -> Result<Vec<NodeHandle>> {
    let ty = table.metapath().start_type();
    Ok(table
        .block_range(v)?
        .map(|i| NodeHandle::new(ty, table.instance(i)[0]))
        .collect())
}

/// Edges `(v, u)` of the metapath-based graph, one per instance.
pub fn build_metapath_graph(table: &InstanceTable) -> Vec<(NodeHandle, NodeHandle)> {
    let path = table.metapath();
    let (ts, tt) = (path.start_type(), path.target_type());
    let w = table.width();
    (0..table.num_instances())
        .map(|i| {
            let inst = table.instance(i);
            (NodeHandle::new(tt, inst[w - 1]), NodeHandle::new(ts, inst[0]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, Schema};

    /// A1 - B1 - A2
    fn aba() -> (HetGraph, Metapath) {
        let s = Schema::from_symbols(&[("a", "A"), ("b", "B")], &[("A", "B")]).unwrap();
        let g = GraphBuilder::new(s, vec![2, 1])
            .edge(RelationId(0), 0, 0)
            .edge(RelationId(0), 1, 0)
            .build()
            .unwrap();
        let p = Metapath::new(
            vec![NodeTypeId(0), NodeTypeId(1), NodeTypeId(0)],
            vec![RelationId(0), RelationId(0)],
        );
        (g, p)
    }

    fn a(i: usize) -> NodeHandle {
        NodeHandle::new(NodeTypeId(0), i)
    }

    #[test]
    fn aba_blocks_include_self_instances() {
        let (g, p) = aba();
        let t = enumerate_all(&g, &p, None, 0).unwrap();
        assert_eq!(t.block_range(0).unwrap().len(), 2);
        assert_eq!(t.instance(0), &[0, 0, 0]);
        assert_eq!(t.instance(1), &[1, 0, 0]);
        assert_eq!(metapath_neighbors(&t, 0).unwrap(), vec![a(0), a(1)]);
        let edges = build_metapath_graph(&t);
        assert_eq!(edges, vec![(a(0), a(0)), (a(0), a(1)), (a(1), a(0)), (a(1), a(1))]);
    }

    #[test]
    fn repeated_neighbor_counts_twice() {
        // A0 - B0 - A1 and A0 - B1 - A1: two instances A1 -> A0
        let s = Schema::from_symbols(&[("a", "A"), ("b", "B")], &[("A", "B")]).unwrap();
        let g = GraphBuilder::new(s, vec![2, 2])
            .edges([(RelationId(0), 0, 0), (RelationId(0), 1, 0), (RelationId(0), 0, 1), (RelationId(0), 1, 1)])
            .build()
            .unwrap();
        let (_, p) = aba();
        let t = enumerate_all(&g, &p, None, 0).unwrap();
        let nb = metapath_neighbors(&t, 1).unwrap();
        assert_eq!(nb.iter().filter(|&&h| h == a(0)).count(), 2);
        assert_eq!(nb.len(), 4);
    }

    #[test]
    fn isolated_target_has_empty_block() {
        let s = Schema::from_symbols(&[("a", "A"), ("b", "B")], &[("A", "B")]).unwrap();
        let g = GraphBuilder::new(s, vec![3, 1]).edge(RelationId(0), 0, 0).build().unwrap();
        let (_, p) = aba();
        let t = enumerate_all(&g, &p, None, 0).unwrap();
        assert!(t.block(2).unwrap().is_empty());
        assert!(metapath_neighbors(&t, 2).unwrap().is_empty());
        assert!(matches!(metapath_neighbors(&t, 7), Err(Error::UnknownTarget(7))));
    }

    #[test]
    fn no_edges_no_metapath_graph() {
        let s = Schema::from_symbols(&[("a", "A"), ("b", "B")], &[("A", "B")]).unwrap();
        let g = GraphBuilder::new(s, vec![3, 1]).build().unwrap();
        let (_, p) = aba();
        let t = enumerate_all(&g, &p, None, 0).unwrap();
        assert!(build_metapath_graph(&t).is_empty());
    }

    #[test]
    fn zero_cap_is_an_error() {
        let (g, p) = aba();
        assert!(matches!(enumerate_all(&g, &p, Some(0), 0), Err(Error::Config(_))));
    }

    /// Last.fm-shaped toy graph around "Bob - Beatles - Rock - Queen".
    #[test]
    fn uata_instance_reaches_queen() {
        let s = Schema::from_symbols(
            &[("user", "U"), ("artist", "A"), ("tag", "T")],
            &[("U", "U"), ("U", "A"), ("A", "T")],
        )
        .unwrap();
        // users: 0 Alice, 1 Bob; artists: 0 Beatles, 1 Queen, 2 Lady Gaga; tags: 0 Rock, 1 Pop
        let g = GraphBuilder::new(s.clone(), vec![2, 3, 2])
            .edges([
                (RelationId(0), 0, 1),
                (RelationId(1), 1, 0),
                (RelationId(1), 0, 2),
                (RelationId(2), 0, 0),
                (RelationId(2), 1, 0),
                (RelationId(2), 2, 1),
            ])
            .build()
            .unwrap();
        let p = Metapath::new(
            vec![NodeTypeId(0), NodeTypeId(1), NodeTypeId(2), NodeTypeId(1)],
            vec![RelationId(1), RelationId(2), RelationId(2)],
        );
        let t = enumerate_all(&g, &p, None, 0).unwrap();
        let queen = t.block(1).unwrap();
        let want = MetapathInstance {
            nodes: vec![
                NodeHandle::new(NodeTypeId(0), 1),
                NodeHandle::new(NodeTypeId(1), 0),
                NodeHandle::new(NodeTypeId(2), 0),
                NodeHandle::new(NodeTypeId(1), 1),
            ],
        };
        assert!(queen.contains(&want));
        // metapath-based graph pairs (artist target, user neighbor)
        for (v, u) in build_metapath_graph(&t) {
            assert_eq!(v.ty, NodeTypeId(1));
            assert_eq!(u.ty, NodeTypeId(0));
        }
    }

    #[test]
    fn dump_round_trip() {
        let (g, p) = aba();
        let t = enumerate_all(&g, &p, None, 0).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = InstanceTable::read_from(&buf[..]).unwrap();
        assert_eq!(back, t);
        assert!(InstanceTable::read_from(&b"magnn-instances 2\n"[..]).is_err());
    }
}
