//! The full forward pass against a straight-line scalar reimplementation.
//!
//! The reference below works on nested `Vec`s, finds instances with the
//! brute-force walk generator, and never touches the tape.

mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use magnn::graph::{validate_metapath, GraphBuilder, Metapath, NodeTypeId, RelationId, Schema};
use magnn::model::{Activation, EncoderKind, Magnn, ModelConfig, ModelParams};
use magnn::rng::SeedTree;
use magnn::tensor::Tensor;

use common::{brute_force_walks, RandomGraph};

type Mat = Vec<Vec<f64>>;

fn mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn matvec(w: &Mat, x: &[f64]) -> Vec<f64> {
    w.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn softmax(e: &[f64]) -> Vec<f64> {
    let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = e.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = ex.iter().sum();
    ex.iter().map(|x| x / s).collect()
}

/// `(graph, relations, edges)`: types A (3 nodes, 2 features), B (2, one-hot),
/// C (1, one-hot); relations A-B and C-B (declared C to B, so walking B to C
/// runs against the declaration).
fn toy() -> RandomGraph {
    let schema = Schema::from_symbols(&[("a", "A"), ("b", "B"), ("c", "C")], &[("A", "B"), ("C", "B")]).unwrap();
    let edges = vec![(0, 0, 0), (0, 1, 0), (0, 1, 1), (0, 2, 1), (1, 0, 0), (1, 0, 1)];
    let graph = GraphBuilder::new(schema, vec![3, 2, 1])
        .edges(edges.iter().map(|&(r, u, v)| (RelationId(r), u, v)))
        .features(
            NodeTypeId(0),
            Tensor::matrix(3, 2, vec![0.9, -0.4, 0.1, 0.7, -1.2, 0.3]).unwrap(),
        )
        .build()
        .unwrap();
    RandomGraph {
        graph,
        counts: vec![3, 2, 1],
        relations: vec![(0, 0, 1), (1, 2, 1)],
        edges,
    }
}

fn paths(rg: &RandomGraph) -> Vec<Metapath> {
    let t = |i| NodeTypeId(i);
    let r = |i| RelationId(i);
    vec![
        Metapath::new(vec![t(0), t(1), t(0)], vec![r(0), r(0)]),
        Metapath::new(vec![t(0), t(1), t(2), t(1), t(0)], vec![r(0), r(1), r(1), r(0)]),
        Metapath::new(vec![t(2), t(1), t(0), t(1), t(2)], vec![r(1), r(0), r(0), r(1)]),
    ]
    .into_iter()
    .map(|p| validate_metapath(rg.graph.schema(), &p).unwrap())
    .collect()
}

struct Reference<'a> {
    rg: &'a RandomGraph,
    cfg: &'a ModelConfig,
    p: BTreeMap<String, Mat>,
}

impl Reference<'_> {
    fn content(&self, ty: usize, i: usize) -> Vec<f64> {
        let sym = &self.rg.graph.schema().node_types()[ty].symbol;
        let w = &self.p[&format!("content.{sym}")];
        match ty {
            0 => matvec(w, self.rg.graph.features(NodeTypeId(0)).to_dense().row(i)),
            _ => w.iter().map(|row| row[i]).collect(),
        }
    }

    fn encode(&self, path: &Metapath, pi: usize, walk: &[usize]) -> Vec<f64> {
        let d = self.cfg.hidden_dim;
        let vecs: Vec<Vec<f64>> = walk
            .iter()
            .zip(path.types())
            .map(|(&n, t)| self.content(t.0, n))
            .collect();
        let n = vecs.len() as f64;
        let mean = |vs: &[Vec<f64>]| -> Vec<f64> {
            (0..d).map(|j| vs.iter().map(|v| v[j]).sum::<f64>() / vs.len() as f64).collect()
        };
        match self.cfg.encoder {
            EncoderKind::Mean => mean(&vecs),
            EncoderKind::Linear => matvec(&self.p[&format!("l0.enc.{pi}")], &mean(&vecs)),
            EncoderKind::Rotation => {
                let h = d / 2;
                let (mut re, mut im): (Vec<f64>, Vec<f64>) = (vecs[0][..h].to_vec(), vecs[0][h..].to_vec());
                for i in 1..vecs.len() {
                    let rel = path.relations()[i - 1].0;
                    let (_, src, _) = self.rg.relations[rel];
                    let sign = if path.types()[i - 1].0 == src { 1.0 } else { -1.0 };
                    let theta = &self.p[&format!("l0.rel.{rel}")][0];
                    for j in 0..h {
                        let (c, s) = ((sign * theta[j]).cos(), (sign * theta[j]).sin());
                        let (a, b) = (re[j], im[j]);
                        re[j] = vecs[i][j] + a * c - b * s;
                        im[j] = vecs[i][h + j] + a * s + b * c;
                    }
                }
                re.iter().chain(&im).map(|x| x / n).collect()
            }
        }
    }

    /// Metapath-specific vector of every target node.
    fn intra(&self, path: &Metapath, pi: usize) -> Mat {
        let d = self.cfg.hidden_dim;
        let k = self.cfg.heads;
        let attn = &self.p[&format!("l0.attn.{pi}")];
        let target_ty = path.target_type().0;
        brute_force_walks(self.rg, path)
            .into_iter()
            .map(|(v, walks)| {
                let hv = self.content(target_ty, v);
                let enc: Vec<Vec<f64>> = walks.iter().map(|w| self.encode(path, pi, w)).collect();
                let mut out = vec![0.0; k * d];
                if enc.is_empty() {
                    return out;
                }
                for head in 0..k {
                    let a = &attn[head];
                    let e: Vec<f64> = enc
                        .iter()
                        .map(|h| {
                            let x = dot(&a[..d], &hv) + dot(&a[d..], h);
                            if x > 0.0 {
                                x
                            } else {
                                self.cfg.leaky_slope * x
                            }
                        })
                        .collect();
                    let alpha = softmax(&e);
                    for j in 0..d {
                        let s: f64 = enc.iter().zip(&alpha).map(|(h, a)| a * h[j]).sum();
                        out[head * d + j] = elu(s);
                    }
                }
                out
            })
            .collect()
    }

    fn outputs(&self, ty: usize) -> Mat {
        let sym = &self.rg.graph.schema().node_types()[ty].symbol;
        let m = &self.p[&format!("l0.inter.{sym}.m")];
        let b = &self.p[&format!("l0.inter.{sym}.b")][0];
        let q = &self.p[&format!("l0.inter.{sym}.q")][0];
        let mine: Vec<(usize, &Metapath)> = self
            .cfg
            .metapaths
            .iter()
            .enumerate()
            .filter(|(_, p)| p.target_type().0 == ty)
            .collect();
        let hs: Vec<Mat> = mine.iter().map(|&(pi, p)| self.intra(p, pi)).collect();
        let scores: Vec<f64> = hs
            .iter()
            .map(|h| {
                let mut s = vec![0.0; b.len()];
                for row in h {
                    for (sj, (z, bj)) in s.iter_mut().zip(matvec(m, row).iter().zip(b)) {
                        *sj += (z + bj).tanh() / h.len() as f64;
                    }
                }
                dot(q, &s)
            })
            .collect();
        let beta = softmax(&scores);
        let wo = &self.p["l0.out"];
        (0..hs[0].len())
            .map(|v| {
                let fused: Vec<f64> = (0..hs[0][v].len())
                    .map(|j| hs.iter().zip(&beta).map(|(h, bt)| bt * h[v][j]).sum())
                    .collect();
                softmax(&matvec(wo, &fused))
            })
            .collect()
    }
}

fn check(encoder: EncoderKind, seed: u64) {
    let rg = toy();
    let cfg = ModelConfig {
        hidden_dim: 4,
        attn_dim: 3,
        out_dim: 2,
        heads: 2,
        layers: 1,
        encoder,
        dropout: 0.0,
        output_activation: Activation::Softmax,
        metapaths: paths(&rg),
        ..ModelConfig::default()
    };
    let graph = Arc::new(rg.graph.clone());
    let model = Magnn::with_enumeration(graph, cfg.clone(), None, 0).unwrap();
    let params: ModelParams = model.init_params(&mut SeedTree::new(seed).stream("init")).unwrap();
    // non-zero biases so they matter
    let mut params = params;
    for (name, t) in params.iter_mut() {
        if name.ends_with(".b") {
            for (i, x) in t.data_mut().iter_mut().enumerate() {
                *x = 0.1 * (i as f64 + 1.0);
            }
        }
    }
    let (z, _) = model.evaluate(&params).unwrap();
    let reference = Reference {
        rg: &rg,
        cfg: &cfg,
        p: params.iter().map(|(k, v)| (k.to_string(), mat(v))).collect(),
    };
    for ty in [0usize, 2] {
        let want = reference.outputs(ty);
        let got = z[ty].as_ref().unwrap();
        assert_eq!(got.rows(), want.len());
        for (r, row) in want.iter().enumerate() {
            for (c, &w) in row.iter().enumerate() {
                let g = got.get(r, c);
                assert!((g - w).abs() < 1e-12, "{encoder:?} type {ty} [{r},{c}]: {g} vs {w}");
            }
        }
    }
    assert!(z[1].is_none());
}

#[test]
fn rotation_forward_matches_scalar_reference() {
    for seed in 0..5 {
        check(EncoderKind::Rotation, seed);
    }
}

#[test]
fn mean_forward_matches_scalar_reference() {
    check(EncoderKind::Mean, 11);
}

#[test]
fn linear_forward_matches_scalar_reference() {
    check(EncoderKind::Linear, 12);
}
