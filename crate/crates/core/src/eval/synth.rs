//! Planted-structure graphs for desk-scale experiments.
//!
//! [`synth_hetgraph`] mimics a movie/director/actor network with a class
//! per node; [`synth_link_graph`] mimics a user/artist/tag network with
//! preference blocks.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, HetGraph, Labels, Masks, NodeTypeId, RelationId, Schema};
use crate::rng::{Rng, SeedTree};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub movies: usize,
    pub directors: usize,
    pub actors: usize,
    /// Edge probability between a movie and a same-class director/actor.
    pub p_in: f64,
    /// Edge probability across classes.
    pub p_out: f64,
    /// Standard deviation of the Gaussian noise on the class indicator.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            movies: 300,
            directors: 100,
            actors: 200,
            p_in: 0.05,
            p_out: 0.005,
            feature_noise: 0.5,
            seed: 0,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} is not a probability")))
    }
}

/// Splits `0..n` into shuffled 10% / 10% / 80% train, validation and test.
pub fn split_masks(n: usize, rng: &mut Rng) -> Masks {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = n / 10;
    let n_val = n / 10;
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Masks { train, val, test }
}

/// Movie (M), director (D), actor (A) graph with relations M-D and M-A.
///
/// Every node draws a class uniformly; a movie links to each director and
/// actor with probability `p_in` when their classes agree and `p_out`
/// otherwise. Movies carry their class indicator plus Gaussian noise;
/// directors and actors are featureless. Movies are labeled and split
/// 10/10/80.
pub fn synth_hetgraph(cfg: &SynthConfig) -> Result<HetGraph> {
    check_prob("p_in", cfg.p_in)?;
    check_prob("p_out", cfg.p_out)?;
    if cfg.p_in < cfg.p_out {
        return Err(Error::Config(format!("p_in {} below p_out {}", cfg.p_in, cfg.p_out)));
    }
    if cfg.classes < 2 || cfg.movies < 10 || cfg.directors == 0 || cfg.actors == 0 {
        return Err(Error::Config("need >= 2 classes, >= 10 movies, some directors and actors".into()));
    }
    if !(cfg.feature_noise >= 0.0) {
        return Err(Error::Config("feature noise must be >= 0".into()));
    }
    let seeds = SeedTree::new(cfg.seed);
    let mut rng = seeds.stream("classes");
    let class_of = |n: usize, rng: &mut Rng| -> Vec<usize> { (0..n).map(|_| rng.random_range(0..cfg.classes)).collect() };
    let movie_class = class_of(cfg.movies, &mut rng);
    let director_class = class_of(cfg.directors, &mut rng);
    let actor_class = class_of(cfg.actors, &mut rng);

    let schema = Schema::from_symbols(
        &[("movie", "M"), ("director", "D"), ("actor", "A")],
        &[("M", "D"), ("M", "A")],
    )?;
    let mut rng = seeds.stream("edges");
    let mut edges = Vec::new();
    for (rel, others) in [(RelationId(0), &director_class), (RelationId(1), &actor_class)] {
        for (m, &cm) in movie_class.iter().enumerate() {
            for (x, &cx) in others.iter().enumerate() {
                let p = if cm == cx { cfg.p_in } else { cfg.p_out };
                if rng.random::<f64>() < p {
                    edges.push((rel, m, x));
                }
            }
        }
    }

    let mut rng = seeds.stream("features");
    let noise = Normal::new(0.0, cfg.feature_noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut feats = Vec::with_capacity(cfg.movies * cfg.classes);
    for &c in &movie_class {
        for j in 0..cfg.classes {
            feats.push(if j == c { 1.0 } else { 0.0 } + noise.sample(&mut rng));
        }
    }
    let masks = split_masks(cfg.movies, &mut seeds.stream("splits"));
    GraphBuilder::new(schema, vec![cfg.movies, cfg.directors, cfg.actors])
        .edges(edges)
        .features(NodeTypeId(0), Tensor::matrix(cfg.movies, cfg.classes, feats)?)
        .labels(
            NodeTypeId(0),
            Labels {
                classes: movie_class.into_iter().map(Some).collect(),
                num_classes: cfg.classes,
            },
        )
        .masks(NodeTypeId(0), masks)
        .build()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSynthConfig {
    pub blocks: usize,
    pub users: usize,
    pub artists: usize,
    pub tags: usize,
    /// User-artist edge probability inside / across preference blocks.
    pub p_in: f64,
    pub p_out: f64,
    /// User-user edge probabilities.
    pub p_friend_in: f64,
    pub p_friend_out: f64,
    /// Artist-tag edge probabilities.
    pub p_tag_in: f64,
    pub p_tag_out: f64,
    pub seed: u64,
}

impl Default for LinkSynthConfig {
    fn default() -> Self {
        Self {
            blocks: 8,
            users: 160,
            artists: 160,
            tags: 20,
            p_in: 0.4,
            p_out: 0.002,
            p_friend_in: 0.05,
            p_friend_out: 0.005,
            p_tag_in: 0.3,
            p_tag_out: 0.02,
            seed: 0,
        }
    }
}

/// User (U), artist (A), tag (T) graph with relations U-A, U-U and A-T,
/// all featureless. Each node sits in one of `blocks` preference blocks;
/// every relation is denser inside a block.
pub fn synth_link_graph(cfg: &LinkSynthConfig) -> Result<HetGraph> {
    for (n, p) in [
        ("p_in", cfg.p_in),
        ("p_out", cfg.p_out),
        ("p_friend_in", cfg.p_friend_in),
        ("p_friend_out", cfg.p_friend_out),
        ("p_tag_in", cfg.p_tag_in),
        ("p_tag_out", cfg.p_tag_out),
    ] {
        check_prob(n, p)?;
    }
    if cfg.blocks == 0 || cfg.users < 2 || cfg.artists < 2 || cfg.tags == 0 {
        return Err(Error::Config("need blocks, >= 2 users and artists, and tags".into()));
    }
    let schema = Schema::from_symbols(
        &[("user", "U"), ("artist", "A"), ("tag", "T")],
        &[("U", "A"), ("U", "U"), ("A", "T")],
    )?;
    let seeds = SeedTree::new(cfg.seed);
    let block = |i: usize, n: usize| i * cfg.blocks / n;
    let mut rng = seeds.stream("edges");
    let mut edges = Vec::new();
    let mut add = |rel: usize, na: usize, nb: usize, pin: f64, pout: f64, same: bool, rng: &mut Rng| {
        for a in 0..na {
            for b in 0..nb {
                if same && b <= a {
                    continue;
                }
                let p = if block(a, na) == block(b, nb) { pin } else { pout };
                if rng.random::<f64>() < p {
                    edges.push((RelationId(rel), a, b));
                }
            }
        }
    };
    add(0, cfg.users, cfg.artists, cfg.p_in, cfg.p_out, false, &mut rng);
    add(1, cfg.users, cfg.users, cfg.p_friend_in, cfg.p_friend_out, true, &mut rng);
    add(2, cfg.artists, cfg.tags, cfg.p_tag_in, cfg.p_tag_out, false, &mut rng);
    GraphBuilder::new(schema, vec![cfg.users, cfg.artists, cfg.tags])
        .edges(edges)
        .build()
}

/// Positive pairs of one relation split into train / validation / test,
/// plus equally many uniformly drawn unobserved test and validation pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSplit {
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub val_negatives: Vec<(usize, usize)>,
    pub test_negatives: Vec<(usize, usize)>,
}

/// Splits the edges of `rel` by the given validation and test fractions.
/// Negatives avoid every edge of `rel`.
pub fn split_links(graph: &HetGraph, rel: RelationId, val_frac: f64, test_frac: f64, rng: &mut Rng) -> Result<LinkSplit> {
    if !(val_frac > 0.0 && test_frac > 0.0 && val_frac + test_frac < 1.0) {
        return Err(Error::Config(format!("bad link split fractions {val_frac} / {test_frac}")));
    }
    let mut edges = graph.edges(rel);
    let n = edges.len();
    let n_val = ((n as f64) * val_frac).round() as usize;
    let n_test = ((n as f64) * test_frac).round() as usize;
    if n_val == 0 || n_test == 0 || n_val + n_test >= n {
        return Err(Error::InvalidInput(format!("{n} edges are too few to split")));
    }
    edges.shuffle(rng);
    let mut test = edges[..n_test].to_vec();
    let mut val = edges[n_test..n_test + n_val].to_vec();
    let mut train = edges[n_test + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    let all: HashSet<(usize, usize)> = graph.edges(rel).into_iter().collect();
    let r = graph.schema().relation(rel);
    let (nl, nr) = (graph.num_nodes(r.source), graph.num_nodes(r.target));
    let val_negatives = crate::train::negative_sample(&all, nl, nr, n_val, rng)?;
    let test_negatives = crate::train::negative_sample(&all, nl, nr, n_test, rng)?;
    Ok(LinkSplit {
        train,
        val,
        test,
        val_negatives,
        test_negatives,
    })
}
