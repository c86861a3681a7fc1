mod common;

use std::collections::BTreeMap;

use magnn::graph::{validate_metapath, Csr, RelationId};
use magnn::metapath::{enumerate_all, enumerate_instances, metapath_neighbors};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{all_metapaths, brute_force_walks, random_graph};

fn blocks(table: &magnn::metapath::InstanceTable) -> BTreeMap<usize, Vec<Vec<usize>>> {
    table
        .targets()
        .iter()
        .map(|&v| {
            let r = table.block_range(v).unwrap();
            (v, r.map(|i| table.instance(i).to_vec()).collect())
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn enumeration_matches_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rg = random_graph(&mut rng, 30, 3);
        for p in all_metapaths(&rg, 3) {
            let t = enumerate_all(&rg.graph, &p, None, 0).unwrap();
            prop_assert_eq!(blocks(&t), brute_force_walks(&rg, &p));
        }
    }

    #[test]
    fn adjacency_degrees_and_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rg = random_graph(&mut rng, 40, 4);
        for &(r, a, b) in &rg.relations {
            let rel = RelationId(r);
            let adj = rg.graph.adjacency(rel);
            let fwd: usize = (0..adj.forward.rows()).map(|i| adj.forward.degree(i)).sum();
            let rev: usize = (0..adj.reverse.rows()).map(|i| adj.reverse.degree(i)).sum();
            let mut input: Vec<(usize, usize)> = rg.edges.iter()
                .filter(|e| e.0 == r).map(|e| (e.1, e.2)).collect();
            input.sort();
            prop_assert_eq!(fwd, input.len());
            prop_assert_eq!(rev, input.len());
            prop_assert_eq!(rg.graph.edges(rel), input);
            // reverse is the transpose of forward
            let transposed = Csr::from_pairs(rg.counts[b], adj.forward.iter().map(|(u, v)| (v, u)));
            prop_assert_eq!(&transposed, &adj.reverse);
            let _ = a;
        }
    }

    #[test]
    fn symmetric_paths_reverse_to_themselves(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rg = random_graph(&mut rng, 20, 3);
        for p in all_metapaths(&rg, 4) {
            let rev = validate_metapath(rg.graph.schema(), &p.reversed()).unwrap();
            prop_assert_eq!(p.is_symmetric(), rev == p);
        }
    }

    #[test]
    fn reversal_bijection_for_symmetric_paths(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rg = random_graph(&mut rng, 25, 3);
        for p in all_metapaths(&rg, 4).into_iter().filter(|p| p.is_symmetric()) {
            let t = enumerate_all(&rg.graph, &p, None, 0).unwrap();
            let all: Vec<Vec<usize>> = (0..t.num_instances()).map(|i| t.instance(i).to_vec()).collect();
            for &v in t.targets() {
                let mut reversed: Vec<Vec<usize>> = t.block_range(v).unwrap()
                    .map(|i| t.instance(i).iter().rev().copied().collect())
                    .collect();
                let mut starting_at_v: Vec<Vec<usize>> =
                    all.iter().filter(|inst| inst[0] == v).cloned().collect();
                reversed.sort();
                starting_at_v.sort();
                prop_assert_eq!(reversed, starting_at_v);
            }
        }
    }

    #[test]
    fn capped_blocks_are_bounded_and_reproducible(seed in any::<u64>(), cap in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rg = random_graph(&mut rng, 30, 3);
        for p in all_metapaths(&rg, 3) {
            let full = enumerate_all(&rg.graph, &p, None, 0).unwrap();
            let t1 = enumerate_all(&rg.graph, &p, Some(cap), 9).unwrap();
            let targets: Vec<usize> = t1.targets().iter().rev().copied().collect();
            let t2 = enumerate_instances(&rg.graph, &p, &targets, Some(cap), 9).unwrap();
            let full_blocks = blocks(&full);
            let b1 = blocks(&t1);
            prop_assert_eq!(&b1, &blocks(&t2));
            for (v, b) in &b1 {
                prop_assert!(b.len() <= cap);
                prop_assert_eq!(b.len(), full_blocks[v].len().min(cap));
                prop_assert!(b.iter().all(|inst| full_blocks[v].contains(inst)));
            }
        }
    }

    #[test]
    fn instance_total_is_order_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rg = random_graph(&mut rng, 30, 3);
        for p in all_metapaths(&rg, 2) {
            let n = rg.graph.num_nodes(p.target_type());
            let fwd: Vec<usize> = (0..n).collect();
            let mut shuffled = fwd.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut rng);
            let a = enumerate_instances(&rg.graph, &p, &fwd, None, 0).unwrap();
            let b = enumerate_instances(&rg.graph, &p, &shuffled, None, 0).unwrap();
            prop_assert_eq!(a.num_instances(), b.num_instances());
            for v in 0..n {
                prop_assert_eq!(metapath_neighbors(&a, v).unwrap(), metapath_neighbors(&b, v).unwrap());
            }
        }
    }
}
