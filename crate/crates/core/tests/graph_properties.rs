mod common;

use common::{random_symbol, Gf2Replay};
use fountain_lab::degree::exact_case_probs;
use fountain_lab::graph::{ClassKind, Classification, DecodeGraph, Update};
use fountain_lab::symbol::{CodedSymbol, Payload, SymbolId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_invariants(g: &DecodeGraph) {
    let k = g.k();
    let hist = g.component_histogram();
    let white: usize = hist.iter().map(|(s, c)| s * c).sum();
    let components: usize = hist.values().sum();
    assert_eq!(g.recovered_count() + white, k, "conservation");
    // white components are trees
    assert_eq!(g.edge_count(), white - components);
    assert_eq!(g.largest_white_component(), hist.keys().next_back().copied().unwrap_or(0));
    assert_eq!(g.beta(), g.recovered_count() as f64 / k as f64);
}

proptest! {
    // 100 cases x 100 operations = 10^4 randomized operations
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn graph_invariants_hold(seed in any::<u64>(), k in 2usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let source: Vec<u8> = (0..k).map(|_| rng.gen()).collect();
        let mut g = DecodeGraph::new(k).unwrap();
        let mut last = 0;
        for _ in 0..100 {
            let m = rng.gen_range(1..=k.min(4));
            let c = random_symbol(&mut rng, &source, m);
            let pre_size = match g.classify(&c).unwrap() {
                Classification::Case1 { target, .. } => Some(g.component_size(target)),
                _ => None,
            };
            match g.receive(&c).unwrap() {
                Update::Recovered(items) => {
                    prop_assert_eq!(Some(items.len()), pre_size);
                    prop_assert_eq!(g.recovered_count(), last + items.len());
                    for (id, v) in items {
                        prop_assert_eq!(v, Payload(vec![source[id.index()]]));
                    }
                }
                _ => prop_assert_eq!(g.recovered_count(), last),
            }
            prop_assert!(g.recovered_count() >= last);
            last = g.recovered_count();
            check_invariants(&g);
        }
    }
}

#[test]
fn peeling_matches_gf2_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0f);
    for _ in 0..1000 {
        let k = rng.gen_range(2..=12);
        let source: Vec<u8> = (0..k).map(|_| rng.gen()).collect();
        let mut g = DecodeGraph::new(k).unwrap();
        let mut oracle = Gf2Replay::new(k);
        for _ in 0..rng.gen_range(1..40) {
            let m = rng.gen_range(1..=k.min(4));
            let c = random_symbol(&mut rng, &source, m);
            g.receive(&c).unwrap();
            oracle.receive(c.indices(), c.payload().as_bytes()[0]);
            let expected = oracle.solved();
            for (i, want) in expected.iter().enumerate() {
                let got = g.value(SymbolId(i as u32)).map(|p| p.as_bytes()[0]);
                assert_eq!(got, *want, "k = {k}, node {i}");
            }
        }
    }
}

#[test]
fn star_component_matches_elimination() {
    let source = [3u8, 14, 15, 92, 65, 35];
    let mut g = DecodeGraph::new(6).unwrap();
    let mut oracle = Gf2Replay::new(6);
    let mut feed = |ix: &[u32]| {
        let ids: Vec<SymbolId> = ix.iter().map(|&i| SymbolId(i)).collect();
        let v = ix.iter().fold(0, |a, &i| a ^ source[i as usize]);
        oracle.receive(&ids, v);
        g.receive(&CodedSymbol::new(ids, Payload(vec![v])).unwrap()).unwrap()
    };
    for leaf in 1..5 {
        feed(&[0, leaf]);
    }
    let out = feed(&[2]);
    let Update::Recovered(items) = out else { panic!("expected recovery") };
    assert_eq!(items.len(), 5);
    let solved = oracle.solved();
    for (id, v) in items {
        assert_eq!(Some(v.as_bytes()[0]), solved[id.index()]);
    }
    assert_eq!(g.largest_white_component(), 1);
}

#[test]
fn classification_frequencies_match_hypergeometric() {
    let (k, r, n) = (200usize, 120usize, 20_000usize);
    let source = vec![0u8; k];
    let mut g = DecodeGraph::new(k).unwrap();
    for i in 0..r {
        g.receive(&CodedSymbol::new(vec![SymbolId(i as u32)], Payload(vec![0])).unwrap()).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for m in [1usize, 2, 3, 5, 8] {
        let (mut c1, mut c2) = (0usize, 0usize);
        for _ in 0..n {
            match g.classify(&random_symbol(&mut rng, &source, m)).unwrap().kind() {
                ClassKind::Case1 => c1 += 1,
                ClassKind::Case2 | ClassKind::Cycle => c2 += 1,
                _ => {}
            }
        }
        let (q1, q2) = exact_case_probs(k, r, m).unwrap();
        for (count, q) in [(c1, q1), (c2, q2)] {
            let sigma = (n as f64 * q * (1.0 - q)).sqrt();
            assert!(
                (count as f64 - n as f64 * q).abs() <= 3.0 * sigma.max(1e-9),
                "m = {m}: count {count}, expected {}",
                n as f64 * q
            );
        }
    }
}

#[test]
fn giant_component_emerges() {
    let k = 1000;
    let source = vec![0u8; k];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = DecodeGraph::new(k).unwrap();
    for _ in 0..600 {
        g.receive(&random_symbol(&mut rng, &source, 2)).unwrap();
    }
    assert!(g.largest_white_component() > 200, "{}", g.largest_white_component());
}
