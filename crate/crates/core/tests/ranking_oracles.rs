use std::collections::BTreeSet;

use chatrec::eval::{ndcg_at_k, precision_at_k, recall_at_k};
use chatrec::llm::normalize_title;
use chatrec::prompt::seeded_shuffle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook Fisher-Yates from the back, drawing each index with a
/// 32-bit range sample.
fn fisher_yates(ids: &mut [u32], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..ids.len()).rev() {
        let j = rng.gen_range(0..(i as u32 + 1)) as usize;
        ids.swap(i, j);
    }
}

#[test]
fn shuffle_matches_fisher_yates() {
    for seed in 0..200 {
        let mut a: Vec<u32> = (1..=20).collect();
        let mut b = a.clone();
        seeded_shuffle(&mut a, seed);
        fisher_yates(&mut b, seed);
        assert_eq!(a, b, "seed {seed}");
    }
}

#[test]
fn shuffle_is_a_permutation_and_depends_on_seed() {
    let mut a: Vec<u32> = (1..=20).collect();
    let mut b = a.clone();
    seeded_shuffle(&mut a, 1);
    seeded_shuffle(&mut b, 2);
    assert_ne!(a, b);
    a.sort();
    assert_eq!(a, (1..=20).collect::<Vec<_>>());
}

fn brute(ranking: &[u32], relevant: &BTreeSet<u32>, k: usize) -> (f64, f64, f64) {
    let mut hits = 0.0;
    let mut dcg = 0.0;
    for (pos, item) in ranking.iter().take(k).enumerate() {
        if relevant.contains(item) {
            hits += 1.0;
            dcg += 1.0 / ((pos + 2) as f64).ln() * std::f64::consts::LN_2;
        }
    }
    let ideal: f64 = (0..k.min(relevant.len())).map(|pos| std::f64::consts::LN_2 / ((pos + 2) as f64).ln()).sum();
    (hits / k as f64, hits / relevant.len() as f64, dcg / ideal)
}

proptest! {
    #[test]
    fn ranking_metrics_match_brute_force(
        ranking in proptest::sample::subsequence((1u32..=40).collect::<Vec<_>>(), 1..=20).prop_shuffle(),
        relevant in proptest::collection::btree_set(1u32..=40, 1..=10),
        k in 1usize..=10,
    ) {
        let (p, r, n) = brute(&ranking, &relevant, k);
        prop_assert!((precision_at_k(&ranking, &relevant, k).unwrap() - p).abs() < 1e-9);
        prop_assert!((recall_at_k(&ranking, &relevant, k).unwrap() - r).abs() < 1e-9);
        prop_assert!((ndcg_at_k(&ranking, &relevant, k).unwrap() - n).abs() < 1e-9);
    }

    #[test]
    fn normalize_is_idempotent(words in "(The |A |An )?[A-Z][a-z]{1,8}( [a-z]{1,6}){0,3}( \\((19|20)[0-9]{2}\\))?") {
        let once = normalize_title(&words);
        prop_assert_eq!(normalize_title(&once), once);
    }
}
