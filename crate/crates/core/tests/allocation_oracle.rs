mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbrp_core::allocation::check_allocation;
use sbrp_core::{build_candidate_sets, generate_synthetic, solve_allocation, AllocationError, SyntheticParams};

#[test]
fn small_instances_match_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..60 {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=6);
        let walk = rng.random_range(0.3..0.7);
        let cands = common::random_candidates(&mut rng, n, m, walk);
        let cap = rng.random_range(1..=4u32);
        let oracle = common::allocation_oracle(&cands, cap as usize);
        match solve_allocation(&cands, cap) {
            Ok(a) => {
                let (count, walk) = oracle.expect("solver found an allocation the oracle missed");
                assert_eq!(a.open_count, count);
                assert!((a.total_walk - walk).abs() < 1e-9);
                assert!(check_allocation(&a, &cands, cap).is_empty());
            }
            Err(AllocationError::StudentUnreachable(_) | AllocationError::Infeasible(_)) => {
                assert!(oracle.is_none());
            }
        }
    }
}

#[test]
fn synthetic_heuristic_respects_bounds() {
    for seed in 0..3 {
        let inst = generate_synthetic(&SyntheticParams::new(400, 1.0, 1.0, seed)).unwrap();
        let cands = build_candidate_sets(&inst).unwrap();
        let a = solve_allocation(&cands, inst.stop_capacity).unwrap();
        assert!(check_allocation(&a, &cands, inst.stop_capacity).is_empty());
        assert!(a.lower_bound <= a.open_count);
        assert!(a.open_count >= 400usize.div_ceil(inst.stop_capacity as usize));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn medium_instances_are_feasible(seed in 0u64..10_000, n in 10usize..60, m in 8usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cands = common::random_candidates(&mut rng, n, m, 0.35);
        if let Ok(a) = solve_allocation(&cands, 5) {
            prop_assert!(check_allocation(&a, &cands, 5).is_empty());
            prop_assert!(a.open_count >= a.lower_bound);
        }
    }
}
