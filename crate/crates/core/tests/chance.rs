mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbrp_core::overbooking::{
    group_moments, inv_norm_cdf, linearized_feasible, normal_feasible, poisson_binomial_pmf,
    poisson_binomial_tail,
};
use sbrp_core::ChanceParams;

#[test]
fn quantile_matches_series_oracle() {
    for p in [0.6, 0.8, 0.9, 0.95, 0.975, 0.99] {
        let got = inv_norm_cdf(p).unwrap();
        let want = common::inv_norm_series(p);
        assert!((got - want).abs() < 1e-7, "p={p}: {got} vs {want}");
    }
    assert!((inv_norm_cdf(0.975).unwrap() - 1.959964).abs() < 1e-5);
}

#[test]
fn dp_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..30 {
        let n = rng.random_range(0..=12);
        let p: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let brute = common::poisson_binomial_brute(&p);
        let pmf = poisson_binomial_pmf(&p);
        for (a, b) in brute.iter().zip(&pmf) {
            assert!((a - b).abs() < 1e-12);
        }
        for q in 0..=n as u32 {
            let tail: f64 = brute[q as usize + 1..].iter().sum();
            assert!((poisson_binomial_tail(&p, q) - tail).abs() < 1e-12);
        }
    }
}

#[test]
fn integer_levels_are_never_looser() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = ChanceParams::new(30, 0.05, Some(12)).unwrap();
    for _ in 0..500 {
        let p: Vec<f64> = (0..rng.random_range(1..=45)).map(|_| rng.random()).collect();
        let load = group_moments(&p);
        if linearized_feasible(load, &params).unwrap() {
            assert!(normal_feasible(load, &params));
        }
    }
}

#[test]
fn full_riders_fill_the_bus_exactly() {
    let params = ChanceParams::new(10, 0.05, None).unwrap();
    assert!(normal_feasible(group_moments(&[1.0; 10]), &params));
    assert!(!normal_feasible(group_moments(&[1.0; 11]), &params));
    assert_eq!(poisson_binomial_tail(&[1.0; 10], 10), 0.0);
    assert!((poisson_binomial_tail(&[1.0; 11], 10) - 1.0).abs() < 1e-15);
}
