use std::collections::BTreeSet;

use sbrp_core::simulation::{incentive_grid, Simulator};
use sbrp_core::{
    fit_ridership, generate_synthetic, CostParams, DistanceTransform, OptOutModel, PlanningParams,
    SyntheticParams,
};

fn simulator(n: usize, seed: u64) -> Simulator {
    let inst = generate_synthetic(&SyntheticParams::new(n, 1.0, 1.0, seed)).unwrap();
    let d: Vec<f64> = inst.students.iter().map(|s| s.dist_school).collect();
    let r = fit_ridership(&d, 0.3, DistanceTransform::Identity).unwrap();
    Simulator::new(inst, r, OptOutModel::default(), PlanningParams::default(), CostParams::default()).unwrap()
}

#[test]
fn every_replica_balances_and_optouts_nest() {
    let sim = simulator(120, 2);
    let mut previous: Vec<Option<BTreeSet<u32>>> = vec![None; 6];
    for tau in incentive_grid(2500.0, 500.0) {
        let scenarios = sim.replicas(tau, 6, 99).unwrap();
        for (r, sc) in scenarios.iter().enumerate() {
            let total = sc.savings + sc.incentive_paid + sc.operating_cost;
            assert!((total - sim.baseline_cost).abs() < 1e-9);
            assert_eq!(sc.incentive_paid, tau * sc.optouts.len() as f64);
            if let Some(prev) = &previous[r] {
                assert!(prev.is_subset(&sc.optouts));
            }
            previous[r] = Some(sc.optouts.clone());
        }
    }
}

#[test]
fn baseline_respects_capacity_bound_and_repeats() {
    let sim = simulator(200, 4);
    let again = simulator(200, 4);
    assert_eq!(sim.baseline, again.baseline);
    let mu: f64 = sim
        .instance
        .students
        .iter()
        .map(|s| sim.ridership.individual_ridership(s.dist_school))
        .sum();
    let cap = sim.planning.chance.capacity as f64 + 0.5;
    assert!(sim.baseline.bus_count as f64 >= (mu / cap).ceil());
    assert_eq!(sim.baseline_cost, 85_000.0 * sim.baseline.bus_count as f64);
}

#[test]
fn failure_share_counts_negative_savings() {
    let sim = simulator(120, 6);
    let mut seen = Vec::new();
    let curve = sim.sweep(&[0.0, 1000.0, 2500.0], 5, 3, |p| seen.push(p.tau)).unwrap();
    assert_eq!(seen, [0.0, 1000.0, 2500.0]);
    for point in &curve.points {
        let scenarios = sim.replicas(point.tau, 5, 3).unwrap();
        let fails = scenarios.iter().filter(|s| s.savings < 0.0).count();
        assert_eq!(point.p_fail, fails as f64 / 5.0);
        assert!(!point.degenerate);
    }
}
