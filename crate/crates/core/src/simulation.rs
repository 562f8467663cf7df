//! Incentive simulation: sample opt-outs, re-plan, compare with the
//! baseline.
//!
//! A replica draws one uniform per student from a stream seeded by
//! `(base_seed, replica index)`, removes the students that opt out, then
//! re-solves allocation and routing for the rest. Reusing the same stream
//! at every incentive level gives common random numbers: a larger incentive
//! can only add opt-outs.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::allocation::{solve_allocation, Allocation, AllocationError};
use crate::instance::{build_candidate_sets, Instance, InstanceError, Point};
use crate::optout::OptOutModel;
use crate::overbooking::ChanceParams;
use crate::ridership::RidershipModel;
use crate::routing::{solve_routing, RoutePlan, RoutingError, RoutingProblem, StopDemand, TravelModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// USD per bus over the planning horizon.
    pub bus_cost: f64,
    /// USD per minute of total route duration.
    pub time_cost: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self { bus_cost: 85_000.0, time_cost: 0.0 }
    }
}

impl CostParams {
    pub fn operating_cost(&self, plan: &RoutePlan) -> f64 {
        self.bus_cost * plan.bus_count as f64 + self.time_cost * plan.total_time
    }
}

/// Travel-time and capacity settings shared by every re-plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanningParams {
    pub speed_mph: f64,
    /// Minutes spent at every stop.
    pub dwell_base: f64,
    /// Extra minutes per expected rider at a stop.
    pub dwell_per_rider: f64,
    pub chance: ChanceParams,
    /// Longest expected ride, minutes.
    pub dt_max: f64,
}

impl Default for PlanningParams {
    fn default() -> Self {
        Self {
            speed_mph: 20.0,
            dwell_base: 0.5,
            dwell_per_rider: 0.1,
            chance: ChanceParams::new(48, 0.05, None).expect("valid defaults"),
            dt_max: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimulationError {
    Instance(InstanceError),
    Allocation(AllocationError),
    Routing(RoutingError),
    InvalidCost,
    InvalidPlanning,
    NoReplicas,
    /// The incentive grid is empty, not ascending or has negative entries.
    BadGrid,
}

impl fmt::Display for SimulationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Instance(e) => write!(f, "instance: {e}"),
            Self::Allocation(e) => write!(f, "allocation: {e}"),
            Self::Routing(e) => write!(f, "routing: {e}"),
            Self::InvalidCost => f.write_str("bus cost must be positive and time cost nonnegative"),
            Self::InvalidPlanning => {
                f.write_str("speed must be positive; dwell times and ride limit nonnegative")
            }
            Self::NoReplicas => f.write_str("at least one replica is required"),
            Self::BadGrid => f.write_str("incentive grid must be nonempty, ascending and nonnegative"),
        }
    }
}

impl From<InstanceError> for SimulationError {
    fn from(e: InstanceError) -> Self {
        Self::Instance(e)
    }
}

impl From<AllocationError> for SimulationError {
    fn from(e: AllocationError) -> Self {
        Self::Allocation(e)
    }
}

impl From<RoutingError> for SimulationError {
    fn from(e: RoutingError) -> Self {
        Self::Routing(e)
    }
}

/// Allocation and routing for one student population.
#[derive(Debug, Clone)]
pub struct Planned {
    pub allocation: Option<Allocation>,
    pub problem: Option<RoutingProblem>,
    pub plan: RoutePlan,
}

/// Builds the routing problem for an allocation: one demand per open stop,
/// ridership from the model, dwell from the expected riders and as many
/// buses at every depot as there are open stops.
pub fn routing_problem(
    instance: &Instance,
    allocation: &Allocation,
    ridership: &RidershipModel,
    planning: &PlanningParams,
) -> Result<RoutingProblem, RoutingError> {
    let by_stop = allocation.students_by_stop(instance.stops.len());
    let demands: Vec<StopDemand> = allocation
        .open_stops
        .iter()
        .map(|&j| StopDemand {
            stop: instance.stops[j].id,
            students: by_stop[j]
                .iter()
                .map(|&i| {
                    let s = &instance.students[i];
                    (s.id, ridership.individual_ridership(s.dist_school))
                })
                .collect(),
        })
        .collect();
    let dwell: Vec<f64> = demands
        .iter()
        .map(|d| planning.dwell_base + planning.dwell_per_rider * d.load().mu)
        .collect();
    let travel = match &instance.matrices {
        Some(m) => {
            let n_dep = instance.depots.len();
            let nodes: Vec<usize> = (0..=n_dep)
                .chain(allocation.open_stops.iter().map(|&j| 1 + n_dep + j))
                .collect();
            let times = nodes.iter().flat_map(|&a| nodes.iter().map(move |&b| m.travel[a][b])).collect();
            TravelModel::from_matrix(times, n_dep, dwell)
        }
        None => {
            let depots: Vec<Point> = instance.depots.iter().map(|d| d.point()).collect();
            let stops: Vec<Point> =
                allocation.open_stops.iter().map(|&j| instance.stops[j].point()).collect();
            TravelModel::from_points(instance.school.point(), &depots, &stops, planning.speed_mph, dwell)
        }
    };
    let per_depot = allocation.open_stops.len().max(1);
    let fleet = (0..instance.depots.len()).flat_map(|d| core::iter::repeat_n(d, per_depot)).collect();
    RoutingProblem::new(
        demands,
        instance.depots.clone(),
        instance.school.clone(),
        travel,
        planning.chance,
        planning.dt_max,
        fleet,
    )
}

/// Allocates and routes the students of `instance`. An empty population
/// needs no buses.
pub fn plan_population(
    instance: &Instance,
    ridership: &RidershipModel,
    planning: &PlanningParams,
) -> Result<Planned, SimulationError> {
    if instance.students.is_empty() {
        return Ok(Planned { allocation: None, problem: None, plan: RoutePlan::default() });
    }
    instance.validate()?;
    let cands = build_candidate_sets(instance)?;
    let allocation = solve_allocation(&cands, instance.stop_capacity)?;
    let problem = routing_problem(instance, &allocation, ridership, planning)?;
    let plan = solve_routing(&problem)?;
    Ok(Planned { allocation: Some(allocation), problem: Some(problem), plan })
}

/// Outcome of one replica at one incentive level.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub tau: f64,
    pub replica: u64,
    pub replica_seed: u64,
    pub optouts: BTreeSet<u32>,
    pub plan: RoutePlan,
    pub incentive_paid: f64,
    pub operating_cost: f64,
    pub savings: f64,
    /// Operating-cost reduction per opt-out; infinite without opt-outs.
    pub max_incentive_per_student: f64,
}

/// Summary of the replicas at one incentive level.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub tau: f64,
    pub replicas: usize,
    pub mean_savings: f64,
    /// Sample standard deviation; zero for a single replica.
    pub std_savings: f64,
    /// Share of replicas with negative savings.
    pub p_fail: f64,
    pub mean_buses: f64,
    pub mean_optouts: f64,
    /// Set when one replica makes the deviation meaningless.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SavingsCurve {
    pub points: Vec<CurvePoint>,
}

impl SavingsCurve {
    pub fn taus(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.tau).collect()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the uniform stream of replica `index`.
pub fn replica_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base_seed) ^ index)
}

pub fn summarize(tau: f64, scenarios: &[Scenario]) -> Result<CurvePoint, SimulationError> {
    let r = scenarios.len();
    if r == 0 {
        return Err(SimulationError::NoReplicas);
    }
    let n = r as f64;
    let mean = scenarios.iter().map(|s| s.savings).sum::<f64>() / n;
    let std = if r > 1 {
        let ss: f64 = scenarios.iter().map(|s| (s.savings - mean) * (s.savings - mean)).sum();
        crate::math::sqrt(ss / (n - 1.0))
    } else {
        0.0
    };
    let fails = scenarios.iter().filter(|s| s.savings < 0.0).count();
    Ok(CurvePoint {
        tau,
        replicas: r,
        mean_savings: mean,
        std_savings: std,
        p_fail: fails as f64 / n,
        mean_buses: scenarios.iter().map(|s| s.plan.bus_count as f64).sum::<f64>() / n,
        mean_optouts: scenarios.iter().map(|s| s.optouts.len() as f64).sum::<f64>() / n,
        degenerate: r == 1,
    })
}

/// Checks that a grid is nonempty, ascending and nonnegative.
pub fn validate_grid(taus: &[f64]) -> Result<(), SimulationError> {
    let ok = !taus.is_empty()
        && taus.iter().all(|t| t.is_finite() && *t >= 0.0)
        && taus.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(SimulationError::BadGrid)
    }
}

/// Shared, read-only inputs of a sweep with the baseline already solved.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub instance: Instance,
    pub ridership: RidershipModel,
    pub optout: OptOutModel,
    pub planning: PlanningParams,
    pub cost: CostParams,
    pub baseline: RoutePlan,
    pub baseline_cost: f64,
}

impl Simulator {
    /// Solves the zero-opt-out baseline.
    pub fn new(
        instance: Instance,
        ridership: RidershipModel,
        optout: OptOutModel,
        planning: PlanningParams,
        cost: CostParams,
    ) -> Result<Self, SimulationError> {
        if !(cost.bus_cost > 0.0 && cost.time_cost >= 0.0 && cost.bus_cost.is_finite() && cost.time_cost.is_finite())
        {
            return Err(SimulationError::InvalidCost);
        }
        if !(planning.speed_mph > 0.0
            && planning.dwell_base >= 0.0
            && planning.dwell_per_rider >= 0.0
            && planning.dt_max >= 0.0)
        {
            return Err(SimulationError::InvalidPlanning);
        }
        let baseline = plan_population(&instance, &ridership, &planning)?.plan;
        let baseline_cost = cost.operating_cost(&baseline);
        Ok(Self { instance, ridership, optout, planning, cost, baseline, baseline_cost })
    }

    pub fn run_replica(&self, tau: f64, replica: u64, base_seed: u64) -> Result<Scenario, SimulationError> {
        let seed = replica_seed(base_seed, replica);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let optouts = self.optout.sample_optouts(&self.instance, tau, &mut rng);
        let plan = if optouts.is_empty() {
            self.baseline.clone()
        } else {
            let rest = self.instance.retain_students(|s| !optouts.contains(&s.id));
            plan_population(&rest, &self.ridership, &self.planning)?.plan
        };
        Ok(self.scenario(tau, replica, seed, optouts, plan))
    }

    fn scenario(&self, tau: f64, replica: u64, seed: u64, optouts: BTreeSet<u32>, plan: RoutePlan) -> Scenario {
        let operating_cost = self.cost.operating_cost(&plan);
        let incentive_paid = tau * optouts.len() as f64;
        let savings = self.baseline_cost - (incentive_paid + operating_cost);
        let max_incentive_per_student = if optouts.is_empty() {
            f64::INFINITY
        } else {
            (self.baseline_cost - operating_cost) / optouts.len() as f64
        };
        Scenario {
            tau,
            replica,
            replica_seed: seed,
            optouts,
            plan,
            incentive_paid,
            operating_cost,
            savings,
            max_incentive_per_student,
        }
    }

    /// All replicas at one incentive level, in replica order.
    pub fn replicas(&self, tau: f64, replicas: usize, base_seed: u64) -> Result<Vec<Scenario>, SimulationError> {
        if replicas == 0 {
            return Err(SimulationError::NoReplicas);
        }
        (0..replicas as u64).map(|r| self.run_replica(tau, r, base_seed)).collect()
    }

    /// Sequential sweep; `on_point` sees every level as soon as it is done.
    pub fn sweep(
        &self,
        taus: &[f64],
        replicas: usize,
        base_seed: u64,
        mut on_point: impl FnMut(&CurvePoint),
    ) -> Result<SavingsCurve, SimulationError> {
        validate_grid(taus)?;
        let mut curve = SavingsCurve::default();
        for &tau in taus {
            let point = summarize(tau, &self.replicas(tau, replicas, base_seed)?)?;
            on_point(&point);
            curve.points.push(point);
        }
        Ok(curve)
    }
}

/// The incentive grid 0, step, 2 step, ... up to `max`.
pub fn incentive_grid(max: f64, step: f64) -> Vec<f64> {
    let n = libm::floor(max / step + 1e-9) as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_synthetic, SyntheticParams};
    use crate::ridership::{fit_ridership, DistanceTransform};

    fn small() -> (Instance, RidershipModel) {
        let inst = generate_synthetic(&SyntheticParams::new(40, 2.0, 2.0, 5)).unwrap();
        let d: Vec<f64> = inst.students.iter().map(|s| s.dist_school).collect();
        let r = fit_ridership(&d, 0.3, DistanceTransform::Identity).unwrap();
        (inst, r)
    }

    fn sim(optout: OptOutModel) -> Simulator {
        let (inst, r) = small();
        Simulator::new(inst, r, optout, PlanningParams::default(), CostParams::default()).unwrap()
    }

    #[test]
    fn nobody_opts_out_means_zero_savings() {
        let s = sim(OptOutModel::new(2.0, -0.004, 1000.0).unwrap());
        for r in 0..3 {
            let sc = s.run_replica(500.0, r, 11).unwrap();
            assert!(sc.optouts.is_empty());
            assert_eq!(sc.savings, 0.0);
            assert!(sc.max_incentive_per_student.is_infinite());
        }
    }

    #[test]
    fn everybody_opts_out() {
        let s = sim(OptOutModel { a: 2.0, b: -0.004, c: -1000.0 });
        let sc = s.run_replica(100.0, 0, 3).unwrap();
        assert_eq!(sc.optouts.len(), 40);
        assert_eq!(sc.operating_cost, 0.0);
        assert_eq!(sc.plan.bus_count, 0);
        assert!((sc.savings - (s.baseline_cost - 100.0 * 40.0)).abs() < 1e-9);
    }

    #[test]
    fn accounting_identity_and_nested_optouts() {
        let s = sim(OptOutModel::new(2.0, -0.004, 3.0).unwrap());
        let low = s.run_replica(0.0, 4, 9).unwrap();
        let high = s.run_replica(1500.0, 4, 9).unwrap();
        assert!(low.optouts.is_subset(&high.optouts));
        for sc in [&low, &high] {
            let total = sc.savings + sc.incentive_paid + sc.operating_cost;
            assert!((total - s.baseline_cost).abs() < 1e-9);
        }
    }

    #[test]
    fn single_replica_is_flagged() {
        let s = sim(OptOutModel::default());
        let curve = s.sweep(&[0.0, 1000.0], 1, 2, |_| {}).unwrap();
        assert!(curve.points.iter().all(|p| p.degenerate && p.std_savings == 0.0));
        assert_eq!(curve.taus(), [0.0, 1000.0]);
    }

    #[test]
    fn sweep_is_deterministic() {
        let s = sim(OptOutModel::default());
        let a = s.sweep(&[0.0, 2000.0], 3, 8, |_| {}).unwrap();
        let b = s.sweep(&[0.0, 2000.0], 3, 8, |_| {}).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_checks() {
        assert_eq!(incentive_grid(2500.0, 250.0).len(), 11);
        assert!(validate_grid(&[]).is_err());
        assert!(validate_grid(&[0.0, 0.0]).is_err());
        assert!(validate_grid(&[-1.0]).is_err());
        assert!(validate_grid(&[0.0, 1.0]).is_ok());
    }

    #[test]
    fn replica_seeds_differ() {
        let seeds: BTreeSet<u64> = (0..100).map(|r| replica_seed(1, r)).collect();
        assert_eq!(seeds.len(), 100);
        assert_ne!(replica_seed(1, 0), replica_seed(2, 0));
    }
}
