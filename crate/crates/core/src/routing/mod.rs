//! Chance-constrained school bus routing.
//!
//! Every stop with assigned students is visited by exactly one bus. A bus
//! leaves its depot, picks up an ordered list of stops and drives to the
//! school. A route is feasible when its rider count passes the normal
//! overcrowding check and its expected ride time (the trip without the
//! depot-to-first-stop deadhead) stays under `dt_max`.
//!
//! The objective is lexicographic: fewest buses first, then the smallest
//! total expected duration. Up to [`EXACT_STOP_LIMIT`] stops are solved by
//! full enumeration; above that a pool of heuristic routes is partitioned
//! exactly by branch and bound and then polished by local search.

mod exact;
mod heuristic;
pub mod milp;
mod order;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::instance::{Point, Site};
use crate::overbooking::{normal_feasible, ChanceParams, LoadMoments};

pub use exact::solve_exact;
pub use heuristic::{solve_heuristic, HeuristicConfig};
pub use order::best_order;

/// Largest stop count solved by full enumeration.
pub const EXACT_STOP_LIMIT: usize = 6;

/// Students waiting at one open stop with their ridership probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct StopDemand {
    pub stop: u32,
    pub students: Vec<(u32, f64)>,
}

impl StopDemand {
    pub fn count(&self) -> usize {
        self.students.len()
    }

    pub fn load(&self) -> LoadMoments {
        self.students.iter().map(|&(_, r)| LoadMoments::of_rider(r)).sum()
    }
}

/// Expected travel and dwell times in minutes.
///
/// Nodes are numbered school first, then depots, then the demand stops in
/// the order of the routing problem.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelModel {
    n_depots: usize,
    n_stops: usize,
    times: Vec<f64>,
    dwell: Vec<f64>,
}

impl TravelModel {
    /// Straight-line travel at `speed_mph`; `stop_dwell` holds the expected
    /// dwell at each stop.
    pub fn from_points(
        school: Point,
        depots: &[Point],
        stops: &[Point],
        speed_mph: f64,
        stop_dwell: Vec<f64>,
    ) -> Self {
        let points: Vec<Point> = core::iter::once(school)
            .chain(depots.iter().copied())
            .chain(stops.iter().copied())
            .collect();
        let n = points.len();
        let mut times = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    times[a * n + b] =
                        crate::instance::walk_distance(points[a], points[b]) / speed_mph * 60.0;
                }
            }
        }
        Self::from_matrix(times, depots.len(), stop_dwell)
    }

    /// `times` is row-major over `1 + n_depots + stop_dwell.len()` nodes.
    pub fn from_matrix(times: Vec<f64>, n_depots: usize, stop_dwell: Vec<f64>) -> Self {
        let n_stops = stop_dwell.len();
        let n = 1 + n_depots + n_stops;
        assert_eq!(times.len(), n * n, "travel matrix must be square over all nodes");
        let mut dwell = vec![0.0; n];
        dwell[1 + n_depots..].copy_from_slice(&stop_dwell);
        Self { n_depots, n_stops, times, dwell }
    }

    pub fn node_count(&self) -> usize {
        1 + self.n_depots + self.n_stops
    }

    pub const fn school_node(&self) -> usize {
        0
    }

    pub fn depot_node(&self, depot: usize) -> usize {
        1 + depot
    }

    pub fn stop_node(&self, stop: usize) -> usize {
        1 + self.n_depots + stop
    }

    #[inline]
    pub fn time(&self, from: usize, to: usize) -> f64 {
        self.times[from * self.node_count() + to]
    }

    #[inline]
    pub fn dwell(&self, node: usize) -> f64 {
        self.dwell[node]
    }

    fn is_valid(&self) -> bool {
        let n = self.node_count();
        self.times.iter().all(|t| *t >= 0.0 && t.is_finite())
            && self.dwell.iter().all(|t| *t >= 0.0 && t.is_finite())
            && (0..n).all(|i| self.time(i, i) == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoutingError {
    StopUnroutable(u32),
    NoBuses,
    UnknownDepot(usize),
    TravelModelMismatch,
    /// Model export refused: too many stops to enumerate variables.
    TooLarge { stops: usize, limit: usize },
}

impl fmt::Display for RoutingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StopUnroutable(id) => {
                write!(f, "stop {id} violates capacity or ride time even on a dedicated bus")
            }
            Self::NoBuses => f.write_str("fleet is empty"),
            Self::UnknownDepot(d) => write!(f, "fleet refers to unknown depot {d}"),
            Self::TravelModelMismatch => {
                f.write_str("travel model does not match the stops and depots")
            }
            Self::TooLarge { stops, limit } => {
                write!(f, "{stops} stops exceed the export limit of {limit}")
            }
        }
    }
}

/// One input to [`solve_routing`].
#[derive(Debug, Clone)]
pub struct RoutingProblem {
    pub demands: Vec<StopDemand>,
    pub depots: Vec<Site>,
    pub school: Site,
    pub travel: TravelModel,
    pub chance: ChanceParams,
    /// Longest allowed expected ride time, in minutes.
    pub dt_max: f64,
    /// Depot position of each bus.
    pub fleet: Vec<usize>,
    loads: Vec<LoadMoments>,
}

impl RoutingProblem {
    pub fn new(
        demands: Vec<StopDemand>,
        depots: Vec<Site>,
        school: Site,
        travel: TravelModel,
        chance: ChanceParams,
        dt_max: f64,
        fleet: Vec<usize>,
    ) -> Result<Self, RoutingError> {
        if travel.n_depots != depots.len() || travel.n_stops != demands.len() || !travel.is_valid()
        {
            return Err(RoutingError::TravelModelMismatch);
        }
        if let Some(&d) = fleet.iter().find(|&&d| d >= depots.len()) {
            return Err(RoutingError::UnknownDepot(d));
        }
        if fleet.is_empty() && !demands.is_empty() {
            return Err(RoutingError::NoBuses);
        }
        let loads = demands.iter().map(StopDemand::load).collect();
        Ok(Self { demands, depots, school, travel, chance, dt_max, fleet, loads })
    }

    pub fn n_stops(&self) -> usize {
        self.demands.len()
    }

    pub fn stop_load(&self, stop: usize) -> LoadMoments {
        self.loads[stop]
    }

    pub fn load_of(&self, stops: &[usize]) -> LoadMoments {
        stops.iter().map(|&s| self.loads[s]).sum()
    }

    /// Number of buses stationed at each depot.
    pub fn buses_per_depot(&self) -> Vec<usize> {
        let mut count = vec![0; self.depots.len()];
        for &d in &self.fleet {
            count[d] += 1;
        }
        count
    }

    /// Depots that have at least one bus, ascending.
    pub(crate) fn active_depots(&self) -> Vec<usize> {
        let per = self.buses_per_depot();
        (0..self.depots.len()).filter(|&d| per[d] > 0).collect()
    }

    /// `(duration, ride_time)` of the path depot → stops → school.
    pub fn route_duration(&self, depot: usize, stops: &[usize]) -> (f64, f64) {
        let t = &self.travel;
        let Some(&first) = stops.first() else { return (0.0, 0.0) };
        let deadhead = t.time(t.depot_node(depot), t.stop_node(first));
        let mut ride = 0.0;
        let mut prev = t.stop_node(first);
        ride += t.dwell(prev);
        for &s in &stops[1..] {
            let node = t.stop_node(s);
            ride += t.time(prev, node) + t.dwell(node);
            prev = node;
        }
        ride += t.time(prev, t.school_node());
        (deadhead + ride, ride)
    }

    pub(crate) fn load_ok(&self, load: LoadMoments) -> bool {
        normal_feasible(load, &self.chance)
    }

    pub(crate) fn ride_ok(&self, ride: f64) -> bool {
        ride <= self.dt_max + 1e-9
    }

    /// Builds the route record for an ordered stop list, feasible or not.
    pub fn make_route(&self, bus: usize, depot: usize, stops: Vec<usize>) -> Route {
        let (duration, ride_time) = self.route_duration(depot, &stops);
        let load = self.load_of(&stops);
        Route { bus, depot, stops, duration, ride_time, load }
    }

    /// Capacity and ride-time check of a route.
    pub fn route_feasible(&self, route: &Route) -> bool {
        !route.stops.is_empty() && self.load_ok(route.load) && self.ride_ok(route.ride_time)
    }

    /// Every stop must fit on a dedicated bus from some depot with buses.
    fn check_singletons(&self) -> Result<(), RoutingError> {
        let depots = self.active_depots();
        for s in 0..self.n_stops() {
            let ok = self.load_ok(self.loads[s])
                && depots.iter().any(|&d| self.ride_ok(self.route_duration(d, &[s]).1));
            if !ok {
                return Err(RoutingError::StopUnroutable(self.demands[s].stop));
            }
        }
        Ok(())
    }

    /// Hands out bus ids depot by depot, lowest bus first, in route order.
    fn assign_buses(&self, routes: Vec<(usize, Vec<usize>)>) -> RoutePlan {
        let mut pools: Vec<Vec<usize>> = vec![Vec::new(); self.depots.len()];
        for (bus, &d) in self.fleet.iter().enumerate().rev() {
            pools[d].push(bus);
        }
        let routes: Vec<Route> = routes
            .into_iter()
            .map(|(depot, stops)| {
                let bus = pools[depot].pop().expect("depot bus budget respected");
                self.make_route(bus, depot, stops)
            })
            .collect();
        RoutePlan::new(routes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub bus: usize,
    pub depot: usize,
    /// Demand positions in visiting order.
    pub stops: Vec<usize>,
    pub duration: f64,
    pub ride_time: f64,
    pub load: LoadMoments,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoutePlan {
    pub routes: Vec<Route>,
    pub bus_count: usize,
    pub total_time: f64,
}

impl RoutePlan {
    pub fn new(routes: Vec<Route>) -> Self {
        let total_time = routes.iter().map(|r| r.duration).sum();
        Self { bus_count: routes.len(), total_time, routes }
    }

    /// `(bus_count, total_time)` ordering, with a small tolerance on time.
    pub fn better_than(&self, other: &RoutePlan) -> bool {
        self.bus_count < other.bus_count
            || (self.bus_count == other.bus_count && self.total_time < other.total_time - 1e-9)
    }
}

/// A violated plan invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanViolation {
    EmptyRoute { bus: usize },
    StopNotCovered { stop: u32 },
    StopRepeated { stop: u32 },
    Overcrowded { bus: usize },
    RideTime { bus: usize, ride_time: f64 },
    BusReused { bus: usize },
    WrongDepot { bus: usize },
    Bookkeeping { bus: usize },
    Totals,
}

/// Re-derives every route from scratch and lists the broken invariants.
pub fn check_plan(problem: &RoutingProblem, plan: &RoutePlan) -> Vec<PlanViolation> {
    let mut out = Vec::new();
    let mut seen = vec![0usize; problem.n_stops()];
    let mut bus_used = vec![false; problem.fleet.len()];
    for r in &plan.routes {
        if r.stops.is_empty() {
            out.push(PlanViolation::EmptyRoute { bus: r.bus });
            continue;
        }
        if r.bus >= problem.fleet.len() || bus_used[r.bus] {
            out.push(PlanViolation::BusReused { bus: r.bus });
        } else {
            bus_used[r.bus] = true;
            if problem.fleet[r.bus] != r.depot {
                out.push(PlanViolation::WrongDepot { bus: r.bus });
            }
        }
        for &s in &r.stops {
            seen[s] += 1;
        }
        let students: Vec<f64> = r
            .stops
            .iter()
            .flat_map(|&s| problem.demands[s].students.iter().map(|&(_, p)| p))
            .collect();
        let load = crate::overbooking::group_moments(&students);
        if !normal_feasible(load, &problem.chance) {
            out.push(PlanViolation::Overcrowded { bus: r.bus });
        }
        let (duration, ride) = problem.route_duration(r.depot, &r.stops);
        if ride > problem.dt_max + 1e-9 {
            out.push(PlanViolation::RideTime { bus: r.bus, ride_time: ride });
        }
        if (duration - r.duration).abs() > 1e-9
            || (ride - r.ride_time).abs() > 1e-9
            || (load.mu - r.load.mu).abs() > 1e-9
            || (load.var - r.load.var).abs() > 1e-9
        {
            out.push(PlanViolation::Bookkeeping { bus: r.bus });
        }
    }
    for (s, &k) in seen.iter().enumerate() {
        let stop = problem.demands[s].stop;
        match k {
            0 => out.push(PlanViolation::StopNotCovered { stop }),
            1 => {}
            _ => out.push(PlanViolation::StopRepeated { stop }),
        }
    }
    let total: f64 = plan.routes.iter().map(|r| r.duration).sum();
    if plan.bus_count != plan.routes.len() || (total - plan.total_time).abs() > 1e-6 {
        out.push(PlanViolation::Totals);
    }
    out
}

/// Lexicographic routing: exact up to [`EXACT_STOP_LIMIT`] stops, heuristic
/// above.
pub fn solve_routing(problem: &RoutingProblem) -> Result<RoutePlan, RoutingError> {
    if problem.n_stops() <= EXACT_STOP_LIMIT {
        solve_exact(problem)
    } else {
        solve_heuristic(problem, &HeuristicConfig::default())
    }
}
