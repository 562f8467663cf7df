//! Brute-force reference solvers and random instance builders shared by the
//! integration and acceptance tests. Nothing here calls the solver under
//! test.

#![allow(dead_code)]

use rand::Rng;
use sbrp_core::instance::{CandidateSets, Point, Site};
use sbrp_core::routing::{RoutingProblem, StopDemand, TravelModel};
use sbrp_core::ChanceParams;

/// Largest slope of the affine ridership model over the feasible region,
/// by enumerating the vertices where the mean equality meets one of the
/// box or sign constraints. Returns `(rho0, rho1)`.
pub fn ridership_lp_oracle(g: &[f64], rbar: f64) -> Option<(f64, f64)> {
    let n = g.len() as f64;
    let sum_g: f64 = g.iter().sum();
    // Mean equality: n * rho0 + sum_g * rho1 = n * rbar.
    let eq = (n, sum_g, n * rbar);
    // Boundaries a0 * rho0 + a1 * rho1 = b.
    let mut bounds = vec![(0.0, 1.0, 0.0)];
    for &gi in g {
        bounds.push((1.0, gi, 0.0));
        bounds.push((1.0, gi, 1.0));
    }
    let feasible = |r0: f64, r1: f64| {
        let tol = 1e-9;
        r1 >= -tol && g.iter().all(|&gi| r0 + r1 * gi >= -tol && r0 + r1 * gi <= 1.0 + tol)
    };
    let mut best: Option<(f64, f64)> = None;
    for (a0, a1, b) in bounds {
        let det = eq.0 * a1 - eq.1 * a0;
        if det.abs() < 1e-12 {
            continue;
        }
        let r0 = (eq.2 * a1 - eq.1 * b) / det;
        let r1 = (eq.0 * b - eq.2 * a0) / det;
        if feasible(r0, r1) && best.is_none_or(|(_, br1)| r1 > br1) {
            best = Some((r0, r1));
        }
    }
    best
}

/// Distribution of the rider count by enumerating all outcomes.
pub fn poisson_binomial_brute(p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut pmf = vec![0.0; n + 1];
    for mask in 0u32..(1 << n) {
        let mut prob = 1.0;
        for (i, &pi) in p.iter().enumerate() {
            prob *= if mask & (1 << i) != 0 { pi } else { 1.0 - pi };
        }
        pmf[mask.count_ones() as usize] += prob;
    }
    pmf
}

/// Monte Carlo estimate of `P(S > threshold)` with its standard error.
pub fn monte_carlo_tail<R: Rng>(p: &[f64], threshold: u32, draws: usize, rng: &mut R) -> (f64, f64) {
    let mut hits = 0usize;
    for _ in 0..draws {
        let riders = p.iter().filter(|&&pi| rng.random::<f64>() < pi).count();
        if riders > threshold as usize {
            hits += 1;
        }
    }
    let est = hits as f64 / draws as f64;
    (est, (est * (1.0 - est) / draws as f64).sqrt().max(1.0 / draws as f64))
}

/// Inverse normal CDF through the Maclaurin series of `erfinv`.
pub fn inv_norm_series(p: f64) -> f64 {
    let x = 2.0 * p - 1.0;
    let terms = 1500;
    let mut c = vec![1.0f64];
    for k in 1..terms {
        let mut s = 0.0;
        for m in 0..k {
            s += c[m] * c[k - 1 - m] / ((m as f64 + 1.0) * (2.0 * m as f64 + 1.0));
        }
        c.push(s);
    }
    let a = std::f64::consts::PI.sqrt() / 2.0;
    let mut sum = 0.0;
    for (k, ck) in c.iter().enumerate() {
        let k = k as f64;
        sum += ck / (2.0 * k + 1.0) * (a * x).powf(2.0 * k + 1.0);
    }
    std::f64::consts::SQRT_2 * sum
}

/// Lexicographic `(open stops, total walk)` optimum by trying every
/// assignment of students to reachable stops. `None` when no assignment
/// respects the capacity.
pub fn allocation_oracle(cands: &CandidateSets, cap: usize) -> Option<(usize, f64)> {
    fn go(
        cands: &CandidateSets,
        cap: usize,
        i: usize,
        load: &mut Vec<usize>,
        walk: f64,
        best: &mut Option<(usize, f64)>,
    ) {
        let used = load.iter().filter(|&&l| l > 0).count();
        if let Some((bc, _)) = best {
            if used > *bc {
                return;
            }
        }
        if i == cands.n_students() {
            let better = match best {
                None => true,
                Some((bc, bw)) => used < *bc || (used == *bc && walk < *bw),
            };
            if better {
                *best = Some((used, walk));
            }
            return;
        }
        for (&j, &w) in cands.stops_of_student[i].iter().zip(&cands.walk_of_student[i]) {
            if load[j] < cap {
                load[j] += 1;
                go(cands, cap, i + 1, load, walk + w, best);
                load[j] -= 1;
            }
        }
    }
    let mut best = None;
    go(cands, cap, 0, &mut vec![0; cands.n_stops()], 0.0, &mut best);
    best
}

/// Random reachability sets from points in a unit square.
pub fn random_candidates<R: Rng>(rng: &mut R, n_students: usize, n_stops: usize, walk_limit: f64) -> CandidateSets {
    let students: Vec<Point> =
        (0..n_students).map(|_| Point::new(rng.random(), rng.random())).collect();
    let stops: Vec<Point> = (0..n_stops).map(|_| Point::new(rng.random(), rng.random())).collect();
    let mut arcs = Vec::new();
    for (i, s) in students.iter().enumerate() {
        for (j, t) in stops.iter().enumerate() {
            let d = ((s.x - t.x).powi(2) + (s.y - t.y).powi(2)).sqrt();
            if d <= walk_limit {
                arcs.push((i, j, d));
            }
        }
    }
    CandidateSets::from_arcs(
        (0..n_students as u32).map(|i| 100 + i).collect(),
        (0..n_stops as u32).map(|j| 10 + j).collect(),
        arcs,
    )
}

/// Expected load of a set of stops computed from the student riderships.
fn load(problem: &RoutingProblem, stops: &[usize]) -> (f64, f64) {
    let mut mu = 0.0;
    let mut var = 0.0;
    for &s in stops {
        for &(_, r) in &problem.demands[s].students {
            mu += r;
            var += r * (1.0 - r);
        }
    }
    (mu, var)
}

/// `(duration, ride)` of one route, summed arc by arc.
pub fn route_times(problem: &RoutingProblem, depot: usize, stops: &[usize]) -> (f64, f64) {
    let t = &problem.travel;
    let mut ride = 0.0;
    let mut at = t.stop_node(stops[0]);
    for (k, &s) in stops.iter().enumerate() {
        let node = t.stop_node(s);
        if k > 0 {
            ride += t.time(at, node);
        }
        ride += t.dwell(node);
        at = node;
    }
    ride += t.time(at, t.school_node());
    (t.time(t.depot_node(depot), t.stop_node(stops[0])) + ride, ride)
}

pub fn route_ok(problem: &RoutingProblem, depot: usize, stops: &[usize]) -> bool {
    let (mu, var) = load(problem, stops);
    let capacity_ok = mu + problem.chance.z() * var.sqrt() <= problem.chance.capacity as f64 + 0.5;
    capacity_ok && route_times(problem, depot, stops).1 <= problem.dt_max + 1e-9
}

/// Lexicographic `(buses, total time)` optimum by enumerating every
/// collection of ordered routes and every depot choice within the fleet.
pub fn routing_oracle(problem: &RoutingProblem) -> Option<(usize, f64)> {
    fn place(problem: &RoutingProblem, s: usize, routes: &mut Vec<Vec<usize>>, best: &mut Option<(usize, f64)>) {
        let n = problem.n_stops();
        if s == n {
            let mut budget = vec![0usize; problem.depots.len()];
            for &d in &problem.fleet {
                budget[d] += 1;
            }
            depots(problem, routes, 0, &mut budget, 0.0, best);
            return;
        }
        for r in 0..routes.len() {
            for pos in 0..=routes[r].len() {
                routes[r].insert(pos, s);
                place(problem, s + 1, routes, best);
                routes[r].remove(pos);
            }
        }
        routes.push(vec![s]);
        place(problem, s + 1, routes, best);
        routes.pop();
    }
    fn depots(
        problem: &RoutingProblem,
        routes: &[Vec<usize>],
        k: usize,
        budget: &mut Vec<usize>,
        time: f64,
        best: &mut Option<(usize, f64)>,
    ) {
        if k == routes.len() {
            let better = match best {
                None => true,
                Some((bc, bt)) => routes.len() < *bc || (routes.len() == *bc && time < *bt),
            };
            if better {
                *best = Some((routes.len(), time));
            }
            return;
        }
        for d in 0..budget.len() {
            if budget[d] == 0 || !route_ok(problem, d, &routes[k]) {
                continue;
            }
            budget[d] -= 1;
            let dur = route_times(problem, d, &routes[k]).0;
            depots(problem, routes, k + 1, budget, time + dur, best);
            budget[d] += 1;
        }
    }
    let mut best = None;
    place(problem, 0, &mut Vec::new(), &mut best);
    best
}

/// Random routing instance whose stops each fit on a dedicated bus.
pub fn random_routing_problem<R: Rng>(rng: &mut R, n_stops: usize) -> RoutingProblem {
    loop {
        let n_depots = rng.random_range(1..=2);
        let side = 4.0;
        let pt = |rng: &mut R| Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
        let school = pt(rng);
        let depot_pts: Vec<Point> = (0..n_depots).map(|_| pt(rng)).collect();
        let stop_pts: Vec<Point> = (0..n_stops).map(|_| pt(rng)).collect();
        let q = rng.random_range(10..=30);
        let demands: Vec<StopDemand> = (0..n_stops)
            .map(|s| StopDemand {
                stop: 50 + s as u32,
                students: (0..rng.random_range(1..=12))
                    .map(|k| (1000 * s as u32 + k, rng.random_range(0.2..=1.0)))
                    .collect(),
            })
            .collect();
        let dwell: Vec<f64> = demands.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let travel = TravelModel::from_points(school, &depot_pts, &stop_pts, 20.0, dwell);
        let fleet: Vec<usize> = (0..n_depots).flat_map(|d| std::iter::repeat_n(d, n_stops)).collect();
        let problem = RoutingProblem::new(
            demands,
            depot_pts.iter().enumerate().map(|(d, p)| Site::depot(d as u32, p.x, p.y)).collect(),
            Site::school(0, school.x, school.y),
            travel,
            ChanceParams::new(q, 0.05, None).unwrap(),
            rng.random_range(15.0..40.0),
            fleet,
        )
        .unwrap();
        let all_fit = (0..n_stops).all(|s| (0..n_depots).any(|d| route_ok(&problem, d, &[s])));
        if all_fit {
            return problem;
        }
    }
}
