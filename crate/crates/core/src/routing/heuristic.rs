//! Route pool, set partition and local search for larger stop counts.
//!
//! 1. Seed the pool with nearest-neighbor and cheapest-insertion sweeps from
//!    every depot, each started once from every stop.
//! 2. Add the intermediate and final routes of savings merges.
//! 3. Pick a minimum-cardinality, then minimum-duration, partition of the
//!    stops over the pool by depth-first branch and bound.
//! 4. Polish with route ejection, relocate, swap and intra-route 2-opt,
//!    accepting only moves that keep the bus count and lower total time or
//!    remove a bus.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::order::{improve_order, insertion_delta};
use super::{RoutePlan, RoutingError, RoutingProblem};
use crate::overbooking::LoadMoments;

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicConfig {
    /// Branch-and-bound node budget for the set partition.
    pub node_limit: usize,
    /// Route-shape parameters of the savings merges.
    pub savings_shapes: Vec<f64>,
    pub max_improvement_rounds: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self { node_limit: 200_000, savings_shapes: vec![1.0, 0.6, 1.4], max_improvement_rounds: 100 }
    }
}

type Mask = Vec<u64>;

fn mask_of(n: usize, stops: &[usize]) -> Mask {
    let mut m = vec![0u64; n.div_ceil(64)];
    for &s in stops {
        m[s / 64] |= 1 << (s % 64);
    }
    m
}

fn disjoint(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & y == 0)
}

#[derive(Debug, Clone)]
struct Column {
    depot: usize,
    stops: Vec<usize>,
    duration: f64,
    mask: Mask,
}

struct Pool<'a> {
    problem: &'a RoutingProblem,
    columns: Vec<Column>,
    index: BTreeMap<(usize, Mask), usize>,
    /// Complete solutions found while seeding, as column ids.
    solutions: Vec<Vec<usize>>,
}

impl<'a> Pool<'a> {
    fn new(problem: &'a RoutingProblem) -> Self {
        Self { problem, columns: Vec::new(), index: BTreeMap::new(), solutions: Vec::new() }
    }

    /// Adds a feasible route, keeping the cheapest order per stop set.
    fn add(&mut self, depot: usize, stops: &[usize]) -> Option<usize> {
        let p = self.problem;
        let (duration, ride) = p.route_duration(depot, stops);
        let load = p.load_of(stops);
        if stops.is_empty() || !p.load_ok(load) || !p.ride_ok(ride) {
            return None;
        }
        let mask = mask_of(p.n_stops(), stops);
        match self.index.get(&(depot, mask.clone())) {
            Some(&id) => {
                if duration < self.columns[id].duration - 1e-12 {
                    self.columns[id].stops = stops.to_vec();
                    self.columns[id].duration = duration;
                }
                Some(id)
            }
            None => {
                let id = self.columns.len();
                self.index.insert((depot, mask.clone()), id);
                self.columns.push(Column { depot, stops: stops.to_vec(), duration, mask });
                Some(id)
            }
        }
    }

    fn add_solution(&mut self, depot: usize, routes: &[Vec<usize>]) {
        let mut ids = Vec::with_capacity(routes.len());
        for r in routes {
            let mut order = r.clone();
            improve_order(self.problem, depot, &mut order);
            if !self.problem.ride_ok(self.problem.route_duration(depot, &order).1) {
                order = r.clone();
            }
            match self.add(depot, &order) {
                Some(id) => ids.push(id),
                None => return,
            }
            // Dropping any single stop keeps a route feasible in practice;
            // those variants give the partition room to rebalance.
            if order.len() > 1 {
                for k in 0..order.len() {
                    let mut sub = order.clone();
                    sub.remove(k);
                    self.add(depot, &sub);
                }
            }
        }
        self.solutions.push(ids);
    }
}

/// Partial route under construction with its running totals.
#[derive(Clone)]
struct Building {
    stops: Vec<usize>,
    load: LoadMoments,
    duration: f64,
}

impl Building {
    fn start(p: &RoutingProblem, depot: usize, s: usize) -> Self {
        Self { stops: vec![s], load: p.stop_load(s), duration: p.route_duration(depot, &[s]).0 }
    }

    fn ride(&self, p: &RoutingProblem, depot: usize, duration: f64, first: usize) -> f64 {
        let t = &p.travel;
        duration - t.time(t.depot_node(depot), t.stop_node(first))
    }

    /// Duration after inserting `s` at `pos`, if the result is feasible.
    fn try_insert(&self, p: &RoutingProblem, depot: usize, pos: usize, s: usize) -> Option<f64> {
        if !p.load_ok(self.load + p.stop_load(s)) {
            return None;
        }
        let duration = self.duration + insertion_delta(p, depot, &self.stops, pos, s);
        let first = if pos == 0 { s } else { self.stops[0] };
        p.ride_ok(self.ride(p, depot, duration, first)).then_some(duration)
    }

    fn insert(&mut self, p: &RoutingProblem, pos: usize, s: usize, duration: f64) {
        self.stops.insert(pos, s);
        self.load += p.stop_load(s);
        self.duration = duration;
    }
}

fn farthest_from_school(p: &RoutingProblem, unrouted: &[bool]) -> Option<usize> {
    let t = &p.travel;
    let mut best: Option<(f64, usize)> = None;
    for (s, &u) in unrouted.iter().enumerate() {
        if u {
            let d = t.time(t.stop_node(s), t.school_node());
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, s));
            }
        }
    }
    best.map(|b| b.1)
}

/// Appends the nearest stop that still fits; opens a new route at the stop
/// farthest from school when nothing fits.
fn nearest_neighbor_sweep(p: &RoutingProblem, depot: usize, first: usize) -> Vec<Vec<usize>> {
    let n = p.n_stops();
    let t = &p.travel;
    let mut unrouted = vec![true; n];
    let mut routes = Vec::new();
    let mut current = Building::start(p, depot, first);
    unrouted[first] = false;
    loop {
        let last = t.stop_node(*current.stops.last().unwrap());
        let mut best: Option<(f64, usize, f64)> = None;
        for s in 0..n {
            if !unrouted[s] {
                continue;
            }
            let d = t.time(last, t.stop_node(s));
            if best.is_some_and(|(bd, _, _)| d >= bd) {
                continue;
            }
            if let Some(dur) = current.try_insert(p, depot, current.stops.len(), s) {
                best = Some((d, s, dur));
            }
        }
        match best {
            Some((_, s, dur)) => {
                let pos = current.stops.len();
                current.insert(p, pos, s, dur);
                unrouted[s] = false;
            }
            None => {
                routes.push(core::mem::take(&mut current.stops));
                let Some(s) = farthest_from_school(p, &unrouted) else { break };
                current = Building::start(p, depot, s);
                unrouted[s] = false;
            }
        }
    }
    routes
}

/// Inserts the stop with the cheapest feasible insertion anywhere in the
/// current route; opens a new route at the farthest stop when none fits.
fn insertion_sweep(p: &RoutingProblem, depot: usize, first: usize) -> Vec<Vec<usize>> {
    let n = p.n_stops();
    let mut unrouted = vec![true; n];
    let mut routes = Vec::new();
    let mut current = Building::start(p, depot, first);
    unrouted[first] = false;
    loop {
        let mut best: Option<(f64, usize, usize, f64)> = None;
        for s in 0..n {
            if !unrouted[s] {
                continue;
            }
            for pos in 0..=current.stops.len() {
                if let Some(dur) = current.try_insert(p, depot, pos, s) {
                    let delta = dur - current.duration;
                    if best.is_none_or(|(bd, _, _, _)| delta < bd) {
                        best = Some((delta, s, pos, dur));
                    }
                }
            }
        }
        match best {
            Some((_, s, pos, dur)) => {
                current.insert(p, pos, s, dur);
                unrouted[s] = false;
            }
            None => {
                routes.push(core::mem::take(&mut current.stops));
                let Some(s) = farthest_from_school(p, &unrouted) else { break };
                current = Building::start(p, depot, s);
                unrouted[s] = false;
            }
        }
    }
    routes
}

/// Savings merges from singleton routes. Every merged route enters the pool.
fn savings(p: &RoutingProblem, depot: usize, shape: f64, pool: &mut Pool) -> Vec<Vec<usize>> {
    let n = p.n_stops();
    let t = &p.travel;
    let mut route_of: Vec<usize> = (0..n).collect();
    let mut routes: Vec<Option<Building>> =
        (0..n).map(|s| Some(Building::start(p, depot, s))).collect();
    let mut pairs = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (ni, nj) = (t.stop_node(i), t.stop_node(j));
                let s = t.time(ni, t.school_node()) + t.time(t.depot_node(depot), nj)
                    - shape * t.time(ni, nj);
                pairs.push((s, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, i, j) in pairs {
        let (a, b) = (route_of[i], route_of[j]);
        if a == b {
            continue;
        }
        let (ra, rb) = (routes[a].as_ref().unwrap(), routes[b].as_ref().unwrap());
        if *ra.stops.last().unwrap() != i || rb.stops[0] != j {
            continue;
        }
        if !p.load_ok(ra.load + rb.load) {
            continue;
        }
        let mut stops = ra.stops.clone();
        stops.extend_from_slice(&rb.stops);
        let (duration, ride) = p.route_duration(depot, &stops);
        if !p.ride_ok(ride) {
            continue;
        }
        let load = ra.load + rb.load;
        for &s in &rb.stops {
            route_of[s] = a;
        }
        pool.add(depot, &stops);
        routes[a] = Some(Building { stops, load, duration });
        routes[b] = None;
    }
    routes.into_iter().flatten().map(|b| b.stops).collect()
}

/// Depth-first branch and bound over pool columns for the lexicographic
/// `(count, duration)` partition objective.
struct Partition<'a> {
    cols: &'a [Column],
    by_stop: Vec<Vec<usize>>,
    branch_order: Vec<usize>,
    min_share: Vec<f64>,
    stop_mu: Vec<f64>,
    max_size: usize,
    cap: f64,
    budget: Vec<usize>,
    best: Option<(usize, f64, Vec<usize>)>,
    nodes: usize,
    node_limit: usize,
}

impl<'a> Partition<'a> {
    fn new(p: &RoutingProblem, cols: &'a [Column], node_limit: usize) -> Self {
        let n = p.n_stops();
        let mut by_stop = vec![Vec::new(); n];
        for (id, c) in cols.iter().enumerate() {
            for &s in &c.stops {
                by_stop[s].push(id);
            }
        }
        for list in &mut by_stop {
            list.sort_by(|&a, &b| {
                cols[b]
                    .stops
                    .len()
                    .cmp(&cols[a].stops.len())
                    .then(cols[a].duration.total_cmp(&cols[b].duration))
                    .then(a.cmp(&b))
            });
        }
        let mut branch_order: Vec<usize> = (0..n).collect();
        branch_order.sort_by_key(|&s| (by_stop[s].len(), s));
        let min_share = (0..n)
            .map(|s| {
                by_stop[s]
                    .iter()
                    .map(|&c| cols[c].duration / cols[c].stops.len() as f64)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        Self {
            cols,
            by_stop,
            branch_order,
            min_share,
            stop_mu: (0..n).map(|s| p.stop_load(s).mu).collect(),
            max_size: cols.iter().map(|c| c.stops.len()).max().unwrap_or(1),
            cap: p.chance.effective_capacity(),
            budget: p.buses_per_depot(),
            best: None,
            nodes: 0,
            node_limit,
        }
    }

    fn offer(&mut self, ids: &[usize]) {
        let mut used = vec![0usize; self.budget.len()];
        for &c in ids {
            used[self.cols[c].depot] += 1;
        }
        if used.iter().zip(&self.budget).any(|(u, b)| u > b) {
            return;
        }
        let cost: f64 = ids.iter().map(|&c| self.cols[c].duration).sum();
        if self.is_better(ids.len(), cost) {
            self.best = Some((ids.len(), cost, ids.to_vec()));
        }
    }

    fn is_better(&self, count: usize, cost: f64) -> bool {
        match &self.best {
            None => true,
            Some((c, t, _)) => count < *c || (count == *c && cost < *t - 1e-9),
        }
    }

    fn search(&mut self, covered: &mut Mask, chosen: &mut Vec<usize>, used: &mut Vec<usize>, cost: f64) {
        self.nodes += 1;
        let next = self
            .branch_order
            .iter()
            .copied()
            .find(|&s| covered[s / 64] & (1 << (s % 64)) == 0);
        let Some(stop) = next else {
            if self.is_better(chosen.len(), cost) {
                self.best = Some((chosen.len(), cost, chosen.clone()));
            }
            return;
        };
        let mut rest_stops = 0usize;
        let mut rest_mu = 0.0;
        let mut rest_cost = 0.0;
        for s in 0..self.stop_mu.len() {
            if covered[s / 64] & (1 << (s % 64)) == 0 {
                rest_stops += 1;
                rest_mu += self.stop_mu[s];
                rest_cost += self.min_share[s];
            }
        }
        let by_mu = crate::math::ceil(rest_mu / self.cap - 1e-9).max(1.0) as usize;
        let lb_count = chosen.len() + rest_stops.div_ceil(self.max_size).max(by_mu);
        if let Some((best_count, best_cost, _)) = &self.best {
            if lb_count > *best_count
                || (lb_count == *best_count && cost + rest_cost >= *best_cost - 1e-9)
            {
                return;
            }
        }
        let candidates = self.by_stop[stop].clone();
        for c in candidates {
            if self.nodes >= self.node_limit {
                return;
            }
            let col = &self.cols[c];
            if used[col.depot] >= self.budget[col.depot] || !disjoint(&col.mask, covered) {
                continue;
            }
            for (w, m) in covered.iter_mut().zip(&col.mask) {
                *w |= m;
            }
            used[col.depot] += 1;
            chosen.push(c);
            let d = col.duration;
            self.search(covered, chosen, used, cost + d);
            chosen.pop();
            let col = &self.cols[c];
            used[col.depot] -= 1;
            for (w, m) in covered.iter_mut().zip(&col.mask) {
                *w &= !m;
            }
        }
    }
}

/// Working route during local search.
#[derive(Clone)]
struct Working {
    depot: usize,
    stops: Vec<usize>,
    duration: f64,
}

fn feasible(p: &RoutingProblem, depot: usize, stops: &[usize]) -> Option<f64> {
    if stops.is_empty() {
        return Some(0.0);
    }
    let (duration, ride) = p.route_duration(depot, stops);
    (p.load_ok(p.load_of(stops)) && p.ride_ok(ride)).then_some(duration)
}

/// Cheapest feasible position for `s` in `route`.
fn best_insertion(p: &RoutingProblem, route: &Working, s: usize) -> Option<(usize, f64)> {
    if !p.load_ok(p.load_of(&route.stops) + p.stop_load(s)) {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    let mut trial = route.stops.clone();
    for pos in 0..=route.stops.len() {
        trial.insert(pos, s);
        let (d, ride) = p.route_duration(route.depot, &trial);
        if p.ride_ok(ride) && best.is_none_or(|(_, bd)| d < bd - 1e-12) {
            best = Some((pos, d));
        }
        trial.remove(pos);
    }
    best
}

/// Tries to spread one route over the others.
fn eject_route(p: &RoutingProblem, routes: &mut Vec<Working>) -> bool {
    let mut order: Vec<usize> = (0..routes.len()).collect();
    order.sort_by_key(|&r| (routes[r].stops.len(), r));
    for r in order {
        let mut trial: Vec<Working> = routes.clone();
        let victim = trial.remove(r);
        let mut ok = true;
        for &s in &victim.stops {
            let mut best: Option<(usize, usize, f64)> = None;
            for (k, route) in trial.iter().enumerate() {
                if let Some((pos, d)) = best_insertion(p, route, s) {
                    let delta = d - route.duration;
                    if best.is_none_or(|(_, _, bd)| delta < bd - 1e-12) {
                        best = Some((k, pos, delta));
                    }
                }
            }
            match best {
                Some((k, pos, delta)) => {
                    trial[k].stops.insert(pos, s);
                    trial[k].duration += delta;
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            for w in &mut trial {
                w.duration = p.route_duration(w.depot, &w.stops).0;
            }
            *routes = trial;
            return true;
        }
    }
    false
}

fn relocate(p: &RoutingProblem, routes: &mut Vec<Working>) -> bool {
    for a in 0..routes.len() {
        for i in 0..routes[a].stops.len() {
            let s = routes[a].stops[i];
            let mut from = routes[a].stops.clone();
            from.remove(i);
            let Some(new_a) = feasible(p, routes[a].depot, &from) else { continue };
            for b in 0..routes.len() {
                if a == b {
                    continue;
                }
                let Some((pos, new_b)) = best_insertion(p, &routes[b], s) else { continue };
                let delta = new_a + new_b - routes[a].duration - routes[b].duration;
                if from.is_empty() || delta < -1e-9 {
                    routes[b].stops.insert(pos, s);
                    routes[b].duration = new_b;
                    if from.is_empty() {
                        routes.remove(a);
                    } else {
                        routes[a].stops = from;
                        routes[a].duration = new_a;
                    }
                    return true;
                }
            }
        }
    }
    false
}

fn swap(p: &RoutingProblem, routes: &mut [Working]) -> bool {
    for a in 0..routes.len() {
        for b in a + 1..routes.len() {
            for i in 0..routes[a].stops.len() {
                for j in 0..routes[b].stops.len() {
                    let mut ra = routes[a].stops.clone();
                    let mut rb = routes[b].stops.clone();
                    core::mem::swap(&mut ra[i], &mut rb[j]);
                    let Some(da) = feasible(p, routes[a].depot, &ra) else { continue };
                    let Some(db) = feasible(p, routes[b].depot, &rb) else { continue };
                    if da + db < routes[a].duration + routes[b].duration - 1e-9 {
                        routes[a].stops = ra;
                        routes[a].duration = da;
                        routes[b].stops = rb;
                        routes[b].duration = db;
                        return true;
                    }
                }
            }
        }
    }
    false
}

fn reorder(p: &RoutingProblem, routes: &mut [Working]) -> bool {
    let mut any = false;
    for r in routes.iter_mut() {
        let mut order = r.stops.clone();
        improve_order(p, r.depot, &mut order);
        if let Some(d) = feasible(p, r.depot, &order) {
            if d < r.duration - 1e-9 {
                r.stops = order;
                r.duration = d;
                any = true;
            }
        }
    }
    any
}

fn local_search(p: &RoutingProblem, routes: &mut Vec<Working>, rounds: usize) {
    for _ in 0..rounds {
        if eject_route(p, routes) {
            continue;
        }
        let moved = relocate(p, routes) | swap(p, routes) | reorder(p, routes);
        if !moved {
            break;
        }
    }
}

/// Heuristic routing for any number of stops.
pub fn solve_heuristic(
    problem: &RoutingProblem,
    config: &HeuristicConfig,
) -> Result<RoutePlan, RoutingError> {
    problem.check_singletons()?;
    let n = problem.n_stops();
    if n == 0 {
        return Ok(RoutePlan::default());
    }
    let depots = problem.active_depots();
    let mut pool = Pool::new(problem);
    for &d in &depots {
        for s in 0..n {
            pool.add(d, &[s]);
        }
    }
    for &d in &depots {
        for first in 0..n {
            let nn = nearest_neighbor_sweep(problem, d, first);
            pool.add_solution(d, &nn);
            let ins = insertion_sweep(problem, d, first);
            pool.add_solution(d, &ins);
        }
        for &shape in &config.savings_shapes {
            let sv = savings(problem, d, shape, &mut pool);
            pool.add_solution(d, &sv);
        }
    }

    let cols = core::mem::take(&mut pool.columns);
    let solutions = core::mem::take(&mut pool.solutions);
    let mut part = Partition::new(problem, &cols, config.node_limit);
    for sol in &solutions {
        part.offer(sol);
    }
    let mut covered = vec![0u64; n.div_ceil(64)];
    let mut used = vec![0usize; problem.depots.len()];
    part.search(&mut covered, &mut Vec::new(), &mut used, 0.0);
    let chosen = match part.best.take() {
        Some((_, _, ids)) => ids,
        None => {
            // Singletons always form a partition when the fleet allows it.
            let mut singles = Vec::new();
            let mut used = vec![0usize; problem.depots.len()];
            let budget = problem.buses_per_depot();
            for s in 0..n {
                let id = depots
                    .iter()
                    .filter(|&&d| used[d] < budget[d])
                    .find_map(|&d| pool.index.get(&(d, mask_of(n, &[s]))).copied())
                    .ok_or(RoutingError::NoBuses)?;
                used[cols[id].depot] += 1;
                singles.push(id);
            }
            singles
        }
    };

    let mut routes: Vec<Working> = chosen
        .iter()
        .map(|&c| Working { depot: cols[c].depot, stops: cols[c].stops.clone(), duration: cols[c].duration })
        .collect();
    local_search(problem, &mut routes, config.max_improvement_rounds);
    routes.sort_by_key(|w| (w.depot, w.stops[0]));
    Ok(problem.assign_buses(routes.into_iter().map(|w| (w.depot, w.stops)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::tests::line_problem;
    use crate::routing::{check_plan, solve_exact};

    #[test]
    fn heuristic_matches_exact_on_a_line() {
        let p = line_problem(&[4.0, 3.0, 5.0, 2.0, 6.0, 1.0], 10, 100.0);
        let exact = solve_exact(&p).unwrap();
        let heur = solve_heuristic(&p, &HeuristicConfig::default()).unwrap();
        assert!(check_plan(&p, &heur).is_empty());
        assert_eq!(heur.bus_count, exact.bus_count);
        assert!(heur.total_time <= exact.total_time * 1.05 + 1e-9);
    }

    #[test]
    fn many_stops_are_all_routed() {
        let loads: Vec<f64> = (0..30).map(|i| 1.0 + (i % 4) as f64).collect();
        let p = line_problem(&loads, 20, 200.0);
        let plan = solve_heuristic(&p, &HeuristicConfig::default()).unwrap();
        assert!(check_plan(&p, &plan).is_empty());
        let total: f64 = loads.iter().sum();
        assert!(plan.bus_count >= (total / 20.5).ceil() as usize);
    }
}
