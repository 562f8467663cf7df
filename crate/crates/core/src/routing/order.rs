//! Visiting order of the stops on one bus.

use alloc::vec;
use alloc::vec::Vec;

use super::RoutingProblem;

/// Stop sets up to this size are ordered by exact dynamic programming.
const DP_LIMIT: usize = 10;

/// Shortest-duration order of `stops` from `depot` whose ride time respects
/// the limit, with its `(duration, ride_time)`. Exact up to ten stops;
/// larger sets use insertion plus 2-opt and may miss a feasible order.
pub fn best_order(
    problem: &RoutingProblem,
    depot: usize,
    stops: &[usize],
) -> Option<(Vec<usize>, f64, f64)> {
    if stops.is_empty() {
        return Some((Vec::new(), 0.0, 0.0));
    }
    if stops.len() <= DP_LIMIT {
        return exact_order(problem, depot, stops);
    }
    let mut order = insertion_order(problem, depot, stops);
    improve_order(problem, depot, &mut order);
    let (duration, ride) = problem.route_duration(depot, &order);
    problem.ride_ok(ride).then_some((order, duration, ride))
}

/// Held-Karp over paths ending at the school. For a fixed first stop the
/// deadhead is constant, so the shortest ride from each first stop gives
/// the shortest duration among orders starting there.
fn exact_order(
    problem: &RoutingProblem,
    depot: usize,
    stops: &[usize],
) -> Option<(Vec<usize>, f64, f64)> {
    let t = &problem.travel;
    let k = stops.len();
    let full = (1usize << k) - 1;
    let nodes: Vec<usize> = stops.iter().map(|&s| t.stop_node(s)).collect();
    // ride[mask][i]: shortest path that starts at stop i, visits mask, ends
    // at school, counting dwell at every visited stop.
    let mut ride = vec![f64::INFINITY; (full + 1) * k];
    let mut next = vec![usize::MAX; (full + 1) * k];
    for i in 0..k {
        ride[(1 << i) * k + i] = t.dwell(nodes[i]) + t.time(nodes[i], t.school_node());
    }
    for mask in 1..=full {
        if mask.count_ones() < 2 {
            continue;
        }
        for i in 0..k {
            if mask & (1 << i) == 0 {
                continue;
            }
            let rest = mask & !(1 << i);
            let mut best = f64::INFINITY;
            let mut arg = usize::MAX;
            for j in 0..k {
                if rest & (1 << j) == 0 {
                    continue;
                }
                let c = t.time(nodes[i], nodes[j]) + ride[rest * k + j];
                if c < best {
                    best = c;
                    arg = j;
                }
            }
            ride[mask * k + i] = t.dwell(nodes[i]) + best;
            next[mask * k + i] = arg;
        }
    }
    let mut best: Option<(usize, f64, f64)> = None;
    for i in 0..k {
        let r = ride[full * k + i];
        if !problem.ride_ok(r) {
            continue;
        }
        let d = t.time(t.depot_node(depot), nodes[i]) + r;
        if best.is_none_or(|(_, bd, _)| d < bd - 1e-12) {
            best = Some((i, d, r));
        }
    }
    let (mut i, _, _) = best?;
    let mut mask = full;
    let mut order = Vec::with_capacity(k);
    loop {
        order.push(stops[i]);
        let j = next[mask * k + i];
        mask &= !(1 << i);
        if j == usize::MAX {
            break;
        }
        i = j;
    }
    // Recompute along the path so every caller sees identical sums.
    let (duration, ride) = problem.route_duration(depot, &order);
    Some((order, duration, ride))
}

/// Start with the stop farthest from the school and insert the rest where
/// they add the least time.
pub(crate) fn insertion_order(problem: &RoutingProblem, depot: usize, stops: &[usize]) -> Vec<usize> {
    let t = &problem.travel;
    let school = t.school_node();
    let mut remaining: Vec<usize> = stops.to_vec();
    remaining.sort_by(|&a, &b| {
        t.time(t.stop_node(b), school).total_cmp(&t.time(t.stop_node(a), school)).then(a.cmp(&b))
    });
    let mut order = vec![remaining.remove(0)];
    while !remaining.is_empty() {
        let mut best = (f64::INFINITY, 0, 0);
        for (ri, &s) in remaining.iter().enumerate() {
            for pos in 0..=order.len() {
                let c = insertion_delta(problem, depot, &order, pos, s);
                if c < best.0 {
                    best = (c, ri, pos);
                }
            }
        }
        let s = remaining.remove(best.1);
        order.insert(best.2, s);
    }
    order
}

/// Change in duration from inserting stop `s` before position `pos`.
pub(crate) fn insertion_delta(
    problem: &RoutingProblem,
    depot: usize,
    order: &[usize],
    pos: usize,
    s: usize,
) -> f64 {
    let t = &problem.travel;
    let prev = if pos == 0 { t.depot_node(depot) } else { t.stop_node(order[pos - 1]) };
    let next = if pos == order.len() { t.school_node() } else { t.stop_node(order[pos]) };
    let node = t.stop_node(s);
    t.time(prev, node) + t.dwell(node) + t.time(node, next) - t.time(prev, next)
}

/// 2-opt segment reversal and single-stop moves until no duration gain.
pub(crate) fn improve_order(problem: &RoutingProblem, depot: usize, order: &mut Vec<usize>) {
    let n = order.len();
    if n < 2 {
        return;
    }
    let mut current = problem.route_duration(depot, order).0;
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                order[i..=j].reverse();
                let d = problem.route_duration(depot, order).0;
                if d < current - 1e-9 {
                    current = d;
                    improved = true;
                } else {
                    order[i..=j].reverse();
                }
            }
        }
        for i in 0..n {
            let s = order.remove(i);
            let mut best = (current, i);
            for pos in 0..n {
                order.insert(pos, s);
                let d = problem.route_duration(depot, order).0;
                if d < best.0 - 1e-9 {
                    best = (d, pos);
                }
                order.remove(pos);
            }
            order.insert(best.1, s);
            if best.1 != i {
                current = best.0;
                improved = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::tests::line_problem;

    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let x = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn dp_matches_permutation_scan() {
        let p = line_problem(&[1.0, 2.0, 1.0, 3.0, 1.0], 40, 100.0);
        let stops = [4, 0, 2, 1, 3];
        let (order, dur, _) = best_order(&p, 0, &stops).unwrap();
        let best = permutations(&stops)
            .into_iter()
            .map(|o| p.route_duration(0, &o).0)
            .fold(f64::INFINITY, f64::min);
        assert!((dur - best).abs() < 1e-12);
        assert_eq!(p.route_duration(0, &order).0, dur);
    }

    #[test]
    fn ride_limit_can_rule_out_every_order() {
        let p = line_problem(&[1.0, 1.0, 1.0], 40, 2.5);
        assert!(best_order(&p, 0, &[0, 1, 2]).is_none());
        assert!(best_order(&p, 0, &[0, 1]).is_some());
    }

    #[test]
    fn large_sets_use_local_search() {
        let loads = [1.0; 14];
        let p = line_problem(&loads, 40, 1000.0);
        let stops: Vec<usize> = (0..14).rev().collect();
        let (order, dur, _) = best_order(&p, 0, &stops).unwrap();
        assert_eq!(order.len(), 14);
        // Out and back along the line is optimal: 2 * 14 miles.
        assert!((dur - 28.0).abs() < 1e-9);
    }
}
