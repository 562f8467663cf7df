//! Full enumeration for small stop counts.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{order::best_order, RoutePlan, RoutingError, RoutingProblem};

type Column = Option<(Vec<usize>, f64)>;

/// Enumerates every partition of the stops into routes, every depot choice
/// per route within the fleet, and the best feasible order of each route.
///
/// Exponential; meant for a handful of stops.
pub fn solve_exact(problem: &RoutingProblem) -> Result<RoutePlan, RoutingError> {
    problem.check_singletons()?;
    let n = problem.n_stops();
    if n == 0 {
        return Ok(RoutePlan::default());
    }
    assert!(n < usize::BITS as usize, "too many stops for exact enumeration");
    let depots = problem.active_depots();
    let budget = problem.buses_per_depot();

    // Best order of every stop subset from every depot.
    let mut cache: BTreeMap<(usize, usize), Column> = BTreeMap::new();
    let mut column = |depot: usize, mask: usize| -> Column {
        cache
            .entry((depot, mask))
            .or_insert_with(|| {
                let stops: Vec<usize> = (0..n).filter(|&s| mask & (1 << s) != 0).collect();
                if !problem.load_ok(problem.load_of(&stops)) {
                    return None;
                }
                best_order(problem, depot, &stops).map(|(o, d, _)| (o, d))
            })
            .clone()
    };

    let mut best: Option<(usize, f64, Vec<(usize, Vec<usize>)>)> = None;
    // Restricted growth strings enumerate set partitions without repeats.
    let mut label = vec![0usize; n];
    loop {
        let blocks = label.iter().max().unwrap() + 1;
        let improves_count = best.as_ref().is_none_or(|b| blocks <= b.0);
        if improves_count {
            let masks: Vec<usize> = (0..blocks)
                .map(|b| (0..n).filter(|&s| label[s] == b).fold(0, |m, s| m | (1 << s)))
                .collect();
            let options: Vec<Vec<(usize, Vec<usize>, f64)>> = masks
                .iter()
                .map(|&m| {
                    depots
                        .iter()
                        .filter_map(|&d| column(d, m).map(|(o, c)| (d, o, c)))
                        .collect()
                })
                .collect();
            if options.iter().all(|o| !o.is_empty()) {
                let mut used = vec![0usize; budget.len()];
                let mut pick = Vec::with_capacity(blocks);
                let mut local: Option<(f64, Vec<(usize, Vec<usize>)>)> = None;
                assign_depots(&options, &budget, &mut used, &mut pick, 0.0, &mut local);
                if let Some((cost, routes)) = local {
                    let better = match &best {
                        None => true,
                        Some((c, t, _)) => blocks < *c || (blocks == *c && cost < *t - 1e-9),
                    };
                    if better {
                        best = Some((blocks, cost, routes));
                    }
                }
            }
        }
        if !next_partition(&mut label) {
            break;
        }
    }
    let (_, _, routes) = best.expect("singleton routes are feasible");
    Ok(problem.assign_buses(routes))
}

fn assign_depots(
    options: &[Vec<(usize, Vec<usize>, f64)>],
    budget: &[usize],
    used: &mut Vec<usize>,
    pick: &mut Vec<(usize, Vec<usize>)>,
    cost: f64,
    best: &mut Option<(f64, Vec<(usize, Vec<usize>)>)>,
) {
    let k = pick.len();
    if k == options.len() {
        if best.as_ref().is_none_or(|(c, _)| cost < *c - 1e-12) {
            *best = Some((cost, pick.clone()));
        }
        return;
    }
    for (d, order, c) in &options[k] {
        if used[*d] >= budget[*d] {
            continue;
        }
        used[*d] += 1;
        pick.push((*d, order.clone()));
        assign_depots(options, budget, used, pick, cost + c, best);
        pick.pop();
        used[*d] -= 1;
    }
}

/// Next restricted growth string in lexicographic order.
fn next_partition(label: &mut [usize]) -> bool {
    let n = label.len();
    for i in (1..n).rev() {
        let max_prefix = label[..i].iter().copied().max().unwrap_or(0);
        if label[i] <= max_prefix {
            label[i] += 1;
            for x in &mut label[i + 1..] {
                *x = 0;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_count_is_bell_number() {
        for (n, bell) in [(1, 1), (2, 2), (3, 5), (4, 15), (5, 52), (6, 203)] {
            let mut label = vec![0usize; n];
            let mut count = 1;
            while next_partition(&mut label) {
                count += 1;
            }
            assert_eq!(count, bell);
        }
    }
}
