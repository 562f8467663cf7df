//! Stop selection and student-to-stop assignment.
//!
//! The objective is lexicographic: first open as few stops as possible, then
//! minimize the total walking distance among allocations with that many
//! stops. Every student walks to a stop within reach and no stop serves more
//! than its capacity.
//!
//! Small instances (at most [`EXACT_STOP_LIMIT`] stops that reach any
//! student) are solved exactly by enumerating stop subsets of increasing
//! size. Larger ones run a greedy capacitated cover followed by stop closing
//! and a min-cost reassignment.

mod flow;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::instance::CandidateSets;
use flow::{min_cost_assignment, BMatching};

/// Largest number of relevant stops solved by enumeration.
pub const EXACT_STOP_LIMIT: usize = 12;

const WALK_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Stop position for each student position.
    pub stop_of_student: Vec<usize>,
    /// Open stop positions, ascending.
    pub open_stops: Vec<usize>,
    pub total_walk: f64,
    pub open_count: usize,
    pub mode: SolveMode,
    /// Valid lower bound on the optimal number of open stops.
    pub lower_bound: usize,
}

impl Allocation {
    /// Students assigned to each stop position.
    pub fn students_by_stop(&self, n_stops: usize) -> Vec<Vec<usize>> {
        let mut by_stop = vec![Vec::new(); n_stops];
        for (i, &j) in self.stop_of_student.iter().enumerate() {
            by_stop[j].push(i);
        }
        by_stop
    }

    pub fn gap(&self) -> usize {
        self.open_count.saturating_sub(self.lower_bound)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AllocationError {
    StudentUnreachable(u32),
    /// Students that cannot be seated even with every stop open.
    Infeasible(Vec<u32>),
}

impl fmt::Display for AllocationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StudentUnreachable(id) => write!(f, "student {id} has no stop in reach"),
            Self::Infeasible(ids) => {
                write!(f, "stop capacity cannot seat students {ids:?} even with all stops open")
            }
        }
    }
}

/// Solves the allocation for `cands` with at most `capacity` students per stop.
pub fn solve_allocation(cands: &CandidateSets, capacity: u32) -> Result<Allocation, AllocationError> {
    if let Some(i) = cands.first_unreachable() {
        return Err(AllocationError::StudentUnreachable(cands.student_ids[i]));
    }
    let cap = capacity.max(1) as usize;
    let relevant: Vec<usize> =
        (0..cands.n_stops()).filter(|&j| !cands.students_of_stop[j].is_empty()).collect();

    let mut all = BMatching::new(cands, cap, vec![false; cands.n_stops()]);
    for &j in &relevant {
        all.open[j] = true;
    }
    let left = all.fill();
    if !left.is_empty() {
        return Err(AllocationError::Infeasible(
            left.into_iter().map(|i| cands.student_ids[i]).collect(),
        ));
    }

    let lower_bound = lower_bound(cands, cap);
    if cands.n_students() == 0 {
        return Ok(Allocation {
            stop_of_student: Vec::new(),
            open_stops: Vec::new(),
            total_walk: 0.0,
            open_count: 0,
            mode: SolveMode::Exact,
            lower_bound: 0,
        });
    }
    if relevant.len() <= EXACT_STOP_LIMIT {
        Ok(solve_exact(cands, cap, &relevant, lower_bound))
    } else {
        Ok(solve_heuristic(cands, cap, lower_bound))
    }
}

/// Maximum of the capacity bound and a packing bound: students whose reach
/// sets are pairwise disjoint each need their own stop.
fn lower_bound(cands: &CandidateSets, cap: usize) -> usize {
    let n = cands.n_students();
    let by_capacity = n.div_ceil(cap);
    let mut taken = vec![false; cands.n_stops()];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (cands.stops_of_student[i].len(), i));
    let mut packing = 0;
    for i in order {
        let stops = &cands.stops_of_student[i];
        if stops.iter().all(|&j| !taken[j]) {
            packing += 1;
            for &j in stops {
                taken[j] = true;
            }
        }
    }
    by_capacity.max(packing)
}

fn finish(
    cands: &CandidateSets,
    stop_of_student: Vec<usize>,
    mode: SolveMode,
    lower_bound: usize,
) -> Allocation {
    let mut open_stops = stop_of_student.clone();
    open_stops.sort_unstable();
    open_stops.dedup();
    let total_walk = stop_of_student
        .iter()
        .enumerate()
        .map(|(i, &j)| cands.walk(i, j).unwrap())
        .sum();
    let open_count = open_stops.len();
    Allocation {
        stop_of_student,
        open_stops,
        total_walk,
        open_count,
        mode,
        lower_bound: lower_bound.min(open_count),
    }
}

fn lex_less_ids(cands: &CandidateSets, a: &[usize], b: &[usize]) -> bool {
    a.iter().map(|&j| cands.stop_ids[j]).lt(b.iter().map(|&j| cands.stop_ids[j]))
}

/// Enumerates subsets of the relevant stops by increasing size. The first
/// size with a feasible assignment is optimal; among its subsets the one
/// with the cheapest min-cost assignment wins.
fn solve_exact(cands: &CandidateSets, cap: usize, relevant: &[usize], lb: usize) -> Allocation {
    let n = cands.n_students();
    let r = relevant.len();
    for k in lb.max(1)..=r {
        let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
        let mut pick: Vec<usize> = (0..k).collect();
        loop {
            let subset: Vec<usize> = pick.iter().map(|&p| relevant[p]).collect();
            let mut open = vec![false; cands.n_stops()];
            for &j in &subset {
                open[j] = true;
            }
            let covers = (0..n).all(|i| cands.stops_of_student[i].iter().any(|&j| open[j]));
            let room: usize =
                subset.iter().map(|&j| cands.students_of_stop[j].len().min(cap)).sum();
            if covers && room >= n {
                if let Some((stop_of, walk)) = min_cost_assignment(cands, &open, cap) {
                    let mut ids = subset.clone();
                    ids.sort_by_key(|&j| cands.stop_ids[j]);
                    let better = match &best {
                        None => true,
                        Some((w, _, best_ids)) => {
                            walk < *w - WALK_TIE
                                || (walk <= *w + WALK_TIE && lex_less_ids(cands, &ids, best_ids))
                        }
                    };
                    if better {
                        best = Some((walk, stop_of, ids));
                    }
                }
            }
            if !next_combination(&mut pick, r) {
                break;
            }
        }
        if let Some((_, stop_of, _)) = best {
            return finish(cands, stop_of, SolveMode::Exact, k);
        }
    }
    unreachable!("all relevant stops open is feasible")
}

fn next_combination(pick: &mut [usize], n: usize) -> bool {
    let k = pick.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if pick[i] < n - k + i {
            pick[i] += 1;
            for t in i + 1..k {
                pick[t] = pick[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn solve_heuristic(cands: &CandidateSets, cap: usize, lb: usize) -> Allocation {
    let n = cands.n_students();
    let m = cands.n_stops();
    let mut bm = BMatching::new(cands, cap, vec![false; m]);

    // Greedy capacitated cover: open the stop that seats the most
    // still-unassigned students.
    let mut unassigned = vec![true; n];
    let mut remaining = n;
    let mut closed_options: Vec<usize> = cands.stops_of_student.iter().map(|s| s.len()).collect();
    while remaining > 0 {
        let mut best: Option<(usize, f64, usize)> = None;
        for j in 0..m {
            if bm.open[j] {
                continue;
            }
            let mut count = 0;
            let mut walk = 0.0;
            for &i in &cands.students_of_stop[j] {
                if unassigned[i] {
                    count += 1;
                    walk += cands.walk(i, j).unwrap();
                }
            }
            if count == 0 {
                continue;
            }
            let score = count.min(cap);
            let avg = walk / count as f64;
            let better = match best {
                None => true,
                Some((s, w, b)) => {
                    score > s
                        || (score == s && avg < w - WALK_TIE)
                        || (score == s && avg <= w + WALK_TIE && cands.stop_ids[j] < cands.stop_ids[b])
                }
            };
            if better {
                best = Some((score, avg, j));
            }
        }
        let Some((_, _, j)) = best else { break };
        bm.open[j] = true;
        let mut takers: Vec<usize> =
            cands.students_of_stop[j].iter().copied().filter(|&i| unassigned[i]).collect();
        takers.sort_by(|&a, &b| {
            closed_options[a]
                .cmp(&closed_options[b])
                .then(cands.walk(a, j).unwrap().total_cmp(&cands.walk(b, j).unwrap()))
                .then(a.cmp(&b))
        });
        for &i in takers.iter().take(cap) {
            bm.members[j].push(i);
            bm.stop_of[i] = Some(j);
            unassigned[i] = false;
            remaining -= 1;
        }
        for &i in &cands.students_of_stop[j] {
            closed_options[i] -= 1;
        }
    }
    // Students stuck behind full stops: reseat along alternating paths,
    // opening a closed stop only when needed.
    for i in 0..n {
        if bm.stop_of[i].is_none() && !bm.augment(i, false) {
            let ok = bm.augment(i, true);
            debug_assert!(ok);
        }
    }

    // Close stops while the remaining ones can still seat everyone.
    loop {
        let mut open: Vec<usize> = (0..m).filter(|&j| bm.open[j]).collect();
        open.sort_by_key(|&j| (bm.load(j), cands.stop_ids[j]));
        let mut closed_any = false;
        for j in open {
            if bm.try_close(j) {
                closed_any = true;
            }
        }
        if !closed_any {
            break;
        }
    }

    let mut open = bm.open.clone();
    loop {
        let (stop_of, _) = min_cost_assignment(cands, &open, cap).expect("matching is feasible");
        let mut used = vec![false; m];
        for &j in &stop_of {
            used[j] = true;
        }
        if used == open {
            let mut alloc = finish(cands, stop_of, SolveMode::Heuristic, lb);
            improve_by_relocation(cands, cap, &mut alloc);
            return alloc;
        }
        open = used;
    }
}

/// Swaps an open stop for a closed one when reseating its students
/// greedily lowers the total walk, then reassigns everyone at minimum cost
/// over the final set of open stops.
fn improve_by_relocation(cands: &CandidateSets, cap: usize, alloc: &mut Allocation) {
    let m = cands.n_stops();
    let mut open = vec![false; m];
    for &j in &alloc.open_stops {
        open[j] = true;
    }
    let mut stop_of = alloc.stop_of_student.clone();
    let mut members = alloc.students_by_stop(m);
    let walk_to = |i: usize, j: usize| cands.walk(i, j);
    let mut improved = true;
    let mut rounds = 0;
    while improved && rounds < 4 {
        improved = false;
        rounds += 1;
        for j in 0..m {
            if !open[j] {
                continue;
            }
            let mut candidates: Vec<usize> = members[j]
                .iter()
                .flat_map(|&i| cands.stops_of_student[i].iter().copied())
                .filter(|&k| !open[k])
                .collect();
            candidates.sort_unstable();
            candidates.dedup();
            for k in candidates {
                open[j] = false;
                let mut load_k = 0;
                let mut extra: BTreeMap<usize, usize> = BTreeMap::new();
                let mut moves = Vec::with_capacity(members[j].len());
                let mut delta = 0.0;
                let mut ok = true;
                for &i in &members[j] {
                    let old = walk_to(i, j).unwrap();
                    let mut best: Option<(f64, usize)> = None;
                    for (&t, &w) in cands.stops_of_student[i].iter().zip(&cands.walk_of_student[i]) {
                        let room = if t == k {
                            load_k < cap
                        } else {
                            open[t] && members[t].len() + extra.get(&t).copied().unwrap_or(0) < cap
                        };
                        if room && best.is_none_or(|(bw, _)| w < bw) {
                            best = Some((w, t));
                        }
                    }
                    match best {
                        Some((w, t)) => {
                            if t == k {
                                load_k += 1;
                            } else {
                                *extra.entry(t).or_insert(0) += 1;
                            }
                            delta += w - old;
                            moves.push((i, t));
                        }
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok && delta < -1e-9 {
                    open[k] = true;
                    members[j].clear();
                    for (i, t) in moves {
                        stop_of[i] = t;
                        members[t].push(i);
                    }
                    improved = true;
                    break;
                }
                open[j] = true;
            }
        }
    }
    if let Some((best, walk)) = min_cost_assignment(cands, &open, cap) {
        if walk < alloc.total_walk - 1e-9 {
            stop_of = best;
        }
    }
    let candidate = finish(cands, stop_of, SolveMode::Heuristic, alloc.lower_bound);
    if candidate.open_count <= alloc.open_count && candidate.total_walk < alloc.total_walk - 1e-9 {
        *alloc = candidate;
    }
}

/// A violated constraint of the allocation model.
#[derive(Debug, Clone, PartialEq)]
pub enum AllocationViolation {
    /// Student not assigned to exactly one stop in reach.
    AssignOnce { student: u32 },
    /// Student assigned to a stop that is not open.
    AssignedToClosed { student: u32, stop: u32 },
    /// Stop over its capacity.
    StopCapacity { stop: u32, load: usize, capacity: u32 },
    OpenCountMismatch { reported: usize, actual: usize },
    TotalWalkMismatch { reported: f64, actual: f64 },
}

impl AllocationViolation {
    /// Name of the violated model constraint.
    pub fn name(&self) -> &'static str {
        match self {
            Self::AssignOnce { .. } => "locationmodel:co1",
            Self::AssignedToClosed { .. } => "locationmodel:co2",
            Self::StopCapacity { .. } => "locationmodel:co3",
            Self::OpenCountMismatch { .. } => "open_count",
            Self::TotalWalkMismatch { .. } => "total_walk",
        }
    }
}

/// Lists every violated constraint; empty iff the allocation is feasible
/// and its summary fields are consistent.
pub fn check_allocation(
    alloc: &Allocation,
    cands: &CandidateSets,
    capacity: u32,
) -> Vec<AllocationViolation> {
    let mut out = Vec::new();
    let n = cands.n_students();
    let m = cands.n_stops();
    let mut open = vec![false; m];
    for &j in &alloc.open_stops {
        if j < m {
            open[j] = true;
        }
    }
    let mut load = vec![0usize; m];
    let mut walk = 0.0;
    for i in 0..n {
        let sid = cands.student_ids[i];
        let Some(&j) = alloc.stop_of_student.get(i) else {
            out.push(AllocationViolation::AssignOnce { student: sid });
            continue;
        };
        match (j < m).then(|| cands.walk(i, j)).flatten() {
            None => out.push(AllocationViolation::AssignOnce { student: sid }),
            Some(d) => {
                walk += d;
                load[j] += 1;
                if !open[j] {
                    out.push(AllocationViolation::AssignedToClosed {
                        student: sid,
                        stop: cands.stop_ids[j],
                    });
                }
            }
        }
    }
    if alloc.stop_of_student.len() > n {
        for i in n..alloc.stop_of_student.len() {
            out.push(AllocationViolation::AssignOnce { student: i as u32 });
        }
    }
    for j in 0..m {
        if load[j] > capacity as usize {
            out.push(AllocationViolation::StopCapacity {
                stop: cands.stop_ids[j],
                load: load[j],
                capacity,
            });
        }
    }
    let actual = open.iter().filter(|&&o| o).count();
    if alloc.open_count != actual {
        out.push(AllocationViolation::OpenCountMismatch { reported: alloc.open_count, actual });
    }
    if (alloc.total_walk - walk).abs() > 1e-9 * (1.0 + walk) {
        out.push(AllocationViolation::TotalWalkMismatch { reported: alloc.total_walk, actual: walk });
    }
    out
}
