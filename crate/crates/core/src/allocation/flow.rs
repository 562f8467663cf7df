//! Capacitated student-to-stop matching.

use alloc::collections::{BinaryHeap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::instance::CandidateSets;

/// Incremental b-matching of students to open stops, each stop holding at
/// most `cap` students. Only feasibility matters here, not walking distance.
#[derive(Debug, Clone)]
pub(crate) struct BMatching<'a> {
    cands: &'a CandidateSets,
    cap: usize,
    pub(crate) open: Vec<bool>,
    pub(crate) stop_of: Vec<Option<usize>>,
    pub(crate) members: Vec<Vec<usize>>,
}

impl<'a> BMatching<'a> {
    pub(crate) fn new(cands: &'a CandidateSets, cap: usize, open: Vec<bool>) -> Self {
        Self {
            cands,
            cap,
            open,
            stop_of: vec![None; cands.n_students()],
            members: vec![Vec::new(); cands.n_stops()],
        }
    }

    pub(crate) fn load(&self, j: usize) -> usize {
        self.members[j].len()
    }

    fn assign(&mut self, i: usize, j: usize) {
        if let Some(prev) = self.stop_of[i] {
            let pos = self.members[prev].iter().position(|&v| v == i).unwrap();
            self.members[prev].swap_remove(pos);
        }
        self.members[j].push(i);
        self.stop_of[i] = Some(j);
    }

    /// Alternating-path search from an unassigned student. When
    /// `allow_closed` is set, a closed stop also ends the path and is opened.
    pub(crate) fn augment(&mut self, s: usize, allow_closed: bool) -> bool {
        debug_assert!(self.stop_of[s].is_none());
        let m = self.cands.n_stops();
        let mut reached_from = vec![usize::MAX; m];
        let mut seen_student = vec![false; self.cands.n_students()];
        let mut queue = VecDeque::new();
        seen_student[s] = true;
        queue.push_back(s);
        let mut end = None;
        'bfs: while let Some(u) = queue.pop_front() {
            for &j in &self.cands.stops_of_student[u] {
                if reached_from[j] != usize::MAX || self.stop_of[u] == Some(j) {
                    continue;
                }
                if !self.open[j] && !allow_closed {
                    continue;
                }
                reached_from[j] = u;
                if !self.open[j] || self.load(j) < self.cap {
                    end = Some(j);
                    break 'bfs;
                }
                for &v in &self.members[j] {
                    if !seen_student[v] {
                        seen_student[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        let Some(mut t) = end else { return false };
        self.open[t] = true;
        loop {
            let u = reached_from[t];
            let prev = self.stop_of[u];
            self.assign(u, t);
            match prev {
                Some(p) => t = p,
                None => break,
            }
        }
        true
    }

    /// Assigns every student it can; returns the students left over.
    pub(crate) fn fill(&mut self) -> Vec<usize> {
        let mut left = Vec::new();
        for i in 0..self.cands.n_students() {
            if self.stop_of[i].is_none() && !self.augment(i, false) {
                left.push(i);
            }
        }
        left
    }

    /// Closes stop `j` if its students can be re-seated elsewhere.
    pub(crate) fn try_close(&mut self, j: usize) -> bool {
        let saved_stop_of = self.stop_of.clone();
        let saved_members = self.members.clone();
        let displaced = core::mem::take(&mut self.members[j]);
        self.open[j] = false;
        for &i in &displaced {
            self.stop_of[i] = None;
        }
        for &i in &displaced {
            if !self.augment(i, false) {
                self.open[j] = true;
                self.stop_of = saved_stop_of;
                self.members = saved_members;
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    to: usize,
    cap: i32,
    cost: f64,
}

/// Min-cost flow by successive shortest paths with Dijkstra potentials.
struct MinCostFlow {
    adj: Vec<Vec<usize>>,
    edges: Vec<Edge>,
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl MinCostFlow {
    fn new(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n], edges: Vec::new() }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: i32, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.edges.push(Edge { to: from, cap: 0, cost: -cost });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Pushes up to `want` units; returns the amount pushed.
    fn run(&mut self, s: usize, t: usize, want: i32) -> i32 {
        let n = self.adj.len();
        let mut potential = vec![0.0f64; n];
        let mut flow = 0;
        while flow < want {
            let mut dist = vec![f64::INFINITY; n];
            let mut via = vec![usize::MAX; n];
            let mut heap = BinaryHeap::new();
            dist[s] = 0.0;
            heap.push(HeapItem(0.0, s));
            while let Some(HeapItem(d, u)) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = self.edges[e];
                    if edge.cap <= 0 {
                        continue;
                    }
                    let reduced = (edge.cost + potential[u] - potential[edge.to]).max(0.0);
                    let nd = d + reduced;
                    if nd < dist[edge.to] {
                        dist[edge.to] = nd;
                        via[edge.to] = e;
                        heap.push(HeapItem(nd, edge.to));
                    }
                }
            }
            if !dist[t].is_finite() {
                break;
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    potential[v] += dist[v];
                }
            }
            let mut push = want - flow;
            let mut v = t;
            while v != s {
                let e = via[v];
                push = push.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
            }
            let mut v = t;
            while v != s {
                let e = via[v];
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                v = self.edges[e ^ 1].to;
            }
            flow += push;
        }
        flow
    }
}

/// Cheapest assignment of all students to the open stops under the stop
/// capacity, or `None` when some student cannot be seated.
pub(crate) fn min_cost_assignment(
    cands: &CandidateSets,
    open: &[bool],
    cap: usize,
) -> Option<(Vec<usize>, f64)> {
    let n = cands.n_students();
    let m = cands.n_stops();
    let source = n + m;
    let sink = source + 1;
    let mut g = MinCostFlow::new(n + m + 2);
    let mut arcs = Vec::new();
    for i in 0..n {
        g.add_edge(source, i, 1, 0.0);
        for (k, &j) in cands.stops_of_student[i].iter().enumerate() {
            if open[j] {
                let e = g.add_edge(i, n + j, 1, cands.walk_of_student[i][k]);
                arcs.push((e, i, j));
            }
        }
    }
    for (j, &o) in open.iter().enumerate() {
        if o {
            g.add_edge(n + j, sink, cap as i32, 0.0);
        }
    }
    if g.run(source, sink, n as i32) < n as i32 {
        return None;
    }
    let mut stop_of = vec![usize::MAX; n];
    for (e, i, j) in arcs {
        if g.edges[e].cap == 0 {
            stop_of[i] = j;
        }
    }
    let total = (0..n).map(|i| cands.walk(i, stop_of[i]).unwrap()).sum();
    Some((stop_of, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(arcs: &[(usize, usize, f64)], n: usize, m: usize) -> CandidateSets {
        CandidateSets::from_arcs(
            (0..n as u32).collect(),
            (0..m as u32).collect(),
            arcs.iter().copied(),
        )
    }

    #[test]
    fn augmenting_path_reseats_students() {
        // Student 0 can use either stop, student 1 only stop 0; capacity 1.
        let c = sets(&[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 1.0)], 2, 2);
        let mut b = BMatching::new(&c, 1, vec![true, true]);
        assert!(b.augment(0, false));
        assert_eq!(b.stop_of[0], Some(0));
        assert!(b.augment(1, false));
        assert_eq!(b.stop_of, vec![Some(1), Some(0)]);
        assert!(!b.try_close(1));
        assert!(b.open[1]);
    }

    #[test]
    fn min_cost_respects_capacity() {
        let c = sets(&[(0, 0, 0.1), (0, 1, 0.5), (1, 0, 0.2), (1, 1, 0.3)], 2, 2);
        let (stop_of, cost) = min_cost_assignment(&c, &[true, true], 1).unwrap();
        assert_eq!(stop_of, vec![0, 1]);
        assert!((cost - 0.4).abs() < 1e-12);
        let (stop_of, cost) = min_cost_assignment(&c, &[true, true], 2).unwrap();
        assert_eq!(stop_of, vec![0, 0]);
        assert!((cost - 0.3).abs() < 1e-12);
        assert!(min_cost_assignment(&c, &[true, false], 1).is_none());
    }
}
