//! Mixed-integer model of the routing problem, for checking heuristic plans
//! with an external solver.
//!
//! Locations are the school, the depots and the demand stops. Arc variables
//! `x` cover every ordered pair of locations for every bus. Alongside the
//! published constraint families the model carries two covering families,
//! `cover` (each stop on exactly one route) and `visit` (each stop entered
//! exactly once); without them the all-zero solution is feasible.
//!
//! The objective is `W * buses + total_time` where `W` exceeds any total
//! time, so the lexicographic order is preserved.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{RoutePlan, RoutingError, RoutingProblem};
use crate::overbooking::{sigma_tilde, OverbookingError};

/// Largest stop count the exporter accepts.
pub const MILP_STOP_LIMIT: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub family: &'static str,
    /// `(variable index, coefficient)`, ascending by index, no zeros.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v]).sum()
    }

    pub fn satisfied(&self, values: &[f64], tol: f64) -> bool {
        let lhs = self.lhs(values);
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Minimized; ascending by variable index.
    pub objective: Vec<(usize, f64)>,
    /// Weight on the bus count.
    pub bus_weight: f64,
}

/// Family names in emission order.
pub const FAMILIES: [&str; 15] = [
    "prop_co01",
    "prop_co02",
    "prop_co03",
    "prop_co04",
    "mo4_001",
    "mo4_002",
    "mo4_003",
    "mo4_022",
    "mo4_004",
    "mo4_008",
    "businitialposition",
    "maxridetime",
    "st_elim4",
    "cover",
    "visit",
];

impl MilpModel {
    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn family_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        for c in &self.constraints {
            *out.entry(c.family).or_insert(0) += 1;
        }
        out
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Names of constraints and variable bounds or integrality broken by
    /// `values`.
    pub fn violations(&self, values: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (v, x) in self.variables.iter().zip(values) {
            let integral = matches!(v.kind, VarKind::Binary | VarKind::Integer);
            if *x < v.lower - tol || *x > v.upper + tol || (integral && (x - libm::round(*x)).abs() > tol) {
                out.push(v.name.clone());
            }
        }
        for c in &self.constraints {
            if !c.satisfied(values, tol) {
                out.push(c.name.clone());
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Loc {
    School,
    Depot(usize),
    Stop(usize),
}

struct Builder<'a> {
    problem: &'a RoutingProblem,
    locs: Vec<Loc>,
    n_buses: usize,
    v_plus: usize,
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
}

impl<'a> Builder<'a> {
    fn label(&self, l: usize) -> String {
        match self.locs[l] {
            Loc::School => String::from("s"),
            Loc::Depot(d) => format!("d{d}"),
            Loc::Stop(j) => format!("p{j}"),
        }
    }

    fn n_loc(&self) -> usize {
        self.locs.len()
    }

    fn x(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n_loc() + i) * self.n_loc() + j
    }

    fn w(&self, k: usize, j: usize) -> usize {
        self.n_buses * self.n_loc() * self.n_loc() + k * self.problem.n_stops() + j
    }

    fn u(&self, l: usize, k: usize) -> usize {
        self.w(self.n_buses, 0) + k * self.n_loc() + l
    }

    fn zeta(&self, k: usize, v: usize) -> usize {
        self.u(0, self.n_buses) + k * (self.v_plus + 1) + v
    }

    fn sigma(&self, k: usize) -> usize {
        self.zeta(self.n_buses, 0) + k
    }

    fn add_var(&mut self, name: String, kind: VarKind, lower: f64, upper: f64) {
        self.variables.push(Variable { name, kind, lower, upper });
    }

    fn push(&mut self, family: &'static str, suffix: String, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (v, c) in terms {
            *merged.entry(v).or_insert(0.0) += c;
        }
        let terms = merged.into_iter().filter(|&(_, c)| c != 0.0).collect();
        let name = if suffix.is_empty() { String::from(family) } else { format!("{family}_{suffix}") };
        self.constraints.push(Constraint { name, family, terms, sense, rhs });
    }

    fn is_depot(&self, l: usize) -> bool {
        matches!(self.locs[l], Loc::Depot(_))
    }

    fn is_stop(&self, l: usize) -> bool {
        matches!(self.locs[l], Loc::Stop(_))
    }

    fn is_school(&self, l: usize) -> bool {
        matches!(self.locs[l], Loc::School)
    }

    /// Arc time plus dwell at its tail, the duration charged per arc.
    fn arc_cost(&self, i: usize, j: usize) -> f64 {
        let t = &self.problem.travel;
        t.time(i, j) + t.dwell(i)
    }
}

/// Builds the model over every bus of the fleet.
pub fn build_milp(problem: &RoutingProblem) -> Result<MilpModel, RoutingError> {
    let n_p = problem.n_stops();
    if n_p > MILP_STOP_LIMIT {
        return Err(RoutingError::TooLarge { stops: n_p, limit: MILP_STOP_LIMIT });
    }
    let t = &problem.travel;
    let mut locs = vec![Loc::School];
    locs.extend((0..problem.depots.len()).map(Loc::Depot));
    locs.extend((0..n_p).map(Loc::Stop));
    let mut b = Builder {
        problem,
        locs,
        n_buses: problem.fleet.len(),
        v_plus: problem.chance.v_plus as usize,
        variables: Vec::new(),
        constraints: Vec::new(),
    };
    let (n_l, n_b) = (b.n_loc(), b.n_buses);
    let stops: Vec<usize> = (0..n_l).filter(|&l| b.is_stop(l)).collect();
    let depots: Vec<usize> = (0..n_l).filter(|&l| b.is_depot(l)).collect();
    let big = (n_p + 2) as f64;

    for k in 0..n_b {
        for i in 0..n_l {
            for j in 0..n_l {
                let name = format!("x_{}_{}_b{k}", b.label(i), b.label(j));
                b.add_var(name, VarKind::Binary, 0.0, 1.0);
            }
        }
    }
    for k in 0..n_b {
        for j in 0..n_p {
            b.add_var(format!("w_b{k}_p{j}"), VarKind::Binary, 0.0, 1.0);
        }
    }
    for k in 0..n_b {
        for l in 0..n_l {
            let name = format!("u_{}_b{k}", b.label(l));
            b.add_var(name, VarKind::Continuous, 1.0, big);
        }
    }
    for k in 0..n_b {
        for v in 0..=b.v_plus {
            b.add_var(format!("zeta_b{k}_v{v}"), VarKind::Binary, 0.0, 1.0);
        }
    }
    for k in 0..n_b {
        b.add_var(format!("sigma_b{k}"), VarKind::Integer, 0.0, b.v_plus as f64);
    }

    let z = problem.chance.z();
    let cap = problem.chance.effective_capacity();
    for k in 0..n_b {
        let mut terms: Vec<(usize, f64)> =
            (0..n_p).map(|j| (b.w(k, j), problem.stop_load(j).mu)).collect();
        terms.push((b.sigma(k), z));
        b.push("prop_co01", format!("b{k}"), terms, Sense::Le, cap);
    }
    for k in 0..n_b {
        let mut terms: Vec<(usize, f64)> =
            (0..=b.v_plus).map(|v| (b.zeta(k, v), (v * v) as f64)).collect();
        terms.extend((0..n_p).map(|j| (b.w(k, j), -problem.stop_load(j).var)));
        b.push("prop_co02", format!("b{k}"), terms, Sense::Ge, 0.0);
    }
    for k in 0..n_b {
        let mut terms: Vec<(usize, f64)> = (0..=b.v_plus).map(|v| (b.zeta(k, v), v as f64)).collect();
        terms.push((b.sigma(k), -1.0));
        b.push("prop_co03", format!("b{k}"), terms, Sense::Eq, 0.0);
    }
    for k in 0..n_b {
        let terms = (0..=b.v_plus).map(|v| (b.zeta(k, v), 1.0)).collect();
        b.push("prop_co04", format!("b{k}"), terms, Sense::Eq, 1.0);
    }
    let into_from_d_or_p = |b: &Builder, j: usize, k: usize| -> Vec<(usize, f64)> {
        (0..n_l).filter(|&i| !b.is_school(i)).map(|i| (b.x(i, j, k), 1.0)).collect()
    };
    for k in 0..n_b {
        for (jp, &j) in stops.iter().enumerate() {
            let mut terms = into_from_d_or_p(&b, j, k);
            terms.push((b.w(k, jp), -1.0));
            b.push("mo4_001", format!("b{k}_p{jp}"), terms, Sense::Le, 0.0);
        }
    }
    for (jp, &j) in stops.iter().enumerate() {
        let terms = (0..n_b).flat_map(|k| into_from_d_or_p(&b, j, k)).collect();
        b.push("mo4_002", format!("p{jp}"), terms, Sense::Le, 1.0);
    }
    for (ip, &i) in stops.iter().enumerate() {
        let mut terms = Vec::new();
        for k in 0..n_b {
            for j in 0..n_l {
                if b.is_stop(j) || b.is_school(j) {
                    terms.push((b.x(i, j, k), 1.0));
                }
            }
        }
        b.push("mo4_003", format!("p{ip}"), terms, Sense::Le, 1.0);
    }
    {
        let mut terms = Vec::new();
        for k in 0..n_b {
            for i in 0..n_l {
                terms.push((b.x(i, i, k), 1.0));
                terms.extend(depots.iter().map(|&j| (b.x(i, j, k), 1.0)));
                terms.push((b.x(0, i, k), 1.0));
            }
        }
        b.push("mo4_022", String::new(), terms, Sense::Eq, 0.0);
    }
    for k in 0..n_b {
        for (jp, &j) in stops.iter().enumerate() {
            let mut terms = into_from_d_or_p(&b, j, k);
            terms.extend(
                (0..n_l).filter(|&i| b.is_stop(i) || b.is_school(i)).map(|i| (b.x(j, i, k), -1.0)),
            );
            b.push("mo4_004", format!("b{k}_p{jp}"), terms, Sense::Eq, 0.0);
        }
    }
    for k in 0..n_b {
        for (jp, &j) in stops.iter().enumerate() {
            let mut terms = into_from_d_or_p(&b, j, k);
            for &d in &depots {
                terms.extend(stops.iter().map(|&q| (b.x(d, q, k), -1.0)));
            }
            b.push("mo4_008", format!("b{k}_p{jp}"), terms, Sense::Le, 0.0);
        }
    }
    for k in 0..n_b {
        for &d in &depots {
            let terms = (0..n_l).map(|j| (b.x(d, j, k), 1.0)).collect();
            let dep = d - 1;
            let rhs = if problem.fleet[k] == dep { 1.0 } else { 0.0 };
            b.push("businitialposition", format!("b{k}_d{dep}"), terms, Sense::Le, rhs);
        }
    }
    for k in 0..n_b {
        let mut terms = Vec::new();
        for i in 0..n_l {
            for j in 0..n_l {
                terms.push((b.x(i, j, k), b.arc_cost(i, j)));
            }
        }
        for &d in &depots {
            terms.extend(stops.iter().map(|&j| (b.x(d, j, k), -t.time(d, j))));
        }
        b.push("maxridetime", format!("b{k}"), terms, Sense::Le, problem.dt_max);
    }
    for k in 0..n_b {
        for i in 0..n_l {
            for j in 0..n_l {
                let terms = vec![(b.u(i, k), 1.0), (b.u(j, k), -1.0), (b.x(i, j, k), big)];
                let name = format!("b{k}_{}_{}", b.label(i), b.label(j));
                b.push("st_elim4", name, terms, Sense::Le, big - 1.0);
            }
        }
    }
    for jp in 0..n_p {
        let terms = (0..n_b).map(|k| (b.w(k, jp), 1.0)).collect();
        b.push("cover", format!("p{jp}"), terms, Sense::Eq, 1.0);
    }
    for (jp, &j) in stops.iter().enumerate() {
        let terms = (0..n_b).flat_map(|k| into_from_d_or_p(&b, j, k)).collect();
        b.push("visit", format!("p{jp}"), terms, Sense::Eq, 1.0);
    }

    // Upper bound on total time: every stop left along its longest arc plus
    // the longest deadhead of every bus.
    let mut upper = 0.0;
    for &i in &stops {
        upper += t.dwell(i) + (0..n_l).map(|j| t.time(i, j)).fold(0.0, f64::max);
    }
    for &d in &problem.fleet {
        upper += (0..n_l).map(|j| t.time(b_depot(d), j)).fold(0.0, f64::max);
    }
    let bus_weight = 1.0 + upper;

    let mut objective: BTreeMap<usize, f64> = BTreeMap::new();
    for k in 0..n_b {
        for i in 0..n_l {
            for j in 0..n_l {
                // Arcs ruled out by mo4_022 are left out of the objective.
                if i == j || b.is_depot(j) || b.is_school(i) {
                    continue;
                }
                let mut c = b.arc_cost(i, j);
                if b.is_depot(i) && b.is_stop(j) {
                    c += bus_weight;
                }
                if c != 0.0 {
                    objective.insert(b.x(i, j, k), c);
                }
            }
        }
    }
    Ok(MilpModel {
        variables: b.variables,
        constraints: b.constraints,
        objective: objective.into_iter().collect(),
        bus_weight,
    })
}

fn b_depot(d: usize) -> usize {
    1 + d
}

/// Variable values encoding `plan`: arcs along each route, stop assignment,
/// visit order for the subtour potentials and the integer deviation level.
pub fn plan_values(
    model: &MilpModel,
    problem: &RoutingProblem,
    plan: &RoutePlan,
) -> Result<Vec<f64>, OverbookingError> {
    let mut values: Vec<f64> = model.variables.iter().map(|v| v.lower.max(0.0)).collect();
    let t = &problem.travel;
    let idx = |name: String| model.variable_index(&name).expect("variable exists");
    let label = |node: usize| -> String {
        if node == t.school_node() {
            String::from("s")
        } else if node <= problem.depots.len() {
            format!("d{}", node - 1)
        } else {
            format!("p{}", node - 1 - problem.depots.len())
        }
    };
    let mut var_of_bus = vec![0.0; problem.fleet.len()];
    for r in &plan.routes {
        let k = r.bus;
        let mut path = vec![t.depot_node(r.depot)];
        path.extend(r.stops.iter().map(|&s| t.stop_node(s)));
        path.push(t.school_node());
        for (pos, pair) in path.windows(2).enumerate() {
            values[idx(format!("x_{}_{}_b{k}", label(pair[0]), label(pair[1])))] = 1.0;
            values[idx(format!("u_{}_b{k}", label(pair[0])))] = (pos + 1) as f64;
        }
        values[idx(format!("u_s_b{k}"))] = path.len() as f64;
        for &s in &r.stops {
            values[idx(format!("w_b{k}_p{s}"))] = 1.0;
        }
        var_of_bus[k] = r.load.var;
    }
    for (k, &var) in var_of_bus.iter().enumerate() {
        let v = sigma_tilde(var, &problem.chance)?;
        values[idx(format!("zeta_b{k}_v{v}"))] = 1.0;
        values[idx(format!("sigma_b{k}"))] = v as f64;
    }
    Ok(values)
}
