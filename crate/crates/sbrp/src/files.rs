//! JSON instance, allocation and plan files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sbrp_core::allocation::{check_allocation, Allocation, SolveMode};
use sbrp_core::instance::Matrices;
use sbrp_core::routing::{check_plan, RoutePlan, RoutingProblem};
use sbrp_core::{build_candidate_sets, walk_distance, Instance, Point, Site, Stop, Student};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Where an output came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteFile {
    id: u32,
    x: f64,
    y: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudentFile {
    id: u32,
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dist_school: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatricesFile {
    walk: Vec<Vec<f64>>,
    travel: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    school: SiteFile,
    depots: Vec<SiteFile>,
    students: Vec<StudentFile>,
    stops: Vec<SiteFile>,
    walk_limit: f64,
    stop_capacity: u32,
    #[serde(default)]
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrices: Option<MatricesFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::json(path, &e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn instance_to_json(instance: &Instance, provenance: Option<&Provenance>) -> String {
    let site = |s: &Site| SiteFile { id: s.id, x: s.x, y: s.y };
    let file = InstanceFile {
        school: site(&instance.school),
        depots: instance.depots.iter().map(site).collect(),
        students: instance
            .students
            .iter()
            .map(|s| StudentFile { id: s.id, x: s.x, y: s.y, dist_school: Some(s.dist_school) })
            .collect(),
        stops: instance.stops.iter().map(|s| SiteFile { id: s.id, x: s.x, y: s.y }).collect(),
        walk_limit: instance.walk_limit,
        stop_capacity: instance.stop_capacity,
        seed: instance.seed,
        matrices: instance
            .matrices
            .as_ref()
            .map(|m| MatricesFile { walk: m.walk.clone(), travel: m.travel.clone() }),
        provenance: provenance.cloned(),
    };
    to_json(&file)
}

/// Parses and validates an instance. Students without `dist_school` get
/// the straight-line distance to the school.
pub fn instance_from_json(path: &Path, text: &str) -> Result<(Instance, Option<Provenance>)> {
    let file: InstanceFile = parse(path, text)?;
    let school = Site::school(file.school.id, file.school.x, file.school.y);
    let instance = Instance {
        students: file
            .students
            .iter()
            .map(|s| Student {
                id: s.id,
                x: s.x,
                y: s.y,
                dist_school: s
                    .dist_school
                    .unwrap_or_else(|| walk_distance(Point::new(s.x, s.y), school.point())),
            })
            .collect(),
        stops: file.stops.iter().map(|s| Stop { id: s.id, x: s.x, y: s.y }).collect(),
        depots: file.depots.iter().map(|d| Site::depot(d.id, d.x, d.y)).collect(),
        school,
        walk_limit: file.walk_limit,
        stop_capacity: file.stop_capacity,
        seed: file.seed,
        matrices: file.matrices.map(|m| Matrices { walk: m.walk, travel: m.travel }),
    };
    let context = path.display().to_string();
    instance.validate().map_err(|e| Error::invalid(context.clone(), e))?;
    Ok((instance, file.provenance))
}

pub fn load_instance(path: &Path) -> Result<(Instance, Option<Provenance>)> {
    instance_from_json(path, &read(path)?)
}

pub fn save_instance(instance: &Instance, provenance: Option<&Provenance>, path: &Path) -> Result<()> {
    write_text(path, &instance_to_json(instance, provenance))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AllocationFile {
    open_stops: Vec<u32>,
    assignments: Vec<(u32, u32)>,
    open_count: usize,
    total_walk: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower_bound: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exact: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

pub fn allocation_to_json(instance: &Instance, alloc: &Allocation, provenance: Option<&Provenance>) -> String {
    let file = AllocationFile {
        open_stops: alloc.open_stops.iter().map(|&j| instance.stops[j].id).collect(),
        assignments: alloc
            .stop_of_student
            .iter()
            .enumerate()
            .map(|(i, &j)| (instance.students[i].id, instance.stops[j].id))
            .collect(),
        open_count: alloc.open_count,
        total_walk: alloc.total_walk,
        lower_bound: Some(alloc.lower_bound),
        exact: Some(alloc.mode == SolveMode::Exact),
        provenance: provenance.cloned(),
    };
    to_json(&file)
}

/// Parses an allocation for `instance` and checks every model constraint.
pub fn allocation_from_json(instance: &Instance, path: &Path, text: &str) -> Result<Allocation> {
    let file: AllocationFile = parse(path, text)?;
    let context = path.display().to_string();
    let student_pos: BTreeMap<u32, usize> =
        instance.students.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
    let stop_pos: BTreeMap<u32, usize> =
        instance.stops.iter().enumerate().map(|(j, s)| (s.id, j)).collect();
    let mut stop_of: Vec<Option<usize>> = vec![None; instance.students.len()];
    for &(student, stop) in &file.assignments {
        let i = *student_pos
            .get(&student)
            .ok_or_else(|| Error::invalid(context.clone(), format!("unknown student {student}")))?;
        let j = *stop_pos
            .get(&stop)
            .ok_or_else(|| Error::invalid(context.clone(), format!("unknown stop {stop}")))?;
        if stop_of[i].replace(j).is_some() {
            return Err(Error::invalid(context, format!("student {student} assigned twice")));
        }
    }
    let stop_of_student = stop_of
        .iter()
        .enumerate()
        .map(|(i, j)| {
            j.ok_or_else(|| {
                Error::invalid(context.clone(), format!("student {} unassigned", instance.students[i].id))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut open_stops = file
        .open_stops
        .iter()
        .map(|id| {
            stop_pos.get(id).copied().ok_or_else(|| Error::invalid(context.clone(), format!("unknown stop {id}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    open_stops.sort_unstable();
    let alloc = Allocation {
        stop_of_student,
        open_stops,
        total_walk: file.total_walk,
        open_count: file.open_count,
        mode: if file.exact == Some(true) { SolveMode::Exact } else { SolveMode::Heuristic },
        lower_bound: file.lower_bound.unwrap_or(0),
    };
    let cands = build_candidate_sets(instance).map_err(|e| Error::invalid(context.clone(), e))?;
    let broken = check_allocation(&alloc, &cands, instance.stop_capacity);
    if let Some(v) = broken.first() {
        return Err(Error::invalid(context, format!("allocation violates {}: {v:?}", v.name())));
    }
    Ok(alloc)
}

pub fn load_allocation(instance: &Instance, path: &Path) -> Result<Allocation> {
    allocation_from_json(instance, path, &read(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RouteFile {
    bus: usize,
    depot: u32,
    stops: Vec<u32>,
    duration: f64,
    ride_time: f64,
    load_mu: f64,
    load_var: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    routes: Vec<RouteFile>,
    bus_count: usize,
    total_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

/// Stops and depots are written by id.
pub fn plan_to_json(problem: &RoutingProblem, plan: &RoutePlan, provenance: Option<&Provenance>) -> String {
    let file = PlanFile {
        routes: plan
            .routes
            .iter()
            .map(|r| RouteFile {
                bus: r.bus,
                depot: problem.depots[r.depot].id,
                stops: r.stops.iter().map(|&s| problem.demands[s].stop).collect(),
                duration: r.duration,
                ride_time: r.ride_time,
                load_mu: r.load.mu,
                load_var: r.load.var,
            })
            .collect(),
        bus_count: plan.bus_count,
        total_time: plan.total_time,
        provenance: provenance.cloned(),
    };
    to_json(&file)
}

/// Parses a plan against `problem` and re-verifies every route.
pub fn plan_from_json(problem: &RoutingProblem, path: &Path, text: &str) -> Result<RoutePlan> {
    let file: PlanFile = parse(path, text)?;
    let context = path.display().to_string();
    let stop_pos: BTreeMap<u32, usize> =
        problem.demands.iter().enumerate().map(|(s, d)| (d.stop, s)).collect();
    let depot_pos: BTreeMap<u32, usize> =
        problem.depots.iter().enumerate().map(|(d, s)| (s.id, d)).collect();
    let mut routes = Vec::with_capacity(file.routes.len());
    for r in &file.routes {
        let depot = *depot_pos
            .get(&r.depot)
            .ok_or_else(|| Error::invalid(context.clone(), format!("unknown depot {}", r.depot)))?;
        let stops = r
            .stops
            .iter()
            .map(|id| {
                stop_pos
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::invalid(context.clone(), format!("stop {id} has no demand")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let mut route = problem.make_route(r.bus, depot, stops);
        route.duration = r.duration;
        route.ride_time = r.ride_time;
        route.load.mu = r.load_mu;
        route.load.var = r.load_var;
        routes.push(route);
    }
    let plan = RoutePlan { routes, bus_count: file.bus_count, total_time: file.total_time };
    let broken = check_plan(problem, &plan);
    if let Some(v) = broken.first() {
        return Err(Error::invalid(context, format!("plan violates {v:?}")));
    }
    Ok(plan)
}

pub fn load_plan(problem: &RoutingProblem, path: &Path) -> Result<RoutePlan> {
    plan_from_json(problem, path, &read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sbrp_core::{generate_synthetic, solve_allocation, SyntheticParams};

    #[test]
    fn instance_round_trip_is_exact() {
        let inst = generate_synthetic(&SyntheticParams::new(50, 2.0, 3.0, 9)).unwrap();
        let prov = Provenance { config_hash: "ab".into(), seed: 9 };
        let text = instance_to_json(&inst, Some(&prov));
        let (back, p) = instance_from_json(Path::new("x.json"), &text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(p, Some(prov));
        assert_eq!(instance_to_json(&back, p.as_ref()), text);
    }

    #[test]
    fn missing_school_distance_is_derived() {
        let text = r#"{"school":{"id":0,"x":0,"y":0},"depots":[{"id":1,"x":0,"y":0}],
            "students":[{"id":3,"x":3,"y":4}],"stops":[{"id":5,"x":3,"y":4.1}],
            "walk_limit":0.5,"stop_capacity":2}"#;
        let (inst, _) = instance_from_json(Path::new("t.json"), text).unwrap();
        assert_eq!(inst.students[0].dist_school, 5.0);
        assert_eq!(inst.seed, 0);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = instance_from_json(Path::new("bad.json"), "{\n  \"school\": 3,\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        let err = instance_from_json(Path::new("bad.json"), r#"{"school":{"id":0,"x":0,"y":0},"depots":[],"students":[],"stops":[],"walk_limit":1,"stop_capacity":1}"#)
            .unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn allocation_round_trip_and_tamper_detection() {
        let inst = generate_synthetic(&SyntheticParams::new(60, 1.0, 1.0, 2)).unwrap();
        let cands = build_candidate_sets(&inst).unwrap();
        let alloc = solve_allocation(&cands, inst.stop_capacity).unwrap();
        let text = allocation_to_json(&inst, &alloc, None);
        let back = allocation_from_json(&inst, Path::new("a.json"), &text).unwrap();
        assert_eq!(back, alloc);
        let tampered = text.replacen("\"open_count\": ", "\"open_count\": 1", 1);
        assert!(allocation_from_json(&inst, Path::new("a.json"), &tampered).is_err());
    }
}
