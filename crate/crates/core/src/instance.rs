//! Geometry and demographics of a single-school instance.
//!
//! An [`Instance`] holds the school, the bus depots, the students and the
//! potential stops together with the district walking policy (maximum walk
//! distance and maximum students per stop). Distances are planar Euclidean
//! miles unless the instance carries explicit matrices.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Euclidean walking distance in miles.
#[inline]
pub fn walk_distance(a: Point, b: Point) -> f64 {
    math::hypot(a.x - b.x, a.y - b.y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Student {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    /// Distance from the student's home to the school, in miles.
    pub dist_school: f64,
}

impl Student {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

impl Stop {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    School,
    Depot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub kind: SiteKind,
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

impl Site {
    pub fn school(id: u32, x: f64, y: f64) -> Self {
        Self { kind: SiteKind::School, id, x, y }
    }

    pub fn depot(id: u32, x: f64, y: f64) -> Self {
        Self { kind: SiteKind::Depot, id, x, y }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Explicit distance data for instances built from real road networks.
///
/// `walk[i][j]` is the walking distance in miles from student `i` to stop `j`
/// (both by position). `travel` is a square matrix of expected bus travel
/// times in minutes over the locations `[school, depots.., stops..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrices {
    pub walk: Vec<Vec<f64>>,
    pub travel: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceError {
    NonPositiveWalkLimit(f64),
    ZeroStopCapacity,
    NotASchool,
    NotADepot(u32),
    NoDepot,
    NoStudents,
    DuplicateStudentId(u32),
    DuplicateStopId(u32),
    DuplicateDepotId(u32),
    NegativeSchoolDistance(u32),
    NonFiniteCoordinate,
    MatrixShape { matrix: &'static str, expected: (usize, usize) },
    StudentUnreachable(u32),
    InvalidSynthetic(&'static str),
}

impl fmt::Display for InstanceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonPositiveWalkLimit(v) => write!(f, "walk_limit must be positive, got {v}"),
            Self::ZeroStopCapacity => f.write_str("stop_capacity must be at least 1"),
            Self::NotASchool => f.write_str("school site must have kind `school`"),
            Self::NotADepot(id) => write!(f, "depot {id} must have kind `depot`"),
            Self::NoDepot => f.write_str("instance needs at least one depot"),
            Self::NoStudents => f.write_str("instance has no students"),
            Self::DuplicateStudentId(id) => write!(f, "duplicate student id {id}"),
            Self::DuplicateStopId(id) => write!(f, "duplicate stop id {id}"),
            Self::DuplicateDepotId(id) => write!(f, "duplicate depot id {id}"),
            Self::NegativeSchoolDistance(id) => {
                write!(f, "student {id} has a negative school distance")
            }
            Self::NonFiniteCoordinate => f.write_str("coordinates must be finite"),
            Self::MatrixShape { matrix, expected } => write!(
                f,
                "{matrix} matrix must be {}x{}",
                expected.0, expected.1
            ),
            Self::StudentUnreachable(id) => {
                write!(f, "student {id} has no stop within the walk limit")
            }
            Self::InvalidSynthetic(why) => write!(f, "invalid synthetic parameters: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub students: Vec<Student>,
    pub stops: Vec<Stop>,
    pub school: Site,
    pub depots: Vec<Site>,
    /// Maximum walking distance from home to the assigned stop, in miles.
    pub walk_limit: f64,
    /// Maximum number of students assigned to one stop.
    pub stop_capacity: u32,
    pub seed: u64,
    pub matrices: Option<Matrices>,
}

impl Instance {
    /// Structural validation. Reachability of every student is checked by
    /// [`build_candidate_sets`].
    pub fn validate(&self) -> Result<(), InstanceError> {
        if !(self.walk_limit > 0.0) || !self.walk_limit.is_finite() {
            return Err(InstanceError::NonPositiveWalkLimit(self.walk_limit));
        }
        if self.stop_capacity == 0 {
            return Err(InstanceError::ZeroStopCapacity);
        }
        if self.school.kind != SiteKind::School {
            return Err(InstanceError::NotASchool);
        }
        if self.depots.is_empty() {
            return Err(InstanceError::NoDepot);
        }
        if self.students.is_empty() {
            return Err(InstanceError::NoStudents);
        }
        let finite = |x: f64, y: f64| x.is_finite() && y.is_finite();
        if !finite(self.school.x, self.school.y) {
            return Err(InstanceError::NonFiniteCoordinate);
        }
        let mut seen = BTreeSet::new();
        for d in &self.depots {
            if d.kind != SiteKind::Depot {
                return Err(InstanceError::NotADepot(d.id));
            }
            if !finite(d.x, d.y) {
                return Err(InstanceError::NonFiniteCoordinate);
            }
            if !seen.insert(d.id) {
                return Err(InstanceError::DuplicateDepotId(d.id));
            }
        }
        seen.clear();
        for s in &self.students {
            if !finite(s.x, s.y) || !s.dist_school.is_finite() {
                return Err(InstanceError::NonFiniteCoordinate);
            }
            if s.dist_school < 0.0 {
                return Err(InstanceError::NegativeSchoolDistance(s.id));
            }
            if !seen.insert(s.id) {
                return Err(InstanceError::DuplicateStudentId(s.id));
            }
        }
        seen.clear();
        for s in &self.stops {
            if !finite(s.x, s.y) {
                return Err(InstanceError::NonFiniteCoordinate);
            }
            if !seen.insert(s.id) {
                return Err(InstanceError::DuplicateStopId(s.id));
            }
        }
        if let Some(m) = &self.matrices {
            let (n, p) = (self.students.len(), self.stops.len());
            if m.walk.len() != n || m.walk.iter().any(|r| r.len() != p) {
                return Err(InstanceError::MatrixShape { matrix: "walk", expected: (n, p) });
            }
            let l = self.location_count();
            if m.travel.len() != l || m.travel.iter().any(|r| r.len() != l) {
                return Err(InstanceError::MatrixShape { matrix: "travel", expected: (l, l) });
            }
        }
        Ok(())
    }

    /// Number of routing locations: school, depots and stops.
    pub fn location_count(&self) -> usize {
        1 + self.depots.len() + self.stops.len()
    }

    /// Walking distance from student `i` to stop `j` (positions, not ids).
    pub fn walk(&self, i: usize, j: usize) -> f64 {
        match &self.matrices {
            Some(m) => m.walk[i][j],
            None => walk_distance(self.students[i].point(), self.stops[j].point()),
        }
    }

    /// Copy of the instance restricted to the students for which `keep`
    /// returns true. Explicit walk matrix rows follow their students.
    pub fn retain_students(&self, mut keep: impl FnMut(&Student) -> bool) -> Instance {
        let mask: Vec<bool> = self.students.iter().map(&mut keep).collect();
        let students = self
            .students
            .iter()
            .zip(&mask)
            .filter(|(_, k)| **k)
            .map(|(s, _)| s.clone())
            .collect();
        let matrices = self.matrices.as_ref().map(|m| Matrices {
            walk: m
                .walk
                .iter()
                .zip(&mask)
                .filter(|(_, k)| **k)
                .map(|(r, _)| r.clone())
                .collect(),
            travel: m.travel.clone(),
        });
        Instance {
            students,
            stops: self.stops.clone(),
            school: self.school.clone(),
            depots: self.depots.clone(),
            walk_limit: self.walk_limit,
            stop_capacity: self.stop_capacity,
            seed: self.seed,
            matrices,
        }
    }
}

/// Reachability between students and stops under the walk limit.
///
/// All indices are positions in the originating instance; `student_ids` and
/// `stop_ids` map them back to ids for reporting. `walk_of_student[i][k]` is
/// the walking distance to stop `stops_of_student[i][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSets {
    pub student_ids: Vec<u32>,
    pub stop_ids: Vec<u32>,
    pub stops_of_student: Vec<Vec<usize>>,
    pub walk_of_student: Vec<Vec<f64>>,
    pub students_of_stop: Vec<Vec<usize>>,
}

impl CandidateSets {
    /// Builds the sets from explicit `(student, stop, walk)` arcs. Arcs may
    /// come in any order; each pair must appear at most once.
    pub fn from_arcs(
        student_ids: Vec<u32>,
        stop_ids: Vec<u32>,
        arcs: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let n = student_ids.len();
        let m = stop_ids.len();
        let mut per_student: Vec<Vec<(usize, f64)>> = alloc::vec![Vec::new(); n];
        for (i, j, d) in arcs {
            per_student[i].push((j, d));
        }
        let mut stops_of_student = Vec::with_capacity(n);
        let mut walk_of_student = Vec::with_capacity(n);
        let mut students_of_stop = alloc::vec![Vec::new(); m];
        for (i, mut arcs) in per_student.into_iter().enumerate() {
            arcs.sort_by_key(|a| a.0);
            arcs.dedup_by_key(|a| a.0);
            for &(j, _) in &arcs {
                students_of_stop[j].push(i);
            }
            stops_of_student.push(arcs.iter().map(|a| a.0).collect());
            walk_of_student.push(arcs.iter().map(|a| a.1).collect());
        }
        Self { student_ids, stop_ids, stops_of_student, walk_of_student, students_of_stop }
    }

    pub fn n_students(&self) -> usize {
        self.stops_of_student.len()
    }

    pub fn n_stops(&self) -> usize {
        self.students_of_stop.len()
    }

    /// Walking distance from student `i` to stop `j`, if `j` is in reach.
    pub fn walk(&self, i: usize, j: usize) -> Option<f64> {
        let stops = &self.stops_of_student[i];
        stops.binary_search(&j).ok().map(|k| self.walk_of_student[i][k])
    }

    /// First student with no stop in reach.
    pub fn first_unreachable(&self) -> Option<usize> {
        self.stops_of_student.iter().position(|s| s.is_empty())
    }
}

/// Threshold scan of every student-stop pair against the walk limit.
pub fn build_candidate_sets(instance: &Instance) -> Result<CandidateSets, InstanceError> {
    let delta = instance.walk_limit;
    let mut arcs = Vec::new();
    for i in 0..instance.students.len() {
        for j in 0..instance.stops.len() {
            let d = instance.walk(i, j);
            if d <= delta {
                arcs.push((i, j, d));
            }
        }
    }
    let sets = CandidateSets::from_arcs(
        instance.students.iter().map(|s| s.id).collect(),
        instance.stops.iter().map(|s| s.id).collect(),
        arcs,
    );
    match sets.first_unreachable() {
        Some(i) => Err(InstanceError::StudentUnreachable(sets.student_ids[i])),
        None => Ok(sets),
    }
}

/// Parameters for a synthetic single-school instance on a square.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Side of the square area in miles.
    pub side: f64,
    pub seed: u64,
    pub walk_limit: f64,
    pub stop_capacity: u32,
    /// Grid spacing of the candidate stops. Defaults to `walk_limit / sqrt(2)`.
    pub stop_spacing: Option<f64>,
}

impl SyntheticParams {
    pub fn new(n: usize, alpha: f64, beta: f64, seed: u64) -> Self {
        Self {
            n,
            alpha,
            beta,
            side: 3.0,
            seed,
            walk_limit: 0.25,
            stop_capacity: 15,
            stop_spacing: None,
        }
    }
}

/// Students with independent `side * Beta(alpha, beta)` coordinates, the
/// school at the center of the square with one depot next to it, and a
/// regular grid of candidate stops covering the square.
pub fn generate_synthetic(params: &SyntheticParams) -> Result<Instance, InstanceError> {
    if params.n == 0 {
        return Err(InstanceError::InvalidSynthetic("n must be at least 1"));
    }
    if !(params.alpha > 0.0 && params.beta > 0.0) {
        return Err(InstanceError::InvalidSynthetic("beta shapes must be positive"));
    }
    if !(params.side > 0.0) || !params.side.is_finite() {
        return Err(InstanceError::InvalidSynthetic("side must be positive"));
    }
    if !(params.walk_limit > 0.0) {
        return Err(InstanceError::NonPositiveWalkLimit(params.walk_limit));
    }
    let spacing = params.stop_spacing.unwrap_or(params.walk_limit / core::f64::consts::SQRT_2);
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(InstanceError::InvalidSynthetic("stop spacing must be positive"));
    }
    let beta = Beta::new(params.alpha, params.beta)
        .map_err(|_| InstanceError::InvalidSynthetic("beta shapes must be positive"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let side = params.side;
    let center = side / 2.0;
    let school = Site::school(0, center, center);
    let depots = alloc::vec![Site::depot(0, center, center)];

    let students = (0..params.n)
        .map(|i| {
            let x = (side * beta.sample(&mut rng)).clamp(0.0, side);
            let y = (side * beta.sample(&mut rng)).clamp(0.0, side);
            Student {
                id: i as u32,
                x,
                y,
                dist_school: walk_distance(Point::new(x, y), school.point()),
            }
        })
        .collect();

    let cells = math::ceil(side / spacing).max(1.0) as usize;
    let step = side / cells as f64;
    let mut stops = Vec::with_capacity((cells + 1) * (cells + 1));
    for r in 0..=cells {
        for c in 0..=cells {
            stops.push(Stop {
                id: stops.len() as u32,
                x: c as f64 * step,
                y: r as f64 * step,
            });
        }
    }

    let instance = Instance {
        students,
        stops,
        school,
        depots,
        walk_limit: params.walk_limit,
        stop_capacity: params.stop_capacity,
        seed: params.seed,
        matrices: None,
    };
    instance.validate()?;
    Ok(instance)
}
