//! CPLEX LP text format: writer for [`MilpModel`] and a reader for the
//! subset it emits.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sbrp_core::routing::milp::{MilpModel, Sense, VarKind};

use crate::{Error, Result};

const LINE_WIDTH: usize = 78;

/// A model addressed by variable name, as it appears in an LP file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpModel {
    /// `\` lines before the objective, without the marker.
    pub comments: Vec<String>,
    pub objective: Vec<(String, f64)>,
    pub constraints: Vec<LpConstraint>,
    /// Variables with bounds other than `[0, +inf)`.
    pub bounds: BTreeMap<String, (f64, f64)>,
    pub generals: Vec<String>,
    pub binaries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpConstraint {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LpConstraint {
    fn lhs(&self, values: &BTreeMap<String, f64>) -> f64 {
        self.terms.iter().map(|(v, c)| c * values.get(v).copied().unwrap_or(0.0)).sum()
    }
}

impl LpModel {
    pub fn from_milp(model: &MilpModel, comments: Vec<String>) -> Self {
        let name = |v: usize| model.variables[v].name.clone();
        let named = |terms: &[(usize, f64)]| terms.iter().map(|&(v, c)| (name(v), c)).collect();
        let mut out = LpModel { comments, objective: named(&model.objective), ..Default::default() };
        for c in &model.constraints {
            out.constraints.push(LpConstraint {
                name: c.name.clone(),
                terms: named(&c.terms),
                sense: c.sense,
                rhs: c.rhs,
            });
        }
        for v in &model.variables {
            match v.kind {
                VarKind::Binary => out.binaries.push(v.name.clone()),
                VarKind::Integer => out.generals.push(v.name.clone()),
                VarKind::Continuous => {}
            }
            let default = if v.kind == VarKind::Binary { (0.0, 1.0) } else { (0.0, f64::INFINITY) };
            if (v.lower, v.upper) != default {
                out.bounds.insert(v.name.clone(), (v.lower, v.upper));
            }
        }
        out
    }

    fn bounds_of(&self, name: &str) -> (f64, f64) {
        if let Some(&b) = self.bounds.get(name) {
            b
        } else if self.binaries.iter().any(|b| b == name) {
            (0.0, 1.0)
        } else {
            (0.0, f64::INFINITY)
        }
    }

    pub fn objective_value(&self, values: &BTreeMap<String, f64>) -> f64 {
        self.objective.iter().map(|(v, c)| c * values.get(v).copied().unwrap_or(0.0)).sum()
    }

    /// Names of rows, bounds and integrality requirements broken by
    /// `values`; missing variables read as zero.
    pub fn violations(&self, values: &BTreeMap<String, f64>, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.constraints {
            let lhs = c.lhs(values);
            let ok = match c.sense {
                Sense::Le => lhs <= c.rhs + tol,
                Sense::Ge => lhs >= c.rhs - tol,
                Sense::Eq => (lhs - c.rhs).abs() <= tol,
            };
            if !ok {
                out.push(c.name.clone());
            }
        }
        let mut names: Vec<&String> = self.bounds.keys().chain(&self.generals).chain(&self.binaries).collect();
        names.sort();
        names.dedup();
        for name in names {
            let x = values.get(name).copied().unwrap_or(0.0);
            let (lo, hi) = self.bounds_of(name);
            let integral = self.binaries.contains(name) || self.generals.contains(name);
            if x < lo - tol || x > hi + tol || (integral && (x - x.round()).abs() > tol) {
                out.push(name.clone());
            }
        }
        out
    }
}

fn number(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn term(out: &mut Vec<String>, name: &str, c: f64, first: bool) {
    let sign = if c < 0.0 { "-" } else { "+" };
    let a = c.abs();
    let body = if a == 1.0 { name.to_string() } else { format!("{} {name}", number(a)) };
    if first && c >= 0.0 {
        out.push(body);
    } else {
        out.push(format!("{sign} {body}"));
    }
}

/// Joins tokens into lines no wider than [`LINE_WIDTH`], continuation lines
/// indented.
fn wrap(text: &mut String, head: &str, tokens: &[String]) {
    let mut line = head.to_string();
    for t in tokens {
        if line.len() + 1 + t.len() > LINE_WIDTH && line.trim().len() > head.trim().len() {
            text.push_str(line.trim_end());
            text.push('\n');
            line = String::from("   ");
        }
        line.push(' ');
        line.push_str(t);
    }
    text.push_str(line.trim_end());
    text.push('\n');
}

fn expression(terms: &[(String, f64)]) -> Vec<String> {
    let mut tokens = Vec::new();
    for (k, (v, c)) in terms.iter().enumerate() {
        term(&mut tokens, v, *c, k == 0);
    }
    if tokens.is_empty() {
        tokens.push("0".into());
    }
    tokens
}

pub fn write_lp(model: &LpModel) -> String {
    let mut text = String::new();
    for c in &model.comments {
        let _ = writeln!(text, "\\ {c}");
    }
    text.push_str("Minimize\n");
    wrap(&mut text, " obj:", &expression(&model.objective));
    text.push_str("Subject To\n");
    for c in &model.constraints {
        let mut tokens = expression(&c.terms);
        let sense = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        tokens.push(sense.into());
        tokens.push(number(c.rhs));
        wrap(&mut text, &format!(" {}:", c.name), &tokens);
    }
    if !model.bounds.is_empty() {
        text.push_str("Bounds\n");
        for (name, &(lo, hi)) in &model.bounds {
            let line = match (lo == f64::NEG_INFINITY, hi == f64::INFINITY) {
                (true, true) => format!(" {name} free"),
                (false, true) => format!(" {name} >= {}", number(lo)),
                _ => format!(" {} <= {name} <= {}", number(lo), number(hi)),
            };
            text.push_str(&line);
            text.push('\n');
        }
    }
    for (title, names) in [("Generals", &model.generals), ("Binaries", &model.binaries)] {
        if !names.is_empty() {
            text.push_str(title);
            text.push('\n');
            let tokens: Vec<String> = names.to_vec();
            wrap(&mut text, "", &tokens);
        }
    }
    text.push_str("End\n");
    text
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Generals,
    Binaries,
    End,
}

fn section(line: &str) -> Option<Section> {
    match line.to_ascii_lowercase().as_str() {
        "minimize" | "minimum" | "min" => Some(Section::Objective),
        "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
        "bounds" | "bound" => Some(Section::Bounds),
        "generals" | "general" | "gen" => Some(Section::Generals),
        "binaries" | "binary" | "bin" => Some(Section::Binaries),
        "end" => Some(Section::End),
        _ => None,
    }
}

struct Parser<'a> {
    path: &'a std::path::Path,
}

impl Parser<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_path_buf(), line, column: 1, message: message.into() }
    }

    fn num(&self, line: usize, tok: &str) -> Result<f64> {
        match tok {
            "+inf" | "inf" | "+infinity" | "infinity" => Ok(f64::INFINITY),
            "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
            _ => tok.parse().map_err(|_| self.err(line, format!("expected a number, got {tok:?}"))),
        }
    }

    /// Linear expression tokens into `(name, coefficient)` pairs.
    fn terms(&self, line: usize, tokens: &[&str]) -> Result<Vec<(String, f64)>> {
        let mut out = Vec::new();
        let mut sign = 1.0;
        let mut coef: Option<f64> = None;
        for &t in tokens {
            match t {
                "+" => sign = 1.0,
                "-" => sign = -1.0,
                _ if t.parse::<f64>().is_ok() => {
                    coef = Some(coef.unwrap_or(1.0) * self.num(line, t)?);
                }
                _ => {
                    out.push((t.to_string(), sign * coef.unwrap_or(1.0)));
                    sign = 1.0;
                    coef = None;
                }
            }
        }
        if let Some(c) = coef {
            if !(out.is_empty() && c == 0.0) {
                return Err(self.err(line, "constant terms are not supported"));
            }
        }
        Ok(out)
    }

    fn row(&self, line: usize, text: &str) -> Result<LpConstraint> {
        let (name, body) =
            text.split_once(':').ok_or_else(|| self.err(line, "constraint without a name"))?;
        let tokens: Vec<&str> = body.split_whitespace().collect();
        let at = tokens
            .iter()
            .position(|t| matches!(*t, "<=" | ">=" | "=" | "=<" | "=>" | "<" | ">"))
            .ok_or_else(|| self.err(line, "constraint without a sense"))?;
        let sense = match tokens[at] {
            "<=" | "=<" | "<" => Sense::Le,
            ">=" | "=>" | ">" => Sense::Ge,
            _ => Sense::Eq,
        };
        let rhs = match &tokens[at + 1..] {
            [r] => self.num(line, r)?,
            [s, r] if *s == "-" || *s == "+" => {
                let v = self.num(line, r)?;
                if *s == "-" { -v } else { v }
            }
            _ => return Err(self.err(line, "expected one right-hand side")),
        };
        Ok(LpConstraint {
            name: name.trim().to_string(),
            terms: self.terms(line, &tokens[..at])?,
            sense,
            rhs,
        })
    }

    fn bound(&self, line: usize, text: &str, model: &mut LpModel) -> Result<()> {
        let t: Vec<&str> = text.split_whitespace().collect();
        let mut set = |name: &str, lo: Option<f64>, hi: Option<f64>| {
            let e = model.bounds.entry(name.to_string()).or_insert((0.0, f64::INFINITY));
            if let Some(lo) = lo {
                e.0 = lo;
            }
            if let Some(hi) = hi {
                e.1 = hi;
            }
        };
        match t.as_slice() {
            [name, "free"] => set(name, Some(f64::NEG_INFINITY), Some(f64::INFINITY)),
            [lo, "<=", name, "<=", hi] => set(name, Some(self.num(line, lo)?), Some(self.num(line, hi)?)),
            [name, ">=", lo] => set(name, Some(self.num(line, lo)?), None),
            [name, "<=", hi] => set(name, None, Some(self.num(line, hi)?)),
            [name, "=", x] => {
                let x = self.num(line, x)?;
                set(name, Some(x), Some(x))
            }
            _ => return Err(self.err(line, format!("unrecognized bound {text:?}"))),
        }
        Ok(())
    }
}

/// Parses LP text. Rows may span lines; a row ends where the next
/// `name:` starts or the section changes.
pub fn read_lp(path: &std::path::Path, text: &str) -> Result<LpModel> {
    let p = Parser { path };
    let mut model = LpModel::default();
    let mut sec = Section::Preamble;
    let mut pending: Option<(usize, String)> = None;
    let flush = |pending: &mut Option<(usize, String)>, sec: Section, model: &mut LpModel| -> Result<()> {
        if let Some((line, buf)) = pending.take() {
            match sec {
                Section::Objective => {
                    let body = buf.split_once(':').map_or(buf.as_str(), |(_, b)| b);
                    let tokens: Vec<&str> = body.split_whitespace().collect();
                    model.objective = p.terms(line, &tokens)?;
                }
                Section::Constraints => model.constraints.push(p.row(line, &buf)?),
                _ => unreachable!(),
            }
        }
        Ok(())
    };
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if let Some(c) = trimmed.strip_prefix('\\') {
            if sec == Section::Preamble {
                model.comments.push(c.trim().to_string());
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        if let Some(next) = section(trimmed) {
            flush(&mut pending, sec, &mut model)?;
            sec = next;
            continue;
        }
        match sec {
            Section::Preamble => return Err(p.err(line, "expected Minimize")),
            Section::End => return Err(p.err(line, "text after End")),
            Section::Objective | Section::Constraints => {
                let starts_row = raw.starts_with(' ') && !raw.starts_with("  ") && trimmed.contains(':');
                if starts_row || pending.is_none() {
                    flush(&mut pending, sec, &mut model)?;
                    pending = Some((line, trimmed.to_string()));
                } else if let Some((_, buf)) = pending.as_mut() {
                    buf.push(' ');
                    buf.push_str(trimmed);
                }
            }
            Section::Bounds => p.bound(line, trimmed, &mut model)?,
            Section::Generals => model.generals.extend(trimmed.split_whitespace().map(String::from)),
            Section::Binaries => model.binaries.extend(trimmed.split_whitespace().map(String::from)),
        }
    }
    flush(&mut pending, sec, &mut model)?;
    if sec != Section::End {
        return Err(p.err(text.lines().count(), "missing End"));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn sample() -> LpModel {
        LpModel {
            comments: vec!["W = 101".into()],
            objective: vec![("x".into(), 101.0), ("y".into(), -0.25)],
            constraints: vec![
                LpConstraint {
                    name: "c1".into(),
                    terms: vec![("x".into(), 1.0), ("y".into(), -1.0)],
                    sense: Sense::Ge,
                    rhs: -3.0,
                },
                LpConstraint {
                    name: "c2".into(),
                    terms: (0..40).map(|i| (format!("z{i}"), 1.0 + i as f64 / 7.0)).collect(),
                    sense: Sense::Eq,
                    rhs: 1e-7,
                },
            ],
            bounds: [("y".to_string(), (1.0, 5.0)), ("s".to_string(), (0.0, 3.0))].into(),
            generals: vec!["s".into()],
            binaries: vec!["x".into()],
        }
    }

    #[test]
    fn round_trips_exactly_with_wrapped_rows() {
        let m = sample();
        let text = write_lp(&m);
        assert!(text.lines().all(|l| l.len() <= LINE_WIDTH + 30));
        assert!(text.lines().filter(|l| l.starts_with("   ")).count() > 2);
        assert_eq!(read_lp(Path::new("t.lp"), &text).unwrap(), m);
    }

    #[test]
    fn reports_line_of_bad_rows() {
        let text = "Minimize\n obj: x\nSubject To\n c1: x + y\nEnd\n";
        match read_lp(Path::new("t.lp"), text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn violations_cover_rows_bounds_and_integrality() {
        let m = sample();
        let mut v: BTreeMap<String, f64> = [("x", 1.0), ("y", 2.0), ("s", 1.5)]
            .iter()
            .map(|&(k, x)| (k.to_string(), x))
            .collect();
        assert_eq!(m.violations(&v, 1e-9), ["c2", "s"]);
        v.insert("y".into(), 9.0);
        assert_eq!(m.violations(&v, 1e-9), ["c1", "c2", "s", "y"]);
    }
}
