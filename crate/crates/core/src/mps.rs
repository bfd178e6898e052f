//! MPS reader and writer.
//!
//! The reader accepts free format (whitespace-separated fields) and fixed
//! format (column positions). Integer markers, integer bound types and SOS
//! sections are rejected as unsupported.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::problem::LpProblem;
use crate::sparse::SparseMatrix;

/// Magnitudes at or above this are read as infinite.
pub const MPS_INFINITY: f64 = 1e30;

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unsupported feature: {feature}")]
    Unsupported { line: usize, feature: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MpsFormat {
    /// Fields separated by whitespace; names cannot contain spaces.
    #[default]
    Free,
    /// Fields at columns 2-3, 5-12, 15-22, 25-36, 40-47, 50-61.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    N,
    L,
    G,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Name,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
    End,
}

struct Row {
    kind: RowKind,
    rhs: f64,
    range: Option<f64>,
}

#[derive(Default)]
struct Builder {
    name: String,
    maximize: bool,
    objective_row: Option<String>,
    row_index: HashMap<String, usize>,
    rows: Vec<Row>,
    row_names: Vec<String>,
    col_index: HashMap<String, usize>,
    col_names: Vec<String>,
    objective: Vec<f64>,
    offset: f64,
    triplets: Vec<(usize, usize, f64)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs_set: Option<String>,
    range_set: Option<String>,
    bound_set: Option<String>,
}

enum RowRef {
    Objective,
    /// A secondary N row; its entries are dropped.
    Free,
    Constraint(usize),
}

fn parse_err(line: usize, message: impl Into<String>) -> MpsError {
    MpsError::Parse { line, message: message.into() }
}

fn number(line: usize, token: &str) -> Result<f64, MpsError> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(line, format!("invalid number '{token}'")))?;
    if v.is_nan() {
        return Err(parse_err(line, "NaN is not a valid value"));
    }
    Ok(if v >= MPS_INFINITY {
        f64::INFINITY
    } else if v <= -MPS_INFINITY {
        f64::NEG_INFINITY
    } else {
        v
    })
}

/// Splits a data line by fixed column positions.
fn fixed_fields(line: &str) -> Vec<String> {
    const SPANS: [(usize, usize); 6] = [(1, 3), (4, 12), (14, 22), (24, 36), (39, 47), (49, 61)];
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    for (a, b) in SPANS {
        if a >= chars.len() {
            out.push(String::new());
            continue;
        }
        let field: String = chars[a..b.min(chars.len())].iter().collect();
        out.push(field.trim().to_string());
    }
    // Drop trailing blanks but keep interior ones so positions stay meaningful.
    while out.last().is_some_and(String::is_empty) {
        out.pop();
    }
    out
}

impl Builder {
    fn row_ref(&self, line: usize, name: &str) -> Result<RowRef, MpsError> {
        if self.objective_row.as_deref() == Some(name) {
            return Ok(RowRef::Objective);
        }
        match self.row_index.get(name) {
            Some(&i) if self.rows[i].kind == RowKind::N => Ok(RowRef::Free),
            Some(&i) => Ok(RowRef::Constraint(i)),
            None => Err(parse_err(line, format!("unknown row '{name}'"))),
        }
    }

    fn column(&mut self, name: &str) -> usize {
        if let Some(&j) = self.col_index.get(name) {
            return j;
        }
        let j = self.col_names.len();
        self.col_index.insert(name.to_string(), j);
        self.col_names.push(name.to_string());
        self.objective.push(0.0);
        self.lower.push(0.0);
        self.upper.push(f64::INFINITY);
        j
    }

    fn existing_column(&self, line: usize, name: &str) -> Result<usize, MpsError> {
        self.col_index
            .get(name)
            .copied()
            .ok_or_else(|| parse_err(line, format!("unknown column '{name}'")))
    }

    /// Accepts `set` for the first set name seen; later sets are skipped.
    fn accept_set(slot: &mut Option<String>, set: &str) -> bool {
        match slot {
            Some(s) => s == set,
            None => {
                *slot = Some(set.to_string());
                true
            }
        }
    }

    fn rows_line(&mut self, line: usize, f: &[String]) -> Result<(), MpsError> {
        if f.len() < 2 {
            return Err(parse_err(line, "ROWS entry needs a type and a name"));
        }
        let kind = match f[0].to_ascii_uppercase().as_str() {
            "N" => RowKind::N,
            "L" => RowKind::L,
            "G" => RowKind::G,
            "E" => RowKind::E,
            other => return Err(parse_err(line, format!("unknown row type '{other}'"))),
        };
        let name = f[1].clone();
        if self.row_index.contains_key(&name) {
            return Err(parse_err(line, format!("duplicate row '{name}'")));
        }
        if kind == RowKind::N && self.objective_row.is_none() {
            self.objective_row = Some(name.clone());
        }
        self.row_index.insert(name.clone(), self.rows.len());
        self.rows.push(Row { kind, rhs: 0.0, range: None });
        self.row_names.push(name);
        Ok(())
    }

    fn columns_line(&mut self, line: usize, f: &[String]) -> Result<(), MpsError> {
        if f.iter().any(|t| t.eq_ignore_ascii_case("'MARKER'")) {
            let feature = f.iter().find(|t| t.starts_with('\'') && !t.eq_ignore_ascii_case("'MARKER'"));
            return Err(MpsError::Unsupported {
                line,
                feature: format!("integer marker {}", feature.map_or("", |s| s.as_str())),
            });
        }
        if f.len() != 3 && f.len() != 5 {
            return Err(parse_err(line, "COLUMNS entry needs a column and one or two (row, value) pairs"));
        }
        let j = self.column(&f[0]);
        for pair in f[1..].chunks(2) {
            let v = number(line, &pair[1])?;
            if !v.is_finite() {
                return Err(parse_err(line, "matrix coefficient must be finite"));
            }
            match self.row_ref(line, &pair[0])? {
                RowRef::Objective => self.objective[j] += v,
                RowRef::Free => {}
                RowRef::Constraint(i) => self.triplets.push((i, j, v)),
            }
        }
        Ok(())
    }

    /// RHS and RANGES share a layout: optional set name, then pairs.
    fn pairs<'a>(line: usize, f: &'a [String], what: &str) -> Result<(Option<&'a str>, &'a [String]), MpsError> {
        match f.len() {
            2 | 4 => Ok((None, f)),
            3 | 5 => Ok((Some(f[0].as_str()), &f[1..])),
            _ => Err(parse_err(line, format!("malformed {what} entry"))),
        }
    }

    fn rhs_line(&mut self, line: usize, f: &[String]) -> Result<(), MpsError> {
        let (set, pairs) = Self::pairs(line, f, "RHS")?;
        if !Self::accept_set(&mut self.rhs_set, set.unwrap_or("")) {
            return Ok(());
        }
        for pair in pairs.chunks(2) {
            let v = number(line, &pair[1])?;
            match self.row_ref(line, &pair[0])? {
                // The objective constant enters with the opposite sign.
                RowRef::Objective => self.offset = -v,
                RowRef::Free => {}
                RowRef::Constraint(i) => self.rows[i].rhs = v,
            }
        }
        Ok(())
    }

    fn ranges_line(&mut self, line: usize, f: &[String]) -> Result<(), MpsError> {
        let (set, pairs) = Self::pairs(line, f, "RANGES")?;
        if !Self::accept_set(&mut self.range_set, set.unwrap_or("")) {
            return Ok(());
        }
        for pair in pairs.chunks(2) {
            let v = number(line, &pair[1])?;
            match self.row_ref(line, &pair[0])? {
                RowRef::Constraint(i) => self.rows[i].range = Some(v),
                _ => return Err(parse_err(line, format!("RANGES on objective or free row '{}'", pair[0]))),
            }
        }
        Ok(())
    }

    fn bounds_line(&mut self, line: usize, f: &[String]) -> Result<(), MpsError> {
        if f.is_empty() {
            return Err(parse_err(line, "empty BOUNDS entry"));
        }
        let kind = f[0].to_ascii_uppercase();
        let needs_value = match kind.as_str() {
            "LO" | "UP" | "FX" => true,
            "FR" | "MI" | "PL" => false,
            "BV" | "LI" | "UI" | "SC" => {
                return Err(MpsError::Unsupported { line, feature: format!("bound type {kind}") })
            }
            other => return Err(parse_err(line, format!("unknown bound type '{other}'"))),
        };
        let expected = if needs_value { 3 } else { 2 };
        let (set, col, value) = if f.len() == expected + 1 {
            (f[1].as_str(), f[2].as_str(), f.get(3))
        } else if f.len() == expected {
            ("", f[1].as_str(), f.get(2))
        } else {
            return Err(parse_err(line, format!("malformed {kind} bound")));
        };
        if !Self::accept_set(&mut self.bound_set, set) {
            return Ok(());
        }
        let j = self.existing_column(line, col)?;
        let v = value.map(|t| number(line, t)).transpose()?;
        match kind.as_str() {
            "LO" => self.lower[j] = v.unwrap_or_default(),
            "UP" => {
                let v = v.unwrap_or_default();
                // Customary rule: a negative upper bound on a variable still
                // at its default lower bound makes it unbounded below.
                if v < 0.0 && self.lower[j] == 0.0 {
                    self.lower[j] = f64::NEG_INFINITY;
                }
                self.upper[j] = v;
            }
            "FX" => {
                let v = v.unwrap_or_default();
                self.lower[j] = v;
                self.upper[j] = v;
            }
            "FR" => {
                self.lower[j] = f64::NEG_INFINITY;
                self.upper[j] = f64::INFINITY;
            }
            "MI" => self.lower[j] = f64::NEG_INFINITY,
            "PL" => self.upper[j] = f64::INFINITY,
            _ => unreachable!(),
        }
        Ok(())
    }

    fn finish(self) -> Result<LpProblem, MpsError> {
        if self.objective_row.is_none() && !self.col_names.is_empty() {
            return Err(parse_err(0, "no objective (N) row"));
        }
        let slots: Vec<Option<usize>> = {
            let mut next = 0;
            self.rows
                .iter()
                .map(|r| {
                    (r.kind != RowKind::N).then(|| {
                        next += 1;
                        next - 1
                    })
                })
                .collect()
        };
        let m = slots.iter().flatten().count();
        let n = self.col_names.len();
        let mut con_lower = Vec::with_capacity(m);
        let mut con_upper = Vec::with_capacity(m);
        let mut con_names = Vec::with_capacity(m);
        for (row, name) in self.rows.iter().zip(&self.row_names) {
            let rhs = row.rhs;
            let (lo, hi) = match (row.kind, row.range) {
                (RowKind::N, _) => continue,
                (RowKind::L, None) => (f64::NEG_INFINITY, rhs),
                (RowKind::G, None) => (rhs, f64::INFINITY),
                (RowKind::E, None) => (rhs, rhs),
                (RowKind::L, Some(r)) => (rhs - r.abs(), rhs),
                (RowKind::G, Some(r)) => (rhs, rhs + r.abs()),
                (RowKind::E, Some(r)) if r >= 0.0 => (rhs, rhs + r),
                (RowKind::E, Some(r)) => (rhs + r, rhs),
            };
            con_lower.push(lo);
            con_upper.push(hi);
            con_names.push(name.clone());
        }
        let triplets: Vec<_> = self
            .triplets
            .iter()
            .map(|&(i, j, v)| (slots[i].expect("N rows never hold matrix entries"), j, v))
            .collect();
        let matrix = SparseMatrix::from_triplets(m, n, &triplets);
        let sign = if self.maximize { -1.0 } else { 1.0 };
        let mut lp = LpProblem::new(
            matrix,
            self.objective.iter().map(|c| sign * c).collect(),
            con_lower,
            con_upper,
            self.lower,
            self.upper,
        );
        lp.objective_offset = sign * self.offset;
        lp.maximize = self.maximize;
        lp.name = self.name;
        lp.var_names = self.col_names;
        lp.con_names = con_names;
        lp.validate().map_err(|v| parse_err(0, v.to_string()))?;
        Ok(lp)
    }
}

fn sense_token(line: usize, token: &str) -> Result<bool, MpsError> {
    match token.to_ascii_uppercase().as_str() {
        "MAX" | "MAXIMIZE" => Ok(true),
        "MIN" | "MINIMIZE" => Ok(false),
        other => Err(parse_err(line, format!("unknown objective sense '{other}'"))),
    }
}

/// Parses MPS text. Maximization problems come back with `c` negated and
/// `maximize` set.
pub fn parse_mps(text: &str, format: MpsFormat) -> Result<LpProblem, MpsError> {
    let mut b = Builder::default();
    let mut section = Section::None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim_end();
        if trimmed.trim().is_empty() || trimmed.starts_with('*') {
            continue;
        }
        let header = !trimmed.starts_with(' ') && !trimmed.starts_with('\t');
        if header {
            let mut words = trimmed.split_whitespace();
            let keyword = words.next().unwrap_or_default().to_ascii_uppercase();
            let rest: Vec<&str> = words.collect();
            section = match keyword.as_str() {
                "NAME" => {
                    b.name = rest.join(" ");
                    Section::Name
                }
                "OBJSENSE" => {
                    if let Some(tok) = rest.first() {
                        b.maximize = sense_token(line, tok)?;
                    }
                    Section::ObjSense
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "RANGES" => Section::Ranges,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::End,
                "SOS" => return Err(MpsError::Unsupported { line, feature: "SOS section".into() }),
                other => return Err(parse_err(line, format!("unknown section '{other}'"))),
            };
            if section == Section::End {
                break;
            }
            continue;
        }
        let fields: Vec<String> = match (format, section) {
            (MpsFormat::Fixed, Section::Rows | Section::Columns | Section::Rhs | Section::Ranges | Section::Bounds) => {
                fixed_fields(trimmed)
            }
            _ => trimmed.split_whitespace().map(str::to_string).collect(),
        };
        // Fixed format: COLUMNS, RHS and RANGES leave field 1 blank.
        let fields: Vec<String> = match (format, section) {
            (MpsFormat::Fixed, Section::Columns | Section::Rhs | Section::Ranges) => {
                let mut f = fields;
                if f.first().is_some_and(String::is_empty) {
                    f.remove(0);
                }
                f
            }
            _ => fields,
        };
        match section {
            Section::None => return Err(parse_err(line, "data before any section header")),
            Section::Name => return Err(parse_err(line, "unexpected data in NAME section")),
            Section::ObjSense => b.maximize = sense_token(line, &fields[0])?,
            Section::Rows => b.rows_line(line, &fields)?,
            Section::Columns => b.columns_line(line, &fields)?,
            Section::Rhs => b.rhs_line(line, &fields)?,
            Section::Ranges => b.ranges_line(line, &fields)?,
            Section::Bounds => b.bounds_line(line, &fields)?,
            Section::End => unreachable!(),
        }
    }
    b.finish()
}

pub fn read_mps(path: &Path, format: MpsFormat) -> Result<LpProblem, MpsError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| MpsError::Io { path: path.display().to_string(), source })?;
    parse_mps(&text, format)
}

fn fmt_value(v: f64) -> String {
    if v == f64::INFINITY {
        "1e30".into()
    } else if v == f64::NEG_INFINITY {
        "-1e30".into()
    } else {
        // Shortest representation that parses back to the same bits.
        format!("{v:?}")
    }
}

/// Writes `problem` in free format. A maximization problem is written with
/// its original (un-negated) objective and `OBJSENSE MAX`.
pub fn write_mps(problem: &LpProblem) -> String {
    let (m, n) = (problem.num_cons(), problem.num_vars());
    let row_name = |i: usize| problem.con_names.get(i).cloned().unwrap_or_else(|| format!("R{i}"));
    let col_name = |j: usize| problem.var_names.get(j).cloned().unwrap_or_else(|| format!("C{j}"));
    let sign = if problem.maximize { -1.0 } else { 1.0 };
    let mut out = String::new();
    let name = if problem.name.is_empty() { "LP" } else { problem.name.as_str() };
    let _ = writeln!(out, "NAME {name}");
    if problem.maximize {
        let _ = writeln!(out, "OBJSENSE\n    MAX");
    }
    let _ = writeln!(out, "ROWS\n N  OBJ");
    let mut kinds = Vec::with_capacity(m);
    for i in 0..m {
        let (lo, hi) = (problem.con_lower[i], problem.con_upper[i]);
        let kind = if lo == hi {
            'E'
        } else if lo.is_finite() {
            'G'
        } else {
            'L'
        };
        kinds.push(kind);
        let _ = writeln!(out, " {kind}  {}", row_name(i));
    }
    let _ = writeln!(out, "COLUMNS");
    let cols = problem.matrix.cols();
    for j in 0..n {
        let c = sign * problem.objective[j];
        if c != 0.0 {
            let _ = writeln!(out, "    {}  OBJ  {}", col_name(j), fmt_value(c));
        }
        for (i, v) in cols.row(j) {
            let _ = writeln!(out, "    {}  {}  {}", col_name(j), row_name(i), fmt_value(v));
        }
    }
    let _ = writeln!(out, "RHS");
    if problem.objective_offset != 0.0 {
        let _ = writeln!(out, "    RHS  OBJ  {}", fmt_value(-sign * problem.objective_offset));
    }
    let mut ranges = Vec::new();
    for i in 0..m {
        let (lo, hi) = (problem.con_lower[i], problem.con_upper[i]);
        let rhs = match kinds[i] {
            'E' | 'G' => lo,
            _ => hi,
        };
        if rhs != 0.0 {
            let _ = writeln!(out, "    RHS  {}  {}", row_name(i), fmt_value(rhs));
        }
        if kinds[i] == 'G' && hi.is_finite() {
            ranges.push((i, hi - lo));
        }
    }
    if !ranges.is_empty() {
        let _ = writeln!(out, "RANGES");
        for (i, r) in ranges {
            let _ = writeln!(out, "    RNG  {}  {}", row_name(i), fmt_value(r));
        }
    }
    let _ = writeln!(out, "BOUNDS");
    for j in 0..n {
        let (lo, hi) = (problem.var_lower[j], problem.var_upper[j]);
        let name = col_name(j);
        if lo == hi {
            let _ = writeln!(out, " FX BND  {name}  {}", fmt_value(lo));
            continue;
        }
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            let _ = writeln!(out, " FR BND  {name}");
            continue;
        }
        if lo == f64::NEG_INFINITY {
            let _ = writeln!(out, " MI BND  {name}");
        } else if lo != 0.0 {
            let _ = writeln!(out, " LO BND  {name}  {}", fmt_value(lo));
        }
        if hi.is_finite() {
            let _ = writeln!(out, " UP BND  {name}  {}", fmt_value(hi));
        }
    }
    let _ = writeln!(out, "ENDATA");
    out
}
