//! JSON solution documents.
//!
//! Numbers are written with 17 significant digits so every finite value
//! reads back to the same bits. Non-finite values are written as `null`.

use std::path::Path;
use std::str::FromStr;

use serde_json::{json, Map, Number, Value};
use thiserror::Error;

use crate::convergence::{ResidualSummary, SolveStatus};
use crate::solver::{SolveResult, SolveStatistics};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid solution document: {0}")]
    Schema(String),
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        Value::Number(Number::from_str(&format!("{v:.16e}")).expect("formatted float is valid JSON"))
    } else {
        Value::Null
    }
}

fn array(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

fn residuals_json(s: &ResidualSummary) -> Value {
    json!({
        "primal_inf_norm": num(s.primal_inf_norm),
        "dual_inf_norm": num(s.dual_inf_norm),
        "primal_objective": num(s.primal_objective),
        "dual_objective": num(s.dual_objective),
        "abs_gap": num(s.abs_gap),
        "rel_gap": num(s.rel_gap),
    })
}

fn statistics_json(s: &SolveStatistics) -> Value {
    json!({
        "iterations_total": s.iterations_total,
        "iterations_main": s.iterations_main,
        "iterations_polish": s.iterations_polish,
        "restarts": s.restarts,
        "restarts_sufficient": s.restarts_sufficient,
        "restarts_necessary": s.restarts_necessary,
        "restarts_artificial": s.restarts_artificial,
        "accepted_steps": s.accepted_steps,
        "step_retries": s.step_retries,
        "step_inequality_violations": s.step_inequality_violations,
        "min_eta_bar": num(s.min_eta_bar),
        "min_eta_bar_polish": num(s.min_eta_bar_polish),
        "polish_attempts": s.polish_attempts,
        "polish_successes": s.polish_successes,
        "final_primal_weight": num(s.final_primal_weight),
        "final_step_size": num(s.final_step_size),
        "time_scaling": num(s.time_scaling),
        "time_main": num(s.time_main),
        "time_polish": num(s.time_polish),
        "wall_time": num(s.wall_time),
    })
}

/// Builds the solution document. `x`, `y`, `r` and certificate rays are
/// included only when `include_arrays` is set.
pub fn solution_json(result: &SolveResult, problem_name: &str, include_arrays: bool) -> Value {
    let (primal, dual) = result.reported_objectives();
    let mut doc = Map::new();
    doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
    doc.insert("problem".into(), json!(problem_name));
    doc.insert("status".into(), json!(result.status.as_str()));
    doc.insert("maximize".into(), json!(result.maximize));
    doc.insert("objective".into(), json!({ "primal": num(primal), "dual": num(dual) }));
    doc.insert("residuals".into(), residuals_json(&result.residuals));
    doc.insert("statistics".into(), statistics_json(&result.statistics));
    let certificate = match &result.certificate {
        None => Value::Null,
        Some(c) => {
            let mut m = Map::new();
            m.insert("kind".into(), json!(c.kind.as_str()));
            m.insert("source".into(), json!(c.source.as_str()));
            m.insert("residual".into(), num(c.residual));
            m.insert("objective".into(), num(c.objective));
            if include_arrays {
                m.insert("x".into(), array(&c.x));
                m.insert("y".into(), array(&c.y));
                m.insert("r".into(), array(&c.r));
            }
            Value::Object(m)
        }
    };
    doc.insert("certificate".into(), certificate);
    if include_arrays {
        doc.insert(
            "solution".into(),
            json!({ "x": array(&result.x), "y": array(&result.y), "r": array(&result.r) }),
        );
    }
    Value::Object(doc)
}

pub fn solution_string(result: &SolveResult, problem_name: &str, include_arrays: bool) -> String {
    let mut s = serde_json::to_string_pretty(&solution_json(result, problem_name, include_arrays))
        .expect("a JSON value always serializes");
    s.push('\n');
    s
}

pub fn write_solution(
    result: &SolveResult,
    problem_name: &str,
    include_arrays: bool,
    path: &Path,
) -> Result<(), OutputError> {
    std::fs::write(path, solution_string(result, problem_name, include_arrays))
        .map_err(|source| OutputError::Io { path: path.display().to_string(), source })
}

/// The parts of a solution document needed to re-verify it.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionDocument {
    pub schema_version: u64,
    pub status: SolveStatus,
    pub maximize: bool,
    /// Objective values in the sense of the input problem.
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Residuals of the minimization form.
    pub residuals: ResidualSummary,
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
}

fn schema(msg: impl Into<String>) -> OutputError {
    OutputError::Schema(msg.into())
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value, OutputError> {
    v.get(key).ok_or_else(|| schema(format!("missing field '{key}'")))
}

/// `null` stands for a non-finite value; nonnegative fields read it as +inf.
fn real(v: &Value, key: &str, null_as: f64) -> Result<f64, OutputError> {
    match field(v, key)? {
        Value::Null => Ok(null_as),
        other => other.as_f64().ok_or_else(|| schema(format!("field '{key}' is not a number"))),
    }
}

fn reals(v: &Value, key: &str) -> Result<Option<Vec<f64>>, OutputError> {
    let Some(items) = v.get(key) else { return Ok(None) };
    let items = items.as_array().ok_or_else(|| schema(format!("field '{key}' is not an array")))?;
    items
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| schema(format!("non-numeric entry in '{key}'"))))
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

pub fn parse_solution(text: &str) -> Result<SolutionDocument, OutputError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    let schema_version = field(&doc, "schema_version")?
        .as_u64()
        .ok_or_else(|| schema("schema_version is not an integer"))?;
    if schema_version != SCHEMA_VERSION {
        return Err(schema(format!("unsupported schema version {schema_version}")));
    }
    let status = field(&doc, "status")?.as_str().ok_or_else(|| schema("status is not a string"))?;
    let status = SolveStatus::parse(status).ok_or_else(|| schema(format!("unknown status '{status}'")))?;
    let maximize = field(&doc, "maximize")?.as_bool().ok_or_else(|| schema("maximize is not a boolean"))?;
    let objective = field(&doc, "objective")?;
    let res = field(&doc, "residuals")?;
    let inf = f64::INFINITY;
    let residuals = ResidualSummary {
        primal_inf_norm: real(res, "primal_inf_norm", inf)?,
        dual_inf_norm: real(res, "dual_inf_norm", inf)?,
        primal_objective: real(res, "primal_objective", f64::NAN)?,
        dual_objective: real(res, "dual_objective", f64::NAN)?,
        abs_gap: real(res, "abs_gap", inf)?,
        rel_gap: real(res, "rel_gap", inf)?,
    };
    let (x, y, r) = match doc.get("solution") {
        Some(sol) => (reals(sol, "x")?, reals(sol, "y")?, reals(sol, "r")?),
        None => (None, None, None),
    };
    Ok(SolutionDocument {
        schema_version,
        status,
        maximize,
        primal_objective: real(objective, "primal", f64::NAN)?,
        dual_objective: real(objective, "dual", f64::NAN)?,
        residuals,
        x,
        y,
        r,
    })
}

pub fn read_solution(path: &Path) -> Result<SolutionDocument, OutputError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| OutputError::Io { path: path.display().to_string(), source })?;
    parse_solution(&text)
}
