//! File formats: problem JSON, run summary JSON, trace and study CSV.
//!
//! CSV numbers are written with 17 significant digits. JSON numbers use
//! serde_json's shortest round-trip form, which is also lossless.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alm::{AlmConfig, AlmTrace, Solution};
use crate::linalg::{LinalgError, LinearOperator, Matrix, TridiagonalSpd};
use crate::multipliers::{MultiplierReport, ProperCandidateAnalysis};
use crate::ocp::MeshStudyRow;
use crate::problem::{Curvature, ModelProblem, ProblemError, QuadraticObjective};
use crate::sets::{ConvexSet, SetError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("invalid problem: {0}")]
    Schema(String),
    #[error("invalid problem: {0}")]
    Problem(#[from] ProblemError),
    #[error("invalid problem: {0}")]
    Linalg(#[from] LinalgError),
    #[error("invalid problem: {0}")]
    Set(#[from] SetError),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Json { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveDoc {
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    /// Q = A*A + shift·I, as an alternative to an explicit "Q"
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gram: Option<GramDoc>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GramDoc {
    pub operator: OperatorDoc,
    pub shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorDoc {
    Dense { matrix: Vec<Vec<f64>> },
    Stack { blocks: Vec<OperatorDoc> },
    TridiagonalInverse { diag: Vec<f64>, off: Vec<f64> },
}

/// `null` bounds stand for ±∞.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetDoc {
    Box { lo: Vec<Option<f64>>, hi: Vec<Option<f64>> },
    Singleton { point: Vec<f64> },
    Halfspace { normal: Vec<f64>, offset: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Shift { inner: Box<SetDoc>, offset: Vec<f64> },
    Product { factors: Vec<SetDoc> },
    Intersection { members: Vec<SetDoc> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub objective: ObjectiveDoc,
    pub operator: OperatorDoc,
    pub set: SetDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
}

impl OperatorDoc {
    pub fn build(&self) -> Result<LinearOperator, IoError> {
        Ok(match self {
            OperatorDoc::Dense { matrix } => LinearOperator::Dense(Matrix::from_rows(matrix)?),
            OperatorDoc::Stack { blocks } => LinearOperator::stack(blocks.iter().map(|b| b.build()).collect::<Result<_, _>>()?)?,
            OperatorDoc::TridiagonalInverse { diag, off } => LinearOperator::TridiagonalInverse(TridiagonalSpd::new(diag.clone(), off.clone())?),
        })
    }

    pub fn from_operator(op: &LinearOperator) -> Self {
        match op {
            LinearOperator::Dense(m) => OperatorDoc::Dense { matrix: m.to_rows() },
            LinearOperator::Stack(blocks) => OperatorDoc::Stack { blocks: blocks.iter().map(OperatorDoc::from_operator).collect() },
            LinearOperator::TridiagonalInverse(t) => OperatorDoc::TridiagonalInverse { diag: t.diag().to_vec(), off: t.off().to_vec() },
        }
    }
}

fn bound_in(v: &[Option<f64>], inf: f64) -> Vec<f64> {
    v.iter().map(|b| b.unwrap_or(inf)).collect()
}

fn bound_out(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|b| b.is_finite().then_some(*b)).collect()
}

impl SetDoc {
    pub fn build(&self) -> Result<ConvexSet, IoError> {
        Ok(match self {
            SetDoc::Box { lo, hi } => ConvexSet::boxed(bound_in(lo, f64::NEG_INFINITY), bound_in(hi, f64::INFINITY))?,
            SetDoc::Singleton { point } => ConvexSet::singleton(point.clone())?,
            SetDoc::Halfspace { normal, offset } => ConvexSet::halfspace(normal.clone(), *offset)?,
            SetDoc::Ball { center, radius } => ConvexSet::ball(center.clone(), *radius)?,
            SetDoc::Shift { inner, offset } => ConvexSet::shift(inner.build()?, offset.clone())?,
            SetDoc::Product { factors } => ConvexSet::product(factors.iter().map(|f| f.build()).collect::<Result<_, _>>()?)?,
            SetDoc::Intersection { members } => ConvexSet::intersection(members.iter().map(|m| m.build()).collect::<Result<_, _>>()?)?,
        })
    }

    pub fn from_set(set: &ConvexSet) -> Self {
        match set {
            ConvexSet::Box { lo, hi } => SetDoc::Box { lo: bound_out(lo), hi: bound_out(hi) },
            ConvexSet::Singleton { point } => SetDoc::Singleton { point: point.clone() },
            ConvexSet::Halfspace { normal, offset } => SetDoc::Halfspace { normal: normal.clone(), offset: *offset },
            ConvexSet::Ball { center, radius } => SetDoc::Ball { center: center.clone(), radius: *radius },
            ConvexSet::Shift { inner, offset } => SetDoc::Shift { inner: Box::new(SetDoc::from_set(inner)), offset: offset.clone() },
            ConvexSet::Product { factors } => SetDoc::Product { factors: factors.iter().map(SetDoc::from_set).collect() },
            ConvexSet::Intersection { members } => SetDoc::Intersection { members: members.iter().map(SetDoc::from_set).collect() },
        }
    }
}

impl ProblemDoc {
    pub fn build(&self) -> Result<ModelProblem, IoError> {
        let o = &self.objective;
        let objective = match (&o.q, &o.gram) {
            (Some(q), None) => QuadraticObjective::new(Matrix::from_rows(q)?, o.b.clone(), o.c)?,
            (None, Some(g)) => QuadraticObjective::gram(g.operator.build()?, g.shift, o.b.clone(), o.c)?,
            _ => return Err(IoError::Schema("objective needs exactly one of \"Q\" or \"gram\"".into())),
        };
        Ok(ModelProblem::new(objective, self.operator.build()?, self.set.build()?, self.witness.clone())?)
    }

    pub fn from_problem(p: &ModelProblem) -> Self {
        let obj = &p.objective;
        let (q, gram) = match obj.curvature() {
            Curvature::Dense(q) => (Some(q.to_rows()), None),
            Curvature::Gram { op, shift } => (None, Some(GramDoc { operator: OperatorDoc::from_operator(op), shift: *shift })),
        };
        ProblemDoc {
            objective: ObjectiveDoc { q, gram, b: obj.linear().to_vec(), c: obj.constant() },
            operator: OperatorDoc::from_operator(&p.operator),
            set: SetDoc::from_set(&p.set),
            witness: p.witness.clone(),
        }
    }
}

pub fn parse_problem(text: &str) -> Result<(ProblemDoc, ModelProblem), IoError> {
    let doc: ProblemDoc = serde_json::from_str(text)?;
    let p = doc.build()?;
    Ok((doc, p))
}

pub fn read_to_string(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Read { path: path.display().to_string(), source })
}

pub fn load_problem(path: &Path) -> Result<(ProblemDoc, ModelProblem), IoError> {
    parse_problem(&read_to_string(path)?)
}

/// 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// Columns: k, r_norm, objective, lambda_norm, fejer_slack,
/// inner_iterations, probe_0 … probe_{m−1}.
pub fn write_trace_csv<W: Write>(trace: &AlmTrace, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let m = trace.probes.len();
    let mut header: Vec<String> = ["k", "r_norm", "objective", "lambda_norm", "fejer_slack", "inner_iterations"].iter().map(|s| s.to_string()).collect();
    header.extend((0..m).map(|j| format!("probe_{j}")));
    w.write_record(&header)?;
    for r in &trace.records {
        let mut row = vec![
            r.k.to_string(),
            fmt_num(r.r_norm),
            fmt_num(r.objective),
            fmt_num(r.lambda_norm),
            fmt_opt(r.fejer_slack),
            r.inner_iterations.to_string(),
        ];
        row.extend(r.probe_values.iter().map(|v| fmt_num(*v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| IoError::Write { path: "trace".into(), source })?;
    Ok(())
}

/// Columns: n, h, lambda_norm_state, lambda_norm_control, u_dist, outer_iterations.
pub fn write_study_csv<W: Write>(rows: &[MeshStudyRow], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "h", "lambda_norm_state", "lambda_norm_control", "u_dist", "outer_iterations"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            fmt_num(r.h),
            fmt_opt(r.lambda_norm_state),
            fmt_opt(r.lambda_norm_control),
            fmt_opt(r.u_dist),
            r.outer_iterations.to_string(),
        ])?;
    }
    w.flush().map_err(|source| IoError::Write { path: "study".into(), source })?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigDoc {
    pub beta: f64,
    pub max_outer: usize,
    pub tol_primal: f64,
    pub tol_step: f64,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub inner_tighten_exponent: f64,
    pub lambda0: Option<Vec<f64>>,
    pub probes: Option<usize>,
    pub seed: u64,
}

impl ConfigDoc {
    pub fn new(cfg: &AlmConfig, probes: Option<usize>, seed: u64) -> Self {
        ConfigDoc {
            beta: cfg.beta,
            max_outer: cfg.max_outer,
            tol_primal: cfg.tol_primal,
            tol_step: cfg.tol_step,
            inner_tol: cfg.inner.tol_grad_abs,
            inner_max_iter: cfg.inner.max_iter,
            inner_tighten_exponent: cfg.inner.tol_tighten_exponent,
            lambda0: cfg.lambda0.clone(),
            probes,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub u_final: Vec<f64>,
    pub zeta_final: Vec<f64>,
    pub lambda_final: Vec<f64>,
    pub converged: bool,
    pub termination: String,
    pub outer_iterations: usize,
}

impl SolutionDoc {
    pub fn from_solution(s: &Solution) -> Self {
        SolutionDoc {
            u_final: s.u_final.clone(),
            zeta_final: s.zeta_final.clone(),
            lambda_final: s.lambda_final.clone(),
            converged: s.converged,
            termination: s.termination.as_str().to_string(),
            outer_iterations: s.outer_iterations,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metadata {
    pub created_unix_seconds: u64,
    pub version: String,
}

impl Metadata {
    pub fn now() -> Self {
        let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Metadata { created_unix_seconds: secs, version: env!("CARGO_PKG_VERSION").to_string() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub problem_path: String,
    pub problem: ProblemDoc,
    pub config: ConfigDoc,
    pub solution: Option<SolutionDoc>,
    pub error: Option<String>,
    pub multiplier_report: Option<serde_json::Value>,
    pub trace_csv: String,
    pub metadata: Metadata,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnosisDoc<'a> {
    pub summary_path: String,
    pub u: &'a [f64],
    pub report: &'a MultiplierReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<&'a ProperCandidateAnalysis>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|source| IoError::Write { path: path.display().to_string(), source })
}

pub fn create_file(path: &Path) -> Result<std::fs::File, IoError> {
    std::fs::File::create(path).map_err(|source| IoError::Write { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alm::{alm_solve, default_probes};

    const TOY: &str = r#"{
        "objective": {"Q": [[1.0]], "b": [0.0], "c": 0.0},
        "operator": {"kind": "dense", "matrix": [[1.0], [2.0]]},
        "set": {"type": "singleton", "point": [1.0, 2.0]}
    }"#;

    #[test]
    fn parses_toy() {
        let (_, p) = parse_problem(TOY).unwrap();
        assert_eq!(p.dim(), 1);
        assert_eq!(p.constraint_dim(), 2);
        assert_eq!(p.set.singleton_point().unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn round_trip_all_kinds() {
        let text = r#"{
            "objective": {"gram": {"operator": {"kind": "tridiagonal_inverse", "diag": [2.0, 2.0], "off": [-1.0]}, "shift": 0.5}, "b": [1.0, 0.0], "c": 0.0},
            "operator": {"kind": "stack", "blocks": [
                {"kind": "tridiagonal_inverse", "diag": [2.0, 2.0], "off": [-1.0]},
                {"kind": "dense", "matrix": [[1.0, 0.0], [0.0, 1.0]]}
            ]},
            "set": {"type": "product", "factors": [
                {"type": "box", "lo": [null, -1.0], "hi": [1.0, null]},
                {"type": "intersection", "members": [
                    {"type": "ball", "center": [0.0, 0.0], "radius": 2.0},
                    {"type": "halfspace", "normal": [1.0, 1.0], "offset": 1.0},
                    {"type": "shift", "inner": {"type": "box", "lo": [-1.0, -1.0], "hi": [1.0, 1.0]}, "offset": [0.5, 0.0]}
                ]}
            ]},
            "witness": [0.0, 0.0]
        }"#;
        let (doc, p) = parse_problem(text).unwrap();
        let again = serde_json::to_string(&ProblemDoc::from_problem(&p)).unwrap();
        let (doc2, p2) = parse_problem(&again).unwrap();
        assert_eq!(doc, doc2);
        assert_eq!(p, p2);
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_problem("{\n  \"objective\": {\n    \"b\": [1,,2]\n}").unwrap_err();
        match err {
            IoError::Json { line, column, .. } => assert_eq!((line, column), (3, 13)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn asymmetric_q_rejected() {
        let text = TOY.replace("[[1.0]]", "[[1.0, 2.0], [0.0, 1.0]]").replace("[0.0]", "[0.0, 0.0]");
        let err = parse_problem(&text).unwrap_err();
        assert!(err.to_string().contains("symmetric"), "{err}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = TOY.replace("\"c\": 0.0", "\"c\": 0.0, \"d\": 1");
        assert!(matches!(parse_problem(&text), Err(IoError::Json { .. })));
    }

    #[test]
    fn trace_csv_layout() {
        let (_, p) = parse_problem(TOY).unwrap();
        let cfg = AlmConfig { max_outer: 4, tol_primal: 1e-300, tol_step: 1e-300, ..AlmConfig::default() };
        let (_, trace) = alm_solve(&p, &cfg, &default_probes(1, 0)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,r_norm,objective,lambda_norm,fejer_slack,inner_iterations,probe_0");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("2,") && lines[1].contains(",,"));
        let r: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(r, trace.records[1].r_norm);
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
    }
}
