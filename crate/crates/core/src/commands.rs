//! Subcommands behind the `almlab` binary. Each returns a process exit code:
//! 0 success, 1 input error, 2 numerical non-convergence.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use crate::alm::{alm_solve, default_probes, random_probes, AlmConfig, AlmError, AlmTrace, InnerConfig};
use crate::catalog::{run_example, CatalogError, ExampleParams, EXAMPLE_NAMES};
use crate::io::{self, ConfigDoc, DiagnosisDoc, IoError, SolutionDoc, SummaryDoc};
use crate::multipliers::{optimality_certificate, proper_candidate_check, MultiplierError};
use crate::ocp::{mesh_refinement_study, recommended_config, MeshStudyRow, OcpSpec, DEFAULT_ALPHA};
use crate::problem::FEASIBILITY_TOL;
use crate::sets::{SamplePlan, SampleStrategy};

pub const OUT_DIR_ENV: &str = "ALMLAB_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Input = 1,
    NonConvergence = 2,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

fn input_error(msg: impl std::fmt::Display) -> Exit {
    eprintln!("error: {msg}");
    Exit::Input
}

fn numerical_error(msg: impl std::fmt::Display) -> Exit {
    eprintln!("error: {msg}");
    Exit::NonConvergence
}

/// ALMLAB_OUT_DIR wins over the flag; the default is the working directory.
pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|source| IoError::Write { path: dir.display().to_string(), source })
}

#[derive(Args, Clone, Debug)]
pub struct SolveArgs {
    /// Problem JSON file
    pub problem: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 500)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol_primal: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol_step: f64,
    /// Base absolute inner gradient tolerance
    #[arg(long, default_value_t = 1e-10)]
    pub inner_tol: f64,
    /// Number of random probe directions (default: canonical basis up to dimension 16)
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn cmd_solve(args: &SolveArgs) -> Exit {
    let (doc, problem) = match io::load_problem(&args.problem) {
        Ok(p) => p,
        Err(e) => return input_error(e),
    };
    let cfg = AlmConfig {
        beta: args.beta,
        max_outer: args.max_outer,
        tol_primal: args.tol_primal,
        tol_step: args.tol_step,
        inner: InnerConfig { tol_grad_abs: args.inner_tol, ..InnerConfig::default() },
        ..AlmConfig::default()
    };
    if let Err(e) = cfg.validate(problem.constraint_dim()) {
        return input_error(e);
    }
    if args.probes == Some(0) {
        return input_error("--probes must be positive");
    }
    let out_dir = resolve_out_dir(args.out_dir.as_deref());
    if let Err(e) = ensure_dir(&out_dir) {
        return input_error(e);
    }
    let probes = match args.probes {
        Some(c) => random_probes(problem.dim(), c, args.seed),
        None => default_probes(problem.dim(), args.seed),
    };
    let trace_path = out_dir.join("trace.csv");
    let summary_path = out_dir.join("summary.json");
    let (solution, trace, error) = match alm_solve(&problem, &cfg, &probes) {
        Ok((sol, trace)) => (Some(sol), Some(trace), None),
        Err(e) => {
            let trace = e.trace().cloned();
            (None, trace, Some(e))
        }
    };
    if let Some(t) = &trace {
        if let Err(e) = write_trace(&trace_path, t) {
            return numerical_error(e);
        }
    }
    let plan = SamplePlan { seed: args.seed, ..SamplePlan::default() };
    let report = solution.as_ref().and_then(|s| match optimality_certificate(&problem, &s.u_final, FEASIBILITY_TOL, &plan) {
        Ok((_, r)) => serde_json::to_value(r).ok(),
        Err(e) => Some(serde_json::json!({ "error": e.to_string() })),
    });
    let summary = SummaryDoc {
        problem_path: args.problem.display().to_string(),
        problem: doc,
        config: ConfigDoc::new(&cfg, args.probes, args.seed),
        solution: solution.as_ref().map(SolutionDoc::from_solution),
        error: error.as_ref().map(|e| e.to_string()),
        multiplier_report: report,
        trace_csv: trace_path.display().to_string(),
        metadata: io::Metadata::now(),
    };
    if let Err(e) = io::write_json(&summary_path, &summary) {
        return numerical_error(e);
    }
    match (&solution, error) {
        (Some(s), _) => {
            println!(
                "{} after {} outer steps; u = {:?}; wrote {} and {}",
                s.termination.as_str(),
                s.outer_iterations,
                s.u_final,
                summary_path.display(),
                trace_path.display()
            );
            if s.converged {
                Exit::Success
            } else {
                eprintln!("not converged: tolerances not met within {} outer steps", cfg.max_outer);
                Exit::NonConvergence
            }
        }
        (None, Some(AlmError::Config(msg))) => input_error(msg),
        (None, Some(e)) => numerical_error(e),
        (None, None) => Exit::NonConvergence,
    }
}

fn write_trace(path: &Path, trace: &AlmTrace) -> Result<(), IoError> {
    io::write_trace_csv(trace, io::create_file(path)?)
}

#[derive(Args, Clone, Debug)]
pub struct ExampleArgs {
    /// One of ex1-k1, ex1-k2, ex2-k3, ex2-k4, alm-toy, eigen
    pub name: String,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn cmd_example(args: &ExampleArgs) -> Exit {
    if !EXAMPLE_NAMES.contains(&args.name.as_str()) {
        return input_error(format!("unknown example '{}'; known examples: {}", args.name, EXAMPLE_NAMES.join(", ")));
    }
    let params = ExampleParams { alpha: args.alpha, r: args.r, beta: args.beta, n: args.n, seed: args.seed };
    match run_example(&args.name, &params) {
        Ok(rep) => {
            print!("{}", rep.render());
            if rep.all_passed() {
                Exit::Success
            } else {
                Exit::NonConvergence
            }
        }
        Err(e @ (CatalogError::Unknown(_) | CatalogError::Invalid(_))) => input_error(e),
        Err(CatalogError::Ocp(crate::ocp::OcpError::Invalid(msg))) => input_error(msg),
        Err(e) => numerical_error(e),
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintChoice {
    State,
    Control,
}

#[derive(Args, Clone, Debug)]
pub struct OcpArgs {
    #[arg(long, value_enum, default_value_t = ConstraintChoice::Control)]
    pub constraint: ConstraintChoice,
    /// Comma-separated interior node counts, increasing
    #[arg(long, value_delimiter = ',', default_value = "15,31,63,127")]
    pub meshes: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Overrides the penalty recommended for the constraint type
    #[arg(long)]
    pub beta: Option<f64>,
    /// Study CSV path (default: study.csv in the output directory)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// "bounded" when max/min ≤ 2, "growing" when strictly increasing.
pub fn trend_verdict(norms: &[f64]) -> &'static str {
    if norms.len() < 2 {
        return "undetermined";
    }
    let max = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
    if norms.windows(2).all(|w| w[1] > w[0]) && max > 2.0 * min {
        "growing"
    } else if min > 0.0 && max <= 2.0 * min {
        "bounded"
    } else if norms.windows(2).all(|w| w[1] > w[0]) {
        "growing"
    } else {
        "undetermined"
    }
}

pub fn cmd_ocp(args: &OcpArgs) -> Exit {
    if args.meshes.len() < 2 {
        return input_error("need at least two meshes for a trend");
    }
    let first = args.meshes[0];
    let mut template = match args.constraint {
        ConstraintChoice::State => OcpSpec::state_template(first),
        ConstraintChoice::Control => OcpSpec::control_template(first),
    };
    template.alpha = args.alpha;
    if let Err(e) = template.validate() {
        return input_error(e);
    }
    let mut cfg = recommended_config(&template);
    if let Some(b) = args.beta {
        cfg.beta = b;
    }
    if let Err(e) = cfg.validate(1) {
        return input_error(e);
    }
    let out_path = match &args.out {
        Some(p) => p.clone(),
        None => {
            let dir = resolve_out_dir(args.out_dir.as_deref());
            if let Err(e) = ensure_dir(&dir) {
                return input_error(e);
            }
            dir.join("study.csv")
        }
    };
    let rows = match mesh_refinement_study(&template, &args.meshes, &cfg) {
        Ok(r) => r,
        Err(crate::ocp::OcpError::Invalid(msg)) => return input_error(msg),
        Err(e) => return numerical_error(e),
    };
    if let Err(e) = io::create_file(&out_path).and_then(|f| io::write_study_csv(&rows, f)) {
        return numerical_error(e);
    }
    print_study(&rows);
    let pick = |r: &MeshStudyRow| match args.constraint {
        ConstraintChoice::State => r.lambda_norm_state,
        ConstraintChoice::Control => r.lambda_norm_control,
    };
    let norms: Vec<f64> = rows.iter().filter_map(pick).collect();
    println!("multiplier norm trend: {}", trend_verdict(&norms));
    println!("wrote {}", out_path.display());
    let failed: Vec<&MeshStudyRow> = rows.iter().filter(|r| r.error.is_some() || !r.converged).collect();
    if failed.is_empty() {
        Exit::Success
    } else {
        for r in failed {
            eprintln!("mesh n = {} failed: {}", r.n, r.error.as_deref().unwrap_or("not converged"));
        }
        Exit::NonConvergence
    }
}

fn print_study(rows: &[MeshStudyRow]) {
    let cell = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
    println!("{:>6} {:>14} {:>18} {:>20} {:>14} {:>6}", "n", "h", "lambda_norm_state", "lambda_norm_control", "u_dist", "outer");
    for r in rows {
        println!(
            "{:>6} {:>14.6e} {:>18} {:>20} {:>14} {:>6}",
            r.n,
            r.h,
            cell(r.lambda_norm_state),
            cell(r.lambda_norm_control),
            cell(r.u_dist),
            r.outer_iterations
        );
    }
}

#[derive(Args, Clone, Debug)]
pub struct DiagnoseArgs {
    /// summary.json written by `solve`
    pub summary: PathBuf,
    /// Candidate multiplier as a JSON array
    #[arg(long, allow_hyphen_values = true)]
    pub candidate: Option<String>,
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for diagnosis.json (default: next to the summary)
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> Exit {
    let text = match io::read_to_string(&args.summary) {
        Ok(t) => t,
        Err(e) => return input_error(e),
    };
    let summary: SummaryDoc = match serde_json::from_str(&text) {
        Ok(s) => s,
        Err(e) => return input_error(IoError::from(e)),
    };
    let problem = match summary.problem.build() {
        Ok(p) => p,
        Err(e) => return input_error(e),
    };
    let Some(u) = summary.solution.as_ref().map(|s| s.u_final.clone()) else {
        return input_error("summary has no solution to diagnose");
    };
    let candidate: Option<Vec<f64>> = match &args.candidate {
        Some(c) => match serde_json::from_str(c) {
            Ok(v) => Some(v),
            Err(e) => return input_error(format!("--candidate must be a JSON array of numbers: {e}")),
        },
        None => None,
    };
    let plan = match SamplePlan::new(args.samples, args.seed, SampleStrategy::UniformThenProject) {
        Ok(p) => p,
        Err(e) => return input_error(e),
    };
    let (_, report) = match optimality_certificate(&problem, &u, FEASIBILITY_TOL, &plan) {
        Ok(r) => r,
        Err(e) => return numerical_error(e),
    };
    let analysis = match &candidate {
        Some(c) => match proper_candidate_check(&problem, &u, c, FEASIBILITY_TOL, &plan) {
            Ok(a) => Some(a),
            Err(e @ MultiplierError::Dimension { .. }) => return input_error(e),
            Err(e) => return numerical_error(e),
        },
        None => None,
    };
    let dir = match &args.out_dir {
        Some(_) => resolve_out_dir(args.out_dir.as_deref()),
        None => match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => args.summary.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
        },
    };
    if let Err(e) = ensure_dir(&dir) {
        return input_error(e);
    }
    let out_path = dir.join("diagnosis.json");
    let doc = DiagnosisDoc { summary_path: args.summary.display().to_string(), u: &u, report: &report, candidate: analysis.as_ref() };
    if let Err(e) = io::write_json(&out_path, &doc) {
        return numerical_error(e);
    }
    if let Some(l) = &report.essential {
        println!("essential multiplier: {l:?}");
    }
    println!(
        "stationarity residual {:.3e}, VI violation {:.3e}, feasible {}, certificate {}",
        report.stationarity_residual,
        report.vi_violation,
        report.feasible,
        report.certificate.unwrap_or(false)
    );
    if let Some(a) = &analysis {
        println!(
            "candidate {:?}: stationarity {:.3e}, normal-cone residual {:.3e}, restriction gap {:.3e}, proper {}",
            a.candidate, a.stationarity_residual, a.normal_cone_residual, a.restriction_gap, a.passes
        );
    }
    println!("wrote {}", out_path.display());
    Exit::Success
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trend_labels() {
        assert_eq!(trend_verdict(&[3.87, 5.49, 7.77, 10.99]), "growing");
        assert_eq!(trend_verdict(&[0.1116, 0.1115, 0.1115, 0.1114]), "bounded");
        assert_eq!(trend_verdict(&[1.0]), "undetermined");
        assert_eq!(trend_verdict(&[1.0, 5.0, 2.0]), "undetermined");
    }
}
