use std::path::Path;

use conestab::constraint_system::{
    feasible_value, multiplier_solve, ngamma_graph_deriv_contains, nondegeneracy_check,
    require_multiplier, srcq_check, strict_complementarity_check, Route,
};
use conestab::problem::{PairSpec, PointSpec, ProblemSpec};
use conestab::stability::{solution_map_isolated_calm, CalmOptions};
use conestab::{ConeError, Tol, Verdict};

use crate::report::{Entry, Report};

/// Bad input: unreadable files, schema violations, infeasible points.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<ConeError> for InputError {
    fn from(e: ConeError) -> Self {
        InputError(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, InputError> {
    std::fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

fn load_problem(path: &Path) -> Result<ProblemSpec, InputError> {
    ProblemSpec::from_json(&read(path)?).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

fn pick_point(spec: &ProblemSpec, point: Option<&Path>) -> Result<PointSpec, InputError> {
    if let Some(p) = point {
        return PointSpec::from_json(&read(p)?)
            .map_err(|e| InputError(format!("{}: {e}", p.display())));
    }
    if let Some(p) = spec.points.get("xbar") {
        return Ok(p.clone());
    }
    match spec.points.len() {
        1 => Ok(spec.points.values().next().expect("one point").clone()),
        0 => Err(InputError(
            "no point given: pass --point or add a \"points\" entry".into(),
        )),
        _ => Err(InputError(
            "several points in the problem file: pass --point or name one \"xbar\"".into(),
        )),
    }
}

/// Runs feasibility, multiplier search, SRCQ, nondegeneracy and strict
/// complementarity; adds isolated calmness when the file carries `F`.
pub fn analyze(
    problem: &Path,
    point: Option<&Path>,
    tol: &Tol,
    seed: u64,
) -> Result<Report, InputError> {
    let spec = load_problem(problem)?;
    let sys = spec.system()?;
    let pt = pick_point(&spec, point)?.resolve(sys.as_ref())?;
    let s = sys.as_ref();
    feasible_value(s, &pt.x, tol)?;
    let mut report = Report::new("analyze", &problem.display().to_string(), tol);

    let solved = multiplier_solve(s, &pt.x, &pt.v, tol)?;
    report.push(Entry::new("multiplier", solved.membership.clone()));
    let lambda = match &pt.lambda {
        Some(l) => {
            require_multiplier(s, &pt.x, &pt.v, l, tol)?;
            Some(l.clone())
        }
        None if solved.membership.verdict == Verdict::Holds => Some(solved.lambda.clone()),
        None => None,
    };
    if let Some(lam) = &lambda {
        report.push(Entry::new(
            "multiplier_uniqueness",
            solved.uniqueness.clone(),
        ));
        report.push(Entry::new("srcq", srcq_check(s, &pt.x, &pt.v, lam, tol)?));
    }
    report.push(Entry::new(
        "nondegeneracy",
        nondegeneracy_check(s, &pt.x, tol)?,
    ));
    if lambda.is_some() {
        let hints: Vec<_> = pt.lambda.iter().cloned().collect();
        report.push(Entry::new(
            "strict_complementarity",
            strict_complementarity_check(s, &pt.x, &pt.v, &hints, tol)?,
        ));
    }
    if let Some(ge) = spec.ge_problem(tol)? {
        let m = multiplier_solve(ge.sys.as_ref(), &ge.xbar, &ge.vbar, tol)?;
        let opts = CalmOptions {
            seed,
            ..CalmOptions::default()
        };
        report.push(Entry::new(
            "isolated_calmness",
            solution_map_isolated_calm(&ge, &m.lambda, tol, &opts)?,
        ));
    }
    Ok(report)
}

/// Membership of `(d, w)` in the graphical derivative of `N_Γ`.
pub fn gderiv(problem: &Path, pair: &Path, route: Route, tol: &Tol) -> Result<Report, InputError> {
    let spec = load_problem(problem)?;
    let sys = spec.system()?;
    let pair = PairSpec::from_json(&read(pair)?)
        .map_err(|e| InputError(format!("{}: {e}", pair.display())))?;
    let (pt, d, w) = pair.resolve(sys.as_ref())?;
    let s = sys.as_ref();
    feasible_value(s, &pt.x, tol)?;
    let lambda = match pt.lambda {
        Some(l) => l,
        None => {
            let m = multiplier_solve(s, &pt.x, &pt.v, tol)?;
            if m.membership.verdict != Verdict::Holds {
                return Err(InputError(format!(
                    "no multiplier for v: {}",
                    m.membership.method
                )));
            }
            m.lambda
        }
    };
    let mut report = Report::new("gderiv", &problem.display().to_string(), tol);
    report.push(Entry::new(
        "graph_derivative",
        ngamma_graph_deriv_contains(s, &pt.x, &pt.v, &lambda, &d, &w, route, tol)?,
    ));
    Ok(report)
}
