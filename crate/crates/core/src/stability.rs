//! Solution maps of generalized equations `0 ∈ F(p,x) + N_Γ(x)`: isolated
//! calmness, the KKT specialization, the residual map `Φ` and generators for
//! regular normals to `gph N_Γ`.

use std::sync::Arc;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use crate::cone_core::{contains, normal_cone, project, AmbientVec, ConeDesc, PrimitiveCone, Tol};
use crate::cone_geometry::{
    cone_least_squares, critical_cone, dykstra, Certificate, ConeSetOracle, CoordKind, Verdict,
};
use crate::constraint_system::{
    example1, feasible_value, multiplier_solve, ngamma_route_a, require_multiplier, srcq_check,
    ConstraintSystem, QuadraticSystem,
};
use crate::error::{ConeError, Result};
use crate::linalg::{pinv, range_basis};
use crate::proj_deriv::{sigma_parts, GraphPoint};

/// Base mapping `F(p, x)` with directional derivatives in each argument.
pub trait BaseMap: Send + Sync {
    fn dim_p(&self) -> usize;
    fn dim_x(&self) -> usize;
    fn value(&self, p: &DVector<f64>, x: &DVector<f64>) -> DVector<f64>;
    fn deriv_x(&self, p: &DVector<f64>, x: &DVector<f64>, dx: &DVector<f64>) -> DVector<f64>;
    fn deriv_p(&self, p: &DVector<f64>, x: &DVector<f64>, dp: &DVector<f64>) -> DVector<f64>;

    fn jacobian_x(&self, p: &DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim_x();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
            m.set_column(j, &self.deriv_x(p, x, &e));
        }
        m
    }
}

/// `F(p, x) = A_p p + A_x x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub a_p: DMatrix<f64>,
    pub a_x: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl AffineMap {
    pub fn new(a_p: DMatrix<f64>, a_x: DMatrix<f64>, c: DVector<f64>) -> Result<AffineMap> {
        let n = a_x.nrows();
        if a_x.ncols() != n {
            return Err(ConeError::DimensionMismatch {
                expected: n,
                got: a_x.ncols(),
            });
        }
        if a_p.nrows() != n {
            return Err(ConeError::DimensionMismatch {
                expected: n,
                got: a_p.nrows(),
            });
        }
        if c.len() != n {
            return Err(ConeError::DimensionMismatch {
                expected: n,
                got: c.len(),
            });
        }
        Ok(AffineMap { a_p, a_x, c })
    }
}

impl BaseMap for AffineMap {
    fn dim_p(&self) -> usize {
        self.a_p.ncols()
    }

    fn dim_x(&self) -> usize {
        self.a_x.ncols()
    }

    fn value(&self, p: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        &self.a_p * p + &self.a_x * x + &self.c
    }

    fn deriv_x(&self, _p: &DVector<f64>, _x: &DVector<f64>, dx: &DVector<f64>) -> DVector<f64> {
        &self.a_x * dx
    }

    fn deriv_p(&self, _p: &DVector<f64>, _x: &DVector<f64>, dp: &DVector<f64>) -> DVector<f64> {
        &self.a_p * dp
    }

    fn jacobian_x(&self, _p: &DVector<f64>, _x: &DVector<f64>) -> DMatrix<f64> {
        self.a_x.clone()
    }
}

/// Generalized equation `0 ∈ F(p,x) + N_Γ(x)` at a reference pair `(p̄, x̄)`.
#[derive(Clone)]
pub struct GEProblem {
    pub sys: Arc<dyn ConstraintSystem>,
    pub f: Arc<dyn BaseMap>,
    pub pbar: DVector<f64>,
    pub xbar: DVector<f64>,
    /// `v̄ = −F(p̄, x̄)`.
    pub vbar: DVector<f64>,
}

impl std::fmt::Debug for GEProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GEProblem")
            .field("sys", &self.sys.name())
            .field("pbar", &self.pbar.as_slice())
            .field("xbar", &self.xbar.as_slice())
            .field("vbar", &self.vbar.as_slice())
            .finish()
    }
}

impl GEProblem {
    /// Checks dimensions, feasibility of `x̄` and that `v̄ ∈ N_Γ(x̄)` admits a
    /// multiplier.
    pub fn new(
        sys: Arc<dyn ConstraintSystem>,
        f: Arc<dyn BaseMap>,
        pbar: DVector<f64>,
        xbar: DVector<f64>,
        tol: &Tol,
    ) -> Result<GEProblem> {
        if f.dim_x() != sys.dim_x() {
            return Err(ConeError::DimensionMismatch {
                expected: sys.dim_x(),
                got: f.dim_x(),
            });
        }
        if pbar.len() != f.dim_p() {
            return Err(ConeError::DimensionMismatch {
                expected: f.dim_p(),
                got: pbar.len(),
            });
        }
        feasible_value(sys.as_ref(), &xbar, tol)?;
        let vbar = -f.value(&pbar, &xbar);
        let solved = multiplier_solve(sys.as_ref(), &xbar, &vbar, tol)?;
        if solved.membership.verdict != Verdict::Holds {
            return Err(ConeError::NotMultiplier {
                residual: solved.affine_residual.max(solved.cone_residual),
            });
        }
        Ok(GEProblem {
            sys,
            f,
            pbar,
            xbar,
            vbar,
        })
    }

    /// `F′((p̄,x̄);(0,Δx))`.
    pub fn fx_apply(&self, dx: &DVector<f64>) -> DVector<f64> {
        self.f.deriv_x(&self.pbar, &self.xbar, dx)
    }
}

/// `g(x,t) = (Diag(x) + tE + I; t) ∈ S²₊ × R₊` with `F(p,x,t) = −p − (x,t)`
/// at `p̄ = (1,1,−1)`, `(x̄,t̄) = (−1,−1,0)`.
pub fn example41(tol: &Tol) -> Result<GEProblem> {
    let n = 3;
    let f = AffineMap::new(
        -DMatrix::identity(n, n),
        -DMatrix::identity(n, n),
        DVector::zeros(n),
    )?;
    GEProblem::new(
        Arc::new(example1()),
        Arc::new(f),
        DVector::from_vec(vec![1.0, 1.0, -1.0]),
        DVector::from_vec(vec![-1.0, -1.0, 0.0]),
        tol,
    )
}

/// Multiplier `(0₂ₓ₂, −1)` of [`example41`].
pub fn example41_multiplier() -> AmbientVec {
    DVector::from_vec(vec![0.0, 0.0, 0.0, -1.0])
}

/// A point `(x, λ, v)` of the domain of `Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiPoint {
    pub x: DVector<f64>,
    pub lambda: AmbientVec,
    pub v: DVector<f64>,
}

impl PhiPoint {
    pub fn new(x: DVector<f64>, lambda: AmbientVec, v: DVector<f64>) -> PhiPoint {
        PhiPoint { x, lambda, v }
    }

    pub fn residual(&self, sys: &dyn ConstraintSystem) -> Result<(DVector<f64>, AmbientVec)> {
        phi_residual(sys, &self.x, &self.lambda, &self.v)
    }

    pub fn residual_norm(&self, sys: &dyn ConstraintSystem) -> Result<f64> {
        let (a, b) = self.residual(sys)?;
        Ok((a.norm_squared() + b.norm_squared()).sqrt())
    }
}

/// `Φ(x,λ,v) = (−v + ∇g(x)λ, g(x) − Π_K(g(x) + λ))`.
pub fn phi_residual(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    lambda: &AmbientVec,
    v: &DVector<f64>,
) -> Result<(DVector<f64>, AmbientVec)> {
    let n = sys.dim_x();
    for (len, want) in [(x.len(), n), (v.len(), n), (lambda.len(), sys.cone().dim())] {
        if len != want {
            return Err(ConeError::DimensionMismatch {
                expected: want,
                got: len,
            });
        }
    }
    let y = sys.value(x);
    let first = sys.adj_apply(x, lambda) - v;
    let second = &y - project(sys.cone(), &(&y + lambda))?;
    Ok((first, second))
}

/// Ratios `‖Φ(x_k,λ_k,v_k)‖ / dist((x_k,λ_k,v_k), Φ⁻¹(0,0))` along a sequence,
/// with `0/0` read as `0`. Decay to zero is evidence against metric
/// subregularity of `Φ` at the center; it proves nothing.
pub fn phi_subregularity_probe(
    sys: &dyn ConstraintSystem,
    center: &PhiPoint,
    sequence: &[PhiPoint],
    dist: &dyn Fn(&PhiPoint) -> f64,
    tol: &Tol,
) -> Result<Vec<f64>> {
    let c = center.residual_norm(sys)?;
    if c > tol.membership {
        return Err(ConeError::Invalid(format!(
            "center is not a zero of Φ: ‖Φ‖ = {c:.3e}"
        )));
    }
    sequence
        .iter()
        .map(|p| {
            let num = p.residual_norm(sys)?;
            let den = dist(p);
            Ok(if num == 0.0 && den == 0.0 {
                0.0
            } else {
                num / den
            })
        })
        .collect()
}

/// Distance to `Φ⁻¹(0,0)` for the scalar system `g(x) = x² ∈ R₋` near
/// `(0, ½, 0)`: `‖(x, v)‖`.
pub fn section32_distance(p: &PhiPoint) -> f64 {
    (p.x.norm_squared() + p.v.norm_squared()).sqrt()
}

/// The sequence `(1/k, 1/2, 1/k)`.
pub fn section32_point(k: f64) -> PhiPoint {
    PhiPoint::new(
        DVector::from_element(1, 1.0 / k),
        DVector::from_element(1, 0.5),
        DVector::from_element(1, 1.0 / k),
    )
}

/// Knobs of the direction net used by [`solution_map_isolated_calm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalmOptions {
    /// Net size is `2^refine · (dim + 1)` plus the signed axes.
    pub refine: u32,
    /// Residual lower bound that licenses a `holds` verdict on the net path.
    pub margin: f64,
    /// Shifts the net; same seed, same net.
    pub seed: u64,
    /// Sign coordinates above this count skip face enumeration.
    pub max_sign_coords: usize,
}

impl Default for CalmOptions {
    fn default() -> Self {
        CalmOptions {
            refine: 6,
            margin: 1e-3,
            seed: 0,
            max_sign_coords: 12,
        }
    }
}

/// Objective value above which a face LP exhibits a nonzero `Δx`.
const LP_NONZERO: f64 = 1e-9;
const INNER_ITERS: usize = 4000;

/// Quasi-random unit directions: an additive recurrence on the cube with
/// generalized golden-ratio steps, mapped to Gaussians pairwise and
/// normalized, followed by the signed coordinate axes.
pub fn direction_net(dim: usize, refine: u32, seed: u64) -> Vec<DVector<f64>> {
    if dim == 0 {
        return Vec::new();
    }
    let count = (1usize << refine) * (dim + 1);
    let m = dim + dim % 2;
    // φ_m solves x^{m+1} = x + 1.
    let mut phi = 2.0_f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (m as f64 + 1.0));
    }
    let alpha: Vec<f64> = (1..=m).map(|j| phi.powi(-(j as i32)).fract()).collect();
    let shift: Vec<f64> = (0..m)
        .map(|j| ((seed as f64 + 0.5) * alpha[(j + 1) % m] + 0.5 * alpha[j]).fract())
        .collect();
    let mut out = Vec::with_capacity(count + 2 * dim);
    for i in 1..=count {
        let u: Vec<f64> = (0..m)
            .map(|j| (shift[j] + i as f64 * alpha[j]).fract())
            .collect();
        let mut g = DVector::zeros(m);
        for j in (0..m).step_by(2) {
            let r = (-2.0 * (1.0 - u[j]).max(1e-300).ln()).sqrt();
            let th = 2.0 * std::f64::consts::PI * u[j + 1];
            g[j] = r * th.cos();
            g[j + 1] = r * th.sin();
        }
        let d = g.rows(0, dim).into_owned();
        let n = d.norm();
        if n > 1e-12 {
            out.push(d / n);
        }
    }
    for j in 0..dim {
        for s in [1.0, -1.0] {
            out.push(DVector::from_fn(dim, |i, _| if i == j { s } else { 0.0 }));
        }
    }
    out
}

/// Linearized data at `(x̄, v̄, λ̄)`.
struct Linearization {
    jac: DMatrix<f64>,
    /// `−F_x − ∇²⟨λ̄,g⟩(x̄)`.
    m: DMatrix<f64>,
    crit: ConeSetOracle,
    gp: GraphPoint,
    k: ConeDesc,
}

impl Linearization {
    fn new(problem: &GEProblem, lambda: &AmbientVec, tol: &Tol) -> Result<Linearization> {
        let sys = problem.sys.as_ref();
        let x = &problem.xbar;
        let n = sys.dim_x();
        let y = project(sys.cone(), &sys.value(x))?;
        let fx = problem.f.jacobian_x(&problem.pbar, x);
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
            h.set_column(j, &sys.hess_apply(x, lambda, &e));
        }
        Ok(Linearization {
            jac: sys.jacobian(x),
            m: -fx - h,
            crit: critical_cone(sys.cone(), &y, lambda, tol)?,
            gp: GraphPoint::new(sys.cone(), y, lambda.clone(), tol)?,
            k: sys.cone().clone(),
        })
    }

    /// `dist(JΔx, C) + min_{ξ ∈ N_C(Π_C JΔx)} ‖Jᵀξ − r‖` with
    /// `r = MΔx − ½Jᵀ∇Υ(Π_C JΔx)`.
    fn residual(&self, dx: &DVector<f64>, tol: &Tol) -> f64 {
        let q = &self.jac * dx;
        let p = self.crit.project(&q);
        let outside = (&q - &p).norm();
        let grad = match sigma_parts(&self.k, &self.gp, &p, tol) {
            Ok((_, g)) => g,
            Err(_) => return f64::INFINITY,
        };
        let jt = self.jac.transpose();
        let r = &self.m * dx - &jt * grad * 0.5;
        let normal = self.crit.normal_at(&p, tol);
        let xi = cone_least_squares(&jt, &r, &normal, INNER_ITERS);
        outside + (&jt * xi - r).norm()
    }
}

fn unit(n: usize, j: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 })
}

/// Exact search over the faces of `gph N_C` for polyhedral `C` given by
/// coordinate kinds. Returns a nonzero `Δx` if one satisfies the linearized
/// inclusion.
fn face_enumeration(
    lin: &Linearization,
    kinds: &[CoordKind],
) -> Result<(usize, Option<DVector<f64>>)> {
    let n = lin.m.ncols();
    let signs: Vec<usize> = (0..kinds.len())
        .filter(|&i| matches!(kinds[i], CoordKind::Plus | CoordKind::Minus))
        .collect();
    let faces = 1usize << signs.len();
    let inf = f64::INFINITY;
    for mask in 0..faces {
        for j in 0..n {
            for dir in [
                OptimizationDirection::Maximize,
                OptimizationDirection::Minimize,
            ] {
                let mut lp = Problem::new(dir);
                let dx: Vec<_> = (0..n)
                    .map(|i| lp.add_var(if i == j { 1.0 } else { 0.0 }, (-1.0, 1.0)))
                    .collect();
                let mut xi = Vec::with_capacity(kinds.len());
                for (i, kind) in kinds.iter().enumerate() {
                    let jrow: Vec<_> = (0..n).map(|c| (dx[c], lin.jac[(i, c)])).collect();
                    let on_boundary = signs
                        .iter()
                        .position(|&s| s == i)
                        .map(|b| mask & (1 << b) == 0);
                    let bounds = match (kind, on_boundary) {
                        (CoordKind::Free, _) => (0.0, 0.0),
                        (CoordKind::Zero, _) => {
                            lp.add_constraint(jrow, ComparisonOp::Eq, 0.0);
                            (-inf, inf)
                        }
                        (CoordKind::Plus, Some(true)) => {
                            lp.add_constraint(jrow, ComparisonOp::Eq, 0.0);
                            (-inf, 0.0)
                        }
                        (CoordKind::Plus, _) => {
                            lp.add_constraint(jrow, ComparisonOp::Ge, 0.0);
                            (0.0, 0.0)
                        }
                        (CoordKind::Minus, Some(true)) => {
                            lp.add_constraint(jrow, ComparisonOp::Eq, 0.0);
                            (0.0, inf)
                        }
                        (CoordKind::Minus, _) => {
                            lp.add_constraint(jrow, ComparisonOp::Le, 0.0);
                            (0.0, 0.0)
                        }
                    };
                    xi.push(lp.add_var(0.0, bounds));
                }
                // Jᵀξ − MΔx = 0.
                for r in 0..n {
                    let mut row: Vec<_> =
                        (0..kinds.len()).map(|i| (xi[i], lin.jac[(i, r)])).collect();
                    row.extend((0..n).map(|c| (dx[c], -lin.m[(r, c)])));
                    lp.add_constraint(row, ComparisonOp::Eq, 0.0);
                }
                let sol = match lp.solve() {
                    Ok(s) => s,
                    Err(minilp::Error::Infeasible) => continue,
                    Err(e) => return Err(ConeError::Invalid(format!("face LP failed: {e}"))),
                };
                if sol.objective().abs() > LP_NONZERO {
                    let w = DVector::from_fn(n, |i, _| sol[dx[i]]);
                    return Ok((mask + 1, Some(w)));
                }
            }
        }
    }
    Ok((faces, None))
}

/// Coordinate-wise pattern search on the sphere, started at `d`.
fn refine_direction(
    lin: &Linearization,
    d: &DVector<f64>,
    start: f64,
    tol: &Tol,
) -> (f64, DVector<f64>) {
    let n = d.len();
    let mut best = (start, d.clone());
    let mut step = 0.1;
    while step > 1e-7 {
        let mut improved = false;
        for j in 0..n {
            for s in [step, -step] {
                let cand = &best.1 + unit(n, j) * s;
                let cand = &cand / cand.norm();
                let r = lin.residual(&cand, tol);
                if r < best.0 {
                    best = (r, cand);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

fn net_residuals(lin: &Linearization, net: &[DVector<f64>], tol: &Tol) -> Vec<f64> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(net.len().max(1));
    let chunk = net.len().div_ceil(workers.max(1)).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = net
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|d| lin.residual(d, tol))
                        .collect::<Vec<f64>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

const METHOD_FACES: &str = "isolated calmness: face enumeration of gph N_C (LP)";
const METHOD_NET: &str = "isolated calmness: direction-net search";

/// Isolated calmness of `S(p) = {x : 0 ∈ F(p,x) + N_Γ(x)}` at `p̄` for `x̄`,
/// via the implication
/// `−F_xΔx − ∇²⟨λ̄,g⟩(x̄)Δx ∈ ∇g(x̄) DN_K(g(x̄)|λ̄)(g′(x̄)Δx) ⟹ Δx = 0`.
pub fn solution_map_isolated_calm(
    problem: &GEProblem,
    lambda: &AmbientVec,
    tol: &Tol,
    opts: &CalmOptions,
) -> Result<Certificate> {
    let sys = problem.sys.as_ref();
    let (x, v) = (&problem.xbar, &problem.vbar);
    require_multiplier(sys, x, v, lambda, tol)?;
    let srcq = srcq_check(sys, x, v, lambda, tol)?;
    if srcq.verdict != Verdict::Holds {
        return Ok(
            Certificate::inconclusive(f64::NAN, "isolated calmness", tol).note(format!(
                "precondition unmet: SRCQ verdict {:?}",
                srcq.verdict
            )),
        );
    }
    let hyp = [
        "checked: SRCQ holds at (x, v, λ)",
        "assumed: metric subregularity of x ↦ g(x) − K at x",
    ];
    let lin = Linearization::new(problem, lambda, tol)?;
    let n = sys.dim_x();
    let confirm = |dx: &DVector<f64>| -> Result<Certificate> {
        let w = -problem.fx_apply(dx);
        ngamma_route_a(sys, x, v, lambda, dx, &w, tol)
    };

    let kinds = lin.crit.faces().and_then(|f| f.coord_kinds());
    if let Some(kinds) = kinds.filter(|k| {
        k.iter()
            .filter(|c| matches!(c, CoordKind::Plus | CoordKind::Minus))
            .count()
            <= opts.max_sign_coords
    }) {
        let (visited, found) = face_enumeration(&lin, &kinds)?;
        let cert = match found {
            None => Certificate::holds(0.0, METHOD_FACES, tol)
                .note(format!("{visited} faces, only Δx = 0")),
            Some(w) => {
                let w = &w / w.norm();
                let check = confirm(&w)?;
                Certificate::fails(lin.residual(&w, tol), &w, METHOD_FACES, tol).note(format!(
                    "nonzero Δx on face {visited}; graph-derivative check: {:?}",
                    check.verdict
                ))
            }
        };
        return Ok(hyp.iter().fold(cert, |c, h| c.note(*h)));
    }

    let net = direction_net(n, opts.refine, opts.seed);
    let res = net_residuals(&lin, &net, tol);
    let mut order: Vec<usize> = (0..net.len()).collect();
    order.sort_by(|&a, &b| res[a].total_cmp(&res[b]).then(a.cmp(&b)));
    let mut best = (f64::INFINITY, DVector::zeros(n));
    for &i in order.iter().take(4) {
        let r = refine_direction(&lin, &net[i], res[i], tol);
        if r.0 < best.0 {
            best = r;
        }
    }
    let (rho, dx) = best;
    let size = format!(
        "net of {} directions (refine {}, seed {})",
        net.len(),
        opts.refine,
        opts.seed
    );
    let cert = if rho <= tol.membership * 10.0 {
        let check = confirm(&dx)?;
        if check.verdict == Verdict::Holds {
            Certificate::fails(rho, &dx, METHOD_NET, tol)
                .note("unit Δx satisfies the linearized inclusion")
        } else {
            Certificate::inconclusive(rho, METHOD_NET, tol)
                .with_witness(&dx)
                .note(format!(
                    "near-solution not confirmed by the graph-derivative check ({:?})",
                    check.verdict
                ))
        }
    } else if rho >= opts.margin {
        Certificate::holds(rho, METHOD_NET, tol).note(format!(
            "residual ≥ margin {:.1e} on every sampled direction",
            opts.margin
        ))
    } else {
        Certificate::inconclusive(rho, METHOD_NET, tol).note("no counterexample found")
    };
    Ok(hyp.iter().fold(cert.note(size), |c, h| c.note(*h)))
}

/// Problem `min f(z) − ⟨a,z⟩ s.t. G(z) − b ∈ K°` at `(a,b) = (0,0)`, with the
/// multiplier cone `K` taken as the cone of `g`.
#[derive(Clone)]
pub struct KktProblem {
    pub grad_f: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    pub hess_f: Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>,
    pub g: Arc<dyn ConstraintSystem>,
    pub b: DVector<f64>,
}

impl KktProblem {
    pub fn dim_z(&self) -> usize {
        self.g.dim_x()
    }

    pub fn dim_lambda(&self) -> usize {
        self.g.cone().dim()
    }

    /// Stationarity and complementarity residuals, `‖∇f + ∇Gλ‖` and
    /// `dist(G(z) − b, N_K(λ))`, after checking `λ ∈ K`.
    pub fn kkt_residuals(
        &self,
        z: &DVector<f64>,
        lambda: &AmbientVec,
        tol: &Tol,
    ) -> Result<(f64, f64)> {
        let k = self.g.cone();
        if !contains(k, lambda, tol)? {
            return Err(ConeError::NotInCone {
                dist: crate::cone_core::dist(k, lambda)?,
            });
        }
        let stat = ((self.grad_f)(z) + self.g.adj_apply(z, lambda)).norm();
        let slack = self.g.value(z) - &self.b;
        let comp = normal_cone(k, lambda, tol)?.dist(&slack);
        Ok((stat, comp))
    }
}

/// `F((a,b),(z,λ)) = (∇f(z) − a + ∇G(z)λ; −G(z) + b)`.
struct KktMap {
    prob: KktProblem,
}

impl BaseMap for KktMap {
    fn dim_p(&self) -> usize {
        self.prob.dim_z() + self.prob.dim_lambda()
    }

    fn dim_x(&self) -> usize {
        self.prob.dim_z() + self.prob.dim_lambda()
    }

    fn value(&self, p: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let (nz, m) = (self.prob.dim_z(), self.prob.dim_lambda());
        let z = x.rows(0, nz).into_owned();
        let l = x.rows(nz, m).into_owned();
        let mut out = DVector::zeros(nz + m);
        let top = (self.prob.grad_f)(&z) - p.rows(0, nz) + self.prob.g.adj_apply(&z, &l);
        let bot = -self.prob.g.value(&z) + &self.prob.b + p.rows(nz, m);
        out.rows_mut(0, nz).copy_from(&top);
        out.rows_mut(nz, m).copy_from(&bot);
        out
    }

    fn deriv_x(&self, _p: &DVector<f64>, x: &DVector<f64>, dx: &DVector<f64>) -> DVector<f64> {
        let (nz, m) = (self.prob.dim_z(), self.prob.dim_lambda());
        let z = x.rows(0, nz).into_owned();
        let l = x.rows(nz, m).into_owned();
        let dz = dx.rows(0, nz).into_owned();
        let dl = dx.rows(nz, m).into_owned();
        let g = &self.prob.g;
        let top = (self.prob.hess_f)(&z, &dz) + g.hess_apply(&z, &l, &dz) + g.adj_apply(&z, &dl);
        let bot = -g.jac_apply(&z, &dz);
        let mut out = DVector::zeros(nz + m);
        out.rows_mut(0, nz).copy_from(&top);
        out.rows_mut(nz, m).copy_from(&bot);
        out
    }

    fn deriv_p(&self, _p: &DVector<f64>, _x: &DVector<f64>, dp: &DVector<f64>) -> DVector<f64> {
        let nz = self.prob.dim_z();
        let mut out = dp.clone();
        out.rows_mut(0, nz).neg_mut();
        out
    }
}

/// The generalized-equation form of a KKT system: `x = (z, λ)`,
/// `Γ = R^{n_z} × K`, and the multiplier `λ_GE = v̄ = (0, G(z̄) − b)`.
pub fn kkt_as_ge(
    prob: &KktProblem,
    z: &DVector<f64>,
    lambda: &AmbientVec,
    tol: &Tol,
) -> Result<(GEProblem, AmbientVec)> {
    let (nz, m) = (prob.dim_z(), prob.dim_lambda());
    if z.len() != nz {
        return Err(ConeError::DimensionMismatch {
            expected: nz,
            got: z.len(),
        });
    }
    if lambda.len() != m {
        return Err(ConeError::DimensionMismatch {
            expected: m,
            got: lambda.len(),
        });
    }
    let (stat, comp) = prob.kkt_residuals(z, lambda, tol)?;
    let scale = 1.0 + lambda.norm() + z.norm();
    if stat > tol.scaled(scale) || comp > tol.scaled(scale) {
        return Err(ConeError::NotMultiplier {
            residual: stat.max(comp),
        });
    }
    let mut product = vec![PrimitiveCone::Free { dim: nz }];
    product.extend(prob.g.cone().product.iter().cloned());
    let sys = QuadraticSystem::identity("kkt_wrapper", ConeDesc::new(product)?);
    let mut x = DVector::zeros(nz + m);
    x.rows_mut(0, nz).copy_from(z);
    x.rows_mut(nz, m).copy_from(lambda);
    let f = KktMap { prob: prob.clone() };
    let pbar = DVector::zeros(nz + m);
    let ge = GEProblem::new(Arc::new(sys), Arc::new(f), pbar, x, tol)?;
    let lam_ge = ge.vbar.clone();
    Ok((ge, lam_ge))
}

/// Isolated calmness of the primal-dual solution map of a KKT system at
/// `(z̄, λ̄)`.
pub fn kkt_isolated_calm(
    prob: &KktProblem,
    z: &DVector<f64>,
    lambda: &AmbientVec,
    tol: &Tol,
    opts: &CalmOptions,
) -> Result<Certificate> {
    let (ge, lam_ge) = kkt_as_ge(prob, z, lambda, tol)?;
    let mut cert = solution_map_isolated_calm(&ge, &lam_ge, tol, opts)?;
    cert.method = format!("KKT: {}", cert.method);
    Ok(cert.note("witness coordinates are (Δz, Δλ)"))
}

/// Linear program `min z s.t. z ≥ 0`, written as `G(z) = −z`, `K = R₊`, with
/// KKT pair `(0, 1)`.
pub fn kkt_lp() -> KktProblem {
    let cone = ConeDesc::new(vec![PrimitiveCone::Orthant {
        dim: 1,
        sign: crate::cone_core::Sign::Plus,
    }])
    .expect("valid cone");
    let g = QuadraticSystem::affine("kkt_lp", cone, -DMatrix::identity(1, 1), DVector::zeros(1))
        .expect("consistent data");
    KktProblem {
        grad_f: Arc::new(|z: &DVector<f64>| DVector::from_element(z.len(), 1.0)),
        hess_f: Arc::new(|_z: &DVector<f64>, dz: &DVector<f64>| DVector::zeros(dz.len())),
        g: Arc::new(g),
        b: DVector::zeros(1),
    }
}

/// A generated pair `(ξ, η)` of the lower estimate of the regular normal cone
/// to `gph N_Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalPair {
    pub xi: DVector<f64>,
    pub eta: DVector<f64>,
}

/// A pair `(d, w)` with `w ∈ ∇²⟨λ,g⟩(x)d + ∇g(x) DN_K(g(x)|λ)(g′(x)d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentPair {
    pub d: DVector<f64>,
    pub w: DVector<f64>,
}

struct GraphData {
    jac: DMatrix<f64>,
    h: DMatrix<f64>,
    crit: ConeSetOracle,
    gp: GraphPoint,
    k: ConeDesc,
    /// `(I + JᵀJ)⁻¹`, for projecting onto the graph of `J`.
    graph_inv: DMatrix<f64>,
}

impl GraphData {
    fn new(
        sys: &dyn ConstraintSystem,
        x: &DVector<f64>,
        v: &DVector<f64>,
        lambda: &AmbientVec,
        tol: &Tol,
    ) -> Result<GraphData> {
        require_multiplier(sys, x, v, lambda, tol)?;
        let n = sys.dim_x();
        let y = project(sys.cone(), &sys.value(x))?;
        let jac = sys.jacobian(x);
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            h.set_column(j, &sys.hess_apply(x, lambda, &unit(n, j)));
        }
        let graph_inv = (DMatrix::identity(n, n) + jac.transpose() * &jac)
            .try_inverse()
            .ok_or_else(|| ConeError::Invalid("singular graph normal matrix".into()))?;
        Ok(GraphData {
            crit: critical_cone(sys.cone(), &y, lambda, tol)?,
            gp: GraphPoint::new(sys.cone(), y, lambda.clone(), tol)?,
            k: sys.cone().clone(),
            jac,
            h,
            graph_inv,
        })
    }

    /// Nearest `d` to `eta` (in the graph metric) with `Jd ∈ C`.
    fn critical_direction(&self, eta: &DVector<f64>, tol: &Tol) -> Option<DVector<f64>> {
        let (n, m) = (self.jac.ncols(), self.jac.nrows());
        let mut z0 = DVector::zeros(n + m);
        z0.rows_mut(0, n).copy_from(eta);
        z0.rows_mut(n, m).copy_from(&(&self.jac * eta));
        let onto_graph = |u: &DVector<f64>| {
            let a = u.rows(0, n).into_owned();
            let s = u.rows(n, m).into_owned();
            let d = &self.graph_inv * (a + self.jac.transpose() * s);
            let mut out = DVector::zeros(n + m);
            out.rows_mut(n, m).copy_from(&(&self.jac * &d));
            out.rows_mut(0, n).copy_from(&d);
            out
        };
        let onto_cone = |u: &DVector<f64>| {
            let mut out = u.clone();
            let s = u.rows(n, m).into_owned();
            out.rows_mut(n, m).copy_from(&self.crit.project(&s));
            out
        };
        let out = dykstra(&z0, onto_graph, onto_cone, tol);
        let d = self.snap_to_face(out.other.rows(0, n).into_owned(), tol);
        // Slow Dykstra runs leave residue of a zero answer; `d = 0` is always critical.
        if d.norm() <= tol.zero.sqrt() * eta.norm() {
            return Some(DVector::zeros(n));
        }
        let jd = &self.jac * &d;
        (self.crit.dist(&jd) <= tol.scaled(jd.norm())).then_some(d)
    }

    /// Alternating projections stall near tangential intersections. Moving
    /// `d` the least so that `Jd` lies in the span of the face of `C` at
    /// `Π_C(Jd)` leaves a second-order gap instead.
    fn snap_to_face(&self, d: DVector<f64>, tol: &Tol) -> DVector<f64> {
        let jd = &self.jac * &d;
        let q = self.crit.project(&jd);
        let Some(lin) = self.crit.normal_at(&q, tol).polar().lineality_basis() else {
            return d;
        };
        let m = self.jac.nrows();
        let basis = range_basis(&lin, tol.zero);
        let a = (DMatrix::identity(m, m) - &basis * basis.transpose()) * &self.jac;
        let snapped = &d - pinv(&a, tol.zero) * (&a * &d);
        let before = self.crit.dist(&jd);
        if self.crit.dist(&(&self.jac * &snapped)) < before {
            snapped
        } else {
            d
        }
    }

    fn half_sigma_grad(&self, q: &AmbientVec, tol: &Tol) -> Result<AmbientVec> {
        Ok(sigma_parts(&self.k, &self.gp, q, tol)?.1 * 0.5)
    }
}

/// Generates `(ξ, η)` with `ξ = −∇²⟨λ,g⟩(x)η + ∇g(x)μ` and
/// `(μ, g′(x)η) ∈ N̂_{gph N_K}(g(x), λ)`. Each seed `η` is first moved so that
/// `g′(x)η ∈ C_K(g(x),λ)`; then `μ = −½∇Υ(g′(x)η) + ζ` for `ζ` ranging over
/// `0` and the projections of `±e_i` onto `C°`. For polyhedral `K` these
/// pairs span the whole lower estimate.
pub fn regular_normal_lower_generate(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    lambda: &AmbientVec,
    etas: &[DVector<f64>],
    tol: &Tol,
) -> Result<Vec<NormalPair>> {
    let data = GraphData::new(sys, x, v, lambda, tol)?;
    let m = data.jac.nrows();
    let polar = data.crit.polar();
    let mut zetas = vec![DVector::zeros(m)];
    for i in 0..m {
        for s in [1.0, -1.0] {
            let z = polar.project(&(unit(m, i) * s));
            if z.norm() > tol.zero && !zetas.iter().any(|o| (o - &z).norm() <= tol.zero) {
                zetas.push(z);
            }
        }
    }
    let mut out = Vec::new();
    for eta in etas {
        if eta.len() != sys.dim_x() {
            return Err(ConeError::DimensionMismatch {
                expected: sys.dim_x(),
                got: eta.len(),
            });
        }
        let Some(eta) = data.critical_direction(eta, tol) else {
            continue;
        };
        let q = &data.jac * &eta;
        let base = -data.half_sigma_grad(&q, tol)?;
        for zeta in &zetas {
            let mu = &base + zeta;
            let xi = -&data.h * &eta + data.jac.transpose() * mu;
            out.push(NormalPair {
                xi,
                eta: eta.clone(),
            });
        }
    }
    Ok(out)
}

/// Builds graph-derivative pairs from seeds `(d₀, n₀)`: `d₀` is moved so that
/// `g′(x)d ∈ C`, `n₀` is projected onto `N_C(g′(x)d)`, and
/// `w = ∇²⟨λ,g⟩(x)d + ∇g(x)(½∇Υ(g′(x)d) + n)`.
pub fn graph_tangent_generate(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    lambda: &AmbientVec,
    seeds: &[(DVector<f64>, AmbientVec)],
    tol: &Tol,
) -> Result<Vec<TangentPair>> {
    let data = GraphData::new(sys, x, v, lambda, tol)?;
    let mut out = Vec::new();
    for (d0, n0) in seeds {
        if d0.len() != sys.dim_x() {
            return Err(ConeError::DimensionMismatch {
                expected: sys.dim_x(),
                got: d0.len(),
            });
        }
        data.k.check_dim(n0)?;
        let Some(d) = data.critical_direction(d0, tol) else {
            continue;
        };
        let q = &data.jac * &d;
        let normal = data.crit.normal_at(&q, tol);
        let mu = data.half_sigma_grad(&q, tol)? + normal.project(n0);
        let w = &data.h * &d + data.jac.transpose() * mu;
        out.push(TangentPair { d, w });
    }
    Ok(out)
}

/// Largest `⟨(ξ,η),(d,w)⟩` over all pairs.
pub fn max_alignment(normals: &[NormalPair], tangents: &[TangentPair]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for a in normals {
        for t in tangents {
            worst = worst.max(a.xi.dot(&t.d) + a.eta.dot(&t.w));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone_core::Sign;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn scalar_problem(fx: f64, sign: Sign) -> GEProblem {
        let cone = ConeDesc::new(vec![PrimitiveCone::Orthant { dim: 1, sign }]).unwrap();
        let sys = QuadraticSystem::identity("scalar", cone);
        let f = AffineMap::new(
            -DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, fx),
            v(&[0.0]),
        )
        .unwrap();
        GEProblem::new(
            Arc::new(sys),
            Arc::new(f),
            v(&[0.0]),
            v(&[0.0]),
            &Tol::default(),
        )
        .unwrap()
    }

    #[test]
    fn scalar_strongly_monotone_holds() {
        let tol = Tol::default();
        let p = scalar_problem(1.0, Sign::Minus);
        let c = solution_map_isolated_calm(&p, &v(&[0.0]), &tol, &CalmOptions::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Holds, "{c:?}");
    }

    #[test]
    fn free_cone_zero_derivative_fails() {
        let tol = Tol::default();
        let cone = ConeDesc::new(vec![PrimitiveCone::Free { dim: 2 }]).unwrap();
        let sys = QuadraticSystem::identity("free", cone);
        let f = AffineMap::new(
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 2),
            DVector::zeros(2),
        )
        .unwrap();
        let p =
            GEProblem::new(Arc::new(sys), Arc::new(f), v(&[0.0]), v(&[0.3, -1.0]), &tol).unwrap();
        let c =
            solution_map_isolated_calm(&p, &v(&[0.0, 0.0]), &tol, &CalmOptions::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Fails);
        assert!((c.witness_vec().unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn example41_holds() {
        let tol = Tol::default();
        let p = example41(&tol).unwrap();
        assert_eq!(p.vbar, v(&[0.0, 0.0, -1.0]));
        let c =
            solution_map_isolated_calm(&p, &example41_multiplier(), &tol, &CalmOptions::default())
                .unwrap();
        assert_eq!(c.verdict, Verdict::Holds, "{c:?}");
    }

    #[test]
    fn lp_and_duplicated_constraint() {
        let tol = Tol::default();
        let opts = CalmOptions::default();
        let lp = kkt_lp();
        let c = kkt_isolated_calm(&lp, &v(&[0.0]), &v(&[1.0]), &tol, &opts).unwrap();
        assert_eq!(c.verdict, Verdict::Holds, "{c:?}");

        let cone = ConeDesc::new(vec![PrimitiveCone::Orthant {
            dim: 2,
            sign: Sign::Plus,
        }])
        .unwrap();
        let g = QuadraticSystem::affine(
            "dup",
            cone,
            DMatrix::from_element(2, 1, -1.0),
            DVector::zeros(2),
        )
        .unwrap();
        let dup = KktProblem {
            g: Arc::new(g),
            b: DVector::zeros(2),
            ..lp
        };
        let c = kkt_isolated_calm(&dup, &v(&[0.0]), &v(&[0.5, 0.5]), &tol, &opts).unwrap();
        assert_eq!(c.verdict, Verdict::Fails);
        let w = c.witness_vec().unwrap();
        assert!(
            w[0].abs() < 1e-9 && (w[1] + w[2]).abs() < 1e-9 && w[1].abs() > 0.1,
            "{w}"
        );
    }

    #[test]
    fn not_a_kkt_pair_is_rejected() {
        let lp = kkt_lp();
        assert!(kkt_isolated_calm(
            &lp,
            &v(&[0.0]),
            &v(&[2.0]),
            &Tol::default(),
            &CalmOptions::default()
        )
        .is_err());
    }

    #[test]
    fn section32_phi() {
        let sys = crate::constraint_system::section32();
        let center = PhiPoint::new(v(&[0.0]), v(&[0.5]), v(&[0.0]));
        let (a, b) = center.residual(&sys).unwrap();
        assert_eq!((a[0], b[0]), (0.0, 0.0));
        let seq: Vec<_> = [100.0, 1000.0]
            .iter()
            .map(|&k| section32_point(k))
            .collect();
        let r = phi_subregularity_probe(&sys, &center, &seq, &section32_distance, &Tol::default())
            .unwrap();
        assert!((r[0] - 1.0 / (2f64.sqrt() * 100.0)).abs() < 1e-12);
        assert!(r[1] < r[0]);
        let flat = phi_subregularity_probe(
            &sys,
            &center,
            &[center.clone()],
            &section32_distance,
            &Tol::default(),
        )
        .unwrap();
        assert_eq!(flat, vec![0.0]);
    }

    #[test]
    fn net_is_deterministic_and_unit() {
        let a = direction_net(3, 2, 0);
        let b = direction_net(3, 2, 0);
        assert_eq!(a, b);
        assert_eq!(a.len(), 4 * 4 + 6);
        assert!(a.iter().all(|d| (d.norm() - 1.0).abs() < 1e-12));
        assert_ne!(direction_net(3, 2, 1), a);
    }

    #[test]
    fn orthant_generated_pairs_are_anti_aligned() {
        let tol = Tol::default();
        let cone = ConeDesc::new(vec![PrimitiveCone::Orthant {
            dim: 2,
            sign: Sign::Minus,
        }])
        .unwrap();
        let sys = QuadraticSystem::identity("orthant", cone);
        let x = v(&[0.0, -1.0]);
        let lam = v(&[2.0, 0.0]);
        let etas = vec![v(&[0.0, 0.0]), v(&[1.0, 0.5]), v(&[-1.0, 1.0])];
        let normals = regular_normal_lower_generate(&sys, &x, &lam, &lam, &etas, &tol).unwrap();
        assert!(normals
            .iter()
            .any(|p| p.eta.norm() == 0.0 && p.xi.norm() > 0.0));
        let seeds = vec![
            (v(&[1.0, 1.0]), v(&[1.0, -1.0])),
            (v(&[-1.0, 0.3]), v(&[0.0, 0.0])),
        ];
        let tangents = graph_tangent_generate(&sys, &x, &lam, &lam, &seeds, &tol).unwrap();
        assert_eq!(tangents.len(), 2);
        assert!(max_alignment(&normals, &tangents) <= 1e-8);
    }
}
