//! Constraint systems `g(x) ∈ K`, the set `Γ = g⁻¹(K)`, multipliers, constraint
//! qualifications and graphical-derivative membership for `N_Γ`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::cone_core::{
    normal_cone, project, ri_normal_contains, tangent_cone, AmbientVec, ConeDesc, PrimitiveCone,
    Sign, Tol,
};
use crate::cone_geometry::{
    critical_cone, dykstra, face_polish_iter, farkas_bound, normal_of_critical,
    subspace_cone_trivial, tangent_of_normal, Certificate, Verdict,
};
use crate::error::{ConeError, Result};
use crate::linalg::{kernel_basis, range_basis, svec, AffineSet};
use crate::proj_deriv::{dnk_contains, proj_dir_deriv, sigma_parts, GraphPoint};

/// `g : X → Y` with first and second derivatives, paired with the cone `K`.
/// Implementations must be pure.
pub trait ConstraintSystem: Send + Sync {
    fn dim_x(&self) -> usize;
    fn cone(&self) -> &ConeDesc;
    fn value(&self, x: &DVector<f64>) -> AmbientVec;
    /// `g′(x)h`.
    fn jac_apply(&self, x: &DVector<f64>, h: &DVector<f64>) -> AmbientVec;
    /// `∇g(x)μ`, the adjoint of `g′(x)`.
    fn adj_apply(&self, x: &DVector<f64>, mu: &AmbientVec) -> DVector<f64>;
    /// `∇²⟨λ, g⟩(x) d`.
    fn hess_apply(&self, x: &DVector<f64>, lambda: &AmbientVec, d: &DVector<f64>) -> DVector<f64>;

    fn name(&self) -> &str {
        "custom"
    }

    /// Dense `g′(x)`, one column per coordinate of `x`.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim_x();
        let cols: Vec<DVector<f64>> = (0..n)
            .map(|i| {
                self.jac_apply(
                    x,
                    &DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 }),
                )
            })
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(self.cone().dim(), 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }
}

/// `g(x) = ½xᵀQᵢx + (Ax)ᵢ + bᵢ` in product-space coordinates. An empty `q`
/// list makes the map affine.
#[derive(Debug, Clone)]
pub struct QuadraticSystem {
    pub name: String,
    pub cone: ConeDesc,
    pub q: Vec<DMatrix<f64>>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QuadraticSystem {
    pub fn new(
        name: &str,
        cone: ConeDesc,
        q: Vec<DMatrix<f64>>,
        a: DMatrix<f64>,
        b: DVector<f64>,
    ) -> Result<Self> {
        let m = cone.dim();
        let n = a.ncols();
        if a.nrows() != m {
            return Err(ConeError::DimensionMismatch {
                expected: m,
                got: a.nrows(),
            });
        }
        if b.len() != m {
            return Err(ConeError::DimensionMismatch {
                expected: m,
                got: b.len(),
            });
        }
        if !q.is_empty() && q.len() != m {
            return Err(ConeError::DimensionMismatch {
                expected: m,
                got: q.len(),
            });
        }
        for qi in &q {
            if qi.nrows() != n || qi.ncols() != n {
                return Err(ConeError::DimensionMismatch {
                    expected: n,
                    got: qi.nrows(),
                });
            }
        }
        if a.iter()
            .chain(b.iter())
            .chain(q.iter().flat_map(|m| m.iter()))
            .any(|v| !v.is_finite())
        {
            return Err(ConeError::NonFinite);
        }
        let q = q.into_iter().map(|m| 0.5 * (&m + m.transpose())).collect();
        Ok(QuadraticSystem {
            name: name.to_string(),
            cone,
            q,
            a,
            b,
        })
    }

    pub fn affine(name: &str, cone: ConeDesc, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        Self::new(name, cone, Vec::new(), a, b)
    }

    /// `g(x) = x`.
    pub fn identity(name: &str, cone: ConeDesc) -> Self {
        let m = cone.dim();
        QuadraticSystem {
            name: name.to_string(),
            cone,
            q: Vec::new(),
            a: DMatrix::identity(m, m),
            b: DVector::zeros(m),
        }
    }
}

impl ConstraintSystem for QuadraticSystem {
    fn dim_x(&self) -> usize {
        self.a.ncols()
    }

    fn cone(&self) -> &ConeDesc {
        &self.cone
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, x: &DVector<f64>) -> AmbientVec {
        let mut out = &self.a * x + &self.b;
        for (i, qi) in self.q.iter().enumerate() {
            out[i] += 0.5 * x.dot(&(qi * x));
        }
        out
    }

    fn jac_apply(&self, x: &DVector<f64>, h: &DVector<f64>) -> AmbientVec {
        let mut out = &self.a * h;
        for (i, qi) in self.q.iter().enumerate() {
            out[i] += (qi * x).dot(h);
        }
        out
    }

    fn adj_apply(&self, x: &DVector<f64>, mu: &AmbientVec) -> DVector<f64> {
        let mut out = self.a.transpose() * mu;
        for (i, qi) in self.q.iter().enumerate() {
            out += qi * x * mu[i];
        }
        out
    }

    fn hess_apply(&self, _x: &DVector<f64>, lambda: &AmbientVec, d: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(d.len());
        for (i, qi) in self.q.iter().enumerate() {
            out += qi * d * lambda[i];
        }
        out
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = self.a.clone();
        for (i, qi) in self.q.iter().enumerate() {
            let row = j.row(i) + (qi * x).transpose();
            j.row_mut(i).copy_from(&row);
        }
        j
    }
}

/// `g(x,t) = (Diag(x) + tE + I; t) ∈ S²₊ × R₊` with `E` the all-ones matrix.
pub fn example1() -> QuadraticSystem {
    let r2 = std::f64::consts::SQRT_2;
    let cone = ConeDesc::new(vec![
        PrimitiveCone::Psd {
            order: 2,
            sign: Sign::Plus,
        },
        PrimitiveCone::Orthant {
            dim: 1,
            sign: Sign::Plus,
        },
    ])
    .expect("valid cone");
    // svec(Diag(x) + tE + I) = (x₁ + t + 1, √2 t, x₂ + t + 1).
    let a = DMatrix::from_row_slice(
        4,
        3,
        &[1.0, 0.0, 1.0, 0.0, 0.0, r2, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
    );
    let b = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
    QuadraticSystem::affine("example1", cone, a, b).expect("consistent data")
}

/// `g(X) = (X + C; X) ∈ {0} × S²₊` with `C = diag(0, −1)`, `X` in svec form.
pub fn example3() -> QuadraticSystem {
    let cone = ConeDesc::new(vec![
        PrimitiveCone::Zero { dim: 3 },
        PrimitiveCone::Psd {
            order: 2,
            sign: Sign::Plus,
        },
    ])
    .expect("valid cone");
    let i3 = DMatrix::<f64>::identity(3, 3);
    let mut a = DMatrix::zeros(6, 3);
    a.view_mut((0, 0), (3, 3)).copy_from(&i3);
    a.view_mut((3, 0), (3, 3)).copy_from(&i3);
    let c = svec(&DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, -1.0])));
    let mut b = DVector::zeros(6);
    b.rows_mut(0, 3).copy_from(&c);
    QuadraticSystem::affine("example3", cone, a, b).expect("consistent data")
}

/// `g(x) = x² ∈ R₋`.
pub fn section32() -> QuadraticSystem {
    let cone = ConeDesc::new(vec![PrimitiveCone::Orthant {
        dim: 1,
        sign: Sign::Minus,
    }])
    .expect("valid cone");
    QuadraticSystem::new(
        "section32",
        cone,
        vec![DMatrix::from_element(1, 1, 2.0)],
        DMatrix::zeros(1, 1),
        DVector::zeros(1),
    )
    .expect("consistent data")
}

/// Identity constraint map over the given cone, as used by KKT systems.
pub fn kkt_wrapper(cone: ConeDesc) -> QuadraticSystem {
    QuadraticSystem::identity("kkt_wrapper", cone)
}

/// Looks up a builtin system by tag.
pub fn builtin(name: &str) -> Result<Arc<dyn ConstraintSystem>> {
    Ok(match name {
        "example1" | "example1_system" => Arc::new(example1()),
        "example3" | "example3_system" => Arc::new(example3()),
        "section32" | "section32_scalar" => Arc::new(section32()),
        other => {
            return Err(ConeError::Invalid(format!(
                "unknown builtin mapping '{other}'"
            )))
        }
    })
}

fn check_x(sys: &dyn ConstraintSystem, x: &DVector<f64>) -> Result<()> {
    if x.len() != sys.dim_x() {
        return Err(ConeError::DimensionMismatch {
            expected: sys.dim_x(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ConeError::NonFinite);
    }
    Ok(())
}

/// `g(x)`, after checking `dist(g(x), K) ≤ tol.membership · max(1, ‖g(x)‖)`.
pub fn feasible_value(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    tol: &Tol,
) -> Result<AmbientVec> {
    check_x(sys, x)?;
    let y = sys.value(x);
    let p = project(sys.cone(), &y)?;
    let dist = (&y - &p).norm();
    if dist > tol.scaled(y.norm()) {
        return Err(ConeError::Infeasible { dist });
    }
    Ok(p)
}

/// Residuals `(‖∇g(x)λ − v‖, dist(λ, N_K(g(x))))`.
pub fn multiplier_residuals(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    lambda: &AmbientVec,
    tol: &Tol,
) -> Result<(f64, f64)> {
    let y = feasible_value(sys, x, tol)?;
    sys.cone().check_dim(lambda)?;
    if v.len() != sys.dim_x() {
        return Err(ConeError::DimensionMismatch {
            expected: sys.dim_x(),
            got: v.len(),
        });
    }
    let n = normal_cone(sys.cone(), &y, tol)?;
    Ok(((sys.adj_apply(x, lambda) - v).norm(), n.dist(lambda)))
}

fn multiplier_scale(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    lambda: &AmbientVec,
) -> f64 {
    v.norm() + lambda.norm() * sys.jacobian(x).norm().max(1.0)
}

/// Errors with `NotMultiplier` unless `λ ∈ M_x(v)`.
pub fn require_multiplier(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    lambda: &AmbientVec,
    tol: &Tol,
) -> Result<()> {
    let (ra, rc) = multiplier_residuals(sys, x, v, lambda, tol)?;
    let lim = tol.scaled(multiplier_scale(sys, x, v, lambda));
    if ra > lim || rc > lim {
        return Err(ConeError::NotMultiplier {
            residual: ra.max(rc),
        });
    }
    Ok(())
}

/// `h ∈ T_Γ(x)`, read as `g′(x)h ∈ T_K(g(x))`; exact under metric
/// subregularity of `x ↦ g(x) − K`.
pub fn gamma_tangent_contains(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    h: &DVector<f64>,
    tol: &Tol,
) -> Result<bool> {
    let y = feasible_value(sys, x, tol)?;
    check_x(sys, h)?;
    let t = tangent_cone(sys.cone(), &y, tol)?;
    Ok(t.contains(&sys.jac_apply(x, h), tol))
}

#[derive(Debug, Clone)]
pub struct MultiplierSolveResult {
    /// Representative multiplier; meaningful when `membership` holds.
    pub lambda: AmbientVec,
    pub affine_residual: f64,
    pub cone_residual: f64,
    /// Holds: `v ∈ N_Γ(x)` with the representative as witness. Fails: the
    /// affine fiber misses `N_K(g(x))`.
    pub membership: Certificate,
    /// Delegated to [`srcq_check`]; fails with a second multiplier as witness
    /// when re-seeding finds one.
    pub uniqueness: Certificate,
    /// Further verified multipliers found by re-seeding, distinct from
    /// `lambda`.
    pub others: Vec<AmbientVec>,
}

struct MultiplierSearch {
    affine: AffineSet,
    normal: crate::cone_geometry::ConeSetOracle,
    scale: f64,
    cone: ConeDesc,
}

/// Orthonormal basis of the span of the smallest face of `K°` containing
/// `λ`, with entries below `thr` read as zero.
fn polar_face_span(k: &ConeDesc, lambda: &AmbientVec, thr: f64) -> Result<DMatrix<f64>> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let m = k.dim();
    let e = |i: usize| DVector::from_fn(m, |j, _| if i == j { 1.0 } else { 0.0 });
    for b in k.blocks() {
        let lb = &lambda.as_slice()[b.offset..b.offset + b.len];
        match b.cone {
            PrimitiveCone::Free { .. } => {}
            PrimitiveCone::Zero { .. } => cols.extend((0..b.len).map(|i| e(b.offset + i))),
            PrimitiveCone::Orthant { .. } => cols.extend(
                (0..b.len)
                    .filter(|&i| lb[i].abs() > thr)
                    .map(|i| e(b.offset + i)),
            ),
            PrimitiveCone::Soc { sign, .. } => {
                let bar = lb[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                if -lb[0] * sign.factor() - bar > thr {
                    cols.extend((0..b.len).map(|i| e(b.offset + i)));
                } else if (lb[0] * lb[0] + bar * bar).sqrt() > thr {
                    let mut c = DVector::zeros(m);
                    c.rows_mut(b.offset, b.len).copy_from_slice(lb);
                    let n = c.norm();
                    cols.push(c / n);
                }
            }
            PrimitiveCone::Psd { order, .. } => {
                let (vals, p) = crate::linalg::sym_eigen(&crate::linalg::smat(lb, order))?;
                let u: Vec<DVector<f64>> = (0..order)
                    .filter(|&i| vals[i].abs() > thr)
                    .map(|i| p.column(i).into_owned())
                    .collect();
                for i in 0..u.len() {
                    for j in i..u.len() {
                        let mut s = &u[i] * u[j].transpose();
                        s = (&s + s.transpose()) * 0.5;
                        let v = svec(&s);
                        let mut c = DVector::zeros(m);
                        c.rows_mut(b.offset, b.len).copy_from(&(&v / v.norm()));
                        cols.push(c);
                    }
                }
            }
        }
    }
    Ok(if cols.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&cols)
    })
}

impl MultiplierSearch {
    fn new(
        sys: &dyn ConstraintSystem,
        x: &DVector<f64>,
        v: &DVector<f64>,
        tol: &Tol,
    ) -> Result<Self> {
        let y = feasible_value(sys, x, tol)?;
        if v.len() != sys.dim_x() {
            return Err(ConeError::DimensionMismatch {
                expected: sys.dim_x(),
                got: v.len(),
            });
        }
        let normal = normal_cone(sys.cone(), &y, tol)?;
        let jt = sys.jacobian(x).transpose();
        let scale = 1.0 + v.norm();
        Ok(MultiplierSearch {
            affine: AffineSet::new(jt, v.clone(), tol.zero),
            normal,
            scale,
            cone: sys.cone().clone(),
        })
    }

    /// Dykstra from `seed`; returns the cone-side iterate and its residuals.
    fn run(&self, seed: &AmbientVec, tol: &Tol) -> (AmbientVec, f64, f64, bool) {
        let out = dykstra(
            seed,
            |l| self.affine.project(l),
            |l| self.normal.project(l),
            tol,
        );
        let lam = out.point;
        let (ra, rc) = (self.affine.residual(&lam), self.normal.dist(&lam));
        let done = out.converged || out.stalled;
        let mut best = (lam.clone(), ra, rc);
        if let Some((p, pa, pc)) = self.polish(&lam, tol) {
            if pa + pc < best.1 + best.2 {
                best = (p, pa, pc);
            }
        }
        if !self.accept(&best.0, best.1, best.2, tol) {
            if let Some(p) = face_polish_iter(&self.normal, &self.affine, &lam, tol) {
                let (pa, pc) = (self.affine.residual(&p), self.normal.dist(&p));
                if pa + pc < best.1 + best.2 {
                    best = (p, pa, pc);
                }
            }
        }
        (best.0, best.1, best.2, done)
    }

    /// Alternating projections creep towards tangential intersections. Snap
    /// to the face of `K°` the iterate has identified and solve the affine
    /// equations exactly inside that face.
    fn polish(&self, lam: &AmbientVec, tol: &Tol) -> Option<(AmbientVec, f64, f64)> {
        let thr = tol.zero.sqrt() * lam.norm().max(1.0);
        let b = polar_face_span(&self.cone, lam, thr).ok()?;
        if b.ncols() == 0 {
            let z = DVector::zeros(lam.len());
            return Some((z.clone(), self.affine.residual(&z), self.normal.dist(&z)));
        }
        let m = self.affine.matrix() * &b;
        let c0 = b.transpose() * lam;
        let fix = crate::linalg::pinv(&m, tol.zero) * (self.affine.rhs() - &m * &c0);
        let p = &b * (c0 + fix);
        Some((p.clone(), self.affine.residual(&p), self.normal.dist(&p)))
    }

    /// Same bound as [`require_multiplier`].
    fn accept(&self, lam: &AmbientVec, ra: f64, rc: f64, tol: &Tol) -> bool {
        let lim = tol
            .scaled(self.affine.rhs().norm() + lam.norm() * self.affine.matrix().norm().max(1.0));
        ra <= lim && rc <= lim
    }
}

/// Finds `λ ∈ N_K(g(x))` with `∇g(x)λ = v`.
pub fn multiplier_solve(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    tol: &Tol,
) -> Result<MultiplierSolveResult> {
    const METHOD: &str = "multiplier search (Dykstra: affine fiber / normal cone)";
    let search = MultiplierSearch::new(sys, x, v, tol)?;
    let seed = search.affine.least_norm();
    let incons = search.affine.inconsistency();
    if incons > tol.scaled(search.scale) {
        let cert =
            Certificate::fails(incons, v, METHOD, tol).note("v is not in the range of ∇g(x)");
        return Ok(MultiplierSolveResult {
            lambda: seed.clone(),
            affine_residual: incons,
            cone_residual: search.normal.dist(&seed),
            membership: cert.clone(),
            uniqueness: Certificate::inconclusive(f64::NAN, METHOD, tol).note("no multiplier"),
            others: Vec::new(),
        });
    }
    let (lam, ra, rc, converged) = search.run(&seed, tol);
    if !search.accept(&lam, ra, rc, tol) {
        let gap = ra.max(rc);
        let cert = if converged && gap > 100.0 * tol.scaled(search.scale) {
            Certificate::fails(gap, v, METHOD, tol)
                .note("alternating projections stalled: v ∉ N_Γ(x)")
        } else {
            Certificate::inconclusive(gap, METHOD, tol)
                .note("no convergence within the iteration cap")
        };
        return Ok(MultiplierSolveResult {
            lambda: lam,
            affine_residual: ra,
            cone_residual: rc,
            membership: cert,
            uniqueness: Certificate::inconclusive(f64::NAN, METHOD, tol).note("no multiplier"),
            others: Vec::new(),
        });
    }
    // Re-seed along Ker ∇g(x) to probe for further multipliers.
    let ker = kernel_basis(search.affine.matrix(), tol.zero);
    let mut others: Vec<AmbientVec> = Vec::new();
    let step = 1.0 + lam.norm();
    let distinct = 1e3 * tol.scaled(step);
    for j in 0..ker.ncols() {
        for s in [1.0, -1.0] {
            let start = &lam + ker.column(j) * (s * step);
            let (cand, ra, rc, _) = search.run(&start, tol);
            if search.accept(&cand, ra, rc, tol)
                && (&cand - &lam).norm() > distinct
                && others.iter().all(|o| (o - &cand).norm() > distinct)
            {
                others.push(cand);
            }
        }
    }
    let srcq = srcq_check(sys, x, v, &lam, tol)?;
    let uniqueness = match (srcq.verdict, others.first()) {
        (_, Some(o)) => Certificate::fails((o - &lam).norm(), o, "multiplier re-seeding", tol)
            .note("a second multiplier was found")
            .note(format!("srcq verdict: {:?}", srcq.verdict)),
        (Verdict::Holds, None) => srcq.clone(),
        (_, None) => Certificate {
            verdict: Verdict::Inconclusive,
            ..srcq.clone()
        }
        .note("SRCQ not certified and no second multiplier found"),
    };
    Ok(MultiplierSolveResult {
        membership: Certificate::holds(ra.max(rc), METHOD, tol).with_witness(&lam),
        lambda: lam,
        affine_residual: ra,
        cone_residual: rc,
        uniqueness,
        others,
    })
}

const ASSUMED_SUBREG: &str = "assumed: metric subregularity of x ↦ g(x) − K at x";

/// SRCQ at `x` for `λ`: `Ker ∇g(x) ∩ T_{N_K(g(x))}(λ) = {0}`, equivalently
/// isolated calmness of `M_x` at `v` for `λ`.
pub fn srcq_check(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    lambda: &AmbientVec,
    tol: &Tol,
) -> Result<Certificate> {
    require_multiplier(sys, x, v, lambda, tol)?;
    let y = project(sys.cone(), &sys.value(x))?;
    let ker = kernel_basis(&sys.jacobian(x).transpose(), tol.zero);
    let c = tangent_of_normal(sys.cone(), &y, lambda, tol)?;
    let mut cert = subspace_cone_trivial(&ker, &c, tol);
    cert.method = format!("SRCQ: Ker ∇g ∩ T_N(λ) = {{0}} by {}", cert.method);
    let reading = match cert.verdict {
        Verdict::Holds => "checked: SRCQ holds; M_x is isolated calm at v for λ",
        Verdict::Fails => "checked: SRCQ fails; M_x is not isolated calm at v for λ",
        Verdict::Inconclusive => "checked: SRCQ undecided",
    };
    Ok(cert.note(reading).note(ASSUMED_SUBREG))
}

/// Nondegeneracy `g′(x)X + lin T_K(g(x)) = Y` by a rank test.
pub fn nondegeneracy_check(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    tol: &Tol,
) -> Result<Certificate> {
    const METHOD: &str = "nondegeneracy: rank of [g′(x) | lin T_K(g(x))]";
    let y = feasible_value(sys, x, tol)?;
    let t = tangent_cone(sys.cone(), &y, tol)?;
    let lin = t
        .lineality_basis()
        .unwrap_or_else(|| DMatrix::zeros(y.len(), 0));
    let j = sys.jacobian(x);
    let m = y.len();
    let mut stacked = DMatrix::zeros(m, j.ncols() + lin.ncols());
    stacked.view_mut((0, 0), (m, j.ncols())).copy_from(&j);
    stacked
        .view_mut((0, j.ncols()), (m, lin.ncols()))
        .copy_from(&lin);
    let r = range_basis(&stacked, tol.zero).ncols();
    // Ker ∇g(x) ∩ (lin T)⊥ is the orthogonal complement of the stacked range.
    let perp = kernel_basis(&stacked.transpose(), tol.zero);
    let cert = if r == m {
        Certificate::holds(0.0, METHOD, tol)
    } else {
        let w = perp.column(0).into_owned();
        let resid = (j.transpose() * &w).norm() + (lin.transpose() * &w).norm();
        Certificate::fails(resid, &w, METHOD, tol)
            .note("witness spans part of Ker ∇g(x) ∩ [lin T_K(g(x))]⊥")
    };
    Ok(cert.note(format!("rank {r} of {m}")))
}

/// Strict complementarity: some multiplier lies in `ri N_K(g(x))`. `hints`
/// are candidate multipliers checked first.
pub fn strict_complementarity_check(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    hints: &[AmbientVec],
    tol: &Tol,
) -> Result<Certificate> {
    const METHOD: &str = "strict complementarity: multiplier search in ri N_K(g(x))";
    let y = feasible_value(sys, x, tol)?;
    let solved = multiplier_solve(sys, x, v, tol)?;
    if solved.membership.verdict != Verdict::Holds {
        return Err(ConeError::NotMultiplier {
            residual: solved.affine_residual.max(solved.cone_residual),
        });
    }
    let k = sys.cone();
    let mut candidates: Vec<AmbientVec> = Vec::new();
    for h in hints {
        if require_multiplier(sys, x, v, h, tol).is_ok() {
            candidates.push(h.clone());
        }
    }
    candidates.push(solved.lambda.clone());
    candidates.extend(solved.others.iter().cloned());
    // Push into the relative interior: λ ∈ m·c + N_K(y) with c ∈ ri N_K(y).
    let search = MultiplierSearch::new(sys, x, v, tol)?;
    if let Some(c) = search.normal.ri_point() {
        for m in [1.0, 0.1, 0.01, 1e-3] {
            let shift = &c * m;
            let out = dykstra(
                &solved.lambda,
                |l| search.affine.project(l),
                |l| &shift + search.normal.project(&(l - &shift)),
                tol,
            );
            let lam = out.point;
            let (ra, rc) = (search.affine.residual(&lam), search.normal.dist(&lam));
            if search.accept(&lam, ra, rc, tol) {
                candidates.push(lam);
            }
        }
    }
    for lam in &candidates {
        if ri_normal_contains(k, &y, lam, tol)? {
            return Ok(Certificate::holds(0.0, METHOD, tol).with_witness(lam));
        }
    }
    if solved.uniqueness.verdict == Verdict::Holds {
        return Ok(Certificate::fails(0.0, &solved.lambda, METHOD, tol)
            .note("the multiplier set is a singleton and its member is not in ri N_K(g(x))"));
    }
    Ok(Certificate::inconclusive(f64::NAN, METHOD, tol)
        .note(format!("{} candidates tried", candidates.len())))
}

/// `d ∈ C_Γ(x,v)`, read as `g′(x)d ∈ C_K(g(x), λ)`.
pub fn critical_cone_gamma_contains(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    lambda: &AmbientVec,
    d: &DVector<f64>,
    tol: &Tol,
) -> Result<bool> {
    require_multiplier(sys, x, v, lambda, tol)?;
    check_x(sys, d)?;
    let y = project(sys.cone(), &sys.value(x))?;
    let c = critical_cone(sys.cone(), &y, lambda, tol)?;
    Ok(c.contains(&sys.jac_apply(x, d), tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    A,
    B,
    Both,
}

struct GderivSetup {
    y: AmbientVec,
    jt: DMatrix<f64>,
    jd: AmbientVec,
    /// `w − ∇²⟨λ,g⟩(x)d`.
    rhs: DVector<f64>,
}

fn gderiv_setup(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    lambda: &AmbientVec,
    d: &DVector<f64>,
    w: &DVector<f64>,
    tol: &Tol,
) -> Result<GderivSetup> {
    require_multiplier(sys, x, v, lambda, tol)?;
    check_x(sys, d)?;
    check_x(sys, w)?;
    let y = project(sys.cone(), &sys.value(x))?;
    Ok(GderivSetup {
        jt: sys.jacobian(x).transpose(),
        jd: sys.jac_apply(x, d),
        rhs: w - sys.hess_apply(x, lambda, d),
        y,
    })
}

fn critical_violation(
    s: &GderivSetup,
    k: &ConeDesc,
    lambda: &AmbientVec,
    d: &DVector<f64>,
    method: &str,
    tol: &Tol,
) -> Result<Option<Certificate>> {
    let c = critical_cone(k, &s.y, lambda, tol)?;
    let dist = c.dist(&s.jd);
    if dist > tol.scaled(s.jd.norm()) {
        return Ok(Some(
            Certificate::fails(dist, d, method, tol)
                .note("critical cone violation: g′(x)d ∉ C_K(g(x),λ)"),
        ));
    }
    Ok(None)
}

/// Route A: `w − ∇²⟨λ,g⟩(x)d − ½∇g(x)∇Υ(g′(x)d) ∈ ∇g(x) N_{C_K}(g′(x)d)`.
pub fn ngamma_route_a(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    lambda: &AmbientVec,
    d: &DVector<f64>,
    w: &DVector<f64>,
    tol: &Tol,
) -> Result<Certificate> {
    const METHOD: &str = "route A: normal cone of the critical cone (Dykstra)";
    let s = gderiv_setup(sys, x, v, lambda, d, w, tol)?;
    let k = sys.cone();
    if let Some(c) = critical_violation(&s, k, lambda, d, METHOD, tol)? {
        return Ok(c);
    }
    let gp = GraphPoint {
        y: s.y.clone(),
        lambda: lambda.clone(),
        z: &s.y + lambda,
    };
    let (_, grad) = sigma_parts(k, &gp, &s.jd, tol)?;
    let r = &s.rhs - &s.jt * &grad * 0.5;
    let c = critical_cone(k, &s.y, lambda, tol)?;
    // The face at g′(x)d is read at membership resolution, the accuracy to
    // which g′(x)d ∈ C_K was checked.
    let nc = normal_of_critical(
        &c,
        &s.jd,
        &Tol {
            zero: tol.membership.max(tol.zero),
            ..*tol
        },
    )?;
    let affine = AffineSet::new(s.jt.clone(), r.clone(), tol.zero);
    let scale = 1.0 + r.norm();
    let incons = affine.inconsistency();
    if incons > tol.scaled(scale) {
        return Ok(Certificate::fails(incons, w, METHOD, tol)
            .note("right-hand side outside the range of ∇g(x)"));
    }
    let out = dykstra(
        &affine.least_norm(),
        |xi| affine.project(xi),
        |xi| nc.project(xi),
        tol,
    );
    let xi = out.point.clone();
    let res = affine.residual(&xi);
    let lim = tol.scaled(scale + xi.norm() * s.jt.norm().max(1.0));
    if res <= lim {
        return Ok(Certificate::holds(res, METHOD, tol).with_witness(&xi));
    }
    if let Some(p) = face_polish_iter(&nc, &affine, &xi, tol) {
        let pres = affine.residual(&p);
        if pres <= tol.scaled(scale + p.norm() * s.jt.norm().max(1.0)) && nc.contains(&p, tol) {
            return Ok(Certificate::holds(pres, METHOD, tol)
                .with_witness(&p)
                .note("face polish"));
        }
    }
    if let Some(bound) = farkas_bound(&nc, &affine, &(&out.other - &out.point), tol) {
        // Any solution would be of norm beyond 1/tol.membership relative to the data.
        if bound * tol.membership > scale {
            return Ok(Certificate::fails(res, w, METHOD, tol).note(format!(
                "Farkas separator: solutions would need norm ≥ {bound:.3e}"
            )));
        }
    }
    Ok(if (out.converged || out.stalled) && res > 100.0 * lim {
        Certificate::fails(res, w, METHOD, tol)
            .note("affine fiber misses the normal cone of the critical cone")
    } else {
        Certificate::inconclusive(res, METHOD, tol)
            .note(format!("{} Dykstra iterations", out.iterations))
    })
}

/// Route B: search `μ` with `∇g(x)μ = w − ∇²⟨λ,g⟩(x)d` and
/// `g′(x)d = Π′_K(g(x)+λ; g′(x)d + μ)`, by the fixed-point iteration
/// `μ ← P(μ + g′(x)d − Π′_K(z; g′(x)d + μ))` with `P` the projection onto the
/// affine fiber; the result is verified with [`dnk_contains`].
pub fn ngamma_route_b(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    lambda: &AmbientVec,
    d: &DVector<f64>,
    w: &DVector<f64>,
    tol: &Tol,
) -> Result<Certificate> {
    const METHOD: &str = "route B: projection-derivative fixed point + graph-derivative check";
    let s = gderiv_setup(sys, x, v, lambda, d, w, tol)?;
    let k = sys.cone();
    if let Some(c) = critical_violation(&s, k, lambda, d, METHOD, tol)? {
        return Ok(c);
    }
    let gp = GraphPoint::new(k, s.y.clone(), lambda.clone(), tol)?;
    let affine = AffineSet::new(s.jt.clone(), s.rhs.clone(), tol.zero);
    let scale = 1.0 + s.rhs.norm();
    let incons = affine.inconsistency();
    if incons > tol.scaled(scale) {
        return Ok(Certificate::fails(incons, w, METHOD, tol)
            .note("right-hand side outside the range of ∇g(x)"));
    }
    let mut mu = affine.least_norm();
    let stop = tol.zero * scale;
    let mut converged = false;
    for _ in 0..tol.max_iter {
        let u = &s.jd + &mu;
        let next = affine.project(&(&u - proj_dir_deriv(k, &gp.z, &u, tol)?));
        let moved = (&next - &mu).norm();
        mu = next;
        if moved < stop {
            converged = true;
            break;
        }
    }
    let check = dnk_contains(k, &gp, &s.jd, &mu, tol);
    let res = (&s.jd - proj_dir_deriv(k, &gp.z, &(&s.jd + &mu), tol)?).norm();
    Ok(match check.verdict {
        Verdict::Holds => Certificate::holds(res, METHOD, tol).with_witness(&mu),
        // A fixed point near the graph is not evidence of a gap.
        Verdict::Fails if converged && res > 100.0 * tol.scaled(scale) => {
            Certificate::fails(res, w, METHOD, tol).note("fixed point outside DN_K(g(x)|λ)(g′(x)d)")
        }
        _ => Certificate::inconclusive(res, METHOD, tol).notes_from(&check),
    })
}

impl Certificate {
    fn notes_from(mut self, other: &Certificate) -> Certificate {
        self.notes.extend(other.notes.iter().cloned());
        self
    }
}

/// Decides `(d, w) ∈ T_{gph N_Γ}(x, v)` through
/// `w ∈ ∇²⟨λ,g⟩(x)d + ∇g(x) DN_K(g(x)|λ)(g′(x)d)`.
#[allow(clippy::too_many_arguments)]
pub fn ngamma_graph_deriv_contains(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    lambda: &AmbientVec,
    d: &DVector<f64>,
    w: &DVector<f64>,
    route: Route,
    tol: &Tol,
) -> Result<Certificate> {
    let srcq = srcq_check(sys, x, v, lambda, tol)?;
    let srcq_note = match srcq.verdict {
        Verdict::Holds => "checked: SRCQ holds at (x, v, λ)".to_string(),
        other => {
            format!("hypothesis unmet: SRCQ verdict {other:?}; the representation may be strict")
        }
    };
    let cert = match route {
        Route::A => ngamma_route_a(sys, x, v, lambda, d, w, tol)?,
        Route::B => ngamma_route_b(sys, x, v, lambda, d, w, tol)?,
        Route::Both => {
            let a = ngamma_route_a(sys, x, v, lambda, d, w, tol)?;
            let b = ngamma_route_b(sys, x, v, lambda, d, w, tol)?;
            let summary = format!(
                "route A: {:?} (residual {:.3e}); route B: {:?} (residual {:.3e})",
                a.verdict, a.residual, b.verdict, b.residual
            );
            if a.verdict == b.verdict {
                a.note(summary)
            } else if b.verdict == Verdict::Inconclusive {
                a.note(summary).note("route B undecided")
            } else if a.verdict == Verdict::Inconclusive {
                b.note(summary).note("route A undecided")
            } else {
                Certificate {
                    verdict: Verdict::Inconclusive,
                    ..a
                }
                .note(summary)
                .note("routes disagree")
            }
        }
    };
    Ok(cert.note(srcq_note).note(ASSUMED_SUBREG))
}
