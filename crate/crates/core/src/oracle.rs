//! Brute-force validators. Nothing here calls the closed forms of
//! `proj_deriv`; everything is built from `Π_K` evaluations, first-order
//! cones and plain enumeration.

use nalgebra::{DMatrix, DVector};

use crate::cone_core::{normal_cone, project, tangent_cone, AmbientVec, ConeDesc, Tol};
use crate::constraint_system::ConstraintSystem;
use crate::error::{ConeError, Result};
use crate::linalg::{kernel_basis, range_basis, rank};
use crate::proj_deriv::GraphPoint;

/// Step sizes for finite differences and expansions.
pub const DEFAULT_TGRID: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

/// Largest ambient dimension accepted by [`polyhedral_trivial_exact`].
pub const POLY_DIM_CAP: usize = 8;

/// Extrapolated value with an error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
}

/// `(Π_K(z), z − Π_K(z))`, checked against the graph invariants.
pub fn graph_sample(k: &ConeDesc, z: &AmbientVec, tol: &Tol) -> Result<GraphPoint> {
    let gp = GraphPoint::from_z(k, z.clone())?;
    GraphPoint::new(k, gp.y, gp.lambda, tol)
}

/// Order-1 Richardson extrapolation over a decreasing step grid. Among the
/// consecutive extrapolants the most stable one is returned; the error is
/// the gap to its predecessor.
fn richardson(
    tgrid: &[f64],
    f: impl Fn(f64) -> Result<DVector<f64>>,
) -> Result<Estimate<DVector<f64>>> {
    if tgrid.len() < 2 {
        return Err(ConeError::Invalid("tgrid needs at least two steps".into()));
    }
    let raw = tgrid.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
    if raw.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(ConeError::NonFinite);
    }
    let ext: Vec<DVector<f64>> = (0..raw.len() - 1)
        .map(|i| {
            let (t1, t2) = (tgrid[i], tgrid[i + 1]);
            (&raw[i + 1] * t1 - &raw[i] * t2) / (t1 - t2)
        })
        .collect();
    if ext.len() == 1 {
        return Ok(Estimate {
            error: (&raw[1] - &raw[0]).norm(),
            value: ext[0].clone(),
        });
    }
    let mut best = Estimate {
        value: ext[1].clone(),
        error: (&ext[1] - &ext[0]).norm(),
    };
    for i in 2..ext.len() {
        let e = (&ext[i] - &ext[i - 1]).norm();
        if e < best.error {
            best = Estimate {
                value: ext[i].clone(),
                error: e,
            };
        }
    }
    Ok(best)
}

/// Richardson-extrapolated `(Π_K(z+th) − Π_K(z))/t`.
pub fn fd_proj_deriv(
    k: &ConeDesc,
    z: &AmbientVec,
    h: &AmbientVec,
    tgrid: &[f64],
) -> Result<Estimate<AmbientVec>> {
    k.check_dim(z)?;
    k.check_dim(h)?;
    let base = project(k, z)?;
    richardson(tgrid, |t| Ok((project(k, &(z + h * t))? - &base) / t))
}

/// `σ(λ, T²_K(y,h))` measured as the limit of
/// `2⟨λ, Π_K(y+th) − y − tΠ′_K(y;h)⟩ / t²`, with `Π′_K(y;h)` the projection
/// of `h` onto `T_K(y)`.
pub fn sigma_expansion(
    k: &ConeDesc,
    gp: &GraphPoint,
    h: &AmbientVec,
    tgrid: &[f64],
    tol: &Tol,
) -> Result<Estimate<f64>> {
    let d1 = tangent_cone(k, &gp.y, tol)?.project(h);
    let est = richardson(tgrid, |t| {
        let second = project(k, &(&gp.y + h * t))? - &gp.y - &d1 * t;
        Ok(DVector::from_element(
            1,
            2.0 * gp.lambda.dot(&second) / (t * t),
        ))
    })?;
    Ok(Estimate {
        value: est.value[0],
        error: est.error,
    })
}

/// `‖(y+tΔy) − Π_K(y+tΔy+λ+tΔλ)‖ / t` for each step.
pub fn graph_tangent_residual(
    k: &ConeDesc,
    gp: &GraphPoint,
    dy: &AmbientVec,
    dl: &AmbientVec,
    tgrid: &[f64],
) -> Result<Vec<f64>> {
    k.check_dim(dy)?;
    k.check_dim(dl)?;
    tgrid
        .iter()
        .map(|&t| {
            let yt = &gp.y + dy * t;
            let zt = &yt + &gp.lambda + dl * t;
            Ok((yt - project(k, &zt)?).norm() / t)
        })
        .collect()
}

/// `min { ‖M λ − r‖ : λ ∈ C }` by accelerated projected gradient with
/// adaptive restart.
fn cone_least_squares(
    m: &DMatrix<f64>,
    r: &DVector<f64>,
    proj: impl Fn(&DVector<f64>) -> DVector<f64>,
    iters: usize,
) -> DVector<f64> {
    let lip = m.clone().svd(false, false).singular_values.max().powi(2);
    let n = m.ncols();
    if lip == 0.0 {
        return DVector::zeros(n);
    }
    let step = 1.0 / lip;
    let mut x = proj(&DVector::zeros(n));
    let mut yv = x.clone();
    let mut t = 1.0_f64;
    let mut last = f64::INFINITY;
    for _ in 0..iters {
        let grad = m.transpose() * (m * &yv - r);
        let xn = proj(&(&yv - grad * step));
        let val = (m * &xn - r).norm();
        if val > last {
            // restart momentum
            t = 1.0;
            yv = xn.clone();
        } else {
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            yv = &xn + (&xn - &x) * ((t - 1.0) / tn);
            t = tn;
        }
        last = val;
        x = xn;
    }
    x
}

/// Finite-step residual of `(x̄+td, v̄+tw)` against `gph N_Γ` with `x` frozen
/// at `x̄+td`: infeasibility `dist(g(x_t), K)` plus the best fit
/// `min_{λ ∈ N_K(Π_K g(x_t))} ‖∇g(x_t)λ − v_t‖`, both divided by `t`.
pub fn gamma_graph_residual(
    sys: &dyn ConstraintSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    d: &DVector<f64>,
    w: &DVector<f64>,
    tgrid: &[f64],
    tol: &Tol,
) -> Result<Vec<f64>> {
    let k = sys.cone();
    tgrid
        .iter()
        .map(|&t| {
            let xt = x + d * t;
            let vt = v + w * t;
            let a = sys.value(&xt);
            let y = project(k, &a)?;
            let infeas = (&a - &y).norm();
            let n = normal_cone(k, &y, tol)?;
            let jt = sys.jacobian(&xt).transpose();
            let lam = cone_least_squares(&jt, &vt, |l| n.project(l), 20_000);
            Ok((infeas + (&jt * lam - vt).norm()) / t)
        })
        .collect()
}

/// Extreme rays of the pointed cone `{y : M y ≥ 0}`, or a line of the cone
/// as `Err` when it is not pointed.
fn extreme_rays(
    m: &DMatrix<f64>,
    k: usize,
) -> std::result::Result<Vec<DVector<f64>>, DVector<f64>> {
    const EPS: f64 = 1e-10;
    if k == 0 {
        return Ok(Vec::new());
    }
    let lin = kernel_basis(m, EPS);
    if m.nrows() == 0 || lin.ncols() > 0 {
        let dir = if m.nrows() == 0 {
            DVector::from_fn(k, |i, _| if i == 0 { 1.0 } else { 0.0 })
        } else {
            lin.column(0).into_owned()
        };
        return Err(dir);
    }
    let feasible = |y: &DVector<f64>| (m * y).iter().all(|&v| v >= -EPS * m.norm().max(1.0));
    let mut rays = Vec::new();
    let rows = m.nrows();
    let need = k - 1;
    let mut idx: Vec<usize> = (0..need).collect();
    loop {
        let sub = DMatrix::from_fn(need, k, |i, j| m[(idx[i], j)]);
        let ker = if need == 0 {
            DMatrix::identity(k, k)
        } else {
            kernel_basis(&sub, EPS)
        };
        if ker.ncols() == 1 && (need == 0 || rank(&sub, EPS) == need) {
            let y = ker.column(0).into_owned();
            for cand in [y.clone(), -y] {
                if feasible(&cand) {
                    rays.push(cand);
                }
            }
        }
        // next combination
        let mut i = need;
        loop {
            if i == 0 {
                return Ok(rays);
            }
            i -= 1;
            if idx[i] < rows - need + i {
                idx[i] += 1;
                for j in i + 1..need {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
        if need == 0 {
            return Ok(rays);
        }
    }
}

fn check_cap(n: usize) -> Result<()> {
    if n > POLY_DIM_CAP {
        return Err(ConeError::DimensionCap {
            dim: n,
            cap: POLY_DIM_CAP,
        });
    }
    Ok(())
}

/// Exact decision of `L ∩ cone(G) = {0}` where the cone is generated by the
/// columns of `generators` and `L` is spanned by the columns of `l`.
pub fn polyhedral_trivial_exact(generators: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<bool> {
    let n = generators.nrows();
    check_cap(n)?;
    if l.nrows() != n {
        return Err(ConeError::DimensionMismatch {
            expected: n,
            got: l.nrows(),
        });
    }
    let q = range_basis(l, 1e-12);
    // Coefficients μ ≥ 0 with G μ ∈ L, i.e. (I − QQᵀ) G μ = 0.
    let perp = DMatrix::identity(n, n) - &q * q.transpose();
    let basis = kernel_basis(&(perp * generators), 1e-10);
    let k = basis.ncols();
    let scale = generators.norm().max(1.0);
    match extreme_rays(&basis, k) {
        Err(line) => Ok((generators * (&basis * line)).norm() <= 1e-9 * scale),
        Ok(rays) => Ok(rays
            .iter()
            .all(|r| (generators * (&basis * r)).norm() <= 1e-9 * scale)),
    }
}

/// Exact decision of `L ∩ {x : A x ≥ 0} = {0}`.
pub fn polyhedral_trivial_exact_ineq(a: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<bool> {
    check_cap(a.ncols())?;
    if l.nrows() != a.ncols() {
        return Err(ConeError::DimensionMismatch {
            expected: a.ncols(),
            got: l.nrows(),
        });
    }
    let q = range_basis(l, 1e-12);
    match extreme_rays(&(a * &q), q.ncols()) {
        Err(_) => Ok(false),
        Ok(rays) => Ok(rays.is_empty()),
    }
}
