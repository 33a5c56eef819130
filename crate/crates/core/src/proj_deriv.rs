//! Directional derivatives of the projection onto `K`, the curvature term
//! `Υ(h) = −σ(λ, T²_K(y,h))`, and membership in the graphical derivative of
//! the normal-cone map.

use nalgebra::{DMatrix, DVector};

use crate::cone_core::{
    block_norm, negate, project, scaled, soc_normal, soc_project, AmbientVec, ConeDesc,
    PrimitiveCone, Sign, SocFace, Tol,
};
use crate::cone_geometry::{critical_cone, Certificate, Verdict};
use crate::error::{ConeError, Result};
use crate::linalg::{smat, svec, sym_eigen, zero_threshold};

/// A point `(y, λ)` of `gph N_K` together with `z = y + λ`, so `y = Π_K(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPoint {
    pub y: AmbientVec,
    pub lambda: AmbientVec,
    pub z: AmbientVec,
}

impl GraphPoint {
    /// Validates `y = Π_K(y + λ)` and complementarity.
    pub fn new(k: &ConeDesc, y: AmbientVec, lambda: AmbientVec, tol: &Tol) -> Result<GraphPoint> {
        k.check_dim(&y)?;
        k.check_dim(&lambda)?;
        let z = &y + &lambda;
        let res = (project(k, &z)? - &y).norm();
        if res > tol.scaled(z.norm()) {
            return Err(ConeError::NotOnGraph { residual: res });
        }
        Ok(GraphPoint { y, lambda, z })
    }

    /// `(Π_K(z), z − Π_K(z))`.
    pub fn from_z(k: &ConeDesc, z: AmbientVec) -> Result<GraphPoint> {
        let y = project(k, &z)?;
        let lambda = &z - &y;
        Ok(GraphPoint { y, lambda, z })
    }

    pub fn complementarity(&self) -> f64 {
        self.y.dot(&self.lambda).abs()
    }
}

fn scalar_deriv(z: f64, h: f64, sign: Sign, thr: f64) -> f64 {
    let s = sign.factor();
    let (zs, hs) = (z * s, h * s);
    let out = if zs > thr {
        hs
    } else if zs < -thr {
        0.0
    } else {
        hs.max(0.0)
    };
    out * s
}

fn soc_deriv(z: &[f64], h: &[f64], thr: f64) -> Vec<f64> {
    let m = z.len();
    if m == 1 {
        return vec![scalar_deriv(z[0], h[0], Sign::Plus, thr)];
    }
    let hv = DVector::from_column_slice(h);
    let (x0, r) = (z[0], block_norm(&z[1..]));
    let out = if block_norm(z) <= thr {
        return soc_project(h);
    } else if x0 - r > thr {
        hv
    } else if x0 + r < -thr {
        DVector::zeros(m)
    } else if (x0 - r).abs() <= thr {
        let n = soc_normal(&z[1..], r);
        let s = hv.dot(&n).max(0.0);
        hv - n * s
    } else if (x0 + r).abs() <= thr {
        let mut u = soc_normal(&z[1..], r);
        u[0] = -u[0];
        &u * hv.dot(&u).max(0.0)
    } else {
        let w = DVector::from_fn(m - 1, |i, _| z[i + 1] / r);
        let hb = hv.rows(1, m - 1).into_owned();
        let q = x0 / r;
        let mut out = DVector::zeros(m);
        out[0] = 0.5 * (hv[0] + w.dot(&hb));
        let tail = &w * hv[0] + &hb * (1.0 + q) - &w * (q * w.dot(&hb));
        out.rows_mut(1, m - 1).copy_from(&(tail * 0.5));
        out
    };
    out.as_slice().to_vec()
}

fn psd_deriv_plus(zm: &DMatrix<f64>, hm: &DMatrix<f64>, zero_tol: f64) -> Result<DMatrix<f64>> {
    let n = zm.nrows();
    let (mu, p) = sym_eigen(zm)?;
    let thr = zero_threshold(zero_tol, zm.norm());
    let ht = p.transpose() * hm * &p;
    let beta: Vec<usize> = (0..n).filter(|&i| mu[i].abs() <= thr).collect();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (mu[i], mu[j]);
            let coef = if a > thr && b > thr {
                1.0
            } else if a < -thr && b < -thr {
                0.0
            } else if a > thr && b < -thr {
                a / (a - b)
            } else if b > thr && a < -thr {
                b / (b - a)
            } else if a > thr || b > thr {
                1.0
            } else {
                // β–γ and β–β (the latter handled below).
                0.0
            };
            out[(i, j)] = coef * ht[(i, j)];
        }
    }
    if !beta.is_empty() {
        let hb = DMatrix::from_fn(beta.len(), beta.len(), |i, j| ht[(beta[i], beta[j])]);
        let pb = crate::cone_core::psd_project(&hb, Sign::Plus)?;
        for (i, &bi) in beta.iter().enumerate() {
            for (j, &bj) in beta.iter().enumerate() {
                out[(bi, bj)] = pb[(i, j)];
            }
        }
    }
    Ok(&p * out * p.transpose())
}

/// `Π′_K(z; h)`, block by block.
pub fn proj_dir_deriv(
    k: &ConeDesc,
    z: &AmbientVec,
    h: &AmbientVec,
    tol: &Tol,
) -> Result<AmbientVec> {
    k.check_dim(z)?;
    k.check_dim(h)?;
    let mut out = DVector::zeros(z.len());
    for b in k.blocks() {
        let zb = &z.as_slice()[b.offset..b.offset + b.len];
        let hb = &h.as_slice()[b.offset..b.offset + b.len];
        let thr = zero_threshold(tol.zero, block_norm(zb));
        let piece: Vec<f64> = match b.cone {
            PrimitiveCone::Orthant { sign, .. } => zb
                .iter()
                .zip(hb)
                .map(|(&z, &h)| scalar_deriv(z, h, sign, thr))
                .collect(),
            PrimitiveCone::Zero { dim } => vec![0.0; dim],
            PrimitiveCone::Free { .. } => hb.to_vec(),
            PrimitiveCone::Soc {
                sign: Sign::Plus, ..
            } => soc_deriv(zb, hb, thr),
            PrimitiveCone::Soc {
                sign: Sign::Minus, ..
            } => soc_deriv(&negate(zb), &negate(hb), thr)
                .into_iter()
                .map(|v| -v)
                .collect(),
            PrimitiveCone::Psd { order, sign } => {
                let s = sign.factor();
                let zm = smat(zb, order) * s;
                let hm = smat(hb, order) * s;
                let d = psd_deriv_plus(&zm, &hm, tol.zero)? * s;
                svec(&d).as_slice().to_vec()
            }
        };
        out.as_mut_slice()[b.offset..b.offset + b.len].copy_from_slice(&piece);
    }
    Ok(out)
}

/// Pseudo-inverse of a symmetric matrix over eigenvalues with `|μ| > thr`.
fn sym_pinv(m: &DMatrix<f64>, zero_tol: f64) -> Result<DMatrix<f64>> {
    let (mu, p) = sym_eigen(m)?;
    let thr = zero_threshold(zero_tol, m.norm());
    let inv = mu.map(|v| if v.abs() > thr { 1.0 / v } else { 0.0 });
    Ok(&p * DMatrix::from_diagonal(&inv) * p.transpose())
}

/// Per-block quadratic data of `Υ`: value and gradient at `h`, no
/// critical-cone check.
pub(crate) fn sigma_parts(
    k: &ConeDesc,
    gp: &GraphPoint,
    h: &AmbientVec,
    tol: &Tol,
) -> Result<(f64, AmbientVec)> {
    let mut val = 0.0;
    let mut grad = DVector::zeros(h.len());
    for b in k.blocks() {
        let r = b.offset..b.offset + b.len;
        let (yb, lb, hb) = (
            &gp.y.as_slice()[r.clone()],
            &gp.lambda.as_slice()[r.clone()],
            &h.as_slice()[r.clone()],
        );
        match b.cone {
            PrimitiveCone::Psd { order, .. } => {
                let ym = smat(yb, order);
                let lm = smat(lb, order);
                let hm = smat(hb, order);
                let yp = sym_pinv(&ym, tol.zero)?;
                val += -2.0 * (&lm * &hm * &yp * &hm).trace();
                let g = -2.0 * (&lm * &hm * &yp + &yp * &hm * &lm);
                grad.rows_mut(b.offset, b.len).copy_from(&svec(&g));
            }
            PrimitiveCone::Soc { dim, sign } if dim > 1 => {
                // Υ is unchanged under (y, λ) → (−y, −λ), so only the face
                // classification sees the sign.
                let thr = zero_threshold(tol.zero, block_norm(yb));
                if let SocFace::Boundary(_) = SocFace::classify(&scaled(yb, sign), thr) {
                    let rr = block_norm(&yb[1..]);
                    let c = -lb[0] / yb[0];
                    let w = DVector::from_fn(dim - 1, |i, _| yb[i + 1] / rr);
                    let hbar = DVector::from_fn(dim - 1, |i, _| hb[i + 1]);
                    let proj = &hbar - &w * w.dot(&hbar);
                    val += c * proj.norm_squared();
                    grad.rows_mut(b.offset + 1, dim - 1)
                        .copy_from(&(proj * (2.0 * c)));
                }
            }
            _ => {}
        }
    }
    Ok((val, grad))
}

fn require_critical(k: &ConeDesc, gp: &GraphPoint, h: &AmbientVec, tol: &Tol) -> Result<()> {
    k.check_dim(h)?;
    let c = critical_cone(k, &gp.y, &gp.lambda, tol)?;
    let dist = c.dist(h);
    if dist > tol.scaled(h.norm()) {
        return Err(ConeError::NotCritical { dist });
    }
    Ok(())
}

/// `Υ(h) = −σ(λ, T²_K(y,h))` for `h` in the critical cone. Zero on polyhedral
/// blocks, `−2⟨Λ, H Y† H⟩` on semidefinite blocks and
/// `(−λ₀/y₀)(‖h̄‖² − (w̄ᵀh̄)²)` at nonzero boundary points of a second-order
/// cone.
pub fn sigma_term(k: &ConeDesc, gp: &GraphPoint, h: &AmbientVec, tol: &Tol) -> Result<f64> {
    require_critical(k, gp, h, tol)?;
    Ok(sigma_parts(k, gp, h, tol)?.0)
}

/// Gradient of the quadratic form `Υ` at `h`.
pub fn sigma_grad(k: &ConeDesc, gp: &GraphPoint, h: &AmbientVec, tol: &Tol) -> Result<AmbientVec> {
    require_critical(k, gp, h, tol)?;
    Ok(sigma_parts(k, gp, h, tol)?.1)
}

/// Decides `Δλ ∈ DN_K(y|λ)(Δy)` by the projection-derivative identity (route
/// a) and by the critical-cone description (route b), and reports whether the
/// two agree.
pub fn dnk_contains(
    k: &ConeDesc,
    gp: &GraphPoint,
    dy: &AmbientVec,
    dl: &AmbientVec,
    tol: &Tol,
) -> Certificate {
    const METHOD: &str =
        "graphical derivative of N_K: projection identity + critical-cone conditions";
    let scale = 1.0 + dy.norm() + dl.norm();
    let route_a = proj_dir_deriv(k, &gp.z, &(dy + dl), tol).map(|p| (dy - p).norm());
    let route_b = (|| -> Result<(f64, f64, f64, f64)> {
        let c = critical_cone(k, &gp.y, &gp.lambda, tol)?;
        let (ups, grad) = sigma_parts(k, gp, dy, tol)?;
        let c1 = c.dist(dy);
        let shifted = dl - &grad * 0.5;
        let c2 = c.polar().dist(&shifted);
        let c3 = (dy.dot(dl) - ups).abs();
        let lim = (
            tol.scaled(dy.norm()),
            tol.scaled(shifted.norm()),
            tol.membership * (1.0 + dy.norm() * dl.norm()),
        );
        let worst = (c1 / lim.0).max(c2 / lim.1).max(c3 / lim.2);
        Ok((c1, c2, c3, worst))
    })();
    let (ra, (c1, c2, c3, worst)) = match (route_a, route_b) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            return Certificate::inconclusive(f64::NAN, METHOD, tol)
                .note(format!("input error: {e}"));
        }
    };
    let a_ok = ra <= tol.membership * scale;
    let b_ok = worst <= 1.0;
    let notes = [
        format!("route a residual {ra:.3e}"),
        format!("route b residuals: critical {c1:.3e}, polar {c2:.3e}, complementarity {c3:.3e}"),
    ];
    let witness = {
        let mut w = DVector::zeros(dy.len() + dl.len());
        w.rows_mut(0, dy.len()).copy_from(dy);
        w.rows_mut(dy.len(), dl.len()).copy_from(dl);
        w
    };
    let residual = ra.max(c1).max(c2).max(c3);
    let cert = match (a_ok, b_ok) {
        (true, true) => Certificate::holds(residual, METHOD, tol),
        (false, false) => {
            let mut cert = Certificate::fails(residual, &witness, METHOD, tol);
            if c1 > tol.scaled(dy.norm()) {
                cert = cert.note("condition 1 violated: Δy outside the critical cone");
            }
            cert
        }
        _ => Certificate::new(Verdict::Inconclusive, residual, Some(&witness), METHOD, tol)
            .note(format!("routes disagree: a={a_ok}, b={b_ok}")),
    };
    notes.into_iter().fold(cert, |c, n| c.note(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone_core::tangent_cone;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn m2(a: f64, b: f64, c: f64) -> DVector<f64> {
        svec(&DMatrix::from_row_slice(2, 2, &[a, b, b, c]))
    }

    fn psd2() -> ConeDesc {
        ConeDesc::new(vec![PrimitiveCone::Psd {
            order: 2,
            sign: Sign::Plus,
        }])
        .unwrap()
    }

    #[test]
    fn interior_and_exterior_scalar() {
        let tol = Tol::default();
        let k = ConeDesc::new(vec![PrimitiveCone::Orthant {
            dim: 1,
            sign: Sign::Plus,
        }])
        .unwrap();
        assert_eq!(
            proj_dir_deriv(&k, &v(&[2.0]), &v(&[-3.0]), &tol).unwrap()[0],
            -3.0
        );
        assert_eq!(
            proj_dir_deriv(&k, &v(&[-1.0]), &v(&[5.0]), &tol).unwrap()[0],
            0.0
        );
        assert_eq!(
            proj_dir_deriv(&k, &v(&[0.0]), &v(&[-5.0]), &tol).unwrap()[0],
            0.0
        );
    }

    #[test]
    fn psd_divided_difference() {
        let tol = Tol::default();
        let d = proj_dir_deriv(&psd2(), &m2(1.0, 0.0, -1.0), &m2(0.0, 1.0, 0.0), &tol).unwrap();
        assert!((d - m2(0.0, 0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn soc_interior_is_identity() {
        let tol = Tol::default();
        let k = ConeDesc::new(vec![PrimitiveCone::Soc {
            dim: 3,
            sign: Sign::Plus,
        }])
        .unwrap();
        let h = v(&[0.3, -1.0, 2.0]);
        let d = proj_dir_deriv(&k, &v(&[2.0, 0.5, 0.5]), &h, &tol).unwrap();
        assert!((d - h).norm() < 1e-15);
    }

    #[test]
    fn sigma_reference_instance() {
        let tol = Tol::default();
        let k = psd2();
        let gp = GraphPoint::new(&k, m2(1.0, 0.0, 0.0), m2(0.0, 0.0, -1.0), &tol).unwrap();
        let h = m2(0.0, 1.0, 0.0);
        assert!((sigma_term(&k, &gp, &h, &tol).unwrap() - 2.0).abs() < 1e-12);
        let g = sigma_grad(&k, &gp, &h, &tol).unwrap();
        assert!((g.dot(&h) - 4.0).abs() < 1e-12);
        // Half the gradient is itself a graph-derivative member.
        let cert = dnk_contains(&k, &gp, &h, &(&g * 0.5), &tol);
        assert_eq!(cert.verdict, Verdict::Holds, "{cert:?}");
    }

    #[test]
    fn sigma_zero_multiplier_and_polyhedral() {
        let tol = Tol::default();
        let k = psd2();
        let gp = GraphPoint::new(&k, m2(1.0, 0.0, 0.0), DVector::zeros(3), &tol).unwrap();
        assert_eq!(sigma_term(&k, &gp, &m2(0.0, 1.0, 4.0), &tol).unwrap(), 0.0);
        let ko = ConeDesc::new(vec![PrimitiveCone::Orthant {
            dim: 2,
            sign: Sign::Minus,
        }])
        .unwrap();
        let gp = GraphPoint::new(&ko, v(&[0.0, -1.0]), v(&[2.0, 0.0]), &tol).unwrap();
        assert_eq!(sigma_term(&ko, &gp, &v(&[0.0, 3.0]), &tol).unwrap(), 0.0);
    }

    #[test]
    fn sigma_rejects_noncritical() {
        let tol = Tol::default();
        let k = psd2();
        let gp = GraphPoint::new(&k, m2(1.0, 0.0, 0.0), m2(0.0, 0.0, -1.0), &tol).unwrap();
        assert!(matches!(
            sigma_term(&k, &gp, &m2(0.0, 0.0, 1.0), &tol),
            Err(ConeError::NotCritical { .. })
        ));
    }

    #[test]
    fn zero_direction_with_tangent_multiplier_holds() {
        let tol = Tol::default();
        let k = psd2();
        let gp = GraphPoint::new(&k, m2(1.0, 0.0, 0.0), DVector::zeros(3), &tol).unwrap();
        // T_{N_K(y)}(0) = N_K(y) = {diag(0, c) : c ≤ 0}.
        let cert = dnk_contains(&k, &gp, &DVector::zeros(3), &m2(0.0, 0.0, -2.0), &tol);
        assert_eq!(cert.verdict, Verdict::Holds);
    }

    #[test]
    fn noncritical_direction_fails() {
        let tol = Tol::default();
        let k = ConeDesc::new(vec![PrimitiveCone::Orthant {
            dim: 1,
            sign: Sign::Plus,
        }])
        .unwrap();
        let gp = GraphPoint::new(&k, v(&[0.0]), v(&[0.0]), &tol).unwrap();
        let cert = dnk_contains(&k, &gp, &v(&[-1.0]), &v(&[0.0]), &tol);
        assert_eq!(cert.verdict, Verdict::Fails);
        assert!(cert.notes.iter().any(|n| n.contains("condition 1")));
    }

    #[test]
    fn tangent_projection_at_boundary() {
        let tol = Tol::default();
        let k = ConeDesc::new(vec![PrimitiveCone::Soc {
            dim: 3,
            sign: Sign::Plus,
        }])
        .unwrap();
        let y = v(&[1.0, 1.0, 0.0]);
        let h = v(&[-1.0, 2.0, 1.0]);
        let d = proj_dir_deriv(&k, &y, &h, &tol).unwrap();
        let t = tangent_cone(&k, &y, &tol).unwrap();
        assert!((d - t.project(&h)).norm() < 1e-12);
    }
}
