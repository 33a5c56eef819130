use conestab::cone_core::normal_cone;
use conestab::constraint_system::{
    example1, example3, multiplier_solve, nondegeneracy_check, section32, srcq_check,
    strict_complementarity_check, ConstraintSystem,
};
use conestab::linalg::svec;
use conestab::stability::{
    example41, example41_multiplier, kkt_isolated_calm, kkt_lp, phi_residual,
    phi_subregularity_probe, section32_distance, section32_point, solution_map_isolated_calm,
    CalmOptions, KktProblem, PhiPoint,
};
use conestab::{Certificate, Tol, Verdict};
use nalgebra::{DMatrix, DVector};

use crate::commands::InputError;
use crate::report::{Entry, Report};

pub const NAMES: [&str; 6] = [
    "example1",
    "example2",
    "example3",
    "example41",
    "kkt_lp",
    "section32",
];

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// `(svec [[a,b],[b,c]]; tail)`.
fn psd_then(a: f64, b: f64, c: f64, tail: &[f64]) -> DVector<f64> {
    let m = svec(&DMatrix::from_row_slice(2, 2, &[a, b, b, c]));
    DVector::from_iterator(
        3 + tail.len(),
        m.iter().copied().chain(tail.iter().copied()),
    )
}

fn example1_xbar() -> DVector<f64> {
    v(&[-1.0, -1.0, 0.0])
}

pub fn run(name: &str, tol: &Tol, seed: u64) -> Result<Report, InputError> {
    let mut r = Report::new("repro", name, tol);
    match name {
        "example1" => {
            let s = example1();
            let x = example1_xbar();
            let y = s.value(&x);
            r.push(
                Entry::new(
                    "strict_complementarity",
                    strict_complementarity_check(&s, &x, &DVector::zeros(3), &[], tol)?,
                )
                .expect(Verdict::Fails),
            );
            // N_K(g(x̄)) = S²₋ × R₋.
            let n = normal_cone(s.cone(), &y, tol)?;
            let table = [
                (
                    "N_K: (diag(-1,-2); -1)",
                    psd_then(-1.0, 0.0, -2.0, &[-1.0]),
                    true,
                ),
                (
                    "N_K: ([[-1,1],[1,-1]]; 0)",
                    psd_then(-1.0, 1.0, -1.0, &[0.0]),
                    true,
                ),
                ("N_K: (0; -3)", psd_then(0.0, 0.0, 0.0, &[-3.0]), true),
                (
                    "N_K: (diag(1,-1); 0)",
                    psd_then(1.0, 0.0, -1.0, &[0.0]),
                    false,
                ),
                (
                    "N_K: ([[-1,2],[2,-1]]; 0)",
                    psd_then(-1.0, 2.0, -1.0, &[0.0]),
                    false,
                ),
                (
                    "N_K: (diag(-1,-1); 1)",
                    psd_then(-1.0, 0.0, -1.0, &[1.0]),
                    false,
                ),
            ];
            for (label, lam, inside) in table {
                let d = n.dist(&lam);
                let c = if n.contains(&lam, tol) {
                    Certificate::holds(d, "normal cone membership", tol)
                } else {
                    Certificate::fails(d, &lam, "normal cone membership", tol)
                };
                r.push(Entry::new(label, c).expect(if inside {
                    Verdict::Holds
                } else {
                    Verdict::Fails
                }));
            }
        }
        "example2" => {
            let s = example1();
            let x = example1_xbar();
            let c = srcq_check(&s, &x, &DVector::zeros(3), &DVector::zeros(4), tol)?;
            r.push(Entry::new("srcq(v̄)", c).expect(Verdict::Holds));
            let vhat = v(&[-1.0, 0.0, -1.0]);
            let lhat = psd_then(-1.0, 0.0, 0.0, &[0.0]);
            r.push(
                Entry::new("srcq(v̂)", srcq_check(&s, &x, &vhat, &lhat, tol)?)
                    .expect(Verdict::Fails),
            );
        }
        "example3" => {
            let s = example3();
            let x = svec(&DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
            let vbar = svec(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.0]));
            let hint = DVector::from_iterator(6, [0.0; 3].into_iter().chain(vbar.iter().copied()));
            let sc = strict_complementarity_check(&s, &x, &vbar, &[hint], tol)?;
            r.push(Entry::new("strict_complementarity", sc).expect(Verdict::Holds));
            let m = multiplier_solve(&s, &x, &vbar, tol)?;
            r.push(Entry::new("multiplier", m.membership).expect(Verdict::Holds));
            r.push(Entry::new("multiplier_uniqueness", m.uniqueness).expect(Verdict::Fails));
        }
        "example41" => {
            let p = example41(tol)?;
            let lam = example41_multiplier();
            let s = p.sys.as_ref();
            r.push(
                Entry::new("srcq", srcq_check(s, &p.xbar, &p.vbar, &lam, tol)?)
                    .expect(Verdict::Holds),
            );
            r.push(
                Entry::new("nondegeneracy", nondegeneracy_check(s, &p.xbar, tol)?)
                    .expect(Verdict::Fails),
            );
            let opts = CalmOptions {
                seed,
                ..CalmOptions::default()
            };
            r.push(
                Entry::new(
                    "isolated_calmness",
                    solution_map_isolated_calm(&p, &lam, tol, &opts)?,
                )
                .expect(Verdict::Holds),
            );
        }
        "kkt_lp" => {
            let opts = CalmOptions {
                seed,
                ..CalmOptions::default()
            };
            let lp = kkt_lp();
            r.push(
                Entry::new(
                    "lp: min z, z ≥ 0",
                    kkt_isolated_calm(&lp, &v(&[0.0]), &v(&[1.0]), tol, &opts)?,
                )
                .expect(Verdict::Holds),
            );
            let dup = duplicated_lp(&lp);
            r.push(
                Entry::new(
                    "lp: constraint z ≥ 0 twice",
                    kkt_isolated_calm(&dup, &v(&[0.0]), &v(&[0.5, 0.5]), tol, &opts)?,
                )
                .expect(Verdict::Fails),
            );
        }
        "section32" => {
            let s = section32();
            let center = PhiPoint::new(v(&[0.0]), v(&[0.5]), v(&[0.0]));
            for k in [10.0, 100.0, 1000.0] {
                let p = section32_point(k);
                let (a, b) = phi_residual(&s, &p.x, &p.lambda, &p.v)?;
                r.measure(&format!("Φ row 1 at k={k}"), a[0], Some(0.0), None);
                r.measure(
                    &format!("Φ row 2 at k={k}"),
                    b[0],
                    Some(1.0 / (k * k)),
                    Some(1e-15 / (k * k)),
                );
                let ratio =
                    phi_subregularity_probe(&s, &center, &[p], &section32_distance, tol)?[0];
                r.measure(
                    &format!("ratio at k={k}"),
                    ratio,
                    Some(1.0 / (2f64.sqrt() * k)),
                    Some(1e-12),
                );
            }
        }
        other => {
            return Err(InputError(format!(
                "unknown repro name '{other}'; expected one of {}",
                NAMES.join(", ")
            )))
        }
    }
    Ok(r)
}

fn duplicated_lp(lp: &KktProblem) -> KktProblem {
    use conestab::constraint_system::QuadraticSystem;
    use conestab::{ConeDesc, PrimitiveCone, Sign};
    use std::sync::Arc;
    let cone = ConeDesc::new(vec![PrimitiveCone::Orthant {
        dim: 2,
        sign: Sign::Plus,
    }])
    .expect("valid cone");
    let g = QuadraticSystem::affine(
        "kkt_lp_duplicated",
        cone,
        DMatrix::from_element(2, 1, -1.0),
        DVector::zeros(2),
    )
    .expect("consistent data");
    KktProblem {
        g: Arc::new(g),
        b: DVector::zeros(2),
        ..lp.clone()
    }
}
