mod common;

use common::*;
use conestab::cone_core::{contains, normal_cone, project, tangent_cone};
use conestab::cone_geometry::{
    critical_cone, normal_of_critical, normal_of_critical_dykstra, subspace_cone_trivial,
    tangent_of_normal,
};
use conestab::constraint_system::{
    example1, example3, multiplier_solve, ngamma_route_a, ngamma_route_b, require_multiplier,
    section32, srcq_check, ConstraintSystem, QuadraticSystem,
};
use conestab::linalg::{smat, svec};
use conestab::oracle::{graph_sample, graph_tangent_residual, sigma_expansion};
use conestab::proj_deriv::{dnk_contains, proj_dir_deriv, sigma_term, GraphPoint};
use conestab::stability::{
    example41, example41_multiplier, graph_tangent_generate, kkt_isolated_calm, kkt_lp,
    phi_subregularity_probe, section32_distance, section32_point, CalmOptions, KktProblem,
    PhiPoint,
};
use conestab::{ConeDesc, Tol, Verdict};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use std::sync::Arc;

const MOREAU_TOL: f64 = 1e-10;
const LIP_SLACK: f64 = 1e-10;
const POLAR_TOL: f64 = 1e-8;
const ADJOINT_TOL: f64 = 1e-10;
const JAC_FD_TOL: f64 = 1e-5;
const SIGMA_REL: f64 = 1e-4;
/// Step ladders for the expansion referee. Truncation favours small steps and
/// roundoff favours large ones, so the estimate with the smallest reported
/// Richardson error is kept.
const SIGMA_TGRIDS: [[f64; 4]; 3] = [
    [1e-3, 5e-4, 2.5e-4, 1.25e-4],
    [1e-4, 5e-5, 2.5e-5, 1.25e-5],
    [1e-5, 5e-6, 2.5e-6, 1.25e-6],
];
const SLICE_T: f64 = 1e-7;
const SLICE_GAP: f64 = 1e-4;
const TN_ORTHANT: f64 = 1e-6;
const TN_T: f64 = 1e-4;

fn cone(i: usize) -> (&'static str, ConeDesc) {
    all_cones().swap_remove(i % 7)
}

fn scale(z: &DVector<f64>) -> f64 {
    z.norm().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn moreau_decomposition(ci in 0usize..7, seed in any::<u64>()) {
        let (_, k) = cone(ci);
        let mut r = rng(seed);
        let z = gauss_vec(&mut r, k.dim()) * r.gen_range(0.01..100.0);
        let y = project(&k, &z).unwrap();
        let p = project(&k.polar(), &z).unwrap();
        prop_assert!((&z - &y - &p).norm() <= MOREAU_TOL * scale(&z));
        prop_assert!(y.dot(&p).abs() <= MOREAU_TOL * scale(&z).powi(2));
    }

    #[test]
    fn projection_is_nonexpansive_and_idempotent(ci in 0usize..7, seed in any::<u64>()) {
        let (_, k) = cone(ci);
        let mut r = rng(seed);
        let (a, b) = (gauss_vec(&mut r, k.dim()), gauss_vec(&mut r, k.dim()));
        let (pa, pb) = (project(&k, &a).unwrap(), project(&k, &b).unwrap());
        prop_assert!((&pa - &pb).norm() <= (&a - &b).norm() + LIP_SLACK);
        prop_assert!((project(&k, &pa).unwrap() - &pa).norm() <= LIP_SLACK * scale(&pa));
    }

    #[test]
    fn tangent_polar_is_normal(ci in 0usize..7, seed in any::<u64>()) {
        let (_, k) = cone(ci);
        let tol = Tol::default();
        let mut r = rng(seed);
        let (z, _) = structured_z(&k, &mut r);
        let (y, _) = split(&k, &z);
        let t = tangent_cone(&k, &y, &tol).unwrap();
        let n = normal_cone(&k, &y, &tol).unwrap();
        let g = gauss_vec(&mut r, k.dim());
        for w in [g.clone(), n.project(&g), t.project(&g), &g - n.project(&g) * 0.5] {
            prop_assert_eq!(t.polar().contains(&w, &tol), n.contains(&w, &tol));
        }
    }

    #[test]
    fn polar_membership_is_reflected(ci in 0usize..7, seed in any::<u64>()) {
        // SOC and PSD₊ are self-dual, so their polars are −SOC and PSD₋.
        let (_, k) = cone(ci);
        let tol = Tol::default();
        let mut r = rng(seed);
        let w = gauss_vec(&mut r, k.dim());
        let free_or_zero = k.blocks().iter().any(|b| matches!(b.cone, conestab::PrimitiveCone::Free { .. } | conestab::PrimitiveCone::Zero { .. }));
        if !free_or_zero {
            prop_assert_eq!(contains(&k.polar(), &w, &tol).unwrap(), contains(&k, &-&w, &tol).unwrap());
            let m = project(&k, &w).unwrap();
            prop_assert!(contains(&k.polar(), &-&m, &tol).unwrap());
        }
        prop_assert_eq!(k.polar().polar(), k);
    }

    #[test]
    fn critical_cone_inside_tangent_and_orthogonal(ci in 0usize..7, seed in any::<u64>()) {
        let (_, k) = cone(ci);
        let tol = Tol::default();
        let mut r = rng(seed);
        let (z, _) = structured_z(&k, &mut r);
        let (y, l) = split(&k, &z);
        let c = critical_cone(&k, &y, &l, &tol).unwrap();
        let t = tangent_cone(&k, &y, &tol).unwrap();
        let h = c.project(&gauss_vec(&mut r, k.dim()));
        prop_assert!(t.contains(&h, &tol));
        prop_assert!(h.dot(&l).abs() <= POLAR_TOL * scale(&h) * scale(&l));
        let w = c.polar().project(&gauss_vec(&mut r, k.dim()));
        prop_assert!(h.dot(&w) <= POLAR_TOL * scale(&h) * scale(&w));
    }

    #[test]
    fn cone_set_oracle_invariants(ci in 0usize..7, seed in any::<u64>()) {
        let (_, k) = cone(ci);
        let tol = Tol::default();
        let mut r = rng(seed);
        let (z, _) = structured_z(&k, &mut r);
        let (y, l) = split(&k, &z);
        let c = critical_cone(&k, &y, &l, &tol).unwrap();
        for set in [c.clone(), c.polar(), tangent_of_normal(&k, &y, &l, &tol).unwrap()] {
            prop_assert!(set.contains(&DVector::zeros(k.dim()), &tol));
            let g = gauss_vec(&mut r, k.dim());
            let p = set.project(&g);
            prop_assert!((set.project(&p) - &p).norm() <= POLAR_TOL * scale(&p));
            for s in [2.0, 10.0] {
                prop_assert!(set.contains(&(&p * s), &tol));
            }
            prop_assert_eq!(set.contains(&g, &tol), (&p - &g).norm() <= tol.scaled(g.norm()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn svec_preserves_trace_inner_product(seed in any::<u64>(), n in 1usize..5) {
        let mut r = rng(seed);
        let a = DMatrix::from_fn(n, n, |_, _| gauss(&mut r));
        let b = DMatrix::from_fn(n, n, |_, _| gauss(&mut r));
        let (a, b) = (&a + a.transpose(), &b + b.transpose());
        let (va, vb) = (svec(&a), svec(&b));
        prop_assert!((va.dot(&vb) - (&a * &b).trace()).abs() <= 1e-12 * (1.0 + a.norm() * b.norm()));
        prop_assert!((smat(va.as_slice(), n) - &a).norm() <= 1e-15 * (1.0 + a.norm()));
    }

    #[test]
    fn projection_derivative_is_homogeneous_and_nonexpansive(ci in 0usize..7, seed in any::<u64>()) {
        let (_, k) = cone(ci);
        let tol = Tol::default();
        let mut r = rng(seed);
        let (z, _) = structured_z(&k, &mut r);
        let (h1, h2) = (gauss_vec(&mut r, k.dim()), gauss_vec(&mut r, k.dim()));
        let (d1, d2) = (proj_dir_deriv(&k, &z, &h1, &tol).unwrap(), proj_dir_deriv(&k, &z, &h2, &tol).unwrap());
        for s in [0.5, 3.0] {
            let ds = proj_dir_deriv(&k, &z, &(&h1 * s), &tol).unwrap();
            prop_assert!((ds - &d1 * s).norm() <= 1e-10 * scale(&h1) * s.max(1.0));
        }
        prop_assert!((&d1 - &d2).norm() <= (&h1 - &h2).norm() * (1.0 + 1e-9) + LIP_SLACK);
    }

    #[test]
    fn graph_sample_invariants(ci in 0usize..7, seed in any::<u64>()) {
        let (_, k) = cone(ci);
        let tol = Tol::default();
        let mut r = rng(seed);
        let z = if seed % 2 == 0 { gauss_vec(&mut r, k.dim()) } else { structured_z(&k, &mut r).0 };
        let gp = graph_sample(&k, &z, &tol).unwrap();
        prop_assert!((project(&k, &gp.z).unwrap() - &gp.y).norm() <= tol.scaled(gp.z.norm()));
        prop_assert!(gp.complementarity() <= 1e-10 * scale(&gp.z).powi(2));
        prop_assert!((&gp.y + &gp.lambda - &gp.z).norm() <= 1e-15 * scale(&gp.z));
    }

    #[test]
    fn exact_derivative_pairs_are_graph_tangents(ci in 0usize..7, seed in any::<u64>()) {
        let (_, k) = cone(ci);
        let tol = Tol::default();
        let mut r = rng(seed);
        let (z, _) = structured_z(&k, &mut r);
        let gp = graph_sample(&k, &z, &tol).unwrap();
        let h = gauss_vec(&mut r, k.dim());
        let dy = proj_dir_deriv(&k, &z, &h, &tol).unwrap();
        let dl = &h - &dy;
        let cert = dnk_contains(&k, &gp, &dy, &dl, &tol);
        prop_assert_eq!(cert.verdict, Verdict::Holds, "{:?}", cert.notes);
        // A certified member leaves an o(t) graph residual.
        let res = graph_tangent_residual(&k, &gp, &dy, &dl, &[1e-2, 1e-3, 1e-4]).unwrap();
        let size = 1.0 + dy.norm() + dl.norm();
        prop_assert!(res[2] <= 1e-6 * size || res[2] <= 0.2 * res[0], "{res:?}");
    }

    #[test]
    fn sigma_matches_expansion_and_is_nonnegative(ci in 0usize..7, seed in any::<u64>()) {
        let (_, k) = cone(ci);
        let tol = Tol::default();
        let mut r = rng(seed);
        let (z, _) = structured_z(&k, &mut r);
        let gp = graph_sample(&k, &z, &tol).unwrap();
        let c = critical_cone(&k, &gp.y, &gp.lambda, &tol).unwrap();
        let h = c.project(&gauss_vec(&mut r, k.dim()));
        let s = sigma_term(&k, &gp, &h, &tol).unwrap();
        prop_assert!(s >= -1e-10 * scale(&h).powi(2));
        // The expansion measures σ(λ, T²_K(y,h)) = −Υ(h).
        let est = SIGMA_TGRIDS
            .iter()
            .map(|g| sigma_expansion(&k, &gp, &h, g, &tol).unwrap())
            .min_by(|a, b| a.error.total_cmp(&b.error))
            .unwrap();
        prop_assert!((s + est.value).abs() <= SIGMA_REL * scale(&h).powi(2) * (1.0 + s.abs()), "{s} vs {}", est.value);
    }

    #[test]
    fn normal_of_critical_is_the_polar_slice(ci in 0usize..7, seed in any::<u64>()) {
        // N_C(d) = C° ∩ d⊥, and Π onto it leaves a residual in T_C(d).
        let (_, k) = cone(ci);
        let tol = Tol::default();
        let mut r = rng(seed);
        let (z, _) = structured_z(&k, &mut r);
        let (y, l) = split(&k, &z);
        let c = critical_cone(&k, &y, &l, &tol).unwrap();
        let d = c.project(&gauss_vec(&mut r, k.dim()));
        let exact = normal_of_critical(&c, &d, &tol).unwrap();
        let slice = normal_of_critical_dykstra(&c, &d, &tol);
        let g = gauss_vec(&mut r, k.dim());
        let pe = exact.project(&g);
        prop_assert!(c.polar().dist(&pe) <= POLAR_TOL * scale(&g));
        prop_assert!(pe.dot(&d).abs() <= POLAR_TOL * scale(&g) * scale(&d));
        prop_assert!(slice.contains(&pe, &tol));
        prop_assert!((&g - &pe).dot(&pe).abs() <= POLAR_TOL * scale(&g).powi(2));
        let u = &g - &pe;
        let gap = c.dist(&(&d + &u * SLICE_T)) / SLICE_T;
        prop_assert!(gap <= SLICE_GAP * scale(&u), "{gap:e}");
    }
}

fn builtins() -> Vec<(Box<dyn ConstraintSystem>, DVector<f64>)> {
    vec![
        (
            Box::new(example1()),
            DVector::from_vec(vec![-1.0, -1.0, 0.0]),
        ),
        (Box::new(example3()), DVector::from_vec(vec![0.0, 0.0, 1.0])),
        (Box::new(section32()), DVector::from_vec(vec![0.0])),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn builtin_derivative_consistency(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (sys, _) in builtins() {
            let n = sys.dim_x();
            let m = sys.cone().dim();
            let x = gauss_vec(&mut r, n);
            let (h, e) = (gauss_vec(&mut r, n), gauss_vec(&mut r, n));
            let (mu, lam) = (gauss_vec(&mut r, m), gauss_vec(&mut r, m));
            let lhs = sys.jac_apply(&x, &h).dot(&mu);
            let rhs = h.dot(&sys.adj_apply(&x, &mu));
            prop_assert!((lhs - rhs).abs() <= ADJOINT_TOL * (1.0 + lhs.abs()));
            let a = sys.hess_apply(&x, &lam, &h).dot(&e);
            let b = sys.hess_apply(&x, &lam, &e).dot(&h);
            prop_assert!((a - b).abs() <= ADJOINT_TOL * (1.0 + a.abs()));
            let t = 1e-6;
            let fd = (sys.value(&(&x + &h * t)) - sys.value(&(&x - &h * t))) / (2.0 * t);
            let jh = sys.jac_apply(&x, &h);
            prop_assert!((fd - &jh).norm() <= JAC_FD_TOL * scale(&jh));
        }
    }

    #[test]
    fn multiplier_round_trip_and_srcq_scaling(seed in any::<u64>()) {
        let tol = Tol::default();
        let mut r = rng(seed);
        for (sys, x) in builtins() {
            let k = sys.cone();
            let gx = sys.value(&x);
            let n = normal_cone(k, &gx, &tol).unwrap();
            let lam = n.project(&gauss_vec(&mut r, k.dim()));
            let v = sys.adj_apply(&x, &lam);
            let out = multiplier_solve(sys.as_ref(), &x, &v, &tol).unwrap();
            prop_assert_eq!(out.membership.verdict, Verdict::Holds, "{}: {:?}", sys.name(), out.membership.notes);
            prop_assert!(require_multiplier(sys.as_ref(), &x, &v, &out.lambda, &tol).is_ok());
            prop_assert!(((sys.adj_apply(&x, &out.lambda) - &v).norm() - out.affine_residual).abs() <= 1e-15 * scale(&v));
            let a = srcq_check(sys.as_ref(), &x, &v, &lam, &tol).unwrap();
            let b = srcq_check(sys.as_ref(), &x, &(&v * 2.0), &(&lam * 2.0), &tol).unwrap();
            prop_assert_eq!(a.verdict, b.verdict);
        }
    }
}

#[test]
fn tangent_of_normal_finite_step_orthant() {
    let tol = Tol::default();
    let k = orthant(5);
    let mut r = rng(41);
    for _ in 0..200 {
        let (z, _) = structured_z(&k, &mut r);
        let (y, l) = split(&k, &z);
        let tn = tangent_of_normal(&k, &y, &l, &tol).unwrap();
        let xi = tn.project(&gauss_vec(&mut r, 5));
        let n = normal_cone(&k, &y, &tol).unwrap();
        let d = n.dist(&(&l + &xi * TN_T));
        assert!(d <= TN_ORTHANT * TN_T * scale(&xi), "dist {d:e}");
    }
}

#[test]
fn tangent_of_normal_finite_step_psd() {
    // PSD normal cones are curved, so the finite-step gap is Θ(t²): only its
    // decay is checked.
    let tol = Tol::default();
    for k in [psd(2), psd(3)] {
        let mut r = rng(42);
        for _ in 0..100 {
            let (z, _) = structured_z(&k, &mut r);
            let (y, l) = split(&k, &z);
            let tn = tangent_of_normal(&k, &y, &l, &tol).unwrap();
            let xi = tn.project(&gauss_vec(&mut r, k.dim()));
            let n = normal_cone(&k, &y, &tol).unwrap();
            let rel: Vec<f64> = [1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&t| n.dist(&(&l + &xi * t)) / t)
                .collect();
            assert!(
                rel[2] <= 1e-6 * scale(&xi) || rel[2] <= 0.2 * rel[0],
                "{rel:?}"
            );
        }
    }
}

#[test]
fn psd_normal_cone_is_calm() {
    // dist(z, N_K(ȳ)) ≤ κ‖y − ȳ‖ for z ∈ N_K(y) near λ̄, with κ stable when δ halves.
    let tol = Tol::default();
    let k = psd(3);
    let mut r = rng(43);
    for _ in 0..10 {
        let (z, _) = structured_z(&k, &mut r);
        let (ybar, _) = split(&k, &z);
        let nbar = normal_cone(&k, &ybar, &tol).unwrap();
        let kappa = |delta: f64, r: &mut rand_chacha::ChaCha8Rng| {
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                let u = &z + unit_vec(r, k.dim()) * (delta * r.gen_range(0.0..1.0));
                let (y, lam) = split(&k, &u);
                let dy = (&y - &ybar).norm();
                if dy > 1e-12 {
                    worst = worst.max(nbar.dist(&lam) / dy);
                }
            }
            worst
        };
        let (k1, k2) = (kappa(1e-2, &mut r), kappa(5e-3, &mut r));
        assert!(
            k1.is_finite() && k2 <= 1.5 * k1 + 1e-6,
            "κ(δ) = {k1}, κ(δ/2) = {k2}"
        );
    }
}

#[test]
fn subspace_cone_fails_carry_witnesses() {
    let tol = Tol::default();
    let mut r = rng(44);
    for (_, k) in all_cones() {
        for _ in 0..20 {
            let (z, _) = structured_z(&k, &mut r);
            let (y, l) = split(&k, &z);
            let c = critical_cone(&k, &y, &l, &tol).unwrap();
            let mut cols = vec![gauss_vec(&mut r, k.dim())];
            cols.push(c.project(&gauss_vec(&mut r, k.dim())));
            let lmat = DMatrix::from_columns(&cols);
            let cert = subspace_cone_trivial(&lmat, &c, &tol);
            if cert.verdict == Verdict::Fails {
                let w = cert.witness_vec().expect("witness");
                assert!(w.norm() > 0.5);
                assert!(c.contains(&w, &tol));
                let q = conestab::linalg::range_basis(&lmat, tol.zero);
                assert!((&q * (q.transpose() * &w) - &w).norm() <= 1e-7 * w.norm());
            }
        }
    }
}

#[test]
fn routes_agree_on_example1_members() {
    let tol = Tol::default();
    let s = example1();
    let p = example41(&tol).unwrap();
    let mut r = rng(45);
    let points = [
        (
            DVector::from_vec(vec![-1.0, -1.0, 0.0]),
            DVector::zeros(3),
            DVector::zeros(4),
        ),
        (p.xbar.clone(), p.vbar.clone(), example41_multiplier()),
    ];
    for (x, v, lam) in &points {
        let seeds: Vec<_> = (0..10)
            .map(|_| (gauss_vec(&mut r, 3), gauss_vec(&mut r, 4)))
            .collect();
        for t in graph_tangent_generate(&s, x, v, lam, &seeds, &tol).unwrap() {
            let a = ngamma_route_a(&s, x, v, lam, &t.d, &t.w, &tol).unwrap();
            let b = ngamma_route_b(&s, x, v, lam, &t.d, &t.w, &tol).unwrap();
            assert_eq!(a.verdict, Verdict::Holds, "{:?}", a.notes);
            assert_eq!(b.verdict, Verdict::Holds, "{:?}", b.notes);
            // Far off the graph both routes refuse.
            let far = &t.w + DVector::from_vec(vec![0.0, 0.0, 50.0]);
            let a = ngamma_route_a(&s, x, v, lam, &t.d, &far, &tol).unwrap();
            let b = ngamma_route_b(&s, x, v, lam, &t.d, &far, &tol).unwrap();
            assert_eq!(a.verdict, b.verdict, "A {:?} B {:?}", a.notes, b.notes);
        }
    }
}

#[test]
fn section32_ratio_decays_linearly() {
    let tol = Tol::default();
    let s = section32();
    let center = PhiPoint::new(
        DVector::from_vec(vec![0.0]),
        DVector::from_vec(vec![0.5]),
        DVector::from_vec(vec![0.0]),
    );
    for k in [10.0, 100.0] {
        let seq = [section32_point(k), section32_point(10.0 * k)];
        let ratio = phi_subregularity_probe(&s, &center, &seq, &section32_distance, &tol).unwrap();
        let q = ratio[1] / ratio[0];
        assert!((0.05..=0.2).contains(&q), "ratio(10k)/ratio(k) = {q}");
    }
}

fn scaled_lp(cf: f64, cg: f64) -> KktProblem {
    let base = kkt_lp();
    let g = QuadraticSystem::affine(
        "kkt_lp_scaled",
        orthant(1),
        -DMatrix::identity(1, 1) * cg,
        DVector::zeros(1),
    )
    .unwrap();
    KktProblem {
        grad_f: Arc::new(move |z: &DVector<f64>| DVector::from_element(z.len(), cf)),
        hess_f: base.hess_f.clone(),
        g: Arc::new(g),
        b: base.b.clone(),
    }
}

#[test]
fn kkt_verdict_invariant_under_scaling() {
    let tol = Tol::default();
    let opts = CalmOptions::default();
    let z = DVector::zeros(1);
    let base = kkt_isolated_calm(
        &scaled_lp(1.0, 1.0),
        &z,
        &DVector::from_vec(vec![1.0]),
        &tol,
        &opts,
    )
    .unwrap();
    assert_ne!(base.verdict, Verdict::Inconclusive);
    for (cf, cg, lam) in [(2.0, 1.0, 2.0), (2.0, 2.0, 1.0), (1.0, 2.0, 0.5)] {
        let c = kkt_isolated_calm(
            &scaled_lp(cf, cg),
            &z,
            &DVector::from_vec(vec![lam]),
            &tol,
            &opts,
        )
        .unwrap();
        assert_eq!(c.verdict, base.verdict, "f×{cf}, G×{cg}");
    }
}

#[test]
fn graph_point_rejects_non_complementary_pairs() {
    let tol = Tol::default();
    let k = orthant(2);
    let y = DVector::from_vec(vec![1.0, 0.0]);
    assert!(GraphPoint::new(&k, y.clone(), DVector::from_vec(vec![-1.0, 0.0]), &tol).is_err());
    assert!(GraphPoint::new(&k, y, DVector::from_vec(vec![0.0, -1.0]), &tol).is_ok());
}
