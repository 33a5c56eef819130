#![allow(dead_code)]

use conestab::cone_core::{project, PrimitiveCone, Sign};
use conestab::linalg::{smat, svec};
use conestab::{AmbientVec, ConeDesc};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(r: &mut ChaCha8Rng) -> f64 {
    let u: f64 = r.gen_range(1e-12..1.0);
    let v: f64 = r.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

pub fn gauss_vec(r: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gauss(r))
}

pub fn unit_vec(r: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = gauss_vec(r, n);
        let nv = v.norm();
        if nv > 1e-6 {
            return v / nv;
        }
    }
}

pub fn orthogonal(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| gauss(r));
    m.qr().q()
}

pub fn orthant(dim: usize) -> ConeDesc {
    ConeDesc::new(vec![PrimitiveCone::Orthant {
        dim,
        sign: Sign::Plus,
    }])
    .unwrap()
}

pub fn soc(dim: usize) -> ConeDesc {
    ConeDesc::new(vec![PrimitiveCone::Soc {
        dim,
        sign: Sign::Plus,
    }])
    .unwrap()
}

pub fn psd(order: usize) -> ConeDesc {
    ConeDesc::new(vec![PrimitiveCone::Psd {
        order,
        sign: Sign::Plus,
    }])
    .unwrap()
}

/// The three cones every suite runs on.
pub fn standard_cones() -> Vec<(&'static str, ConeDesc)> {
    vec![
        ("orthant(5)", orthant(5)),
        ("soc(4)", soc(4)),
        ("psd(3)", psd(3)),
    ]
}

/// A wider set including mirrored signs and products.
pub fn all_cones() -> Vec<(&'static str, ConeDesc)> {
    let mut out = standard_cones();
    out.push((
        "orthant(3,minus)",
        ConeDesc::new(vec![PrimitiveCone::Orthant {
            dim: 3,
            sign: Sign::Minus,
        }])
        .unwrap(),
    ));
    out.push((
        "soc(3,minus)",
        ConeDesc::new(vec![PrimitiveCone::Soc {
            dim: 3,
            sign: Sign::Minus,
        }])
        .unwrap(),
    ));
    out.push((
        "psd(2,minus)",
        ConeDesc::new(vec![PrimitiveCone::Psd {
            order: 2,
            sign: Sign::Minus,
        }])
        .unwrap(),
    ));
    out.push((
        "zero(1)×free(1)×soc(3)×psd(2)",
        ConeDesc::new(vec![
            PrimitiveCone::Zero { dim: 1 },
            PrimitiveCone::Free { dim: 1 },
            PrimitiveCone::Soc {
                dim: 3,
                sign: Sign::Plus,
            },
            PrimitiveCone::Psd {
                order: 2,
                sign: Sign::Plus,
            },
        ])
        .unwrap(),
    ));
    out
}

/// Spectral frame of a block: the data needed to build directions that keep
/// the projection locally linear.
#[derive(Clone)]
pub enum Frame {
    Coords,
    Soc(DVector<f64>),
    Psd(DMatrix<f64>),
    Fixed,
}

fn pick(r: &mut ChaCha8Rng) -> f64 {
    // Positive, zero or negative with equal odds.
    match r.gen_range(0..3) {
        0 => r.gen_range(0.2..2.0),
        1 => 0.0,
        _ => -r.gen_range(0.2..2.0),
    }
}

/// A point `z = y + λ` whose blocks have exact zeros in their spectra, so
/// that critical cones are nontrivial.
pub fn structured_z(k: &ConeDesc, r: &mut ChaCha8Rng) -> (AmbientVec, Vec<Frame>) {
    let mut z = DVector::zeros(k.dim());
    let mut frames = Vec::new();
    for b in k.blocks() {
        let (piece, frame) = match b.cone {
            PrimitiveCone::Orthant { dim, .. } => {
                ((0..dim).map(|_| pick(r)).collect::<Vec<_>>(), Frame::Coords)
            }
            PrimitiveCone::Zero { dim } | PrimitiveCone::Free { dim } => {
                ((0..dim).map(|_| pick(r)).collect(), Frame::Coords)
            }
            PrimitiveCone::Soc { dim, .. } => {
                let w = unit_vec(r, dim - 1);
                let (a, c) = (pick(r), pick(r));
                // z = a·(1, w) + c·(1, −w) in spectral form.
                let mut v = vec![a + c];
                v.extend(w.iter().map(|wi| (a - c) * wi));
                (v, Frame::Soc(w))
            }
            PrimitiveCone::Psd { order, .. } => {
                let p = orthogonal(r, order);
                let d = DVector::from_fn(order, |_, _| pick(r));
                let m = &p * DMatrix::from_diagonal(&d) * p.transpose();
                (svec(&m).as_slice().to_vec(), Frame::Psd(p))
            }
        };
        z.rows_mut(b.offset, b.len).copy_from_slice(&piece);
        frames.push(frame);
    }
    (z, frames)
}

/// A random direction sharing the spectral frame of `z` block by block.
pub fn frame_direction(k: &ConeDesc, frames: &[Frame], r: &mut ChaCha8Rng) -> AmbientVec {
    let mut h = DVector::zeros(k.dim());
    for (b, f) in k.blocks().iter().zip(frames) {
        let piece: Vec<f64> = match (f, b.cone) {
            (Frame::Soc(w), _) => {
                let (a, c) = (gauss(r), gauss(r));
                let mut v = vec![a + c];
                v.extend(w.iter().map(|wi| (a - c) * wi));
                v
            }
            (Frame::Psd(p), PrimitiveCone::Psd { order, .. }) => {
                let d = gauss_vec(r, order);
                svec(&(p * DMatrix::from_diagonal(&d) * p.transpose()))
                    .as_slice()
                    .to_vec()
            }
            _ => (0..b.len).map(|_| gauss(r)).collect(),
        };
        h.rows_mut(b.offset, b.len).copy_from_slice(&piece);
    }
    h
}

/// `(y, λ) = (Π_K z, z − Π_K z)`.
pub fn split(k: &ConeDesc, z: &AmbientVec) -> (AmbientVec, AmbientVec) {
    let y = project(k, z).unwrap();
    let l = z - &y;
    (y, l)
}

/// Smallest eigenvalue of each PSD block, computed without the library's
/// eigen-solver (2×2 closed form).
pub fn min_eig_2x2(v: &[f64]) -> f64 {
    let m = smat(v, 2);
    let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    mean - rad
}

pub fn max_eig_2x2(v: &[f64]) -> f64 {
    let m = smat(v, 2);
    let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt()
}
