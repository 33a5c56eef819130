//! Primitive cones and their products: membership, projection, polarity and
//! first-order geometry (tangent and normal cones at a point).
//!
//! Vectors of the product space are plain coordinate vectors. A PSD block of
//! order `n` occupies `n(n+1)/2` coordinates in the √2-scaled form produced by
//! [`crate::linalg::svec`], so every inner product is a dot product.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cone_geometry::{
    BlockSet, ConeSetOracle, CoordKind, FaceProduct, PsdKind, PsdPattern, SocSet,
};
use crate::error::{ConeError, Result};
use crate::linalg::{from_eigen, smat, svec, svec_dim, sym_eigen, zero_threshold};

/// A point of the product space.
pub type AmbientVec = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    #[default]
    Plus,
    Minus,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveCone {
    Orthant {
        dim: usize,
        sign: Sign,
    },
    /// `sign = minus` is the polar `−SOC`; omitted means plus.
    Soc {
        dim: usize,
        #[serde(default)]
        sign: Sign,
    },
    Psd {
        order: usize,
        sign: Sign,
    },
    Zero {
        dim: usize,
    },
    Free {
        dim: usize,
    },
}

impl PrimitiveCone {
    /// Number of coordinates occupied by the block.
    pub fn ambient_dim(&self) -> usize {
        match *self {
            PrimitiveCone::Orthant { dim, .. }
            | PrimitiveCone::Soc { dim, .. }
            | PrimitiveCone::Zero { dim }
            | PrimitiveCone::Free { dim } => dim,
            PrimitiveCone::Psd { order, .. } => svec_dim(order),
        }
    }

    pub fn polar(&self) -> PrimitiveCone {
        match *self {
            PrimitiveCone::Orthant { dim, sign } => PrimitiveCone::Orthant {
                dim,
                sign: sign.flip(),
            },
            PrimitiveCone::Soc { dim, sign } => PrimitiveCone::Soc {
                dim,
                sign: sign.flip(),
            },
            PrimitiveCone::Psd { order, sign } => PrimitiveCone::Psd {
                order,
                sign: sign.flip(),
            },
            PrimitiveCone::Zero { dim } => PrimitiveCone::Free { dim },
            PrimitiveCone::Free { dim } => PrimitiveCone::Zero { dim },
        }
    }

    pub fn is_polyhedral(&self) -> bool {
        match *self {
            PrimitiveCone::Soc { dim, .. } => dim <= 1,
            PrimitiveCone::Psd { order, .. } => order <= 1,
            _ => true,
        }
    }
}

/// Product cone `K = K₁ × … × K_m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeDesc {
    pub product: Vec<PrimitiveCone>,
}

/// One block of a [`ConeDesc`] together with its coordinate range.
#[derive(Debug, Clone, Copy)]
pub struct BlockRange {
    pub cone: PrimitiveCone,
    pub offset: usize,
    pub len: usize,
}

impl ConeDesc {
    pub fn new(product: Vec<PrimitiveCone>) -> Result<ConeDesc> {
        let k = ConeDesc { product };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        for b in &self.product {
            if b.ambient_dim() == 0 {
                return Err(ConeError::Invalid(format!("empty cone block {b:?}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.product.iter().map(PrimitiveCone::ambient_dim).sum()
    }

    pub fn blocks(&self) -> Vec<BlockRange> {
        let mut offset = 0;
        self.product
            .iter()
            .map(|&cone| {
                let len = cone.ambient_dim();
                let b = BlockRange { cone, offset, len };
                offset += len;
                b
            })
            .collect()
    }

    pub fn polar(&self) -> ConeDesc {
        ConeDesc {
            product: self.product.iter().map(PrimitiveCone::polar).collect(),
        }
    }

    pub fn is_polyhedral(&self) -> bool {
        self.product.iter().all(PrimitiveCone::is_polyhedral)
    }

    pub fn check_dim(&self, z: &AmbientVec) -> Result<()> {
        if z.len() != self.dim() {
            return Err(ConeError::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(ConeError::NonFinite);
        }
        Ok(())
    }

    /// The cone itself as a face-product oracle.
    pub fn as_oracle(&self) -> ConeSetOracle {
        let blocks = self
            .blocks()
            .into_iter()
            .map(|b| {
                let set = match b.cone {
                    PrimitiveCone::Orthant { dim, sign } => BlockSet::Coords(vec![
                        match sign {
                            Sign::Plus => CoordKind::Plus,
                            Sign::Minus => CoordKind::Minus,
                        };
                        dim
                    ]),
                    PrimitiveCone::Zero { dim } => BlockSet::Coords(vec![CoordKind::Zero; dim]),
                    PrimitiveCone::Free { dim } => BlockSet::Coords(vec![CoordKind::Free; dim]),
                    PrimitiveCone::Soc { sign, .. } => BlockSet::Soc(SocSet::Cone(sign)),
                    PrimitiveCone::Psd { order, sign } => BlockSet::Psd(PsdPattern::single(
                        order,
                        match sign {
                            Sign::Plus => PsdKind::Psd,
                            Sign::Minus => PsdKind::Nsd,
                        },
                    )),
                };
                (b.offset, b.len, set)
            })
            .collect();
        ConeSetOracle::Faces(FaceProduct::new(blocks))
    }
}

/// Numerical tolerances shared by every decision procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tol {
    pub membership: f64,
    pub zero: f64,
    pub max_iter: usize,
}

impl Default for Tol {
    fn default() -> Self {
        Tol {
            membership: 1e-8,
            zero: 1e-9,
            max_iter: 10_000,
        }
    }
}

impl Tol {
    pub fn validate(&self) -> Result<()> {
        if !(self.membership > 0.0 && self.zero > 0.0 && self.max_iter > 0) {
            return Err(ConeError::Invalid(
                "tolerances must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    /// Same settings with both thresholds halved.
    pub fn halved(&self) -> Tol {
        Tol {
            membership: 0.5 * self.membership,
            zero: 0.5 * self.zero,
            max_iter: self.max_iter,
        }
    }

    /// Membership threshold `tol.membership · max(1, scale)`.
    pub fn scaled(&self, scale: f64) -> f64 {
        self.membership * scale.max(1.0)
    }
}

pub(crate) fn soc_project(x: &[f64]) -> Vec<f64> {
    let x0 = x[0];
    let r = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if r <= x0 {
        x.to_vec()
    } else if r <= -x0 {
        vec![0.0; x.len()]
    } else {
        let a = 0.5 * (x0 + r);
        let mut out = Vec::with_capacity(x.len());
        out.push(a);
        out.extend(x[1..].iter().map(|v| a * v / r));
        out
    }
}

pub(crate) fn psd_project(m: &DMatrix<f64>, sign: Sign) -> Result<DMatrix<f64>> {
    let s = sign.factor();
    let (vals, p) = sym_eigen(&(m * s))?;
    let clipped = vals.map(|v| v.max(0.0));
    Ok(from_eigen(&clipped, &p) * s)
}

/// Projection onto a single primitive block.
pub(crate) fn project_block(cone: &PrimitiveCone, z: &[f64]) -> Result<Vec<f64>> {
    Ok(match *cone {
        PrimitiveCone::Orthant {
            sign: Sign::Plus, ..
        } => z.iter().map(|v| v.max(0.0)).collect(),
        PrimitiveCone::Orthant {
            sign: Sign::Minus, ..
        } => z.iter().map(|v| v.min(0.0)).collect(),
        PrimitiveCone::Zero { dim } => vec![0.0; dim],
        PrimitiveCone::Free { .. } => z.to_vec(),
        PrimitiveCone::Soc {
            sign: Sign::Plus, ..
        } => soc_project(z),
        PrimitiveCone::Soc {
            sign: Sign::Minus, ..
        } => soc_project(&negate(z)).into_iter().map(|v| -v).collect(),
        PrimitiveCone::Psd { order, sign } => {
            let m = smat(z, order);
            svec(&psd_project(&m, sign)?).as_slice().to_vec()
        }
    })
}

/// Euclidean projection onto `K`.
pub fn project(k: &ConeDesc, z: &AmbientVec) -> Result<AmbientVec> {
    k.check_dim(z)?;
    let mut out = DVector::zeros(z.len());
    for b in k.blocks() {
        let p = project_block(&b.cone, &z.as_slice()[b.offset..b.offset + b.len])?;
        out.as_mut_slice()[b.offset..b.offset + b.len].copy_from_slice(&p);
    }
    Ok(out)
}

/// `dist(z, K)`.
pub fn dist(k: &ConeDesc, z: &AmbientVec) -> Result<f64> {
    Ok((z - project(k, z)?).norm())
}

/// True iff `‖z − Π_K(z)‖ ≤ tol.membership`.
pub fn contains(k: &ConeDesc, z: &AmbientVec, tol: &Tol) -> Result<bool> {
    Ok(dist(k, z)? <= tol.membership)
}

fn require_member(k: &ConeDesc, y: &AmbientVec, tol: &Tol) -> Result<()> {
    let d = dist(k, y)?;
    if d > tol.scaled(y.norm()) {
        return Err(ConeError::NotInCone { dist: d });
    }
    Ok(())
}

/// Which face data to build at a point: the tangent cone or the normal cone.
#[derive(Clone, Copy, PartialEq, Eq)]
enum FirstOrder {
    Tangent,
    Normal,
}

fn first_order(
    k: &ConeDesc,
    y: &AmbientVec,
    tol: &Tol,
    which: FirstOrder,
) -> Result<ConeSetOracle> {
    k.check_dim(y)?;
    require_member(k, y, tol)?;
    let mut blocks = Vec::new();
    for b in k.blocks() {
        let yb = &y.as_slice()[b.offset..b.offset + b.len];
        let set = match b.cone {
            PrimitiveCone::Orthant { sign, .. } => {
                let thr = zero_threshold(tol.zero, block_norm(yb));
                BlockSet::Coords(
                    yb.iter()
                        .map(|&v| {
                            let active = v.abs() <= thr;
                            match (which, active, sign) {
                                (FirstOrder::Tangent, false, _) => CoordKind::Free,
                                (FirstOrder::Tangent, true, Sign::Plus) => CoordKind::Plus,
                                (FirstOrder::Tangent, true, Sign::Minus) => CoordKind::Minus,
                                (FirstOrder::Normal, false, _) => CoordKind::Zero,
                                (FirstOrder::Normal, true, Sign::Plus) => CoordKind::Minus,
                                (FirstOrder::Normal, true, Sign::Minus) => CoordKind::Plus,
                            }
                        })
                        .collect(),
                )
            }
            PrimitiveCone::Zero { dim } => BlockSet::Coords(vec![
                match which {
                    FirstOrder::Tangent => CoordKind::Zero,
                    FirstOrder::Normal => CoordKind::Free,
                };
                dim
            ]),
            PrimitiveCone::Free { dim } => BlockSet::Coords(vec![
                match which {
                    FirstOrder::Tangent => CoordKind::Free,
                    FirstOrder::Normal => CoordKind::Zero,
                };
                dim
            ]),
            PrimitiveCone::Soc { sign, .. } => {
                let thr = zero_threshold(tol.zero, block_norm(yb));
                let face = SocFace::classify(&scaled(yb, sign), thr);
                let set = match (which, face) {
                    (FirstOrder::Tangent, SocFace::Interior) => SocSet::Full,
                    (FirstOrder::Tangent, SocFace::Apex) => SocSet::Cone(Sign::Plus),
                    (FirstOrder::Tangent, SocFace::Boundary(n)) => SocSet::Halfspace(n),
                    (FirstOrder::Normal, SocFace::Interior) => SocSet::Zero,
                    (FirstOrder::Normal, SocFace::Apex) => SocSet::Cone(Sign::Minus),
                    (FirstOrder::Normal, SocFace::Boundary(n)) => SocSet::Ray(n),
                    (_, SocFace::Exterior) => unreachable!("member checked above"),
                };
                BlockSet::Soc(if sign == Sign::Minus {
                    set.negated()
                } else {
                    set
                })
            }
            PrimitiveCone::Psd { order, sign } => {
                let s = sign.factor();
                let m = smat(yb, order) * s;
                let (vals, p) = sym_eigen(&m)?;
                let thr = zero_threshold(tol.zero, m.norm());
                let alpha: Vec<usize> = (0..order).filter(|&i| vals[i] > thr).collect();
                let iota: Vec<usize> = (0..order).filter(|&i| vals[i] <= thr).collect();
                let (k_aa, k_ai, k_ii) = match which {
                    FirstOrder::Tangent => (PsdKind::Free, PsdKind::Free, PsdKind::Psd),
                    FirstOrder::Normal => (PsdKind::Zero, PsdKind::Zero, PsdKind::Nsd),
                };
                let pat = PsdPattern::from_groups(
                    p,
                    vec![alpha, iota],
                    vec![vec![k_aa, k_ai], vec![k_ai, k_ii]],
                );
                BlockSet::Psd(if sign == Sign::Minus {
                    pat.negated()
                } else {
                    pat
                })
            }
        };
        blocks.push((b.offset, b.len, set));
    }
    Ok(ConeSetOracle::Faces(FaceProduct::new(blocks)))
}

pub(crate) fn negate(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

/// `sign · v`.
pub(crate) fn scaled(v: &[f64], sign: Sign) -> Vec<f64> {
    let s = sign.factor();
    v.iter().map(|x| x * s).collect()
}

pub(crate) fn block_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Position of a vector relative to the second-order cone and its polar.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum SocFace {
    Interior,
    Apex,
    /// Nonzero boundary point; carries the unit outward normal `(−1, w̄)/√2`.
    Boundary(DVector<f64>),
    Exterior,
}

impl SocFace {
    pub(crate) fn classify(x: &[f64], thr: f64) -> SocFace {
        let x0 = x[0];
        let r = block_norm(&x[1..]);
        if block_norm(x) <= thr {
            SocFace::Apex
        } else if x0 - r > thr {
            SocFace::Interior
        } else if (x0 - r).abs() <= thr && r > 0.0 {
            SocFace::Boundary(soc_normal(&x[1..], r))
        } else {
            SocFace::Exterior
        }
    }
}

/// Unit vector `(−1, w̄)/√2` with `w̄ = x̄/‖x̄‖`.
pub(crate) fn soc_normal(xbar: &[f64], r: f64) -> DVector<f64> {
    let mut n = DVector::zeros(xbar.len() + 1);
    n[0] = -std::f64::consts::FRAC_1_SQRT_2;
    for (i, v) in xbar.iter().enumerate() {
        n[i + 1] = v / r * std::f64::consts::FRAC_1_SQRT_2;
    }
    n
}

/// Tangent cone `T_K(y)`.
pub fn tangent_cone(k: &ConeDesc, y: &AmbientVec, tol: &Tol) -> Result<ConeSetOracle> {
    first_order(k, y, tol, FirstOrder::Tangent)
}

/// Normal cone `N_K(y) = T_K(y)°`.
pub fn normal_cone(k: &ConeDesc, y: &AmbientVec, tol: &Tol) -> Result<ConeSetOracle> {
    first_order(k, y, tol, FirstOrder::Normal)
}

/// Relative-interior test `λ ∈ ri N_K(y)`, block by block.
pub fn ri_normal_contains(
    k: &ConeDesc,
    y: &AmbientVec,
    lambda: &AmbientVec,
    tol: &Tol,
) -> Result<bool> {
    k.check_dim(lambda)?;
    let n = normal_cone(k, y, tol)?;
    let d = n.dist(lambda);
    if d > tol.scaled(lambda.norm()) {
        return Err(ConeError::NotOnGraph { residual: d });
    }
    for b in k.blocks() {
        let yb = &y.as_slice()[b.offset..b.offset + b.len];
        let lb = &lambda.as_slice()[b.offset..b.offset + b.len];
        let ty = zero_threshold(tol.zero, block_norm(yb));
        let tl = zero_threshold(tol.zero, block_norm(lb));
        let ok = match b.cone {
            PrimitiveCone::Orthant { .. } => yb
                .iter()
                .zip(lb)
                .all(|(&yi, &li)| yi.abs() > ty || li.abs() > tl),
            PrimitiveCone::Zero { .. } | PrimitiveCone::Free { .. } => true,
            PrimitiveCone::Soc { sign, .. } => match SocFace::classify(&scaled(yb, sign), ty) {
                SocFace::Interior => true,
                SocFace::Apex => {
                    let l0 = lb[0] * sign.factor();
                    -l0 - block_norm(&lb[1..]) > tl
                }
                SocFace::Boundary(_) => block_norm(lb) > tl,
                SocFace::Exterior => false,
            },
            PrimitiveCone::Psd { order, .. } => {
                let ym = smat(yb, order);
                let lm = smat(lb, order);
                let (yv, _) = sym_eigen(&ym)?;
                let (lv, _) = sym_eigen(&lm)?;
                let ry = yv.iter().filter(|v| v.abs() > ty).count();
                let rl = lv.iter().filter(|v| v.abs() > tl).count();
                ry + rl == order
            }
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Builds a product-space vector from per-block pieces. Matrix pieces are
/// dense symmetric matrices and are vectorized internally.
pub fn encode(k: &ConeDesc, pieces: &[BlockValue]) -> Result<AmbientVec> {
    let blocks = k.blocks();
    if pieces.len() != blocks.len() {
        return Err(ConeError::DimensionMismatch {
            expected: blocks.len(),
            got: pieces.len(),
        });
    }
    let mut out = DVector::zeros(k.dim());
    for (b, piece) in blocks.iter().zip(pieces) {
        let v: Vec<f64> = match (piece, b.cone) {
            (BlockValue::Matrix(m), PrimitiveCone::Psd { order, .. }) => {
                if m.nrows() != order || m.ncols() != order {
                    return Err(ConeError::DimensionMismatch {
                        expected: order,
                        got: m.nrows(),
                    });
                }
                svec(m).as_slice().to_vec()
            }
            (BlockValue::Vector(v), _) => v.clone(),
            (BlockValue::Matrix(_), c) => {
                return Err(ConeError::Invalid(format!(
                    "matrix given for non-PSD block {c:?}"
                )))
            }
        };
        if v.len() != b.len {
            return Err(ConeError::DimensionMismatch {
                expected: b.len,
                got: v.len(),
            });
        }
        out.as_mut_slice()[b.offset..b.offset + b.len].copy_from_slice(&v);
    }
    Ok(out)
}

/// Splits a product-space vector into per-block pieces, PSD blocks as dense
/// matrices.
pub fn decode(k: &ConeDesc, z: &AmbientVec) -> Result<Vec<BlockValue>> {
    k.check_dim(z)?;
    Ok(k.blocks()
        .into_iter()
        .map(|b| {
            let s = &z.as_slice()[b.offset..b.offset + b.len];
            match b.cone {
                PrimitiveCone::Psd { order, .. } => BlockValue::Matrix(smat(s, order)),
                _ => BlockValue::Vector(s.to_vec()),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockValue {
    Vector(Vec<f64>),
    Matrix(DMatrix<f64>),
}
