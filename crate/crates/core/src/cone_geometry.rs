//! Derived cones (critical cones, tangent cones to normal cones, polars,
//! slices) with projection and linear maximization, and the decision of
//! `L ∩ C = {0}` for a subspace `L`.
//!
//! Every cone produced from first- and second-order data of a primitive block
//! is a product of elementary pieces in a fixed basis: sign patterns on
//! coordinates, a short list of second-order-cone shapes, and block patterns
//! of a rotated symmetric matrix. Those products are closed under polarity and
//! under taking normal cones at one of their points, so every set the rest of
//! the crate needs has an exact projection. Slices by subspaces and
//! hyperplanes fall back to Dykstra's algorithm.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cone_core::{
    block_norm, soc_normal, soc_project, AmbientVec, ConeDesc, PrimitiveCone, Sign, Tol,
};
use crate::error::{ConeError, Result};
use crate::linalg::{
    kernel_basis, pinv, project_onto_span, range_basis, smat, svec, sym_eigen, zero_threshold,
    AffineSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

/// Outcome of a decision procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub verdict: Verdict,
    /// Non-finite values serialize as the strings `"NaN"`, `"inf"`, `"-inf"`.
    #[serde(with = "extended_float")]
    pub residual: f64,
    pub witness: Option<Vec<f64>>,
    pub method: String,
    pub tol: Tol,
    /// Hypotheses and diagnostics, e.g. `assumed: ...` / `checked: ...`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Equality that treats two `NaN` residuals as equal, so that serialized
/// certificates compare equal after a round trip.
impl PartialEq for Certificate {
    fn eq(&self, other: &Self) -> bool {
        let same_residual =
            self.residual == other.residual || (self.residual.is_nan() && other.residual.is_nan());
        self.verdict == other.verdict
            && same_residual
            && self.witness == other.witness
            && self.method == other.method
            && self.tol == other.tol
            && self.notes == other.notes
    }
}

mod extended_float {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_str("NaN")
        } else if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(D::Error::custom(format!(
                    "expected a number, got '{other}'"
                ))),
            },
        }
    }
}

impl Certificate {
    pub fn new(
        verdict: Verdict,
        residual: f64,
        witness: Option<&DVector<f64>>,
        method: &str,
        tol: &Tol,
    ) -> Self {
        Certificate {
            verdict,
            residual,
            witness: witness.map(|w| w.as_slice().to_vec()),
            method: method.to_string(),
            tol: *tol,
            notes: Vec::new(),
        }
    }

    pub fn holds(residual: f64, method: &str, tol: &Tol) -> Self {
        Self::new(Verdict::Holds, residual, None, method, tol)
    }

    pub fn fails(residual: f64, witness: &DVector<f64>, method: &str, tol: &Tol) -> Self {
        Self::new(Verdict::Fails, residual, Some(witness), method, tol)
    }

    pub fn inconclusive(residual: f64, method: &str, tol: &Tol) -> Self {
        Self::new(Verdict::Inconclusive, residual, None, method, tol)
    }

    pub fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }

    pub fn with_witness(mut self, w: &DVector<f64>) -> Self {
        self.witness = Some(w.as_slice().to_vec());
        self
    }

    pub fn witness_vec(&self) -> Option<DVector<f64>> {
        self.witness.as_ref().map(|w| DVector::from_column_slice(w))
    }

    pub fn holds_p(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

/// One-dimensional pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordKind {
    Free,
    Zero,
    Plus,
    Minus,
}

impl CoordKind {
    fn project(self, x: f64) -> f64 {
        match self {
            CoordKind::Free => x,
            CoordKind::Zero => 0.0,
            CoordKind::Plus => x.max(0.0),
            CoordKind::Minus => x.min(0.0),
        }
    }

    pub fn polar(self) -> CoordKind {
        match self {
            CoordKind::Free => CoordKind::Zero,
            CoordKind::Zero => CoordKind::Free,
            CoordKind::Plus => CoordKind::Minus,
            CoordKind::Minus => CoordKind::Plus,
        }
    }

    fn normal_at(self, d: f64, thr: f64) -> CoordKind {
        match self {
            CoordKind::Free => CoordKind::Zero,
            CoordKind::Zero => CoordKind::Free,
            CoordKind::Plus if d > thr => CoordKind::Zero,
            CoordKind::Plus => CoordKind::Minus,
            CoordKind::Minus if d < -thr => CoordKind::Zero,
            CoordKind::Minus => CoordKind::Plus,
        }
    }
}

/// Shapes that arise inside a second-order-cone block. Vectors are unit
/// length; `Halfspace(n)` is `{h : ⟨h,n⟩ ≤ 0}` and `Ray(n)` is `R₊n`.
#[derive(Debug, Clone, PartialEq)]
pub enum SocSet {
    Full,
    Zero,
    Cone(Sign),
    Halfspace(DVector<f64>),
    Ray(DVector<f64>),
    Hyperplane(DVector<f64>),
    Line(DVector<f64>),
}

impl SocSet {
    fn project(&self, x: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(x);
        let out = match self {
            SocSet::Full => v,
            SocSet::Zero => DVector::zeros(x.len()),
            SocSet::Cone(Sign::Plus) => return soc_project(x),
            SocSet::Cone(Sign::Minus) => {
                let neg: Vec<f64> = x.iter().map(|a| -a).collect();
                return soc_project(&neg).into_iter().map(|a| -a).collect();
            }
            SocSet::Halfspace(n) => {
                let s = v.dot(n).max(0.0);
                v - n * s
            }
            SocSet::Ray(n) => n * v.dot(n).max(0.0),
            SocSet::Hyperplane(n) => {
                let s = v.dot(n);
                v - n * s
            }
            SocSet::Line(n) => n * v.dot(n),
        };
        out.as_slice().to_vec()
    }

    pub fn polar(&self) -> SocSet {
        match self {
            SocSet::Full => SocSet::Zero,
            SocSet::Zero => SocSet::Full,
            SocSet::Cone(s) => SocSet::Cone(s.flip()),
            SocSet::Halfspace(n) => SocSet::Ray(n.clone()),
            SocSet::Ray(n) => SocSet::Halfspace(n.clone()),
            SocSet::Hyperplane(n) => SocSet::Line(n.clone()),
            SocSet::Line(n) => SocSet::Hyperplane(n.clone()),
        }
    }

    pub fn negated(&self) -> SocSet {
        match self {
            SocSet::Cone(s) => SocSet::Cone(s.flip()),
            SocSet::Halfspace(n) => SocSet::Halfspace(-n),
            SocSet::Ray(n) => SocSet::Ray(-n),
            other => other.clone(),
        }
    }

    fn lineality(&self, m: usize) -> Vec<DVector<f64>> {
        let perp = |n: &DVector<f64>| {
            let k = kernel_basis(&DMatrix::from_row_slice(1, n.len(), n.as_slice()), 1e-12);
            k.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>()
        };
        match self {
            SocSet::Full => (0..m)
                .map(|i| DVector::from_fn(m, |j, _| if i == j { 1.0 } else { 0.0 }))
                .collect(),
            SocSet::Halfspace(n) | SocSet::Hyperplane(n) => perp(n),
            SocSet::Line(n) => vec![n.clone()],
            SocSet::Zero | SocSet::Cone(_) | SocSet::Ray(_) => Vec::new(),
        }
    }

    fn normal_at(&self, d: &[f64], thr: f64) -> SocSet {
        let dv = DVector::from_column_slice(d);
        match self {
            SocSet::Full => SocSet::Zero,
            SocSet::Zero => SocSet::Full,
            SocSet::Line(n) => SocSet::Hyperplane(n.clone()),
            SocSet::Hyperplane(n) => SocSet::Line(n.clone()),
            SocSet::Halfspace(n) => {
                if dv.dot(n) < -thr {
                    SocSet::Zero
                } else {
                    SocSet::Ray(n.clone())
                }
            }
            SocSet::Ray(n) => {
                if dv.dot(n) > thr {
                    SocSet::Hyperplane(n.clone())
                } else {
                    SocSet::Halfspace(n.clone())
                }
            }
            SocSet::Cone(Sign::Plus) => {
                let r = block_norm(&d[1..]);
                if block_norm(d) <= thr {
                    SocSet::Cone(Sign::Minus)
                } else if d[0] - r > thr || r == 0.0 {
                    SocSet::Zero
                } else {
                    SocSet::Ray(soc_normal(&d[1..], r))
                }
            }
            SocSet::Cone(Sign::Minus) => {
                let neg: Vec<f64> = d.iter().map(|a| -a).collect();
                SocSet::Cone(Sign::Plus).normal_at(&neg, thr).negated()
            }
        }
    }
}

/// Constraint type of one block of a rotated symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdKind {
    Free,
    Zero,
    Psd,
    Nsd,
}

impl PsdKind {
    fn polar(self) -> PsdKind {
        match self {
            PsdKind::Free => PsdKind::Zero,
            PsdKind::Zero => PsdKind::Free,
            PsdKind::Psd => PsdKind::Nsd,
            PsdKind::Nsd => PsdKind::Psd,
        }
    }

    fn negated(self) -> PsdKind {
        match self {
            PsdKind::Psd => PsdKind::Nsd,
            PsdKind::Nsd => PsdKind::Psd,
            k => k,
        }
    }
}

/// `{H : (PᵀHP)_{gh} ∈ kind(g,h)}` for a partition of the columns of an
/// orthogonal matrix `P` into groups.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdPattern {
    pub n: usize,
    pub basis: DMatrix<f64>,
    pub groups: Vec<Vec<usize>>,
    pub kinds: Vec<Vec<PsdKind>>,
}

fn clip_sym(m: &DMatrix<f64>, keep_positive: bool) -> DMatrix<f64> {
    let Ok((vals, vecs)) = sym_eigen(m) else {
        return DMatrix::from_element(m.nrows(), m.ncols(), f64::NAN);
    };
    let vals = vals.map(|v| {
        if keep_positive {
            v.max(0.0)
        } else {
            v.min(0.0)
        }
    });
    &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose()
}

impl PsdPattern {
    pub fn single(n: usize, kind: PsdKind) -> PsdPattern {
        PsdPattern {
            n,
            basis: DMatrix::identity(n, n),
            groups: vec![(0..n).collect()],
            kinds: vec![vec![kind]],
        }
    }

    /// Builds a pattern, dropping empty groups.
    pub fn from_groups(
        basis: DMatrix<f64>,
        groups: Vec<Vec<usize>>,
        kinds: Vec<Vec<PsdKind>>,
    ) -> PsdPattern {
        let keep: Vec<usize> = (0..groups.len())
            .filter(|&g| !groups[g].is_empty())
            .collect();
        PsdPattern {
            n: basis.nrows(),
            groups: keep.iter().map(|&g| groups[g].clone()).collect(),
            kinds: keep
                .iter()
                .map(|&a| keep.iter().map(|&b| kinds[a][b]).collect())
                .collect(),
            basis,
        }
    }

    pub fn negated(&self) -> PsdPattern {
        let mut p = self.clone();
        p.kinds = self
            .kinds
            .iter()
            .map(|r| r.iter().map(|k| k.negated()).collect())
            .collect();
        p
    }

    pub fn polar(&self) -> PsdPattern {
        let mut p = self.clone();
        p.kinds = self
            .kinds
            .iter()
            .map(|r| r.iter().map(|k| k.polar()).collect())
            .collect();
        p
    }

    fn rotated(&self, x: &[f64]) -> DMatrix<f64> {
        self.basis.transpose() * smat(x, self.n) * &self.basis
    }

    fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let t = self.rotated(x);
        let mut out = DMatrix::zeros(self.n, self.n);
        for (a, ga) in self.groups.iter().enumerate() {
            for (b, gb) in self.groups.iter().enumerate() {
                let block = match self.kinds[a][b] {
                    PsdKind::Free => Self::sub(&t, ga, gb),
                    PsdKind::Zero => continue,
                    PsdKind::Psd => clip_sym(&Self::sub(&t, ga, gb), true),
                    PsdKind::Nsd => clip_sym(&Self::sub(&t, ga, gb), false),
                };
                for (i, &r) in ga.iter().enumerate() {
                    for (j, &c) in gb.iter().enumerate() {
                        out[(r, c)] = block[(i, j)];
                    }
                }
            }
        }
        let back = &self.basis * out * self.basis.transpose();
        svec(&back).as_slice().to_vec()
    }

    fn lineality(&self) -> Vec<DVector<f64>> {
        let mut out = Vec::new();
        for (a, ga) in self.groups.iter().enumerate() {
            for (b, gb) in self.groups.iter().enumerate().skip(a) {
                if self.kinds[a][b] != PsdKind::Free {
                    continue;
                }
                for &i in ga {
                    for &j in gb {
                        if a == b && j < i {
                            continue;
                        }
                        let pi = self.basis.column(i);
                        let pj = self.basis.column(j);
                        let e = if i == j {
                            pi * pi.transpose()
                        } else {
                            (pi * pj.transpose() + pj * pi.transpose())
                                * std::f64::consts::FRAC_1_SQRT_2
                        };
                        out.push(svec(&e));
                    }
                }
            }
        }
        out
    }

    /// Normal cone of the pattern at one of its members `d`.
    fn normal_at(&self, d: &[f64], zero_tol: f64) -> PsdPattern {
        let t = self.rotated(d);
        let thr = zero_threshold(zero_tol, t.norm());
        let mut basis = self.basis.clone();
        // (columns, parent group, belongs to the zero-eigenvalue part)
        let mut parts: Vec<(Vec<usize>, usize, bool)> = Vec::new();
        for (g, cols) in self.groups.iter().enumerate() {
            let kind = self.kinds[g][g];
            if kind != PsdKind::Psd && kind != PsdKind::Nsd {
                parts.push((cols.clone(), g, false));
                continue;
            }
            let block = Self::sub(&t, cols, cols);
            let (vals, q) = sym_eigen(&block).unwrap_or_else(|_| {
                (
                    DVector::zeros(cols.len()),
                    DMatrix::identity(cols.len(), cols.len()),
                )
            });
            let old = DMatrix::from_fn(self.n, cols.len(), |r, c| self.basis[(r, cols[c])]);
            let rot = old * &q;
            for (c, &col) in cols.iter().enumerate() {
                basis.set_column(col, &rot.column(c));
            }
            let (mut strict, mut face) = (Vec::new(), Vec::new());
            for (c, &col) in cols.iter().enumerate() {
                let v = vals[c];
                let nonzero = if kind == PsdKind::Psd {
                    v > thr
                } else {
                    v < -thr
                };
                if nonzero {
                    strict.push(col);
                } else {
                    face.push(col);
                }
            }
            if !strict.is_empty() {
                parts.push((strict, g, false));
            }
            if !face.is_empty() {
                parts.push((face, g, true));
            }
        }
        let kinds = parts
            .iter()
            .map(|(_, ga, fa)| {
                parts
                    .iter()
                    .map(|(_, gb, fb)| {
                        let old = self.kinds[*ga][*gb];
                        match old {
                            PsdKind::Free => PsdKind::Zero,
                            PsdKind::Zero => PsdKind::Free,
                            PsdKind::Psd if *fa && *fb => PsdKind::Nsd,
                            PsdKind::Nsd if *fa && *fb => PsdKind::Psd,
                            PsdKind::Psd | PsdKind::Nsd => PsdKind::Zero,
                        }
                    })
                    .collect()
            })
            .collect();
        PsdPattern {
            n: self.n,
            basis,
            groups: parts.into_iter().map(|p| p.0).collect(),
            kinds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockSet {
    Coords(Vec<CoordKind>),
    Soc(SocSet),
    Psd(PsdPattern),
}

/// Product of elementary pieces laid out like a [`ConeDesc`].
#[derive(Debug, Clone, PartialEq)]
pub struct FaceProduct {
    pub blocks: Vec<(usize, usize, BlockSet)>,
    dim: usize,
}

impl FaceProduct {
    pub fn new(blocks: Vec<(usize, usize, BlockSet)>) -> FaceProduct {
        let dim = blocks.iter().map(|b| b.1).sum();
        FaceProduct { blocks, dim }
    }

    fn map_blocks(
        &self,
        f: impl Fn(&BlockSet, &[f64]) -> BlockSet,
        x: &DVector<f64>,
    ) -> FaceProduct {
        FaceProduct {
            blocks: self
                .blocks
                .iter()
                .map(|(o, l, s)| (*o, *l, f(s, &x.as_slice()[*o..*o + *l])))
                .collect(),
            dim: self.dim,
        }
    }

    fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (o, l, s) in &self.blocks {
            let x = &z.as_slice()[*o..*o + *l];
            let p = match s {
                BlockSet::Coords(k) => x.iter().zip(k).map(|(v, k)| k.project(*v)).collect(),
                BlockSet::Soc(set) => set.project(x),
                BlockSet::Psd(pat) => pat.project(x),
            };
            out.as_mut_slice()[*o..*o + *l].copy_from_slice(&p);
        }
        out
    }

    fn polar(&self) -> FaceProduct {
        let zero = DVector::zeros(self.dim);
        self.map_blocks(
            |s, _| match s {
                BlockSet::Coords(k) => BlockSet::Coords(k.iter().map(|c| c.polar()).collect()),
                BlockSet::Soc(set) => BlockSet::Soc(set.polar()),
                BlockSet::Psd(p) => BlockSet::Psd(p.polar()),
            },
            &zero,
        )
    }

    fn normal_at(&self, d: &DVector<f64>, zero_tol: f64) -> FaceProduct {
        self.map_blocks(
            |s, x| {
                let thr = zero_threshold(zero_tol, block_norm(x));
                match s {
                    BlockSet::Coords(k) => BlockSet::Coords(
                        k.iter().zip(x).map(|(c, v)| c.normal_at(*v, thr)).collect(),
                    ),
                    BlockSet::Soc(set) => BlockSet::Soc(set.normal_at(x, thr)),
                    BlockSet::Psd(p) => BlockSet::Psd(p.normal_at(x, zero_tol)),
                }
            },
            d,
        )
    }

    fn lineality(&self) -> DMatrix<f64> {
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for (o, l, s) in &self.blocks {
            let local: Vec<DVector<f64>> = match s {
                BlockSet::Coords(k) => k
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c == CoordKind::Free)
                    .map(|(i, _)| DVector::from_fn(*l, |j, _| if i == j { 1.0 } else { 0.0 }))
                    .collect(),
                BlockSet::Soc(set) => set.lineality(*l),
                BlockSet::Psd(p) => p.lineality(),
            };
            for v in local {
                let mut full = DVector::zeros(self.dim);
                full.rows_mut(*o, *l).copy_from(&v);
                cols.push(full);
            }
        }
        if cols.is_empty() {
            DMatrix::zeros(self.dim, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }

    /// Per-coordinate description when every block is one-dimensional or a
    /// sign pattern.
    pub fn coord_kinds(&self) -> Option<Vec<CoordKind>> {
        let mut out = Vec::with_capacity(self.dim);
        for (_, l, s) in &self.blocks {
            match s {
                BlockSet::Coords(k) => out.extend_from_slice(k),
                BlockSet::Soc(set) if *l == 1 => out.push(match set {
                    SocSet::Full | SocSet::Line(_) => CoordKind::Free,
                    SocSet::Zero | SocSet::Hyperplane(_) => CoordKind::Zero,
                    SocSet::Cone(Sign::Plus) => CoordKind::Plus,
                    SocSet::Cone(Sign::Minus) => CoordKind::Minus,
                    SocSet::Halfspace(n) | SocSet::Ray(n) => {
                        let up = n[0] > 0.0;
                        match (matches!(set, SocSet::Ray(_)), up) {
                            (true, true) | (false, false) => CoordKind::Plus,
                            _ => CoordKind::Minus,
                        }
                    }
                }),
                BlockSet::Psd(p) if p.n == 1 => {
                    let s = p.basis[(0, 0)];
                    debug_assert!(s.abs() == 1.0);
                    out.push(match p.kinds[0][0] {
                        PsdKind::Free => CoordKind::Free,
                        PsdKind::Zero => CoordKind::Zero,
                        PsdKind::Psd => CoordKind::Plus,
                        PsdKind::Nsd => CoordKind::Minus,
                    })
                }
                _ => return None,
            }
        }
        Some(out)
    }
}

/// A closed convex cone with projection, membership and linear maximization.
#[derive(Debug, Clone, PartialEq)]
pub enum ConeSetOracle {
    Faces(FaceProduct),
    /// Polar of the inner cone, projected through the Moreau decomposition.
    Polar(Box<ConeSetOracle>),
    /// `base ∩ span(basis)`; the basis has orthonormal columns.
    SubspaceSlice {
        base: Box<ConeSetOracle>,
        basis: DMatrix<f64>,
        tol: Tol,
    },
    /// `base ∩ normal⊥`.
    HyperplaneSlice {
        base: Box<ConeSetOracle>,
        normal: DVector<f64>,
        tol: Tol,
    },
}

impl ConeSetOracle {
    pub fn dim(&self) -> usize {
        match self {
            ConeSetOracle::Faces(f) => f.dim,
            ConeSetOracle::Polar(b) => b.dim(),
            ConeSetOracle::SubspaceSlice { base, .. }
            | ConeSetOracle::HyperplaneSlice { base, .. } => base.dim(),
        }
    }

    pub fn project(&self, z: &AmbientVec) -> AmbientVec {
        match self {
            ConeSetOracle::Faces(f) => f.project(z),
            ConeSetOracle::Polar(b) => z - b.project(z),
            ConeSetOracle::SubspaceSlice { base, basis, tol } => {
                dykstra(z, |x| base.project(x), |x| project_onto_span(basis, x), tol).point
            }
            ConeSetOracle::HyperplaneSlice { base, normal, tol } => {
                let nn = normal.norm_squared();
                let hyper = |x: &DVector<f64>| {
                    if nn == 0.0 {
                        x.clone()
                    } else {
                        x - normal * (x.dot(normal) / nn)
                    }
                };
                dykstra(z, |x| base.project(x), hyper, tol).point
            }
        }
    }

    pub fn dist(&self, z: &AmbientVec) -> f64 {
        (z - self.project(z)).norm()
    }

    /// `dist(z, C) ≤ tol.membership · max(1, ‖z‖)`.
    pub fn contains(&self, z: &AmbientVec, tol: &Tol) -> bool {
        self.dist(z) <= tol.scaled(z.norm())
    }

    /// `max{⟨c,z⟩ : z ∈ C, ‖z‖ ≤ 1}` and a maximizer. For a closed convex cone
    /// the value is `‖Π_C(c)‖`.
    pub fn linear_max(&self, c: &AmbientVec) -> (f64, AmbientVec) {
        let p = self.project(c);
        let n = p.norm();
        if n == 0.0 {
            (0.0, p)
        } else {
            (n, p / n)
        }
    }

    pub fn polar(&self) -> ConeSetOracle {
        match self {
            ConeSetOracle::Faces(f) => ConeSetOracle::Faces(f.polar()),
            ConeSetOracle::Polar(b) => (**b).clone(),
            other => ConeSetOracle::Polar(Box::new(other.clone())),
        }
    }

    /// `N_C(d) = C° ∩ d⊥` for a member `d`.
    pub fn normal_at(&self, d: &AmbientVec, tol: &Tol) -> ConeSetOracle {
        match self {
            ConeSetOracle::Faces(f) => ConeSetOracle::Faces(f.normal_at(d, tol.zero)),
            other => ConeSetOracle::HyperplaneSlice {
                base: Box::new(other.polar()),
                normal: d.clone(),
                tol: *tol,
            },
        }
    }

    /// Columns spanning `C ∩ −C`, available for face products.
    pub fn lineality_basis(&self) -> Option<DMatrix<f64>> {
        match self {
            ConeSetOracle::Faces(f) => Some(f.lineality()),
            _ => None,
        }
    }

    /// A point of the relative interior, available for face products.
    pub fn ri_point(&self) -> Option<AmbientVec> {
        let f = self.faces()?;
        let mut out = DVector::zeros(f.dim);
        for (o, l, s) in &f.blocks {
            let piece: Vec<f64> = match s {
                BlockSet::Coords(k) => k
                    .iter()
                    .map(|c| match c {
                        CoordKind::Plus => 1.0,
                        CoordKind::Minus => -1.0,
                        CoordKind::Free | CoordKind::Zero => 0.0,
                    })
                    .collect(),
                BlockSet::Soc(set) => {
                    let mut v = DVector::zeros(*l);
                    match set {
                        SocSet::Cone(sign) => v[0] = sign.factor(),
                        SocSet::Ray(n) => v = n.clone(),
                        SocSet::Halfspace(n) => v = -n,
                        _ => {}
                    }
                    v.as_slice().to_vec()
                }
                BlockSet::Psd(p) => {
                    let mut d = DMatrix::zeros(p.n, p.n);
                    for (g, cols) in p.groups.iter().enumerate() {
                        let s = match p.kinds[g][g] {
                            PsdKind::Psd => 1.0,
                            PsdKind::Nsd => -1.0,
                            PsdKind::Free | PsdKind::Zero => 0.0,
                        };
                        for &c in cols {
                            d[(c, c)] = s;
                        }
                    }
                    svec(&(&p.basis * d * p.basis.transpose()))
                        .as_slice()
                        .to_vec()
                }
            };
            out.as_mut_slice()[*o..*o + *l].copy_from_slice(&piece);
        }
        Some(out)
    }

    pub fn faces(&self) -> Option<&FaceProduct> {
        match self {
            ConeSetOracle::Faces(f) => Some(f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DykstraOutcome {
    /// Last iterate of the second projection.
    pub point: DVector<f64>,
    /// Last iterate of the first projection.
    pub other: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Iterates stopped moving while the two sequences stayed apart: the
    /// sets are at positive distance.
    pub stalled: bool,
}

/// Dykstra's alternating projection onto `A ∩ B`, started at `z`. Stops when
/// successive iterates, and the geometric extrapolation of the remaining
/// steps, fall below `tol.zero · max(1, ‖z‖)`.
pub fn dykstra(
    z: &DVector<f64>,
    pa: impl Fn(&DVector<f64>) -> DVector<f64>,
    pb: impl Fn(&DVector<f64>) -> DVector<f64>,
    tol: &Tol,
) -> DykstraOutcome {
    let stop = tol.zero * z.norm().max(1.0);
    let mut x = z.clone();
    let mut p = DVector::zeros(z.len());
    let mut q = DVector::zeros(z.len());
    let mut y = z.clone();
    let mut moved = f64::INFINITY;
    let mut prev = f64::INFINITY;
    for it in 1..=tol.max_iter {
        y = pa(&(&x + &p));
        p = &x + &p - &y;
        let xn = pb(&(&y + &q));
        q = &y + &q - &xn;
        moved = (&xn - &x).norm();
        x = xn;
        // Under linear convergence with ratio r the distance still to go is
        // about moved·r/(1−r); small steps alone do not mean arrival.
        let r = moved / prev;
        prev = moved;
        let ahead = if r < 1.0 {
            moved * r / (1.0 - r)
        } else {
            f64::INFINITY
        };
        if moved < stop && ahead < stop && (&x - &y).norm() < stop.max(moved) * 1e3 {
            return DykstraOutcome {
                point: x,
                other: y,
                iterations: it,
                converged: true,
                stalled: false,
            };
        }
    }
    DykstraOutcome {
        point: x,
        other: y,
        iterations: tol.max_iter,
        converged: false,
        stalled: moved < stop * 1e-3,
    }
}

/// `argmin { ‖M ξ − r‖ : ξ ∈ C }` by projected gradient with Nesterov
/// momentum and adaptive restart.
pub fn cone_least_squares(
    m: &DMatrix<f64>,
    r: &DVector<f64>,
    c: &ConeSetOracle,
    max_iter: usize,
) -> DVector<f64> {
    let n = m.ncols();
    let lip = if n == 0 {
        0.0
    } else {
        m.clone().svd(false, false).singular_values.max().powi(2)
    };
    if lip == 0.0 {
        return DVector::zeros(n);
    }
    let step = 1.0 / lip;
    let mut x = DVector::zeros(n);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut last = f64::INFINITY;
    for _ in 0..max_iter {
        let grad = m.transpose() * (m * &y - r);
        let xn = c.project(&(&y - grad * step));
        let val = (m * &xn - r).norm_squared();
        let moved = (&xn - &x).norm();
        if val > last {
            t = 1.0;
            y = xn.clone();
        } else {
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &xn + (&xn - &x) * ((t - 1.0) / tn);
            t = tn;
        }
        last = val;
        x = xn;
        if moved <= 1e-14 * (1.0 + x.norm()) {
            break;
        }
    }
    x
}

fn require_graph(
    k: &ConeDesc,
    y: &AmbientVec,
    lambda: &AmbientVec,
    tol: &Tol,
) -> Result<AmbientVec> {
    k.check_dim(y)?;
    k.check_dim(lambda)?;
    let z = y + lambda;
    let p = crate::cone_core::project(k, &z)?;
    let res = (&p - y).norm();
    if res > tol.scaled(z.norm()) {
        return Err(ConeError::NotOnGraph { residual: res });
    }
    Ok(z)
}

/// Face of `y + λ` relative to the second-order cone and its polar, as the
/// critical cone `T_K(y) ∩ λ⊥`.
fn soc_critical(z: &[f64], thr: f64) -> SocSet {
    let z0 = z[0];
    let r = block_norm(&z[1..]);
    if block_norm(z) <= thr {
        SocSet::Cone(Sign::Plus)
    } else if z0 - r > thr {
        SocSet::Full
    } else if z0 + r < -thr {
        SocSet::Zero
    } else if (z0 - r).abs() <= thr {
        SocSet::Halfspace(soc_normal(&z[1..], r))
    } else if (z0 + r).abs() <= thr {
        let mut u = soc_normal(&z[1..], r);
        u[0] = -u[0];
        SocSet::Ray(u)
    } else {
        SocSet::Hyperplane(soc_normal(&z[1..], r))
    }
}

/// Critical cone `C_K(y,λ) = T_K(y) ∩ λ⊥` at a point of `gph N_K`, built
/// from the joint eigenbasis of `y + λ`.
pub fn critical_cone(
    k: &ConeDesc,
    y: &AmbientVec,
    lambda: &AmbientVec,
    tol: &Tol,
) -> Result<ConeSetOracle> {
    let z = require_graph(k, y, lambda, tol)?;
    let mut blocks = Vec::new();
    for b in k.blocks() {
        let zb = &z.as_slice()[b.offset..b.offset + b.len];
        let thr = zero_threshold(tol.zero, block_norm(zb));
        let set = match b.cone {
            PrimitiveCone::Orthant { sign, .. } => BlockSet::Coords(
                zb.iter()
                    .map(|&v| {
                        let s = v * sign.factor();
                        if s > thr {
                            CoordKind::Free
                        } else if s < -thr {
                            CoordKind::Zero
                        } else if sign == Sign::Plus {
                            CoordKind::Plus
                        } else {
                            CoordKind::Minus
                        }
                    })
                    .collect(),
            ),
            PrimitiveCone::Zero { dim } => BlockSet::Coords(vec![CoordKind::Zero; dim]),
            PrimitiveCone::Free { dim } => BlockSet::Coords(vec![CoordKind::Free; dim]),
            PrimitiveCone::Soc {
                sign: Sign::Plus, ..
            } => BlockSet::Soc(soc_critical(zb, thr)),
            PrimitiveCone::Soc {
                sign: Sign::Minus, ..
            } => {
                let neg: Vec<f64> = zb.iter().map(|v| -v).collect();
                BlockSet::Soc(soc_critical(&neg, thr).negated())
            }
            PrimitiveCone::Psd { order, sign } => {
                let m = smat(zb, order) * sign.factor();
                let (vals, p) = sym_eigen(&m)?;
                let thr = zero_threshold(tol.zero, m.norm());
                let alpha = (0..order).filter(|&i| vals[i] > thr).collect();
                let beta = (0..order).filter(|&i| vals[i].abs() <= thr).collect();
                let gamma = (0..order).filter(|&i| vals[i] < -thr).collect();
                use PsdKind::*;
                let pat = PsdPattern::from_groups(
                    p,
                    vec![alpha, beta, gamma],
                    vec![
                        vec![Free, Free, Free],
                        vec![Free, Psd, Zero],
                        vec![Free, Zero, Zero],
                    ],
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

/// `T_{N_K(y)}(λ) = [C_K(y,λ)]°`.
pub fn tangent_of_normal(
    k: &ConeDesc,
    y: &AmbientVec,
    lambda: &AmbientVec,
    tol: &Tol,
) -> Result<ConeSetOracle> {
    Ok(critical_cone(k, y, lambda, tol)?.polar())
}

/// `N_C(d) = C° ∩ d⊥` for `d ∈ C`.
pub fn normal_of_critical(c: &ConeSetOracle, d: &AmbientVec, tol: &Tol) -> Result<ConeSetOracle> {
    let dist = c.dist(d);
    if dist > tol.scaled(d.norm()) {
        return Err(ConeError::NotCritical { dist });
    }
    Ok(c.normal_at(d, tol))
}

/// Same set as [`normal_of_critical`] but always realized as a Dykstra slice
/// of the polar by the hyperplane `d⊥`.
pub fn normal_of_critical_dykstra(c: &ConeSetOracle, d: &AmbientVec, tol: &Tol) -> ConeSetOracle {
    ConeSetOracle::HyperplaneSlice {
        base: Box::new(c.polar()),
        normal: d.clone(),
        tol: *tol,
    }
}

/// Decides `L ∩ C = {0}` where `L` is spanned by the columns of `l`.
///
/// For each signed basis direction `c` of `L`, the maximum of `⟨c,z⟩` over
/// `C ∩ L` within the unit ball equals `‖Π_{C∩L}(c)‖`; the projection is
/// computed by Dykstra's algorithm.
pub fn subspace_cone_trivial(l: &DMatrix<f64>, c: &ConeSetOracle, tol: &Tol) -> Certificate {
    const METHOD: &str = "subspace-cone maximization (Dykstra)";
    let q = range_basis(l, tol.zero);
    if q.ncols() == 0 {
        return Certificate::holds(0.0, METHOD, tol).note("subspace is {0}");
    }
    if let Some(kinds) = c.faces().and_then(|f| f.coord_kinds()) {
        if let Some(cert) = sign_pattern_trivial(&q, &kinds, c, tol) {
            return cert;
        }
    }
    let mut best = (0.0_f64, DVector::zeros(c.dim()));
    let mut unconverged = 0;
    for j in 0..q.ncols() {
        for s in [1.0, -1.0] {
            let dir: DVector<f64> = q.column(j) * s;
            let out = dykstra(&dir, |x| c.project(x), |x| project_onto_span(&q, x), tol);
            if !out.converged {
                unconverged += 1;
            }
            let val = out.point.norm();
            if val > best.0 {
                best = (val, out.point);
            }
        }
    }
    let (val, z) = best;
    if val <= tol.membership {
        let cert = Certificate::holds(val, METHOD, tol);
        return if unconverged > 0 {
            cert.note(format!("{unconverged} runs hit the iteration cap"))
        } else {
            cert
        };
    }
    if val >= 10.0 * tol.membership {
        // Polish onto C ∩ L so the witness can be re-checked.
        let mut w = &z / val;
        for _ in 0..tol.max_iter {
            if c.dist(&w) <= tol.membership {
                return Certificate::fails(val, &w, METHOD, tol);
            }
            let next = project_onto_span(&q, &c.project(&w));
            let n = next.norm();
            if n <= tol.zero {
                break;
            }
            w = next / n;
        }
    }
    Certificate::inconclusive(val, METHOD, tol).with_witness(&z)
}

/// `span(Q) ∩ C = {0}` for a sign-pattern cone `C`, by one feasibility LP
/// for a point with `Σ_{+}z_i − Σ_{−}z_i = 1`, then a kernel computation for
/// points vanishing on every constrained coordinate.
fn sign_pattern_trivial(
    q: &DMatrix<f64>,
    kinds: &[CoordKind],
    c: &ConeSetOracle,
    tol: &Tol,
) -> Option<Certificate> {
    const METHOD: &str = "subspace-cone decision (sign-pattern LP)";
    let inf = f64::INFINITY;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let a: Vec<_> = (0..q.ncols())
        .map(|_| lp.add_var(0.0, (-inf, inf)))
        .collect();
    let row = |i: usize| -> Vec<_> { a.iter().enumerate().map(|(j, &v)| (v, q[(i, j)])).collect() };
    let mut norm: Vec<(minilp::Variable, f64)> = a.iter().map(|&v| (v, 0.0)).collect();
    for (i, k) in kinds.iter().enumerate() {
        let op = match k {
            CoordKind::Free => continue,
            CoordKind::Zero => ComparisonOp::Eq,
            CoordKind::Plus => ComparisonOp::Ge,
            CoordKind::Minus => ComparisonOp::Le,
        };
        lp.add_constraint(row(i), op, 0.0);
        let s = match k {
            CoordKind::Plus => 1.0,
            CoordKind::Minus => -1.0,
            _ => 0.0,
        };
        for (j, e) in norm.iter_mut().enumerate() {
            e.1 += s * q[(i, j)];
        }
    }
    lp.add_constraint(norm, ComparisonOp::Eq, 1.0);
    match lp.solve() {
        Ok(sol) => {
            let coef = DVector::from_fn(a.len(), |j, _| sol[a[j]]);
            let z = q * coef;
            let w = &z / z.norm();
            let d = c.dist(&w);
            return Some(if d <= tol.membership {
                Certificate::fails(1.0, &w, METHOD, tol)
            } else {
                Certificate::inconclusive(d, METHOD, tol)
                    .with_witness(&w)
                    .note("LP point outside the cone")
            });
        }
        Err(minilp::Error::Infeasible) => {}
        Err(_) => return None,
    }
    let fixed: Vec<usize> = (0..kinds.len())
        .filter(|&i| kinds[i] != CoordKind::Free)
        .collect();
    let sub = DMatrix::from_fn(fixed.len(), q.ncols(), |r, j| q[(fixed[r], j)]);
    let ker = kernel_basis(&sub, tol.zero);
    Some(if ker.ncols() == 0 {
        Certificate::holds(0.0, METHOD, tol)
    } else {
        let w = q * ker.column(0);
        let w = &w / w.norm();
        Certificate::fails(1.0, &w, METHOD, tol).note("subspace meets the lineality space")
    })
}

/// Least-squares correction of an approximate point of `{ξ ∈ C : Mξ = r}`
/// inside `lin T_C(Π_C x)`, which contains the face of `C` at `Π_C x`. The face
/// is read at the looser threshold `√tol.zero` because `x` only lies near it.
/// Face products only; the caller re-checks membership.
pub fn face_polish(
    c: &ConeSetOracle,
    affine: &AffineSet,
    x: &AmbientVec,
    tol: &Tol,
) -> Option<AmbientVec> {
    let loose = Tol {
        zero: tol.zero.sqrt(),
        ..*tol
    };
    let q = c.project(x);
    let b = c.normal_at(&q, &loose).polar().lineality_basis()?;
    if b.ncols() == 0 {
        return Some(DVector::zeros(c.dim()));
    }
    let m = affine.matrix() * &b;
    let coef = b.transpose() * &q;
    let fix = pinv(&m, tol.zero) * (affine.rhs() - &m * &coef);
    Some(&b * (coef + fix))
}

/// Repeated [`face_polish`], each step re-reading the face at the new point.
/// Returns the iterate closest to `C`; stops once it is a member or progress
/// slows below a halving per step.
pub fn face_polish_iter(
    c: &ConeSetOracle,
    affine: &AffineSet,
    x: &AmbientVec,
    tol: &Tol,
) -> Option<AmbientVec> {
    let mut best: Option<(f64, AmbientVec)> = None;
    let mut cur = x.clone();
    for _ in 0..30 {
        let Some(p) = face_polish(c, affine, &cur, tol) else {
            break;
        };
        let dist = c.dist(&p);
        let last = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if dist < last {
            best = Some((dist, p.clone()));
        }
        if dist <= tol.scaled(p.norm()) || dist > 0.5 * last {
            break;
        }
        cur = p;
    }
    best.map(|b| b.1)
}

/// Farkas-type bound for `{ξ ∈ C : Mξ = r}` from a gap `g` between the affine
/// set and `C`. Alternating projections move `g` into `range(Mᵀ) ∩ C°`; for
/// `p = Mᵀu` there, every feasible `ξ` satisfies
/// `⟨r,u⟩ = ⟨ξ,p⟩ ≤ ‖ξ‖·dist(p, C°)`. Returns the lower bound
/// `⟨r,u⟩ / dist(p, C°)` on `‖ξ‖`, or `None` when `⟨r,u⟩ ≤ 0`.
pub fn farkas_bound(
    c: &ConeSetOracle,
    affine: &AffineSet,
    gap: &AmbientVec,
    tol: &Tol,
) -> Option<f64> {
    let mt = affine.matrix().transpose();
    let rb = range_basis(&mt, tol.zero);
    if rb.ncols() == 0 {
        return None;
    }
    let polar = c.polar();
    let mut p = project_onto_span(&rb, gap);
    let mut best: Option<f64> = None;
    let mt_pinv = pinv(&mt, tol.zero);
    for _ in 0..200 {
        let n = p.norm();
        if n <= tol.zero {
            break;
        }
        p /= n;
        let u = &mt_pinv * &p;
        let val = affine.rhs().dot(&u);
        if val > 0.0 {
            let bound = val / polar.dist(&p).max(f64::MIN_POSITIVE);
            best = Some(best.map_or(bound, |b: f64| b.max(bound)));
        }
        p = project_onto_span(&rb, &polar.project(&p));
    }
    best
}

/// One-sided probe of radial-cone membership: true iff `v̄ + t z` belongs to
/// the set for every `t` in the grid. A finite grid can only suggest
/// membership in `R_Ω(v̄)`; it never proves it.
pub fn radial_probe(
    member: &dyn Fn(&AmbientVec) -> bool,
    vbar: &AmbientVec,
    z: &AmbientVec,
    tgrid: &[f64],
) -> bool {
    tgrid.iter().all(|&t| member(&(vbar + z * t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone_core::normal_cone;

    fn scalar(sign: Sign) -> ConeDesc {
        ConeDesc::new(vec![PrimitiveCone::Orthant { dim: 1, sign }]).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn mat(rows: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, rows)
    }

    #[test]
    fn scalar_critical_cones() {
        let tol = Tol::default();
        let k = scalar(Sign::Minus);
        let c = critical_cone(&k, &v(&[0.0]), &v(&[0.0]), &tol).unwrap();
        assert!(c.contains(&v(&[-3.0]), &tol) && !c.contains(&v(&[1.0]), &tol));
        // On R₋ the normal cone at 0 is R₊, so an active multiplier is positive.
        let c = critical_cone(&k, &v(&[0.0]), &v(&[1.0]), &tol).unwrap();
        assert!(!c.contains(&v(&[-3.0]), &tol) && !c.contains(&v(&[3.0]), &tol));
    }

    #[test]
    fn off_graph_pair_rejected() {
        let tol = Tol::default();
        let err = critical_cone(&scalar(Sign::Minus), &v(&[0.0]), &v(&[-1.0]), &tol).unwrap_err();
        assert!(matches!(err, ConeError::NotOnGraph { .. }));
    }

    #[test]
    fn tangent_of_normal_at_interior_multiplier_is_everything() {
        let tol = Tol::default();
        let t = tangent_of_normal(&scalar(Sign::Minus), &v(&[0.0]), &v(&[1.0]), &tol).unwrap();
        assert!(t.contains(&v(&[-7.0]), &tol) && t.contains(&v(&[7.0]), &tol));
    }

    #[test]
    fn scalar_normal_of_critical() {
        let tol = Tol::default();
        let c = scalar(Sign::Minus).as_oracle();
        let n = normal_of_critical(&c, &v(&[-1.0]), &tol).unwrap();
        assert!(!n.contains(&v(&[1.0]), &tol));
        let n = normal_of_critical(&c, &v(&[0.0]), &tol).unwrap();
        assert!(n.contains(&v(&[1.0]), &tol) && !n.contains(&v(&[-1.0]), &tol));
        assert!(normal_of_critical(&c, &v(&[1.0]), &tol).is_err());
    }

    #[test]
    fn psd_critical_cone_normal_excludes_minus_identity() {
        let tol = Tol::default();
        let k = ConeDesc::new(vec![PrimitiveCone::Psd {
            order: 2,
            sign: Sign::Plus,
        }])
        .unwrap();
        let c = critical_cone(&k, &DVector::zeros(3), &DVector::zeros(3), &tol).unwrap();
        let d = svec(&DMatrix::identity(2, 2));
        let n = normal_of_critical(&c, &d, &tol).unwrap();
        assert!(n.contains(&DVector::zeros(3), &tol));
        assert!(!n.contains(&svec(&(-DMatrix::identity(2, 2))), &tol));
        let nd = normal_of_critical_dykstra(&c, &d, &tol);
        let probe = svec(&mat(&[-1.0, 2.0, 2.0, 0.5]));
        assert!((n.project(&probe) - nd.project(&probe)).norm() < 1e-6);
    }

    #[test]
    fn normal_cone_is_polar_of_tangent() {
        let tol = Tol::default();
        let k = ConeDesc::new(vec![PrimitiveCone::Psd {
            order: 2,
            sign: Sign::Plus,
        }])
        .unwrap();
        let y = svec(&mat(&[1.0, 0.0, 0.0, 0.0]));
        let t = crate::cone_core::tangent_cone(&k, &y, &tol).unwrap();
        let n = normal_cone(&k, &y, &tol).unwrap();
        let probe = svec(&mat(&[0.3, -1.0, -1.0, 2.0]));
        assert!((t.polar().project(&probe) - n.project(&probe)).norm() < 1e-12);
    }

    #[test]
    fn trivial_subspace_holds() {
        let tol = Tol::default();
        let c = scalar(Sign::Plus).as_oracle();
        let cert = subspace_cone_trivial(&DMatrix::zeros(1, 0), &c, &tol);
        assert_eq!(cert.verdict, Verdict::Holds);
    }

    #[test]
    fn orthant_line_intersections() {
        let tol = Tol::default();
        let k = ConeDesc::new(vec![PrimitiveCone::Orthant {
            dim: 2,
            sign: Sign::Plus,
        }])
        .unwrap();
        let c = k.as_oracle();
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert_eq!(subspace_cone_trivial(&e1, &c, &tol).verdict, Verdict::Fails);
        let diff = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        assert_eq!(
            subspace_cone_trivial(&diff, &c, &tol).verdict,
            Verdict::Holds
        );
    }

    #[test]
    fn radial_probe_basics() {
        let k = ConeDesc::new(vec![PrimitiveCone::Orthant {
            dim: 2,
            sign: Sign::Minus,
        }])
        .unwrap();
        let tol = Tol::default();
        let member = |x: &AmbientVec| crate::cone_core::contains(&k, x, &tol).unwrap();
        let vbar = v(&[-1.0, 0.0]);
        let grid = [1e-2, 1e-3, 1e-4];
        assert!(radial_probe(&member, &vbar, &v(&[0.0, 0.0]), &grid));
        assert!(radial_probe(&member, &vbar, &v(&[5.0, -1.0]), &grid));
        assert!(!radial_probe(&member, &vbar, &v(&[0.0, 1.0]), &grid));
    }

    #[test]
    fn soc_mixed_critical_is_hyperplane() {
        let tol = Tol::default();
        let k = ConeDesc::new(vec![PrimitiveCone::Soc {
            dim: 3,
            sign: Sign::Plus,
        }])
        .unwrap();
        let z = v(&[0.0, 1.0, 0.0]);
        let y = crate::cone_core::project(&k, &z).unwrap();
        let lam = &z - &y;
        let c = critical_cone(&k, &y, &lam, &tol).unwrap();
        // Directions tangent to the boundary ray and orthogonal to λ.
        assert!(c.contains(&v(&[1.0, 1.0, 0.0]), &tol));
        assert!(c.contains(&v(&[0.0, 0.0, 1.0]), &tol));
        assert!(!c.contains(&v(&[1.0, 0.0, 0.0]), &tol));
    }
}
