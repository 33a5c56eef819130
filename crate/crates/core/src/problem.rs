//! JSON input files: problems, points and direction pairs.
//!
//! Vectors in the constraint space `Y` are written in natural coordinates:
//! either one flat array (PSD blocks contribute their upper triangle column
//! by column, `(1,1), (1,2), (2,2), …`) or an array with one entry per cone
//! block, where PSD blocks may be dense row-major matrices. Matrices acting
//! on `Y` follow the same row order. The √2 scaling of off-diagonal entries
//! is applied internally.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cone_core::{AmbientVec, ConeDesc, PrimitiveCone, Tol};
use crate::constraint_system::{builtin, ConstraintSystem, QuadraticSystem};
use crate::error::{ConeError, Result};
use crate::stability::{example41, AffineMap, GEProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingSpec {
    Builtin(String),
    Affine {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Value,
    },
    Quadratic {
        #[serde(rename = "Q_list")]
        q_list: Vec<Vec<Vec<f64>>>,
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Value,
    },
}

/// `F(p, x) = A_p p + A_x x + c`; `A_p` defaults to `−I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineInX {
    #[serde(rename = "A_x")]
    pub a_x: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    #[serde(rename = "A_p", default, skip_serializing_if = "Option::is_none")]
    pub a_p: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMapSpec {
    Builtin(String),
    AffineInX(AffineInX),
}

/// A point `(x, v)` with an optional multiplier `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSpec {
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Value>,
}

/// A point together with a direction pair `(d, w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    #[serde(flatten)]
    pub point: PointSpec,
    pub d: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub cone: ConeDesc,
    pub mapping: MappingSpec,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub points: BTreeMap<String, PointSpec>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<BaseMapSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbar: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xbar: Option<Vec<f64>>,
}

/// Row scale of each ambient coordinate: `√2` on PSD off-diagonals.
fn row_scales(k: &ConeDesc) -> Vec<f64> {
    let mut out = Vec::with_capacity(k.dim());
    for b in k.blocks() {
        match b.cone {
            PrimitiveCone::Psd { order, .. } => {
                for j in 0..order {
                    for i in 0..=j {
                        out.push(if i == j {
                            1.0
                        } else {
                            std::f64::consts::SQRT_2
                        });
                    }
                }
            }
            _ => out.extend(std::iter::repeat(1.0).take(b.len)),
        }
    }
    out
}

fn numbers(v: &Value, what: &str) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| ConeError::Invalid(format!("{what}: expected an array")))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64()
                .ok_or_else(|| ConeError::Invalid(format!("{what}[{i}]: expected a number")))
        })
        .collect()
}

fn dense(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(ConeError::Invalid(format!(
            "{what}: row {i} has {} entries, expected {c}",
            row.len()
        )));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn upper_triangle(m: &[Vec<f64>], order: usize, what: &str) -> Result<Vec<f64>> {
    if m.len() != order || m.iter().any(|r| r.len() != order) {
        return Err(ConeError::Invalid(format!(
            "{what}: expected a {order}×{order} matrix"
        )));
    }
    let mut out = Vec::new();
    for j in 0..order {
        for i in 0..=j {
            if (m[i][j] - m[j][i]).abs() > 1e-12 * (1.0 + m[i][j].abs()) {
                return Err(ConeError::Invalid(format!(
                    "{what}: matrix is not symmetric at ({i},{j})"
                )));
            }
            out.push(m[i][j]);
        }
    }
    Ok(out)
}

/// Reads a `Y`-vector in natural coordinates and returns it in the internal
/// scaled form.
pub fn y_from_json(k: &ConeDesc, v: &Value, what: &str) -> Result<AmbientVec> {
    let arr = v
        .as_array()
        .ok_or_else(|| ConeError::Invalid(format!("{what}: expected an array")))?;
    let natural: Vec<f64> = if arr.iter().all(Value::is_number) {
        numbers(v, what)?
    } else {
        let blocks = k.blocks();
        // A single PSD block may be given directly as a matrix.
        let pieces: Vec<&Value> = if blocks.len() == 1
            && matches!(blocks[0].cone, PrimitiveCone::Psd { .. })
            && arr.len() != 1
        {
            vec![v]
        } else {
            arr.iter().collect()
        };
        if pieces.len() != blocks.len() {
            return Err(ConeError::Invalid(format!(
                "{what}: {} block entries for {} cone blocks",
                pieces.len(),
                blocks.len()
            )));
        }
        let mut out = Vec::with_capacity(k.dim());
        for (bi, (b, piece)) in blocks.iter().zip(pieces).enumerate() {
            let label = format!("{what} block {bi}");
            let flat = match (b.cone, piece) {
                (PrimitiveCone::Psd { order, .. }, Value::Array(rows))
                    if rows.iter().all(Value::is_array) =>
                {
                    let m: Vec<Vec<f64>> = rows
                        .iter()
                        .map(|r| numbers(r, &label))
                        .collect::<Result<_>>()?;
                    upper_triangle(&m, order, &label)?
                }
                _ => numbers(piece, &label)?,
            };
            if flat.len() != b.len {
                return Err(ConeError::Invalid(format!(
                    "{label}: {} entries, expected {}",
                    flat.len(),
                    b.len
                )));
            }
            out.extend(flat);
        }
        out
    };
    if natural.len() != k.dim() {
        return Err(ConeError::Invalid(format!(
            "{what}: {} entries, expected {}",
            natural.len(),
            k.dim()
        )));
    }
    let s = row_scales(k);
    Ok(DVector::from_fn(k.dim(), |i, _| natural[i] * s[i]))
}

/// Writes an internal `Y`-vector back in flat natural coordinates.
pub fn y_to_natural(k: &ConeDesc, y: &AmbientVec) -> Vec<f64> {
    row_scales(k)
        .iter()
        .zip(y.iter())
        .map(|(s, v)| v / s)
        .collect()
}

fn scale_rows(k: &ConeDesc, m: &mut DMatrix<f64>) {
    for (i, s) in row_scales(k).into_iter().enumerate() {
        m.row_mut(i).scale_mut(s);
    }
}

impl ProblemSpec {
    pub fn from_json(text: &str) -> Result<ProblemSpec> {
        let spec: ProblemSpec = serde_json::from_str(text)
            .map_err(|e| ConeError::Invalid(format!("problem file: {e}")))?;
        spec.cone.validate()?;
        Ok(spec)
    }

    pub fn system(&self) -> Result<Arc<dyn ConstraintSystem>> {
        let k = &self.cone;
        match &self.mapping {
            MappingSpec::Builtin(name) => {
                let sys = builtin(name)?;
                if sys.cone() != k {
                    return Err(ConeError::Invalid(format!(
                        "cone does not match builtin mapping '{name}'"
                    )));
                }
                Ok(sys)
            }
            MappingSpec::Affine { a, b } => {
                let mut a = dense(a, "mapping.affine.A")?;
                if a.nrows() != k.dim() {
                    return Err(ConeError::Invalid(format!(
                        "mapping.affine.A: {} rows, expected {}",
                        a.nrows(),
                        k.dim()
                    )));
                }
                scale_rows(k, &mut a);
                let b = y_from_json(k, b, "mapping.affine.b")?;
                Ok(Arc::new(QuadraticSystem::affine(
                    "affine",
                    k.clone(),
                    a,
                    b,
                )?))
            }
            MappingSpec::Quadratic { q_list, a, b } => {
                let mut a = dense(a, "mapping.quadratic.A")?;
                if a.nrows() != k.dim() || q_list.len() != k.dim() {
                    return Err(ConeError::Invalid(format!(
                        "mapping.quadratic: A has {} rows and Q_list {} entries, expected {}",
                        a.nrows(),
                        q_list.len(),
                        k.dim()
                    )));
                }
                scale_rows(k, &mut a);
                let s = row_scales(k);
                let q = q_list
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        dense(m, &format!("mapping.quadratic.Q_list[{i}]")).map(|m| m * s[i])
                    })
                    .collect::<Result<Vec<_>>>()?;
                let b = y_from_json(k, b, "mapping.quadratic.b")?;
                Ok(Arc::new(QuadraticSystem::new(
                    "quadratic",
                    k.clone(),
                    q,
                    a,
                    b,
                )?))
            }
        }
    }

    /// The generalized equation, when the file carries `F`, `pbar` and `xbar`.
    pub fn ge_problem(&self, tol: &Tol) -> Result<Option<GEProblem>> {
        let Some(f) = &self.f else { return Ok(None) };
        match f {
            BaseMapSpec::Builtin(name) if name == "example41" => Ok(Some(example41(tol)?)),
            BaseMapSpec::Builtin(name) => Err(ConeError::Invalid(format!(
                "unknown builtin base map '{name}'"
            ))),
            BaseMapSpec::AffineInX(spec) => {
                let sys = self.system()?;
                let a_x = dense(&spec.a_x, "F.affine_in_x.A_x")?;
                let n = a_x.ncols();
                let a_p = match &spec.a_p {
                    Some(rows) => dense(rows, "F.affine_in_x.A_p")?,
                    None => -DMatrix::identity(n, n),
                };
                let map = AffineMap::new(a_p, a_x, DVector::from_column_slice(&spec.c))?;
                let pbar = self
                    .pbar
                    .clone()
                    .ok_or_else(|| ConeError::Invalid("missing field 'pbar'".into()))?;
                let xbar = self
                    .xbar
                    .clone()
                    .ok_or_else(|| ConeError::Invalid("missing field 'xbar'".into()))?;
                Ok(Some(GEProblem::new(
                    sys,
                    Arc::new(map),
                    DVector::from_vec(pbar),
                    DVector::from_vec(xbar),
                    tol,
                )?))
            }
        }
    }
}

/// A parsed point in internal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub lambda: Option<AmbientVec>,
}

impl PointSpec {
    pub fn from_json(text: &str) -> Result<PointSpec> {
        serde_json::from_str(text).map_err(|e| ConeError::Invalid(format!("point file: {e}")))
    }

    /// `v` defaults to zero.
    pub fn resolve(&self, sys: &dyn ConstraintSystem) -> Result<Point> {
        let n = sys.dim_x();
        for (name, len) in [
            ("x", Some(self.x.len())),
            ("v", self.v.as_ref().map(Vec::len)),
        ] {
            if let Some(len) = len {
                if len != n {
                    return Err(ConeError::Invalid(format!(
                        "point.{name}: {len} entries, expected {n}"
                    )));
                }
            }
        }
        let lambda = self
            .lambda
            .as_ref()
            .map(|l| y_from_json(sys.cone(), l, "point.lambda"))
            .transpose()?;
        Ok(Point {
            x: DVector::from_column_slice(&self.x),
            v: self
                .v
                .as_ref()
                .map_or_else(|| DVector::zeros(n), |v| DVector::from_column_slice(v)),
            lambda,
        })
    }
}

impl PairSpec {
    pub fn from_json(text: &str) -> Result<PairSpec> {
        serde_json::from_str(text).map_err(|e| ConeError::Invalid(format!("pair file: {e}")))
    }

    pub fn resolve(
        &self,
        sys: &dyn ConstraintSystem,
    ) -> Result<(Point, DVector<f64>, DVector<f64>)> {
        let n = sys.dim_x();
        for (name, len) in [("d", self.d.len()), ("w", self.w.len())] {
            if len != n {
                return Err(ConeError::Invalid(format!(
                    "pair.{name}: {len} entries, expected {n}"
                )));
            }
        }
        Ok((
            self.point.resolve(sys)?,
            DVector::from_column_slice(&self.d),
            DVector::from_column_slice(&self.w),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint_system::example1;

    const EXAMPLE1: &str = r#"{
        "cone": {"product": [{"psd": {"order": 2, "sign": "plus"}}, {"orthant": {"dim": 1, "sign": "plus"}}]},
        "mapping": {"affine": {"A": [[1,0,1],[0,0,1],[0,1,1],[0,0,1]], "b": [[[1,0],[0,1]], [0]]}}
    }"#;

    #[test]
    fn affine_file_matches_builtin() {
        let spec = ProblemSpec::from_json(EXAMPLE1).unwrap();
        let sys = spec.system().unwrap();
        let reference = example1();
        let x = DVector::from_vec(vec![0.3, -0.7, 1.1]);
        assert!((sys.value(&x) - reference.value(&x)).norm() < 1e-14);
        assert!((sys.jacobian(&x) - reference.jacobian(&x)).norm() < 1e-14);
    }

    #[test]
    fn y_vector_forms_agree() {
        let k = example1().cone().clone();
        let flat = y_from_json(&k, &serde_json::json!([1.0, 2.0, 3.0, 4.0]), "y").unwrap();
        let blocks = y_from_json(
            &k,
            &serde_json::json!([[[1.0, 2.0], [2.0, 3.0]], [4.0]]),
            "y",
        )
        .unwrap();
        assert_eq!(flat, blocks);
        assert!((flat[1] - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(y_to_natural(&k, &flat), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn bad_shapes_are_reported() {
        let k = example1().cone().clone();
        let e = y_from_json(&k, &serde_json::json!([1.0, 2.0]), "point.lambda").unwrap_err();
        assert!(e.to_string().contains("point.lambda"));
        let e = y_from_json(
            &k,
            &serde_json::json!([[[1.0, 2.0], [0.0, 3.0]], [4.0]]),
            "b",
        )
        .unwrap_err();
        assert!(e.to_string().contains("symmetric"));
        assert!(ProblemSpec::from_json(
            r#"{"cone": {"product": []}, "mapping": {"builtin": "nope"}}"#
        )
        .unwrap()
        .system()
        .is_err());
    }

    #[test]
    fn builtin_cone_must_match() {
        let text = r#"{"cone": {"product": [{"orthant": {"dim": 1, "sign": "minus"}}]}, "mapping": {"builtin": "section32"}}"#;
        assert!(ProblemSpec::from_json(text).unwrap().system().is_ok());
        let text = r#"{"cone": {"product": [{"orthant": {"dim": 1, "sign": "plus"}}]}, "mapping": {"builtin": "section32"}}"#;
        assert!(ProblemSpec::from_json(text).unwrap().system().is_err());
    }
}
