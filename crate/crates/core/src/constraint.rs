//! Determinant constraints `R(x, A)` and their sublevel sets `S_R`.
//!
//! Two kinds are supported: an exact rate `R = |det A - r(x)|` and an
//! interval `R = max{J1(x) - det A, det A - J2(x), 0}`. The growth exponent
//! `q` is always the dimension, and the working exponent must satisfy
//! `1 < p < d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A scalar field: one constant, or one value per grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Field {
    Constant(f64),
    Cells(Vec<f64>),
}

impl Field {
    #[inline]
    pub fn at(&self, cell: usize) -> f64 {
        match self {
            Field::Constant(v) => *v,
            Field::Cells(vs) => vs[cell],
        }
    }

    fn len(&self) -> Option<usize> {
        match self {
            Field::Constant(_) => None,
            Field::Cells(vs) => Some(vs.len()),
        }
    }

    fn values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            Field::Constant(v) => Box::new(std::iter::once(*v)),
            Field::Cells(vs) => Box::new(vs.iter().copied()),
        }
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Constant(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintKind {
    Exact(Field),
    /// `J1` may be `-inf`, `J2` may be `+inf`.
    Interval { lower: Field, upper: Field },
}

/// Constraint at a single point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PointConstraint {
    Exact(f64),
    Interval(f64, f64),
}

impl PointConstraint {
    /// `R(A)` evaluated from a determinant value.
    #[inline]
    pub fn violation(&self, det: f64) -> f64 {
        match *self {
            PointConstraint::Exact(r) => (det - r).abs(),
            PointConstraint::Interval(lo, hi) => (lo - det).max(det - hi).max(0.0),
        }
    }

    /// Scale used by the relative tolerances (`1 + |target|`).
    pub fn scale(&self) -> f64 {
        match *self {
            PointConstraint::Exact(r) => 1.0 + r.abs(),
            PointConstraint::Interval(lo, hi) => {
                let lo = if lo.is_finite() { lo.abs() } else { 0.0 };
                let hi = if hi.is_finite() { hi.abs() } else { 0.0 };
                1.0 + lo.max(hi)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSpec {
    kind: ConstraintKind,
    p: f64,
    dim: usize,
}

impl ConstraintSpec {
    pub fn exact(rate: impl Into<Field>, p: f64, dim: usize) -> Result<Self> {
        let rate = rate.into();
        if rate.values().any(|v| !v.is_finite()) {
            return Err(Error::Constraint("exact rates must be finite".into()));
        }
        Self::validated(ConstraintKind::Exact(rate), p, dim)
    }

    pub fn interval(lower: impl Into<Field>, upper: impl Into<Field>, p: f64, dim: usize) -> Result<Self> {
        let (lower, upper) = (lower.into(), upper.into());
        if let (Some(a), Some(b)) = (lower.len(), upper.len()) {
            if a != b {
                return Err(Error::Constraint(format!(
                    "lower and upper tables have {a} and {b} cells"
                )));
            }
        }
        if lower.values().any(|v| v.is_nan() || v == f64::INFINITY) {
            return Err(Error::Constraint("J1 must lie in [-inf, inf)".into()));
        }
        if upper.values().any(|v| v.is_nan() || v == f64::NEG_INFINITY) {
            return Err(Error::Constraint("J2 must lie in (-inf, inf]".into()));
        }
        let n = lower.len().or(upper.len()).unwrap_or(1);
        for c in 0..n {
            let (a, b) = (lower.at(c), upper.at(c));
            if a > b {
                return Err(Error::Constraint(format!("J1 = {a} > J2 = {b} at cell {c}")));
            }
        }
        Self::validated(ConstraintKind::Interval { lower, upper }, p, dim)
    }

    fn validated(kind: ConstraintKind, p: f64, dim: usize) -> Result<Self> {
        if !(2..=crate::matrix::MAX_DIM).contains(&dim) {
            return Err(Error::Dimension(dim));
        }
        check_exponent(p, dim)?;
        Ok(ConstraintSpec { kind, p, dim })
    }

    pub fn kind(&self) -> &ConstraintKind {
        &self.kind
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `p / q` with `q = d`.
    pub fn power(&self) -> f64 {
        self.p / self.dim as f64
    }

    /// Number of cells the tables cover, `None` for constants.
    pub fn cell_count(&self) -> Option<usize> {
        match &self.kind {
            ConstraintKind::Exact(f) => f.len(),
            ConstraintKind::Interval { lower, upper } => lower.len().or(upper.len()),
        }
    }

    pub fn check_cells(&self, cells: usize) -> Result<()> {
        match self.cell_count() {
            Some(n) if n != cells => Err(Error::Shape(format!(
                "constraint table has {n} cells, grid has {cells}"
            ))),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn at(&self, cell: usize) -> PointConstraint {
        match &self.kind {
            ConstraintKind::Exact(r) => PointConstraint::Exact(r.at(cell)),
            ConstraintKind::Interval { lower, upper } => {
                PointConstraint::Interval(lower.at(cell), upper.at(cell))
            }
        }
    }

    /// `R(x, A)`.
    pub fn violation(&self, cell: usize, a: &Matrix) -> f64 {
        self.at(cell).violation(a.determinant())
    }

    /// Integrand `max{R, 0}^{p/d}` of the residual functional.
    pub fn residual_density(&self, cell: usize, a: &Matrix) -> f64 {
        self.violation(cell, a).powf(self.power())
    }
}

pub fn check_exponent(p: f64, dim: usize) -> Result<()> {
    if p.is_finite() && p > 1.0 && p < dim as f64 {
        Ok(())
    } else {
        Err(Error::Exponent { p, dim })
    }
}

/// Projection of `t` onto `[j1, j2]`; the rate used to laminate towards an
/// interval constraint.
pub fn clamp_rate(t: f64, j1: f64, j2: f64) -> Result<f64> {
    if j1.is_nan() || j2.is_nan() || j1 > j2 {
        return Err(Error::Constraint(format!("empty interval [{j1}, {j2}]")));
    }
    Ok(if t < j1 {
        j1
    } else if t > j2 {
        j2
    } else {
        t
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_cases() {
        assert_eq!(clamp_rate(5.0, 1.0, 2.0).unwrap(), 2.0);
        assert_eq!(clamp_rate(1.5, 1.0, 2.0).unwrap(), 1.5);
        assert_eq!(clamp_rate(0.0, 1.0, 2.0).unwrap(), 1.0);
        assert_eq!(clamp_rate(3.0, f64::NEG_INFINITY, 0.0).unwrap(), 0.0);
        assert_eq!(clamp_rate(-7.0, f64::NEG_INFINITY, f64::INFINITY).unwrap(), -7.0);
        assert!(clamp_rate(0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn exponent_guard() {
        assert!(ConstraintSpec::exact(2.0, 1.5, 2).is_ok());
        for p in [2.0, 2.5, 1.0, 0.5, f64::NAN] {
            assert!(matches!(
                ConstraintSpec::exact(2.0, p, 2),
                Err(Error::Exponent { .. })
            ));
        }
        assert!(ConstraintSpec::exact(2.0, 2.5, 3).is_ok());
    }

    #[test]
    fn interval_validation() {
        assert!(ConstraintSpec::interval(f64::NEG_INFINITY, f64::INFINITY, 1.5, 2).is_ok());
        assert!(ConstraintSpec::interval(2.0, 1.0, 1.5, 2).is_err());
        assert!(ConstraintSpec::interval(f64::INFINITY, f64::INFINITY, 1.5, 2).is_err());
        let lo = Field::Cells(vec![0.0, 1.0]);
        let hi = Field::Cells(vec![1.0, 0.5]);
        assert!(ConstraintSpec::interval(lo, hi, 1.5, 2).is_err());
        let lo = Field::Cells(vec![0.0, 1.0]);
        let hi = Field::Cells(vec![1.0]);
        assert!(ConstraintSpec::interval(lo, hi, 1.5, 2).is_err());
    }

    #[test]
    fn violation_values() {
        let spec = ConstraintSpec::interval(1.0, 2.0, 1.5, 2).unwrap();
        assert_eq!(spec.at(0).violation(1.5), 0.0);
        assert_eq!(spec.at(0).violation(0.25), 0.75);
        assert_eq!(spec.at(0).violation(5.0), 3.0);
        let exact = ConstraintSpec::exact(2.0, 1.5, 2).unwrap();
        let id = Matrix::identity(2).unwrap();
        assert_eq!(exact.residual_density(0, &id), 1.0);
        assert!(exact.check_cells(10).is_ok());
        let table = ConstraintSpec::exact(Field::Cells(vec![1.0; 4]), 1.5, 2).unwrap();
        assert!(table.check_cells(3).is_err());
    }
}
