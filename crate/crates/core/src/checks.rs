//! Diagnostics for finite Young measures.
//!
//! Full quasiconvexity cannot be tested with finitely many functions, so the
//! Jensen check is restricted to two families whose behaviour on laminates
//! is decidable: convex functions (inequality) and minors (equality, since
//! minors are affine along rank-one lines).

use serde::Serialize;

use crate::constraint::PointConstraint;
use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::laminate::{AtomRole, DiscreteLaminate};
use crate::matrix::{minor_index_sets, Matrix};

/// Numbers collected for one laminate. All fields are nonnegative.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LaminateDiagnostics {
    pub barycenter_err: f64,
    pub moment_p: f64,
    pub tightness_ratio: f64,
    pub support_residual: f64,
    pub bad_mass: Dyadic,
    pub minors_gap: f64,
    pub depth: usize,
}

/// `Σ w_i A_i`.
pub fn barycenter(nu: &DiscreteLaminate) -> Matrix {
    let mut acc = Matrix::zeros_unchecked(nu.dim);
    let mut comp = Matrix::zeros_unchecked(nu.dim);
    // Kahan summation keeps deep laminates (many tiny weights) accurate
    for atom in &nu.atoms {
        let w = atom.weight.to_f64();
        for (k, x) in atom.matrix.as_slice().iter().enumerate() {
            let y = w * x - comp.as_slice()[k];
            let t = acc.as_slice()[k] + y;
            comp.as_mut_slice()[k] = (t - acc.as_slice()[k]) - y;
            acc.as_mut_slice()[k] = t;
        }
    }
    acc
}

/// `Σ w_i ‖A_i - M‖^p`.
pub fn moment_p(nu: &DiscreteLaminate, m: &Matrix, p: f64) -> f64 {
    nu.atoms
        .iter()
        .map(|a| a.weight.to_f64() * (a.matrix - *m).frobenius_norm().powf(p))
        .sum()
}

/// Tightness ratio `∫|A - M|^p dν / max{R(M), 0}^{p/d}`.
///
/// When `M` already satisfies the constraint the only admissible measure is
/// the Dirac mass; the ratio is then reported as 0, and any nonzero moment is
/// an error.
pub fn tightness_ratio(nu: &DiscreteLaminate, m: &Matrix, constraint: PointConstraint, p: f64) -> Result<f64> {
    let moment = moment_p(nu, m, p);
    let r = constraint.violation(m.determinant());
    if r <= 0.0 {
        if moment <= 1e-12 {
            return Ok(0.0);
        }
        return Err(Error::Precondition(format!(
            "constraint already satisfied at the barycenter but the moment is {moment:e}"
        )));
    }
    Ok(moment / r.powf(p / m.dim() as f64))
}

/// Support check: `(max over good atoms of R(A), weight of atoms with
/// R(A) > 1e-8 (1 + |r|))`.
pub fn support_residual(nu: &DiscreteLaminate, constraint: PointConstraint) -> (f64, Dyadic) {
    let tol = 1e-8 * constraint.scale();
    let mut good = 0.0f64;
    let mut off = Dyadic::ZERO;
    for a in &nu.atoms {
        let r = constraint.violation(a.matrix.determinant());
        if a.role == AtomRole::Good {
            good = good.max(r);
        }
        if r > tol {
            off = off + a.weight;
        }
    }
    (good, off)
}

/// Largest normalized gap `|⟨m, ν⟩ - m([ν])| / (1 + |m([ν])|)` over every
/// minor `m` of every order.
pub fn minors_consistency(nu: &DiscreteLaminate) -> f64 {
    let d = nu.dim;
    let bary = barycenter(nu);
    let weights: Vec<f64> = nu.atoms.iter().map(|a| a.weight.to_f64()).collect();
    let mut worst = 0.0f64;
    for k in 1..=d {
        let sets = minor_index_sets(d, k);
        for rows in &sets {
            for cols in &sets {
                let avg: f64 = nu
                    .atoms
                    .iter()
                    .zip(&weights)
                    .map(|(a, w)| w * a.matrix.minor(rows, cols))
                    .sum();
                let at_bary = bary.minor(rows, cols);
                worst = worst.max((avg - at_bary).abs() / (1.0 + at_bary.abs()));
            }
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestTag {
    Convex,
    MinorAffine,
}

pub struct TestFunction {
    pub name: String,
    pub tag: TestTag,
    pub f: Box<dyn Fn(&Matrix) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("tag", &self.tag)
            .finish()
    }
}

#[derive(Debug, Default)]
pub struct TestFunctionFamily {
    pub members: Vec<TestFunction>,
}

impl TestFunctionFamily {
    pub fn push(&mut self, name: impl Into<String>, tag: TestTag, f: impl Fn(&Matrix) -> f64 + Send + Sync + 'static) {
        self.members.push(TestFunction {
            name: name.into(),
            tag,
            f: Box::new(f),
        });
    }

    /// Frobenius powers, entry moduli and the spectral norm (convex);
    /// entries, `det` and all 2x2 minors (minor-affine).
    pub fn standard(dim: usize, p: f64) -> Self {
        let mut fam = TestFunctionFamily::default();
        fam.push(format!("frobenius^{p}"), TestTag::Convex, move |a| a.frobenius_norm().powf(p));
        fam.push("frobenius^2", TestTag::Convex, |a| a.frobenius_norm().powi(2));
        fam.push("spectral", TestTag::Convex, |a| {
            a.signed_svd().map(|s| s.diag.last().unwrap().abs()).unwrap_or(f64::NAN)
        });
        fam.push("|a11|", TestTag::Convex, |a| a[(0, 0)].abs());
        fam.push("a11", TestTag::MinorAffine, |a| a[(0, 0)]);
        fam.push("trace", TestTag::MinorAffine, |a| a.trace());
        fam.push("det", TestTag::MinorAffine, |a| a.determinant());
        for rows in minor_index_sets(dim, 2) {
            for cols in minor_index_sets(dim, 2) {
                let (r, c) = (rows.clone(), cols.clone());
                fam.push(
                    format!("minor{:?}x{:?}", rows, cols),
                    TestTag::MinorAffine,
                    move |a| a.minor(&r, &c),
                );
            }
        }
        fam
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JensenViolation {
    pub name: String,
    pub tag: TestTag,
    pub at_barycenter: f64,
    pub average: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct JensenReport {
    pub checked: usize,
    /// Largest `h([ν]) - ⟨h, ν⟩` over convex members (nonpositive when fine).
    pub max_convex_excess: f64,
    /// Largest normalized equality gap over minor-affine members.
    pub max_affine_gap: f64,
    pub violations: Vec<JensenViolation>,
}

impl JensenReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Jensen checks: `h([ν]) <= ⟨h, ν⟩` for convex members, equality for
/// minor-affine ones.
pub fn jensen_convex_check(nu: &DiscreteLaminate, family: &TestFunctionFamily) -> JensenReport {
    let bary = barycenter(nu);
    let weights: Vec<f64> = nu.atoms.iter().map(|a| a.weight.to_f64()).collect();
    let mut report = JensenReport {
        max_convex_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    for member in &family.members {
        let at_bary = (member.f)(&bary);
        let average: f64 = nu.atoms.iter().zip(&weights).map(|(a, w)| w * (member.f)(&a.matrix)).sum();
        report.checked += 1;
        let ok = match member.tag {
            TestTag::Convex => {
                let excess = at_bary - average;
                report.max_convex_excess = report.max_convex_excess.max(excess);
                excess <= 1e-9 * (1.0 + average.abs())
            }
            TestTag::MinorAffine => {
                let gap = (at_bary - average).abs() / (1.0 + at_bary.abs());
                report.max_affine_gap = report.max_affine_gap.max(gap);
                gap <= 1e-8
            }
        };
        if !ok {
            report.violations.push(JensenViolation {
                name: member.name.clone(),
                tag: member.tag,
                at_barycenter: at_bary,
                average,
            });
        }
    }
    if report.max_convex_excess == f64::NEG_INFINITY {
        report.max_convex_excess = 0.0;
    }
    report
}

/// Collects every diagnostic for `nu` against its own rate.
pub fn diagnose(nu: &DiscreteLaminate, constraint: PointConstraint, p: f64) -> Result<LaminateDiagnostics> {
    let bary = barycenter(nu);
    let (support, _) = support_residual(nu, constraint);
    Ok(LaminateDiagnostics {
        barycenter_err: (bary - nu.root).frobenius_norm(),
        moment_p: moment_p(nu, &nu.root, p),
        tightness_ratio: tightness_ratio(nu, &nu.root, constraint, p)?,
        support_residual: support,
        bad_mass: nu.bad_mass(),
        minors_gap: minors_consistency(nu),
        depth: nu.depth,
    })
}
