//! Rank-one splitting calculus and the recursive laminate builder.
//!
//! A matrix `M` is brought to the normal form `diag(σ1, …, ±σd)` by
//! [`Matrix::signed_svd`]. Depending on the size of `σ3⋯σd` relative to
//! `(|r|/2)^{(d-2)/d}`, it is either split twice along rank-one lines into
//! four matrices (two with determinant `r`, two with `2 det M - r`), or
//! pushed once along `e3 ⊗ e3` to enlarge the third singular value. Bad
//! children are split again, so after `k` Case I levels the mass carried off
//! the constraint set is exactly `2^{-k}`.
//!
//! Splits are computed in the diagonal frame and mapped back with
//! `P (a ⊗ b) Qᵀ = (P a) ⊗ (Q b)`, so every split in the stored tree is a
//! sum of explicit rank-one terms in the original frame.

use serde::{Deserialize, Serialize};

use crate::constraint::{clamp_rate, PointConstraint};
use crate::dyadic::{Dyadic, MAX_LOG2_DEN};
use crate::error::{Error, Result};
use crate::matrix::{Matrix, SignedSvd, MAX_DIM, MIN_DIM};

/// Deepest accepted Case I depth.
pub const MAX_CASE_ONE_DEPTH: usize = 60;
/// Upper bound on the number of atoms a single build may produce.
pub const MAX_ATOMS: usize = 1 << 22;
pub const DEFAULT_DEPTH: usize = 8;

/// Two-matrices-per-line splits along `e1⊗e2` and `e2⊗e1`, or a single
/// stretch along `e3⊗e3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitCase {
    CaseI,
    CaseII,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Good,
    Bad,
    Continue,
}

/// Rank-one term `a ⊗ b`; children are `parent + Σ s_j a_j ⊗ b_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankOne {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl RankOne {
    pub fn matrix(&self) -> Matrix {
        Matrix::outer(&self.a, &self.b).expect("rank-one factors share the matrix dimension")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitChild {
    /// Weight relative to the parent (1/4 or 1/2).
    pub weight: Dyadic,
    pub matrix: Matrix,
    pub role: Role,
    /// Sign applied to each rank-one direction of the step.
    pub signs: Vec<i8>,
    /// For Case I, the matrix after the first of the two nested splits.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub intermediate: Option<Matrix>,
    /// Index in the laminate tree of the step that splits this child further.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub next: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStep {
    pub parent: Matrix,
    pub case: SplitCase,
    /// `γ` for Case I, `δ` for Case II.
    pub magnitude: f64,
    pub directions: Vec<RankOne>,
    pub children: Vec<SplitChild>,
    /// Number of Case I levels above this step on its branch.
    pub level: usize,
}

impl SplitStep {
    /// Rewrites a diagonal-frame step in the frame of `svd`, anchored at the
    /// original matrix `parent`.
    pub fn to_physical(&self, svd: &SignedSvd, parent: &Matrix) -> SplitStep {
        let directions: Vec<RankOne> = self
            .directions
            .iter()
            .map(|d| RankOne {
                a: svd.p.mul_vec(&d.a),
                b: svd.q.mul_vec(&d.b),
            })
            .collect();
        let terms: Vec<Matrix> = directions.iter().map(RankOne::matrix).collect();
        let children = self
            .children
            .iter()
            .map(|c| {
                let mut m = *parent;
                let mut intermediate = None;
                for (j, (t, &s)) in terms.iter().zip(&c.signs).enumerate() {
                    m = m + t.scale(s as f64);
                    if j == 0 && terms.len() > 1 {
                        intermediate = Some(m);
                    }
                }
                SplitChild {
                    weight: c.weight,
                    matrix: m,
                    role: c.role,
                    signs: c.signs.clone(),
                    intermediate,
                    next: None,
                }
            })
            .collect();
        SplitStep {
            parent: *parent,
            case: self.case,
            magnitude: self.magnitude,
            directions,
            children,
            level: self.level,
        }
    }

    /// Largest rank-one defect over the nested segments of the step.
    pub fn max_rank_one_defect(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for c in &self.children {
            match c.intermediate {
                Some(mid) => {
                    worst = worst.max((mid - self.parent).rank_one_defect()?);
                    worst = worst.max((c.matrix - mid).rank_one_defect()?);
                }
                None => worst = worst.max((c.matrix - self.parent).rank_one_defect()?),
            }
        }
        Ok(worst)
    }
}

/// `Π_{i≥3} |σ_i|` and the Case I threshold `(|r - det M|/4)^{(d-2)/d}`.
fn case_quantities(svd: &SignedSvd, r: f64) -> (f64, f64) {
    let d = svd.dim();
    let prod: f64 = svd.diag[2..].iter().map(|x| x.abs()).product();
    let det: f64 = svd.diag.iter().product();
    let threshold = ((r - det).abs() / 4.0).powf((d as f64 - 2.0) / d as f64);
    (prod, threshold)
}

/// Case I iff `σ3⋯σd >= (|r - det M|/4)^{(d-2)/d}`, the lower bound the
/// Case I distance estimates rely on. Every matrix with
/// `σ3⋯σd >= (|r|/2)^{(d-2)/d}` qualifies, and a Case II matrix always has
/// `σ3⋯σd < (|r|/2)^{(d-2)/d}`. Equality counts as Case I; for `d = 2` the
/// condition always holds.
pub fn classify_case(svd: &SignedSvd, r: f64) -> SplitCase {
    let (prod, threshold) = case_quantities(svd, r);
    if prod >= threshold {
        SplitCase::CaseI
    } else {
        SplitCase::CaseII
    }
}

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[i] = 1.0;
    e
}

/// Case I split in the diagonal frame of `svd`:
/// `D ± γ e1⊗e2 ± γ e2⊗e1`, `γ = |r - det D|^{1/2} / (σ3⋯σd)^{1/2}`.
pub fn split_case_one(svd: &SignedSvd, r: f64) -> Result<SplitStep> {
    let d = svd.dim();
    let parent = svd.diag_matrix();
    let det0: f64 = svd.diag.iter().product();
    let (prod, _) = case_quantities(svd, r);
    let gap = (r - det0).abs();
    let gamma = if gap == 0.0 {
        0.0
    } else if prod == 0.0 {
        return Err(Error::Logic(format!(
            "Case I split with vanishing σ3⋯σd but det = {det0} != r = {r}"
        )));
    } else {
        (gap / prod).sqrt()
    };

    let directions = vec![
        RankOne {
            a: unit(d, 0).iter().map(|x| x * gamma).collect(),
            b: unit(d, 1),
        },
        RankOne {
            a: unit(d, 1).iter().map(|x| x * gamma).collect(),
            b: unit(d, 0),
        },
    ];
    let quarter = Dyadic::pow2_inv(2);
    let mut children: Vec<SplitChild> = [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)]
        .iter()
        .map(|&(s1, s2)| {
            let mut mid = parent;
            mid[(0, 1)] += s1 as f64 * gamma;
            let mut m = mid;
            m[(1, 0)] += s2 as f64 * gamma;
            SplitChild {
                weight: quarter,
                matrix: m,
                role: Role::Good,
                signs: vec![s1, s2],
                intermediate: Some(mid),
                next: None,
            }
        })
        .collect();

    if gamma > 0.0 {
        // the two children closest to the target rate are the good ones
        let mut order: Vec<usize> = (0..4).collect();
        let err: Vec<f64> = children
            .iter()
            .map(|c| (c.matrix.determinant() - r).abs())
            .collect();
        order.sort_by(|&a, &b| err[a].total_cmp(&err[b]));
        for &i in &order[2..] {
            children[i].role = Role::Bad;
        }
    }

    Ok(SplitStep {
        parent,
        case: SplitCase::CaseI,
        magnitude: gamma,
        directions,
        children,
        level: 0,
    })
}

/// Case II split in the diagonal frame: `D ± δ e3⊗e3`, `δ = 2 (|r|/2)^{1/d}`.
pub fn split_case_two(svd: &SignedSvd, r: f64) -> Result<SplitStep> {
    let d = svd.dim();
    if d < 3 {
        return Err(Error::Logic("Case II split requested for d = 2".into()));
    }
    if r == 0.0 {
        return Err(Error::Logic("Case II split with r = 0 (threshold is zero)".into()));
    }
    let parent = svd.diag_matrix();
    let delta = 2.0 * (r.abs() / 2.0).powf(1.0 / d as f64);
    let half = Dyadic::pow2_inv(1);
    let children = [1i8, -1]
        .iter()
        .map(|&s| {
            let mut m = parent;
            m[(2, 2)] += s as f64 * delta;
            SplitChild {
                weight: half,
                matrix: m,
                role: Role::Continue,
                signs: vec![s],
                intermediate: None,
                next: None,
            }
        })
        .collect();
    Ok(SplitStep {
        parent,
        case: SplitCase::CaseII,
        magnitude: delta,
        directions: vec![RankOne {
            a: unit(d, 2).iter().map(|x| x * delta).collect(),
            b: unit(d, 2),
        }],
        children,
        level: 0,
    })
}

/// Frame in which splits are computed. `Svd` is the diagonal normal form;
/// `Lattice` keeps every rank-one normal on a coordinate axis, so the split
/// can be realized exactly on a lattice-aligned triangulation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    #[default]
    Svd,
    Lattice,
}

fn with_columns(m: &Matrix, cols: &[(usize, &[f64])]) -> Matrix {
    let mut out = *m;
    for &(j, v) in cols {
        for (i, x) in v.iter().enumerate() {
            out[(i, j)] = *x;
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gram-Schmidt of `cols`; returns the volume they span and an orthonormal
/// basis of the orthogonal complement of their span.
fn complement(d: usize, cols: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let scale = cols.iter().map(|c| dot(c, c).sqrt()).fold(1.0, f64::max);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut vol = 1.0;
    let reduce = |v: &[f64], basis: &Vec<Vec<f64>>| {
        let mut w = v.to_vec();
        for _ in 0..2 {
            for q in basis {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        w
    };
    for c in cols {
        let w = reduce(c, &basis);
        let norm = dot(&w, &w).sqrt();
        vol *= norm;
        if norm > 1e-14 * scale {
            basis.push(w.iter().map(|x| x / norm).collect());
        }
    }
    let mut comp = Vec::new();
    for i in 0..d {
        let w = reduce(&unit(d, i), &basis);
        let norm = dot(&w, &w).sqrt();
        if norm > 1e-8 {
            let q: Vec<f64> = w.iter().map(|x| x / norm).collect();
            basis.push(q.clone());
            comp.push(q);
        }
    }
    (vol, comp)
}

/// Columns `(i, j)` whose complement spans the largest volume.
fn lattice_pair(m: &Matrix) -> (usize, usize, f64, Vec<Vec<f64>>) {
    let d = m.dim();
    let mut best: Option<(usize, usize, f64, Vec<Vec<f64>>)> = None;
    for i in 0..d {
        for j in i + 1..d {
            let rest: Vec<Vec<f64>> = (0..d).filter(|&k| k != i && k != j).map(|k| m.column(k)).collect();
            let (vol, comp) = complement(d, &rest);
            if best.as_ref().map_or(true, |b| vol > b.2) {
                best = Some((i, j, vol, comp));
            }
        }
    }
    best.expect("d >= 2")
}

/// Case selection in the lattice frame: Case I iff the volume of the
/// columns outside the best pair is at least `(|r - det M|/4)^{(d-2)/d}`.
pub fn classify_lattice(m: &Matrix, r: f64) -> SplitCase {
    let d = m.dim() as f64;
    let (_, _, vol, _) = lattice_pair(m);
    if vol >= ((r - m.determinant()).abs() / 4.0).powf((d - 2.0) / d) {
        SplitCase::CaseI
    } else {
        SplitCase::CaseII
    }
}

/// Case I in the lattice frame: `M ± a⊗e_i ± c⊗e_j` with `a, c` in the
/// complement of the remaining columns, `|a| = |c| = (|r - det M|/V)^{1/2}`
/// and the angle chosen so that the first-order determinant changes cancel
/// on the diagonal sign pairs, which then land exactly on `r`. The other
/// pair has determinants `2 det M - r ± 2 c_a`.
pub fn split_lattice_one(m: &Matrix, r: f64) -> Result<SplitStep> {
    let d = m.dim();
    let det0 = m.determinant();
    let gap = r - det0;
    let (i, j, vol, comp) = lattice_pair(m);
    if comp.len() < 2 {
        return Err(Error::Logic("complement of the remaining columns is degenerate".into()));
    }
    let (e, f) = (&comp[0], &comp[1]);
    let m0 = with_columns(m, &[(i, e), (j, f)]).determinant();
    let (rho, sigma) = if gap == 0.0 {
        (0.0, 1.0)
    } else if vol == 0.0 || m0 == 0.0 {
        return Err(Error::Logic(format!(
            "lattice Case I split with degenerate columns but det = {det0} != r = {r}"
        )));
    } else {
        ((gap.abs() / m0.abs()).sqrt(), (gap * m0).signum())
    };
    // first-order terms: c_X(θ) + c_Y(θ) = α cos θ + β sin θ
    let lin = |v: &[f64], col: usize| with_columns(m, &[(col, v)]).determinant();
    let alpha = lin(e, i) + sigma * lin(f, j);
    let beta = lin(f, i) - sigma * lin(e, j);
    let theta = if alpha == 0.0 && beta == 0.0 { 0.0 } else { (-alpha).atan2(beta) };
    let (s, c) = theta.sin_cos();
    let a: Vec<f64> = e.iter().zip(f).map(|(x, y)| rho * (c * x + s * y)).collect();
    let b: Vec<f64> = e.iter().zip(f).map(|(x, y)| rho * sigma * (-s * x + c * y)).collect();

    let terms = [Matrix::outer(&a, &unit(d, i))?, Matrix::outer(&b, &unit(d, j))?];
    let quarter = Dyadic::pow2_inv(2);
    let mut children: Vec<SplitChild> = [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)]
        .iter()
        .map(|&(s1, s2)| {
            let mid = *m + terms[0].scale(s1 as f64);
            SplitChild {
                weight: quarter,
                matrix: mid + terms[1].scale(s2 as f64),
                role: Role::Good,
                signs: vec![s1, s2],
                intermediate: Some(mid),
                next: None,
            }
        })
        .collect();
    if rho > 0.0 {
        let err: Vec<f64> = children.iter().map(|ch| (ch.matrix.determinant() - r).abs()).collect();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&x, &y| err[x].total_cmp(&err[y]));
        for &k in &order[2..] {
            children[k].role = Role::Bad;
        }
    }
    Ok(SplitStep {
        parent: *m,
        case: SplitCase::CaseI,
        magnitude: rho,
        directions: vec![RankOne { a, b: unit(d, i) }, RankOne { a: b, b: unit(d, j) }],
        children,
        level: 0,
    })
}

/// Case II in the lattice frame: stretch the most degenerate remaining
/// column by `±δ w`, `w` orthogonal to all remaining columns,
/// `δ = 2 (|r - det M|/2)^{1/d}`.
pub fn split_lattice_two(m: &Matrix, r: f64) -> Result<SplitStep> {
    let d = m.dim();
    if d < 3 {
        return Err(Error::Logic("Case II split requested for d = 2".into()));
    }
    let gap = (r - m.determinant()).abs();
    if gap == 0.0 {
        return Err(Error::Logic("Case II split with det M = r".into()));
    }
    let (i, j, _, comp) = lattice_pair(m);
    let rest: Vec<usize> = (0..d).filter(|&k| k != i && k != j).collect();
    let mut worst = (rest[0], f64::INFINITY);
    for &k in &rest {
        let others: Vec<Vec<f64>> = rest.iter().filter(|&&o| o != k).map(|&o| m.column(o)).collect();
        let (_, perp) = complement(d, &others);
        let col = m.column(k);
        let along: f64 = perp.iter().map(|q| dot(&col, q).powi(2)).sum::<f64>().sqrt();
        if along < worst.1 {
            worst = (k, along);
        }
    }
    let k = worst.0;
    let w = comp.first().ok_or_else(|| Error::Logic("empty complement".into()))?;
    let delta = 2.0 * (gap / 2.0).powf(1.0 / d as f64);
    let a: Vec<f64> = w.iter().map(|x| x * delta).collect();
    let term = Matrix::outer(&a, &unit(d, k))?;
    let half = Dyadic::pow2_inv(1);
    let children = [1i8, -1]
        .iter()
        .map(|&s| SplitChild {
            weight: half,
            matrix: *m + term.scale(s as f64),
            role: Role::Continue,
            signs: vec![s],
            intermediate: None,
            next: None,
        })
        .collect();
    Ok(SplitStep {
        parent: *m,
        case: SplitCase::CaseII,
        magnitude: delta,
        directions: vec![RankOne { a, b: unit(d, k) }],
        children,
        level: 0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtomRole {
    Good,
    Bad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "AtomRepr", try_from = "AtomRepr")]
pub struct Atom {
    pub weight: Dyadic,
    pub matrix: Matrix,
    pub role: AtomRole,
}

#[derive(Clone, Serialize, Deserialize)]
struct AtomRepr {
    w_num: u128,
    w_log2_den: u32,
    matrix: Matrix,
    role: AtomRole,
}

impl From<Atom> for AtomRepr {
    fn from(a: Atom) -> Self {
        AtomRepr {
            w_num: a.weight.numerator(),
            w_log2_den: a.weight.log2_denominator(),
            matrix: a.matrix,
            role: a.role,
        }
    }
}

impl TryFrom<AtomRepr> for Atom {
    type Error = String;
    fn try_from(r: AtomRepr) -> std::result::Result<Self, String> {
        if r.w_log2_den > MAX_LOG2_DEN {
            return Err(format!("weight denominator 2^{} too large", r.w_log2_den));
        }
        Ok(Atom {
            weight: Dyadic::new(r.w_num, r.w_log2_den),
            matrix: r.matrix,
            role: r.role,
        })
    }
}

/// Finite probability measure on matrices together with the split tree that
/// produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLaminate {
    pub dim: usize,
    pub root: Matrix,
    pub rate: f64,
    /// Number of Case I levels on every branch (0 for a Dirac mass).
    pub depth: usize,
    pub atoms: Vec<Atom>,
    pub tree: Vec<SplitStep>,
}

impl DiscreteLaminate {
    pub fn dirac(m: Matrix, rate: f64, role: AtomRole) -> Self {
        DiscreteLaminate {
            dim: m.dim(),
            root: m,
            rate,
            depth: 0,
            atoms: vec![Atom {
                weight: Dyadic::ONE,
                matrix: m,
                role,
            }],
            tree: Vec::new(),
        }
    }

    pub fn is_dirac(&self) -> bool {
        self.atoms.len() == 1
    }

    pub fn total_mass(&self) -> Dyadic {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn bad_mass(&self) -> Dyadic {
        self.atoms
            .iter()
            .filter(|a| a.role == AtomRole::Bad)
            .map(|a| a.weight)
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// How deep to laminate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Depth {
    /// Fixed number of Case I levels.
    Fixed(usize),
    /// Smallest `k` with `2^{-k} <= tol`, `tol ∈ (0, 1]`.
    BadMassTol(f64),
}

impl Default for Depth {
    fn default() -> Self {
        Depth::Fixed(DEFAULT_DEPTH)
    }
}

impl Depth {
    pub fn resolve(self) -> Result<usize> {
        let k = match self {
            Depth::Fixed(k) => k,
            Depth::BadMassTol(tol) => {
                if !(tol > 0.0 && tol <= 1.0) {
                    return Err(Error::Laminate(format!("bad-mass tolerance {tol} not in (0, 1]")));
                }
                let mut k = 0;
                while (0.5f64).powi(k as i32) > tol {
                    k += 1;
                }
                k
            }
        };
        if k > MAX_CASE_ONE_DEPTH {
            return Err(Error::Laminate(format!(
                "depth {k} exceeds {MAX_CASE_ONE_DEPTH} (dyadic weights would underflow)"
            )));
        }
        Ok(k)
    }
}

/// Relative gap below which `det M` already counts as equal to the rate.
const DIRAC_TOL: f64 = 1e-12;

/// Laminate with barycenter `m`, `k` Case I levels per branch and
/// bad mass `2^{-k}`; a Dirac mass when `det m = r`.
pub fn build_laminate(m: &Matrix, r: f64, depth: Depth) -> Result<DiscreteLaminate> {
    build_laminate_in(m, r, depth, Frame::Svd)
}

/// [`build_laminate`] with the splits computed in `frame`.
pub fn build_laminate_in(m: &Matrix, r: f64, depth: Depth, frame: Frame) -> Result<DiscreteLaminate> {
    let d = m.dim();
    if !(MIN_DIM..=MAX_DIM).contains(&d) {
        return Err(Error::Dimension(d));
    }
    if !r.is_finite() {
        return Err(Error::Laminate(format!("rate {r} is not finite")));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("laminate root".into()));
    }
    let k = depth.resolve()?;
    if (m.determinant() - r).abs() <= DIRAC_TOL * (1.0 + r.abs()) {
        return Ok(DiscreteLaminate::dirac(*m, r, AtomRole::Good));
    }
    // 3·2^k atoms per Case I chain, times at most 2^{d-2} Case II branches
    let estimate = 3u128 << (k as u32 + d as u32 - 2);
    if estimate > MAX_ATOMS as u128 || 2 * k + d > MAX_LOG2_DEN as usize {
        return Err(Error::Laminate(format!(
            "depth {k} in dimension {d} would produce up to {estimate} atoms (limit {MAX_ATOMS})"
        )));
    }

    let mut builder = Builder {
        rate: r,
        dim: d,
        frame,
        atoms: Vec::new(),
        tree: Vec::new(),
    };
    builder.node(*m, Dyadic::ONE, k, k, 0, None)?;
    Ok(DiscreteLaminate {
        dim: d,
        root: *m,
        rate: r,
        depth: k,
        atoms: builder.atoms,
        tree: builder.tree,
    })
}

struct Builder {
    rate: f64,
    dim: usize,
    frame: Frame,
    atoms: Vec<Atom>,
    tree: Vec<SplitStep>,
}

impl Builder {
    fn node(
        &mut self,
        m: Matrix,
        weight: Dyadic,
        total: usize,
        remaining: usize,
        case_two_run: usize,
        link: Option<(usize, usize)>,
    ) -> Result<()> {
        if remaining == 0 {
            self.atoms.push(Atom {
                weight,
                matrix: m,
                role: AtomRole::Bad,
            });
            return Ok(());
        }
        if self.frame == Frame::Lattice
            && case_two_run > 0
            && (m.determinant() - self.rate).abs() <= DIRAC_TOL * (1.0 + self.rate.abs())
        {
            self.atoms.push(Atom {
                weight,
                matrix: m,
                role: AtomRole::Good,
            });
            return Ok(());
        }
        let case = match self.frame {
            Frame::Svd => classify_case(&m.signed_svd()?, self.rate),
            Frame::Lattice => classify_lattice(&m, self.rate),
        };
        if case == SplitCase::CaseII && case_two_run >= self.dim - 2 {
            return Err(Error::Logic(format!(
                "more than {} consecutive Case II splits",
                self.dim - 2
            )));
        }
        let mut step = match (self.frame, case) {
            (Frame::Svd, _) => {
                let svd = m.signed_svd()?;
                let local = match case {
                    SplitCase::CaseI => split_case_one(&svd, self.rate)?,
                    SplitCase::CaseII => split_case_two(&svd, self.rate)?,
                };
                local.to_physical(&svd, &m)
            }
            (Frame::Lattice, SplitCase::CaseI) => split_lattice_one(&m, self.rate)?,
            (Frame::Lattice, SplitCase::CaseII) => split_lattice_two(&m, self.rate)?,
        };
        step.level = total - remaining;
        let id = self.tree.len();
        if let Some((pid, ci)) = link {
            self.tree[pid].children[ci].next = Some(id);
        }
        let children = step.children.clone();
        let case = step.case;
        self.tree.push(step);

        for (ci, c) in children.into_iter().enumerate() {
            let w = weight.shr(c.weight.log2_denominator());
            match (case, c.role) {
                (_, Role::Good) => self.atoms.push(Atom {
                    weight: w,
                    matrix: c.matrix,
                    role: AtomRole::Good,
                }),
                (SplitCase::CaseI, _) => {
                    self.node(c.matrix, w, total, remaining - 1, 0, Some((id, ci)))?
                }
                (SplitCase::CaseII, _) => {
                    self.node(c.matrix, w, total, remaining, case_two_run + 1, Some((id, ci)))?
                }
            }
        }
        Ok(())
    }
}

/// Laminate towards a pointwise constraint: exact rates are used directly,
/// intervals through the clamped rate `r_M = clamp(det M, J1, J2)`.
pub fn laminate_for_constraint(
    m: &Matrix,
    constraint: PointConstraint,
    depth: Depth,
) -> Result<DiscreteLaminate> {
    laminate_for_constraint_in(m, constraint, depth, Frame::Svd)
}

pub fn laminate_for_constraint_in(
    m: &Matrix,
    constraint: PointConstraint,
    depth: Depth,
    frame: Frame,
) -> Result<DiscreteLaminate> {
    match constraint {
        PointConstraint::Exact(r) => build_laminate_in(m, r, depth, frame),
        PointConstraint::Interval(j1, j2) => {
            let det = m.determinant();
            let r = clamp_rate(det, j1, j2)?;
            if r == det {
                return Ok(DiscreteLaminate::dirac(*m, r, AtomRole::Good));
            }
            build_laminate_in(m, r, depth, frame)
        }
    }
}
