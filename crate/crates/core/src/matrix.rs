//! Small dense square matrices, `2 <= d <= 8`.
//!
//! Everything in the crate is built on [`Matrix`]: laminate atoms, cell
//! gradients, rank-one directions. The kernel is deliberately tiny: LU
//! determinants, Frobenius norms, a one-sided Jacobi SVD with the
//! orientation carried by the last singular value, and the minors needed by
//! the Young-measure checks.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 8;

const SVD_TOL: f64 = 1e-13;
const SVD_MAX_SWEEPS: usize = 100;

/// Row-major `d x d` matrix with finite entries.
#[derive(Clone, Copy)]
pub struct Matrix {
    dim: usize,
    data: [f64; MAX_DIM * MAX_DIM],
}

impl Matrix {
    /// Builds a matrix from `d*d` row-major entries.
    pub fn new(dim: usize, entries: &[f64]) -> Result<Self> {
        check_dim(dim)?;
        if entries.len() != dim * dim {
            return Err(Error::Shape(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("matrix entry {bad}")));
        }
        let mut m = Self::zeros_unchecked(dim);
        m.data[..dim * dim].copy_from_slice(entries);
        Ok(m)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(dim, &flat)
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self::zeros_unchecked(dim))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self::identity_unchecked(dim))
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(values.len())?;
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("diagonal entry {v}")));
            }
            m[(i, i)] = v;
        }
        Ok(m)
    }

    /// `a ⊗ b`, the matrix with entries `a_i b_j`.
    pub fn outer(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "outer product of vectors of length {} and {}",
                a.len(),
                b.len()
            )));
        }
        let mut m = Self::zeros(a.len())?;
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                m[(i, j)] = ai * bj;
            }
        }
        Ok(m)
    }

    pub(crate) fn zeros_unchecked(dim: usize) -> Self {
        Matrix {
            dim,
            data: [0.0; MAX_DIM * MAX_DIM],
        }
    }

    pub(crate) fn identity_unchecked(dim: usize) -> Self {
        let mut m = Self::zeros_unchecked(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major view of the `d*d` entries.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.dim * self.dim]
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        let n = self.dim * self.dim;
        &mut self.data[..n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.as_slice()[i * self.dim..(i + 1) * self.dim].to_vec()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros_unchecked(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        m.as_mut_slice().iter_mut().for_each(|x| *x *= s);
        m
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// Determinant; closed forms for `d <= 3`, partially pivoted LU above.
    pub fn determinant(&self) -> f64 {
        det_row_major(self.as_slice(), self.dim)
    }

    /// `(Σ m_ij²)^{1/2}`, the norm used throughout the crate.
    pub fn frobenius_norm(&self) -> f64 {
        self.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Minor on the given (sorted, equally long) row and column index sets.
    pub fn minor(&self, rows: &[usize], cols: &[usize]) -> f64 {
        debug_assert_eq!(rows.len(), cols.len());
        let k = rows.len();
        let mut buf = [0.0; MAX_DIM * MAX_DIM];
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                buf[a * k + b] = self[(i, j)];
            }
        }
        det_row_major(&buf[..k * k], k)
    }

    /// Cofactor matrix, `cof(M)_ij = (-1)^{i+j} det M_{(i)(j)}`.
    pub fn cofactor(&self) -> Self {
        let d = self.dim;
        let mut c = Self::zeros_unchecked(d);
        let all: Vec<usize> = (0..d).collect();
        for i in 0..d {
            for j in 0..d {
                let rows: Vec<usize> = all.iter().copied().filter(|&r| r != i).collect();
                let cols: Vec<usize> = all.iter().copied().filter(|&r| r != j).collect();
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                c[(i, j)] = sign * self.minor(&rows, &cols);
            }
        }
        c
    }

    /// Largest absolute entry difference; cheap equality probe for gradients.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Signed singular value decomposition `M = P diag(s) Qᵀ` with
    /// `P, Q ∈ SO(d)`, `|s_0| <= ... <= |s_{d-1}|`, and only the last entry
    /// allowed to be negative (it carries the sign of `det M`).
    pub fn signed_svd(&self) -> Result<SignedSvd> {
        signed_svd(self)
    }

    /// Second-largest singular value: zero exactly when `rank <= 1`.
    pub fn rank_one_defect(&self) -> Result<f64> {
        let svd = self.signed_svd()?;
        Ok(svd.diag[self.dim - 2].abs())
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::Dimension(dim))
    }
}

/// Determinant of a `k x k` row-major block, `1 <= k <= 8`.
pub(crate) fn det_row_major(a: &[f64], k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => {
            let mut lu = [0.0; MAX_DIM * MAX_DIM];
            lu[..k * k].copy_from_slice(&a[..k * k]);
            let mut det = 1.0;
            for col in 0..k {
                let mut piv = col;
                let mut best = lu[col * k + col].abs();
                for r in col + 1..k {
                    let v = lu[r * k + col].abs();
                    if v > best {
                        best = v;
                        piv = r;
                    }
                }
                if best == 0.0 {
                    return 0.0;
                }
                if piv != col {
                    for c in 0..k {
                        lu.swap(col * k + c, piv * k + c);
                    }
                    det = -det;
                }
                let p = lu[col * k + col];
                det *= p;
                for r in col + 1..k {
                    let f = lu[r * k + col] / p;
                    if f != 0.0 {
                        for c in col + 1..k {
                            lu[r * k + c] -= f * lu[col * k + c];
                        }
                    }
                }
            }
            det
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for Matrix {
    type Output = Matrix;
    fn add(mut self, rhs: Matrix) -> Matrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        self.as_mut_slice()
            .iter_mut()
            .zip(rhs.as_slice())
            .for_each(|(a, b)| *a += b);
        self
    }
}

impl Sub for Matrix {
    type Output = Matrix;
    fn sub(mut self, rhs: Matrix) -> Matrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        self.as_mut_slice()
            .iter_mut()
            .zip(rhs.as_slice())
            .for_each(|(a, b)| *a -= b);
        self
    }
}

impl Neg for Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

impl Mul for Matrix {
    type Output = Matrix;
    fn mul(self, rhs: Matrix) -> Matrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let d = self.dim;
        let mut out = Matrix::zeros_unchecked(d);
        for i in 0..d {
            for k in 0..d {
                let a = self[(i, k)];
                if a != 0.0 {
                    for j in 0..d {
                        out[(i, j)] += a * rhs[(k, j)];
                    }
                }
            }
        }
        out
    }
}

impl PartialEq for Matrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.as_slice() == other.as_slice()
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<f64>> = (0..self.dim).map(|i| self.row(i)).collect();
        f.debug_struct("Matrix")
            .field("dim", &self.dim)
            .field("rows", &rows)
            .finish()
    }
}

/// One row per line, entries right-aligned.
impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prec = f.precision().unwrap_or(4);
        for i in 0..self.dim() {
            if i > 0 {
                writeln!(f)?;
            }
            let cells: Vec<String> = self.row(i).iter().map(|x| format!("{x:>10.prec$}")).collect();
            write!(f, "[{} ]", cells.join(""))?;
        }
        Ok(())
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let flat = Vec::<f64>::deserialize(d)?;
        let dim = (flat.len() as f64).sqrt().round() as usize;
        Matrix::new(dim, &flat).map_err(D::Error::custom)
    }
}

/// `M = P · diag(diag) · Qᵀ` with rotations `P`, `Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedSvd {
    pub p: Matrix,
    pub q: Matrix,
    pub diag: Vec<f64>,
}

impl SignedSvd {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag_matrix(&self) -> Matrix {
        // diag already validated finite by construction
        let mut m = Matrix::zeros_unchecked(self.dim());
        for (i, &v) in self.diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn reconstruct(&self) -> Matrix {
        self.p * self.diag_matrix() * self.q.transpose()
    }

    /// Maps a matrix written in the diagonal frame back to the original one.
    pub fn to_physical(&self, frame: &Matrix) -> Matrix {
        self.p * *frame * self.q.transpose()
    }
}

fn signed_svd(m: &Matrix) -> Result<SignedSvd> {
    let d = m.dim;
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return Ok(SignedSvd {
            p: Matrix::identity_unchecked(d),
            q: Matrix::identity_unchecked(d),
            diag: vec![0.0; d],
        });
    }

    // one-sided Jacobi on columns: A V = U Σ
    let mut a = *m;
    let mut v = Matrix::identity_unchecked(d);
    let negligible = (f64::EPSILON * norm).powi(2) * 1e-4;
    let mut converged = false;
    let mut off = 0.0;
    for _sweep in 0..SVD_MAX_SWEEPS {
        off = 0.0f64;
        for i in 0..d - 1 {
            for j in i + 1..d {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..d {
                    let x = a[(r, i)];
                    let y = a[(r, j)];
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                // columns at roundoff level carry no information
                if alpha.min(beta) <= negligible || gamma == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / alpha.sqrt() / beta.sqrt();
                off = off.max(rel);
                if rel <= SVD_TOL {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..d {
                    let x = a[(r, i)];
                    let y = a[(r, j)];
                    a[(r, i)] = c * x - s * y;
                    a[(r, j)] = s * x + c * y;
                    let x = v[(r, i)];
                    let y = v[(r, j)];
                    v[(r, i)] = c * x - s * y;
                    v[(r, j)] = s * x + c * y;
                }
            }
        }
        if off <= SVD_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            sweeps: SVD_MAX_SWEEPS,
            residual: off,
        });
    }

    let mut sigma: Vec<f64> = (0..d)
        .map(|j| (0..d).map(|r| a[(r, j)] * a[(r, j)]).sum::<f64>().sqrt())
        .collect();
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let zero_cut = 1e-15 * smax * d as f64;

    // U columns; null directions are completed below
    let mut u = Matrix::zeros_unchecked(d);
    let mut filled = vec![false; d];
    for j in 0..d {
        if sigma[j] > zero_cut {
            for r in 0..d {
                u[(r, j)] = a[(r, j)] / sigma[j];
            }
            filled[j] = true;
        } else {
            sigma[j] = 0.0;
        }
    }
    complete_orthonormal(&mut u, &mut filled);

    // ascending by singular value, stable on original column index
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| sigma[x].total_cmp(&sigma[y]));
    let mut p = Matrix::zeros_unchecked(d);
    let mut q = Matrix::zeros_unchecked(d);
    let mut diag = vec![0.0; d];
    for (k, &src) in order.iter().enumerate() {
        diag[k] = sigma[src];
        for r in 0..d {
            p[(r, k)] = u[(r, src)];
            q[(r, k)] = v[(r, src)];
        }
    }

    if q.determinant() < 0.0 {
        for r in 0..d {
            q[(r, d - 1)] = -q[(r, d - 1)];
            p[(r, d - 1)] = -p[(r, d - 1)];
        }
    }
    if p.determinant() < 0.0 {
        if diag[0] == 0.0 {
            // a null direction absorbs the reflection, diag stays nonnegative
            for r in 0..d {
                p[(r, 0)] = -p[(r, 0)];
            }
        } else {
            for r in 0..d {
                p[(r, d - 1)] = -p[(r, d - 1)];
            }
            diag[d - 1] = -diag[d - 1];
        }
    }

    Ok(SignedSvd { p, q, diag })
}

/// Fills the unmarked columns of `u` with an orthonormal completion.
fn complete_orthonormal(u: &mut Matrix, filled: &mut [bool]) {
    let d = u.dim;
    let mut candidate = 0;
    for j in 0..d {
        if filled[j] {
            continue;
        }
        while candidate < d {
            let mut w = vec![0.0; d];
            w[candidate] = 1.0;
            candidate += 1;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for k in 0..d {
                    if !filled[k] {
                        continue;
                    }
                    let dot: f64 = (0..d).map(|r| u[(r, k)] * w[r]).sum();
                    for r in 0..d {
                        w[r] -= dot * u[(r, k)];
                    }
                }
            }
            let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > 1e-6 {
                for r in 0..d {
                    u[(r, j)] = w[r] / nrm;
                }
                filled[j] = true;
                break;
            }
        }
    }
}

/// All `(rows, cols)` index pairs for `k x k` minors of a `d x d` matrix.
pub fn minor_index_sets(d: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i);
            rec(i + 1, d, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, d, k, &mut Vec::new(), &mut out);
    out
}
