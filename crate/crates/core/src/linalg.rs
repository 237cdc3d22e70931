//! Dense linear-algebra primitives and the projection cost functionals.
//!
//! Matrices are column-major and, throughout the crate, columns are data
//! points: `A` is `d x n` with one point per column.

use std::ops::Deref;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormality tolerance (`UᵀU = I` entrywise).
pub const TAU_ORTH: f64 = 1e-8;
/// Relative SVD reconstruction tolerance.
pub const TAU_RECON: f64 = 1e-10;
/// Singular values at or below `TAU_RANK * σ_max` count as zero.
pub const TAU_RANK: f64 = 1e-10;

/// A finite, non-empty real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct DenseMatrix {
    inner: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        DenseMatrix::from_column_major(raw.rows, raw.cols, raw.values)
    }
}

impl From<DenseMatrix> for RawMatrix {
    fn from(m: DenseMatrix) -> Self {
        RawMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            values: m.inner.as_slice().to_vec(),
        }
    }
}

impl DenseMatrix {
    pub fn new(inner: DMatrix<f64>) -> Result<Self> {
        if inner.nrows() == 0 || inner.ncols() == 0 {
            return Err(Error::input(format!(
                "matrix must be non-empty, got {}x{}",
                inner.nrows(),
                inner.ncols()
            )));
        }
        if let Some(pos) = inner.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % inner.nrows(), pos / inner.nrows());
            return Err(Error::input(format!("non-finite entry at ({i}, {j})")));
        }
        Ok(DenseMatrix { inner })
    }

    pub fn from_column_major(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::input(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        Self::new(DMatrix::from_vec(rows, cols, values))
    }

    pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::input(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, values))
    }

    /// Builds a matrix from a slice of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::input(format!("row {i} has length {}, expected {cols}", rows[i].len())));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(rows.len(), cols, &flat)
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix {
            inner: self.inner.transpose(),
        }
    }
}

impl Deref for DenseMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.inner
    }
}

/// Thin SVD restricted to the numerically nonzero part of the spectrum.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `d x rank`, orthonormal columns.
    pub left: DMatrix<f64>,
    /// Strictly positive and nonincreasing.
    pub singular_values: Vec<f64>,
    /// `n x rank`, orthonormal columns.
    pub right: DMatrix<f64>,
    pub rank: usize,
}

impl SvdResult {
    /// `Σ_{i ≥ k} σ_i²`, i.e. `‖A − A_k‖_F²`.
    pub fn tail_energy(&self, k: usize) -> f64 {
        self.singular_values.iter().skip(k).map(|s| s * s).sum()
    }

    /// `Σ_{i < r} σ_i p_i q_iᵀ`.
    pub fn reconstruct(&self, r: usize) -> DMatrix<f64> {
        let r = r.min(self.rank);
        let mut scaled = self.left.columns(0, r).into_owned();
        for (j, s) in self.singular_values.iter().take(r).enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.right.columns(0, r).transpose()
    }
}

pub fn svd(a: &DMatrix<f64>) -> Result<SvdResult> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("svd of a matrix with non-finite entries"));
    }
    let (d, n) = a.shape();
    if d == 0 || n == 0 {
        return Ok(SvdResult {
            left: DMatrix::zeros(d, 0),
            singular_values: Vec::new(),
            right: DMatrix::zeros(n, 0),
            rank: 0,
        });
    }
    let decomposition = nalgebra::SVD::try_new(a.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::input("svd failed to converge"))?;
    let u = decomposition.u.expect("left vectors requested");
    let v_t = decomposition.v_t.expect("right vectors requested");
    let sigma = decomposition.singular_values;

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    let sigma_max = order.first().map_or(0.0, |&i| sigma[i]);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| sigma_max > 0.0 && sigma[i] > TAU_RANK * sigma_max)
        .collect();

    let rank = kept.len();
    let mut left = DMatrix::zeros(d, rank);
    let mut right = DMatrix::zeros(n, rank);
    let mut singular_values = Vec::with_capacity(rank);
    for (out, &i) in kept.iter().enumerate() {
        left.set_column(out, &u.column(i));
        right.set_column(out, &v_t.row(i).transpose());
        singular_values.push(sigma[i]);
    }
    Ok(SvdResult {
        left,
        singular_values,
        right,
        rank,
    })
}

/// `Σ_i ‖M_{·,i}‖₂^p`, the p-th power of the mixed `(2,p)` norm.
pub fn mixed_norm_pow(m: &DMatrix<f64>, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(column_costs(m, p).sum())
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::param(format!("norm exponent p must be >= 1, got {p}")));
    }
    Ok(())
}

pub(crate) fn column_costs(m: &DMatrix<f64>, p: f64) -> impl Iterator<Item = f64> + '_ {
    m.column_iter().map(move |c| {
        let sq = c.norm_squared();
        if p == 2.0 {
            sq
        } else {
            sq.sqrt().powf(p)
        }
    })
}

/// Vectors spanning a subspace of `ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    vectors: DMatrix<f64>,
    orthonormal: bool,
}

impl Basis {
    pub fn empty(ambient_dim: usize) -> Self {
        Basis {
            vectors: DMatrix::zeros(ambient_dim, 0),
            orthonormal: true,
        }
    }

    /// Wraps `vectors` after checking `VᵀV = I` within [`TAU_ORTH`].
    pub fn orthonormal(vectors: DMatrix<f64>) -> Result<Self> {
        if vectors.ncols() > vectors.nrows() {
            return Err(Error::input(format!(
                "{} vectors cannot be orthonormal in dimension {}",
                vectors.ncols(),
                vectors.nrows()
            )));
        }
        let err = gram_error(&vectors);
        if !(err <= TAU_ORTH) {
            return Err(Error::input(format!(
                "basis is not orthonormal (max |VᵀV − I| = {err:.3e})"
            )));
        }
        Ok(Basis {
            vectors,
            orthonormal: true,
        })
    }

    /// Wraps arbitrary spanning vectors; no orthonormality is claimed.
    pub fn spanning(vectors: DMatrix<f64>) -> Self {
        Basis {
            vectors,
            orthonormal: false,
        }
    }

    /// The first `m` standard basis vectors of `ℝ^d`.
    pub fn coordinate(d: usize, coords: &[usize]) -> Result<Self> {
        let mut v = DMatrix::zeros(d, coords.len());
        for (j, &c) in coords.iter().enumerate() {
            if c >= d {
                return Err(Error::input(format!("coordinate {c} out of range for dimension {d}")));
            }
            v[(c, j)] = 1.0;
        }
        Basis::orthonormal(v)
    }

    pub fn full(d: usize) -> Self {
        Basis {
            vectors: DMatrix::identity(d, d),
            orthonormal: true,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn into_vectors(self) -> DMatrix<f64> {
        self.vectors
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// Orthonormal basis of the orthogonal complement of this span.
    pub fn complement(&self) -> Basis {
        let d = self.ambient_dim();
        let own = if self.orthonormal {
            self.clone()
        } else {
            orthonormalize(&self.vectors)
        };
        if own.dim() == 0 {
            return Basis::full(d);
        }
        let residual = DMatrix::identity(d, d) - &own.vectors * own.vectors.transpose();
        let eig = SymmetricEigen::new(residual);
        let mut picked: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
        picked.sort_unstable();
        let mut out = DMatrix::zeros(d, picked.len());
        for (j, &i) in picked.iter().enumerate() {
            out.set_column(j, &eig.eigenvectors.column(i));
        }
        Basis {
            vectors: out,
            orthonormal: true,
        }
    }

    /// Distance from `x` to the span, assuming an orthonormal basis.
    pub fn distance_to(&self, x: &DMatrix<f64>) -> f64 {
        let coeffs = self.vectors.transpose() * x;
        (x - &self.vectors * coeffs).norm()
    }
}

/// `max |VᵀV − I|`.
pub fn gram_error(v: &DMatrix<f64>) -> f64 {
    let g = v.transpose() * v;
    let m = g.nrows();
    (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| (g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

/// `‖A − U Uᵀ A‖_{2,p}^p` for an orthonormal `U`.
pub fn projection_cost(a: &DMatrix<f64>, u: &Basis, p: f64) -> Result<f64> {
    check_p(p)?;
    if !u.is_orthonormal() {
        return Err(Error::input("projection cost needs an orthonormal basis"));
    }
    if u.ambient_dim() != a.nrows() {
        return Err(Error::input(format!(
            "basis lives in dimension {}, matrix has {} rows",
            u.ambient_dim(),
            a.nrows()
        )));
    }
    if u.dim() == 0 {
        return mixed_norm_pow(a, p);
    }
    let coeffs = u.vectors.transpose() * a;
    let residual = a - &u.vectors * coeffs;
    mixed_norm_pow(&residual, p)
}

/// Orthonormal basis of `span(V)`; the dimension equals the numerical rank.
pub fn orthonormalize(v: &DMatrix<f64>) -> Basis {
    let d = v.nrows();
    match svd(v) {
        Ok(s) if s.rank > 0 => Basis {
            vectors: s.left,
            orthonormal: true,
        },
        _ => Basis::empty(d),
    }
}

/// Minimizer of `‖T − M C‖_F`, minimum-norm when `M` is rank deficient.
pub fn least_squares(m: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != t.nrows() {
        return Err(Error::input(format!(
            "least squares: design has {} rows, target has {}",
            m.nrows(),
            t.nrows()
        )));
    }
    let gram = m.transpose() * m;
    let rhs = m.transpose() * t;
    let max_diag = gram.diagonal().iter().copied().fold(0.0, f64::max);
    if max_diag == 0.0 {
        return Ok(DMatrix::zeros(m.ncols(), t.ncols()));
    }
    if let Some(chol) = gram.clone().cholesky() {
        let min_pivot = chol.l_dirty().diagonal().iter().map(|x| x * x).fold(f64::INFINITY, f64::min);
        // Fall through to the SVD route for nearly singular systems.
        if min_pivot > 1e-8 * max_diag {
            return Ok(chol.solve(&rhs));
        }
    }
    pinv_solve(m, t)
}

fn pinv_solve(m: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = svd(m)?;
    let mut coeffs = s.left.transpose() * t;
    for (i, sigma) in s.singular_values.iter().enumerate() {
        coeffs.row_mut(i).scale_mut(1.0 / sigma);
    }
    Ok(&s.right * coeffs)
}

/// Cosines of the principal angles between two orthonormal bases, descending.
pub fn principal_cosines(u: &Basis, w: &Basis) -> Vec<f64> {
    if u.dim() == 0 || w.dim() == 0 {
        return Vec::new();
    }
    let cross = u.vectors.transpose() * &w.vectors;
    let sv = cross.singular_values();
    let mut out: Vec<f64> = sv.iter().map(|c| c.min(1.0)).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

/// Number of principal angles with `cos θ ≥ 1 − tol`.
pub fn intersection_dim(u: &Basis, w: &Basis, tol: f64) -> usize {
    principal_cosines(u, w).into_iter().filter(|c| *c >= 1.0 - tol).count()
}
