//! Exact per-guess constrained regression.
//!
//! With `B` and a guessed `C` fixed, each solver minimizes
//! `‖B − UC‖_{2,p}^p` over the feasible `U` of one constraint family. The
//! returned `U` need not have orthonormal columns; the engine
//! re-orthonormalizes the winner.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_p, column_costs, least_squares, Basis, TAU_ORTH};
use crate::parallel::{self, Parallelism};

pub const IRLS_MAX_ITERS: usize = 200;
pub const IRLS_TOLERANCE: f64 = 1e-10;
/// Smoothing floor for IRLS weights, relative to the largest column of `B`.
pub const IRLS_SMOOTHING: f64 = 1e-9;
/// Largest support enumeration [`solve_sparse_pca_support`] accepts by default.
pub const SUPPORT_BUDGET: u64 = 2_000_000;

#[derive(Debug, Clone)]
pub struct RegressionSolution {
    /// `d x k`; feasible for the solver's constraint family.
    pub u: DMatrix<f64>,
    /// `‖B − UC‖_{2,p}^p`.
    pub cost: f64,
    pub feasible: bool,
    /// False only when an iterative solver hit its iteration cap.
    pub converged: bool,
}

pub trait RegressionSolver: Sync {
    /// `min ‖B − UC‖_{2,p}^p` over feasible `U`, for `B: d x r`, `C: k x r`.
    fn solve(&self, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<RegressionSolution>;

    fn p(&self) -> f64;

    fn rank(&self) -> usize;

    /// Whether a `U` with columns in span(U) rotated by any `k x k`
    /// orthogonal matrix stays feasible.
    fn rotation_invariant(&self) -> bool {
        false
    }

    /// Closed form of the optimal cost, if any, that the engine may evaluate
    /// without calling [`RegressionSolver::solve`].
    fn cost_form(&self) -> CostForm {
        CostForm::Generic
    }
}

/// Optimal-cost closed forms known to the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostForm {
    Generic,
    /// Free `U`, `p = 2`: `tr(BᵀB) − tr((CCᵀ)⁻¹ C BᵀB Cᵀ)`.
    LeastSquares,
    /// One nonnegative entry per row of `U`, `p = 2`: per row, the best
    /// clamped projection onto a single row of `C`.
    RowSparseNonnegative,
}

/// `ℓ` columns inside `W`, the remaining `k − ℓ` inside `W⊥`.
#[derive(Debug, Clone)]
pub struct SubspaceSplit {
    w: Basis,
    w_perp: Basis,
    dim_in: usize,
    dim_out: usize,
}

impl SubspaceSplit {
    pub fn new(w: Basis, k: usize, dim_in: usize) -> Result<Self> {
        if !w.is_orthonormal() {
            return Err(Error::input("model subspace basis must be orthonormal"));
        }
        if dim_in > k {
            return Err(Error::param(format!("split {dim_in} exceeds rank {k}")));
        }
        let d = w.ambient_dim();
        if dim_in > w.dim() {
            return Err(Error::Infeasible(format!(
                "cannot place {dim_in} directions in a {}-dimensional model subspace",
                w.dim()
            )));
        }
        if k - dim_in > d - w.dim() {
            return Err(Error::Infeasible(format!(
                "cannot place {} directions in the {}-dimensional complement",
                k - dim_in,
                d - w.dim()
            )));
        }
        let w_perp = w.complement();
        Ok(SubspaceSplit {
            w,
            w_perp,
            dim_in,
            dim_out: k - dim_in,
        })
    }

    pub fn model(&self) -> &Basis {
        &self.w
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn k(&self) -> usize {
        self.dim_in + self.dim_out
    }

    pub fn is_feasible(&self, u: &DMatrix<f64>, tol: f64) -> bool {
        let scale = u.amax().max(1.0);
        (0..u.ncols()).all(|j| {
            let col = u.column(j).into_owned();
            let target = if j < self.dim_in { &self.w_perp } else { &self.w };
            // column j must have no component in the other block
            (target.vectors().transpose() * &col).amax() <= tol * scale
        })
    }
}

/// Column `j` of `U` must lie in `subspaces[j]`.
#[derive(Debug, Clone)]
pub struct Partition {
    subspaces: Vec<Basis>,
}

impl Partition {
    pub fn new(subspaces: Vec<Basis>) -> Result<Self> {
        let d = subspaces
            .first()
            .ok_or_else(|| Error::input("partition needs at least one subspace"))?
            .ambient_dim();
        for (j, s) in subspaces.iter().enumerate() {
            if s.dim() == 0 {
                return Err(Error::input(format!("subspace {j} is empty")));
            }
            if !s.is_orthonormal() {
                return Err(Error::input(format!("subspace {j} basis is not orthonormal")));
            }
            if s.ambient_dim() != d {
                return Err(Error::input(format!(
                    "subspace {j} lives in dimension {}, expected {d}",
                    s.ambient_dim()
                )));
            }
        }
        Ok(Partition { subspaces })
    }

    /// Every column unconstrained.
    pub fn free(d: usize, k: usize) -> Self {
        Partition {
            subspaces: vec![Basis::full(d); k],
        }
    }

    pub fn subspaces(&self) -> &[Basis] {
        &self.subspaces
    }

    pub fn k(&self) -> usize {
        self.subspaces.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.subspaces[0].ambient_dim()
    }

    pub fn is_feasible(&self, u: &DMatrix<f64>, tol: f64) -> bool {
        let scale = u.amax().max(1.0);
        self.subspaces
            .iter()
            .enumerate()
            .all(|(j, s)| s.distance_to(&u.columns(j, 1).into_owned()) <= tol * scale)
    }
}

/// Feasible projection families.
#[derive(Debug, Clone)]
pub enum ConstraintSpec {
    Unconstrained { k: usize },
    SubspaceSplit(SubspaceSplit),
    Partition(Partition),
    NonnegativeRowSparse { k: usize },
    Clustering { k: usize, weights: Vec<f64> },
    SparseRows { k: usize, s: usize },
}

impl ConstraintSpec {
    pub fn rank(&self) -> usize {
        match self {
            ConstraintSpec::Unconstrained { k }
            | ConstraintSpec::NonnegativeRowSparse { k }
            | ConstraintSpec::Clustering { k, .. }
            | ConstraintSpec::SparseRows { k, .. } => *k,
            ConstraintSpec::SubspaceSplit(s) => s.k(),
            ConstraintSpec::Partition(p) => p.k(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConstraintSpec::Unconstrained { .. } => "unconstrained",
            ConstraintSpec::SubspaceSplit(_) => "subspace-split",
            ConstraintSpec::Partition(_) => "partition",
            ConstraintSpec::NonnegativeRowSparse { .. } => "nonnegative-row-sparse",
            ConstraintSpec::Clustering { .. } => "clustering",
            ConstraintSpec::SparseRows { .. } => "sparse-rows",
        }
    }

    /// Solver for the per-guess regression of this family.
    pub fn regression(&self, p: f64) -> Result<ConstrainedRegression<'_>> {
        check_p(p)?;
        match self {
            ConstraintSpec::Clustering { .. } | ConstraintSpec::SparseRows { .. } => Err(Error::input(format!(
                "the {} family is solved by its own enumeration, not per-guess regression",
                self.name()
            ))),
            ConstraintSpec::SubspaceSplit(_) | ConstraintSpec::NonnegativeRowSparse { .. } if p != 2.0 => {
                Err(Error::param(format!("the {} solver is exact only for p = 2", self.name())))
            }
            _ => Ok(ConstrainedRegression { spec: self, p }),
        }
    }
}

/// [`ConstraintSpec`] bound to a norm exponent.
#[derive(Debug, Clone, Copy)]
pub struct ConstrainedRegression<'a> {
    spec: &'a ConstraintSpec,
    p: f64,
}

impl RegressionSolver for ConstrainedRegression<'_> {
    fn solve(&self, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<RegressionSolution> {
        match self.spec {
            ConstraintSpec::Unconstrained { .. } => solve_unconstrained(b, c, self.p),
            ConstraintSpec::SubspaceSplit(split) => solve_subspace_ls(b, c, split),
            ConstraintSpec::Partition(part) => solve_partition_lp(b, c, part, self.p),
            ConstraintSpec::NonnegativeRowSparse { .. } => solve_pnmf_rows(b, c),
            _ => unreachable!("rejected by ConstraintSpec::regression"),
        }
    }

    fn p(&self) -> f64 {
        self.p
    }

    fn rank(&self) -> usize {
        self.spec.rank()
    }

    fn rotation_invariant(&self) -> bool {
        matches!(self.spec, ConstraintSpec::Unconstrained { .. })
    }

    fn cost_form(&self) -> CostForm {
        match self.spec {
            ConstraintSpec::Unconstrained { .. } if self.p == 2.0 => CostForm::LeastSquares,
            ConstraintSpec::NonnegativeRowSparse { .. } => CostForm::RowSparseNonnegative,
            _ => CostForm::Generic,
        }
    }
}

fn check_shapes(b: &DMatrix<f64>, c: &DMatrix<f64>, k: usize) -> Result<()> {
    if b.ncols() != c.ncols() {
        return Err(Error::input(format!(
            "B has {} columns but C has {}",
            b.ncols(),
            c.ncols()
        )));
    }
    if c.nrows() != k {
        return Err(Error::input(format!("C has {} rows, expected rank {k}", c.nrows())));
    }
    Ok(())
}

fn residual_cost(b: &DMatrix<f64>, u: &DMatrix<f64>, c: &DMatrix<f64>, p: f64) -> f64 {
    column_costs(&(b - u * c), p).sum()
}

/// Unconstrained `min_U ‖B − UC‖_{2,p}^p`.
pub fn solve_unconstrained(b: &DMatrix<f64>, c: &DMatrix<f64>, p: f64) -> Result<RegressionSolution> {
    check_p(p)?;
    check_shapes(b, c, c.nrows())?;
    if p != 2.0 {
        return solve_partition_lp(b, c, &Partition::free(b.nrows(), c.nrows()), p);
    }
    let u = least_squares(&c.transpose(), &b.transpose())?.transpose();
    let cost = residual_cost(b, &u, c, 2.0);
    Ok(RegressionSolution {
        u,
        cost,
        feasible: true,
        converged: true,
    })
}

/// Exact solve with columns `0..ℓ` in `W` and the rest in `W⊥`, `p = 2`.
///
/// Writing `u_j = P_W x_j` and `v_j = P_{W⊥} y_j`, the cost splits into two
/// independent unconstrained least-squares problems because `[P_W, P_{W⊥}]`
/// is orthogonal.
pub fn solve_subspace_ls(b: &DMatrix<f64>, c: &DMatrix<f64>, split: &SubspaceSplit) -> Result<RegressionSolution> {
    check_shapes(b, c, split.k())?;
    if b.nrows() != split.w.ambient_dim() {
        return Err(Error::input(format!(
            "B has {} rows, model subspace lives in dimension {}",
            b.nrows(),
            split.w.ambient_dim()
        )));
    }
    let d = b.nrows();
    let mut u = DMatrix::zeros(d, split.k());
    for (block, offset, width) in [(&split.w, 0, split.dim_in), (&split.w_perp, split.dim_in, split.dim_out)] {
        if width == 0 {
            continue;
        }
        let coords = block.vectors().transpose() * b;
        let rows = c.rows(offset, width).into_owned();
        let x = least_squares(&rows.transpose(), &coords.transpose())?.transpose();
        u.columns_mut(offset, width).copy_from(&(block.vectors() * x));
    }
    let cost = residual_cost(b, &u, c, 2.0);
    Ok(RegressionSolution {
        u,
        cost,
        feasible: true,
        converged: true,
    })
}

/// `min ‖B − VC‖_{2,p}^p` subject to `v_j ∈ S_j`.
///
/// With `v_j = S_j x_j` the residual of column `i` is
/// `b_i − Σ_j c_{ji} S_j x_j`, linear in the stacked `x`. For `p = 2` this is
/// one least-squares problem with block design `P_{ij} = c_{ji} S_j`; other
/// `p` use iteratively reweighted least squares on the same design.
pub fn solve_partition_lp(b: &DMatrix<f64>, c: &DMatrix<f64>, part: &Partition, p: f64) -> Result<RegressionSolution> {
    check_p(p)?;
    check_shapes(b, c, part.k())?;
    if b.nrows() != part.ambient_dim() {
        return Err(Error::input(format!(
            "B has {} rows, subspaces live in dimension {}",
            b.nrows(),
            part.ambient_dim()
        )));
    }
    let (d, r) = b.shape();
    let widths: Vec<usize> = part.subspaces.iter().map(Basis::dim).collect();
    let total: usize = widths.iter().sum();
    let mut design = DMatrix::zeros(d * r, total);
    for i in 0..r {
        let mut offset = 0;
        for (j, s) in part.subspaces.iter().enumerate() {
            let coef = c[(j, i)];
            if coef != 0.0 {
                design
                    .view_mut((i * d, offset), (d, widths[j]))
                    .copy_from(&(s.vectors() * coef));
            }
            offset += widths[j];
        }
    }
    let target = DMatrix::from_column_slice(d * r, 1, b.as_slice());

    let assemble = |x: &DMatrix<f64>| {
        let mut u = DMatrix::zeros(d, part.k());
        let mut offset = 0;
        for (j, s) in part.subspaces.iter().enumerate() {
            u.set_column(j, &(s.vectors() * x.rows(offset, widths[j])).column(0));
            offset += widths[j];
        }
        u
    };

    let x = least_squares(&design, &target)?;
    let mut best_u = assemble(&x);
    let mut best_cost = residual_cost(b, &best_u, c, p);
    if p == 2.0 {
        return Ok(RegressionSolution {
            u: best_u,
            cost: best_cost,
            feasible: true,
            converged: true,
        });
    }

    let floor = IRLS_SMOOTHING * b.column_iter().map(|col| col.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut u = best_u.clone();
    let mut prev = best_cost;
    let mut converged = false;
    for _ in 0..IRLS_MAX_ITERS {
        let residual = b - &u * c;
        let mut weighted_design = design.clone();
        let mut weighted_target = target.clone();
        for i in 0..r {
            let w = residual.column(i).norm().max(floor).powf((p - 2.0) / 2.0);
            weighted_design.rows_mut(i * d, d).scale_mut(w);
            weighted_target.rows_mut(i * d, d).scale_mut(w);
        }
        let x = least_squares(&weighted_design, &weighted_target)?;
        u = assemble(&x);
        let cost = residual_cost(b, &u, c, p);
        if cost < best_cost {
            best_cost = cost;
            best_u = u.clone();
        }
        if (prev - cost).abs() <= IRLS_TOLERANCE * prev.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        prev = cost;
    }
    Ok(RegressionSolution {
        u: best_u,
        cost: best_cost,
        feasible: true,
        converged,
    })
}

/// `min ‖B − WH‖_F²` over `W ≥ 0` with at most one nonzero per row.
///
/// Rows decouple; for row `b_i` and each candidate row `h_j` of `H` the best
/// weight is `max(0, ⟨b_i, h_j⟩ / ‖h_j‖²)` (zero when `h_j = 0`), and the
/// all-zero row is the fallback. Ties keep the zero row, then the smallest `j`.
pub fn solve_pnmf_rows(b: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<RegressionSolution> {
    check_shapes(b, h, h.nrows())?;
    let (d, _) = b.shape();
    let k = h.nrows();
    let norms: Vec<f64> = (0..k).map(|j| h.row(j).norm_squared()).collect();
    let mut w = DMatrix::zeros(d, k);
    let mut cost = 0.0;
    for i in 0..d {
        let row = b.row(i);
        let mut best = row.norm_squared();
        let mut choice = None;
        for j in 0..k {
            if norms[j] == 0.0 {
                continue;
            }
            let lambda = (row.dot(&h.row(j)) / norms[j]).max(0.0);
            if lambda == 0.0 {
                continue;
            }
            let res = (row - h.row(j) * lambda).norm_squared();
            if res < best {
                best = res;
                choice = Some((j, lambda));
            }
        }
        if let Some((j, lambda)) = choice {
            w[(i, j)] = lambda;
        }
        cost += best;
    }
    Ok(RegressionSolution {
        u: w,
        cost,
        feasible: true,
        converged: true,
    })
}

/// `U ≥ 0`, at most one nonzero per row.
pub fn is_row_sparse_nonnegative(u: &DMatrix<f64>) -> bool {
    u.iter().all(|v| *v >= 0.0) && u.row_iter().all(|row| row.iter().filter(|v| **v != 0.0).count() <= 1)
}

#[derive(Debug, Clone)]
pub struct KmeansCenters {
    /// `k x r`, one center per row.
    pub centers: DMatrix<f64>,
    pub empty: Vec<bool>,
}

/// Weighted means of the rows of `points` per cluster; empty clusters get a
/// zero center and are flagged.
pub fn solve_kmeans_centers(points: &DMatrix<f64>, assignment: &[usize], weights: &[f64], k: usize) -> Result<KmeansCenters> {
    let (q, r) = points.shape();
    if assignment.len() != q || weights.len() != q {
        return Err(Error::input(format!(
            "{q} points but {} assignments and {} weights",
            assignment.len(),
            weights.len()
        )));
    }
    let mut centers = DMatrix::zeros(k, r);
    let mut mass = vec![0.0; k];
    for (i, (&a, &w)) in assignment.iter().zip(weights).enumerate() {
        if a >= k {
            return Err(Error::input(format!("cluster id {a} out of range for k = {k}")));
        }
        if !(w > 0.0) {
            return Err(Error::input(format!("weight {i} must be positive, got {w}")));
        }
        for col in 0..r {
            centers[(a, col)] += w * points[(i, col)];
        }
        mass[a] += w;
    }
    let mut empty = vec![false; k];
    for j in 0..k {
        if mass[j] > 0.0 {
            centers.row_mut(j).scale_mut(1.0 / mass[j]);
        } else {
            empty[j] = true;
        }
    }
    Ok(KmeansCenters { centers, empty })
}

/// Weighted k-means cost `Σ w_i ‖x_i − c_{a(i)}‖²` (rows are points).
pub fn kmeans_cost(points: &DMatrix<f64>, assignment: &[usize], weights: &[f64], centers: &DMatrix<f64>) -> f64 {
    assignment
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(i, (&a, &w))| w * (points.row(i) - centers.row(a)).norm_squared())
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparsePcaSolution {
    /// `d x k`, orthonormal, zero outside `support`.
    #[serde(skip)]
    pub u: DMatrix<f64>,
    pub support: Vec<usize>,
    /// `‖B − UUᵀB‖_F²`.
    pub cost: f64,
    /// `⟨BBᵀ, UUᵀ⟩`.
    pub mass: f64,
    pub supports_evaluated: u64,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// `index`-th `s`-subset of `0..d` in lexicographic order.
pub fn unrank_combination(d: usize, s: usize, mut index: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(s);
    let mut next = 0;
    for slot in 0..s {
        let remaining = s - slot - 1;
        loop {
            let block = binomial(d - next - 1, remaining);
            if index < block {
                out.push(next);
                next += 1;
                break;
            }
            index -= block;
            next += 1;
        }
    }
    out
}

/// Row-sparse PCA by exhaustive support enumeration: for each `T ⊆ [d]`
/// with `|T| = s`, the best `U` supported on `T` is the top-`k` eigenbasis
/// of `B_T B_Tᵀ`. Returns the support of largest captured mass; ties go to
/// the lexicographically smallest support.
pub fn solve_sparse_pca_support(
    b: &DMatrix<f64>,
    k: usize,
    s_rows: usize,
    budget: u64,
    par: Parallelism,
) -> Result<SparsePcaSolution> {
    let d = b.nrows();
    if !(1 <= k && k <= s_rows && s_rows <= d) {
        return Err(Error::param(format!("need 1 <= k <= s <= d, got k={k}, s={s_rows}, d={d}")));
    }
    let count = binomial(d, s_rows);
    if count > u128::from(budget) {
        return Err(Error::Overflow(format!(
            "C({d}, {s_rows}) = {count} supports exceed the budget of {budget}; use a smaller d or s"
        )));
    }
    let gram = b * b.transpose();
    let masses = parallel::map_indexed(par, count as usize, |t| {
        let support = unrank_combination(d, s_rows, t as u128);
        Ok(restricted_top_k(&gram, &support, k).0)
    })?;
    let mut best = 0;
    for (t, m) in masses.iter().enumerate() {
        if *m > masses[best] {
            best = t;
        }
    }
    let support = unrank_combination(d, s_rows, best as u128);
    let (mass, vectors) = restricted_top_k(&gram, &support, k);
    let mut u = DMatrix::zeros(d, k);
    for (row, &t) in support.iter().enumerate() {
        u.row_mut(t).copy_from(&vectors.row(row));
    }
    let total = gram.trace();
    Ok(SparsePcaSolution {
        u,
        support,
        cost: (total - mass).max(0.0),
        mass,
        supports_evaluated: count as u64,
    })
}

/// Top-`k` eigenpairs of the principal submatrix on `support`.
fn restricted_top_k(gram: &DMatrix<f64>, support: &[usize], k: usize) -> (f64, DMatrix<f64>) {
    let s = support.len();
    let sub = DMatrix::from_fn(s, s, |i, j| gram[(support[i], support[j])]);
    let eig = SymmetricEigen::new(sub);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let mut vectors = DMatrix::zeros(s, k);
    let mut mass = 0.0;
    for (out, &i) in order.iter().take(k).enumerate() {
        vectors.set_column(out, &eig.eigenvectors.column(i));
        mass += eig.eigenvalues[i].max(0.0);
    }
    (mass, vectors)
}

/// Rows of `u` that carry a nonzero entry.
pub fn row_support(u: &DMatrix<f64>) -> Vec<usize> {
    (0..u.nrows()).filter(|&i| u.row(i).iter().any(|v| *v != 0.0)).collect()
}

/// Feasibility tolerance used by the checkers in this module.
pub const FEASIBILITY_TOLERANCE: f64 = TAU_ORTH;
