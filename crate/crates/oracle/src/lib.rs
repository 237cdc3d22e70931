//! Brute-force references for auditing `csa-core` at desk scale.
//!
//! Nothing here calls the solvers, sketches or nets of the audited crate;
//! only its matrix and subspace containers are reused. Eigenproblems go
//! through a separate Jacobi routine.

pub mod eigen;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use csa_core::rng::{stream, STREAM_ORACLE};
use csa_core::solvers::{ConstraintSpec, Partition, SubspaceSplit};
use csa_core::{Error, Result};

use eigen::{complement, gram_schmidt, householder_complement, sphere_grid, sphere_grid_len, symmetric_eigen};

/// Default cap on the number of candidates an oracle evaluates.
pub const ORACLE_BUDGET: u64 = 200_000_000;
const PNMF_MAX_SWEEPS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    AssignmentEnumeration,
    SubspaceGrid,
    AlternatingRestarts,
    RowGrid,
    SupportEnumeration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Argmin {
    Assignment(Vec<usize>),
    /// Row-major `d x k`.
    Basis(Vec<Vec<f64>>),
    /// Per row, the chosen column and weight of `W`.
    RowChoices(Vec<Option<(usize, f64)>>),
    Support(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub opt_value: f64,
    pub argmin: Argmin,
    pub method: Method,
    pub resolution: Option<f64>,
    /// `|opt_value − OPT| ≤ error_bound` for grid methods, zero otherwise.
    pub error_bound: f64,
    /// False when `error_bound` rests on a conditioning estimate.
    pub bound_is_rigorous: bool,
    /// Set when `opt_value` is only known to be `≥ OPT`.
    pub upper_bound_only: bool,
    pub evaluated: u64,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn check_budget(total: u128, budget: u64, what: &str) -> Result<u64> {
    if total > u128::from(budget) {
        Err(Error::Overflow(format!("{what}: {total} candidates exceed the budget of {budget}")))
    } else {
        Ok(total as u64)
    }
}

// ---------------------------------------------------------------------------
// k-means

/// Exact k-means on the rows of `points` by trying all `k^n` assignments
/// with mean centers.
pub fn brute_kmeans(points: &DMatrix<f64>, k: usize, budget: u64) -> Result<OracleReport> {
    let (n, d) = points.shape();
    if k == 0 || n == 0 {
        return Err(Error::InvalidParameter("need k >= 1 and at least one point".into()));
    }
    let total = (k as u128)
        .checked_pow(n as u32)
        .ok_or_else(|| Error::Overflow(format!("{k}^{n} assignments")))?;
    let total = check_budget(total, budget, "k-means assignments")?;
    let mut best = (f64::INFINITY, vec![0; n]);
    let mut assignment = vec![0usize; n];
    for _ in 0..total {
        let mut sums = DMatrix::<f64>::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for t in 0..d {
                sums[(c, t)] += points[(i, t)];
            }
        }
        let mut cost = 0.0;
        for (i, &c) in assignment.iter().enumerate() {
            for t in 0..d {
                let diff = points[(i, t)] - sums[(c, t)] / counts[c] as f64;
                cost += diff * diff;
            }
        }
        if cost < best.0 {
            best = (cost, assignment.clone());
        }
        for slot in assignment.iter_mut() {
            *slot += 1;
            if *slot < k {
                break;
            }
            *slot = 0;
        }
    }
    Ok(OracleReport {
        opt_value: best.0,
        argmin: Argmin::Assignment(best.1),
        method: Method::AssignmentEnumeration,
        resolution: None,
        error_bound: 0.0,
        bound_is_rigorous: true,
        upper_bound_only: false,
        evaluated: total,
    })
}

// ---------------------------------------------------------------------------
// Subspace grids

struct Block {
    mass: f64,
    vectors: DMatrix<f64>,
    /// Bound on `‖V − V*‖_F` for the best-mass orthonormal block `V*`.
    vector_error: f64,
    evaluated: u64,
}

fn block_len(m: usize, b: usize, h: f64) -> u128 {
    match b {
        0 => 1,
        _ if b == m => 1,
        1 => sphere_grid_len(m, h),
        _ => sphere_grid_len(m, h) * sphere_grid_len(m - 1, h),
    }
}

/// Best `b`-dimensional subspace of `span(q)` for mass `tr(VᵀMV)`, `b ≤ 2`.
fn block_search(m_full: &DMatrix<f64>, q: &DMatrix<f64>, b: usize, h: f64) -> Block {
    let d = q.nrows();
    let m = q.ncols();
    let mq = q.transpose() * m_full * q;
    if b == 0 {
        return Block {
            mass: 0.0,
            vectors: DMatrix::zeros(d, 0),
            vector_error: 0.0,
            evaluated: 1,
        };
    }
    if b == m {
        return Block {
            mass: mq.trace(),
            vectors: q.clone(),
            vector_error: 0.0,
            evaluated: 1,
        };
    }
    let (xs, rho) = sphere_grid(m, h);
    let quad = |v: &DVector<f64>| (v.transpose() * &mq * v)[(0, 0)];
    if b == 1 {
        let mut best = (f64::NEG_INFINITY, 0);
        for (t, x) in xs.iter().enumerate() {
            let mass = quad(x);
            if mass > best.0 {
                best = (mass, t);
            }
        }
        return Block {
            mass: best.0,
            vectors: DMatrix::from_column_slice(d, 1, (q * &xs[best.1]).as_slice()),
            vector_error: rho,
            evaluated: xs.len() as u64,
        };
    }
    let (ys, rho_y) = sphere_grid(m - 1, h);
    let mut best = (f64::NEG_INFINITY, DVector::zeros(m), DVector::zeros(m));
    for x in &xs {
        let cx = householder_complement(x);
        let mx = quad(x);
        let mc = cx.transpose() * &mq * &cx;
        for y in ys.iter() {
            let mass = mx + (y.transpose() * &mc * y)[(0, 0)];
            if mass > best.0 {
                best = (mass, x.clone(), &cx * y);
            }
        }
    }
    let mut v = DMatrix::zeros(d, 2);
    v.set_column(0, &(q * &best.1));
    v.set_column(1, &(q * &best.2));
    Block {
        mass: best.0,
        vectors: v,
        vector_error: (rho * rho + (2.0 * rho + rho_y).powi(2)).sqrt(),
        evaluated: (xs.len() * ys.len()) as u64,
    }
}

fn split_grid(a: &DMatrix<f64>, w: &DMatrix<f64>, dim_in: usize, dim_out: usize, h: f64, budget: u64) -> Result<OracleReport> {
    let q_in = gram_schmidt(w, 1e-10);
    let q_out = complement(&q_in);
    if dim_in > q_in.ncols() || dim_out > q_out.ncols() {
        return Err(Error::Infeasible("split does not fit the model subspace".into()));
    }
    if dim_in > 2 || dim_out > 2 {
        return Err(Error::InvalidParameter("grid oracle supports blocks of dimension at most 2".into()));
    }
    check_budget(
        block_len(q_in.ncols(), dim_in, h) + block_len(q_out.ncols(), dim_out, h),
        budget,
        "subspace grid",
    )?;
    let m_full = a * a.transpose();
    let energy = a.norm_squared();
    let inside = block_search(&m_full, &q_in, dim_in, h);
    let outside = block_search(&m_full, &q_out, dim_out, h);
    let mut v = DMatrix::zeros(a.nrows(), dim_in + dim_out);
    v.columns_mut(0, dim_in).copy_from(&inside.vectors);
    v.columns_mut(dim_in, dim_out).copy_from(&outside.vectors);
    // |tr(AAᵀ(P − P'))| ≤ ‖P − P'‖₂‖A‖_F² and ‖P − P'‖₂ ≤ min(1, 2‖V − V'‖_F)
    let eta = |e: f64| (2.0 * e).min(1.0);
    Ok(OracleReport {
        opt_value: (energy - inside.mass - outside.mass).max(0.0),
        argmin: Argmin::Basis(rows_of(&v)),
        method: Method::SubspaceGrid,
        resolution: Some(h),
        error_bound: (eta(inside.vector_error) + eta(outside.vector_error)) * energy,
        bound_is_rigorous: true,
        upper_bound_only: false,
        evaluated: inside.evaluated + outside.evaluated,
    })
}

fn span_cost(a: &DMatrix<f64>, v: &DMatrix<f64>, p: f64) -> f64 {
    let q = gram_schmidt(v, 1e-12);
    let r = a - &q * (q.transpose() * a);
    r.column_iter().map(|c| c.norm().powf(p)).sum()
}

fn partition_grid(a: &DMatrix<f64>, subspaces: &[DMatrix<f64>], p: f64, h: f64, budget: u64) -> Result<OracleReport> {
    let bases: Vec<DMatrix<f64>> = subspaces.iter().map(|s| gram_schmidt(s, 1e-10)).collect();
    let total = bases.iter().map(|q| sphere_grid_len(q.ncols(), h)).product::<u128>();
    let evaluated = check_budget(total, budget, "partition grid")?;
    let grids: Vec<(Vec<DVector<f64>>, f64)> = bases
        .iter()
        .map(|q| {
            let (pts, rho) = sphere_grid(q.ncols(), h);
            (pts.iter().map(|x| q * x).collect(), rho)
        })
        .collect();
    let k = grids.len();
    let mut idx = vec![0usize; k];
    let mut v = DMatrix::zeros(a.nrows(), k);
    let mut best = (f64::INFINITY, v.clone());
    'outer: loop {
        for (j, &i) in idx.iter().enumerate() {
            v.set_column(j, &grids[j].0[i]);
        }
        let cost = span_cost(a, &v, p);
        if cost < best.0 {
            best = (cost, v.clone());
        }
        for j in 0..k {
            idx[j] += 1;
            if idx[j] < grids[j].0.len() {
                continue 'outer;
            }
            idx[j] = 0;
        }
        break;
    }
    // ‖P − P'‖₂ ≤ 2‖V − V'‖/(σ_min − ‖V − V'‖), with σ_min taken at the grid minimizer
    let rho_v = grids.iter().map(|g| g.1 * g.1).sum::<f64>().sqrt();
    let (gram_vals, _) = symmetric_eigen(&(best.1.transpose() * &best.1));
    let s_min = gram_vals.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    let eta = if s_min > rho_v { (2.0 * rho_v / (s_min - rho_v)).min(1.0) } else { 1.0 };
    let error_bound = if p == 2.0 {
        eta * a.norm_squared()
    } else {
        let mass: f64 = a.column_iter().map(|c| c.norm().powf(p)).sum();
        p * eta * (1.0 + eta).powf(p - 1.0) * mass
    };
    Ok(OracleReport {
        opt_value: best.0,
        argmin: Argmin::Basis(rows_of(&best.1)),
        method: Method::SubspaceGrid,
        resolution: Some(h),
        error_bound,
        bound_is_rigorous: false,
        upper_bound_only: false,
        evaluated,
    })
}

/// Grid search over the feasible `U` of a subspace-split or partition
/// constraint, `d ≤ 4`, `k ≤ 2`, angle step `resolution`.
///
/// A split with `p = 2` decouples into a block inside `W` and a block inside
/// `W⊥`, each searched on its own grid.
pub fn brute_subspace_grid(
    a: &DMatrix<f64>,
    spec: &ConstraintSpec,
    p: f64,
    resolution: f64,
    budget: u64,
) -> Result<OracleReport> {
    let d = a.nrows();
    if d > 4 || spec.rank() > 2 {
        return Err(Error::InvalidParameter(format!(
            "grid oracle needs d <= 4 and k <= 2, got d={d}, k={}",
            spec.rank()
        )));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidParameter(format!("resolution must be positive, got {resolution}")));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must be at least 1, got {p}")));
    }
    match spec {
        ConstraintSpec::Unconstrained { k } if p == 2.0 => {
            split_grid(a, &DMatrix::identity(d, d), *k, 0, resolution, budget)
        }
        ConstraintSpec::Unconstrained { k } => {
            let free = Partition::free(d, *k);
            let subs: Vec<_> = free.subspaces().iter().map(|s| s.vectors().clone()).collect();
            partition_grid(a, &subs, p, resolution, budget)
        }
        ConstraintSpec::SubspaceSplit(split) => split_oracle(a, split, p, resolution, budget),
        ConstraintSpec::Partition(part) => {
            let subs: Vec<_> = part.subspaces().iter().map(|s| s.vectors().clone()).collect();
            partition_grid(a, &subs, p, resolution, budget)
        }
        other => Err(Error::InvalidParameter(format!("no grid oracle for {} constraints", other.name()))),
    }
}

fn split_oracle(a: &DMatrix<f64>, split: &SubspaceSplit, p: f64, h: f64, budget: u64) -> Result<OracleReport> {
    if p != 2.0 {
        return Err(Error::InvalidParameter("subspace-split grid needs p = 2".into()));
    }
    split_grid(a, split.model().vectors(), split.dim_in(), split.dim_out(), h, budget)
}

// ---------------------------------------------------------------------------
// Projective NMF

fn pnmf_cost(a: &DMatrix<f64>, u: &DMatrix<f64>) -> f64 {
    (a - u * (u.transpose() * a)).norm_squared()
}

/// Normalized nonzero columns of a row-sparse `W`.
fn normalized_columns(w: &DMatrix<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = w.column_iter().filter(|c| c.norm() > 0.0).map(|c| c.normalize()).collect();
    if cols.is_empty() {
        DMatrix::zeros(w.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Per row of `A`, the best single column `j` and weight `λ ≥ 0` against `H`.
fn best_rows(a: &DMatrix<f64>, h: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(a.nrows(), k);
    for i in 0..a.nrows() {
        let row = a.row(i);
        let mut best = (row.norm_squared(), None);
        for j in 0..h.nrows() {
            let hj = h.row(j);
            let nn = hj.norm_squared();
            if nn == 0.0 {
                continue;
            }
            let lambda = (row.dot(&hj) / nn).max(0.0);
            let res = (row - hj * lambda).norm_squared();
            if res < best.0 {
                best = (res, Some((j, lambda)));
            }
        }
        if let Some((j, lambda)) = best.1 {
            w[(i, j)] = lambda;
        }
    }
    w
}

/// Multi-restart alternating minimization for projective NMF: from a random
/// row-to-column assignment, alternate `H = UᵀA` with exact per-row weights
/// until the cost stops decreasing. The result upper-bounds OPT.
pub fn brute_pnmf(a: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<OracleReport> {
    let d = a.nrows();
    if d > 6 || k == 0 || k > 3 {
        return Err(Error::InvalidParameter(format!("pnmf oracle needs d <= 6 and 1 <= k <= 3, got d={d}, k={k}")));
    }
    if restarts == 0 {
        return Err(Error::InvalidParameter("at least one restart is required".into()));
    }
    let tol = 1e-14 * a.norm_squared().max(f64::MIN_POSITIVE);
    let mut best = (a.norm_squared(), DMatrix::zeros(d, k));
    let mut evaluated = 0u64;
    for r in 0..restarts {
        let mut rng = stream(seed, STREAM_ORACLE, r as u64);
        let mut w = DMatrix::zeros(d, k);
        for i in 0..d {
            w[(i, rng.random_range(0..k))] = rng.random_range(0.1..1.0);
        }
        let mut u = normalized_columns(&w);
        let mut cost = pnmf_cost(a, &u);
        for _ in 0..PNMF_MAX_SWEEPS {
            evaluated += 1;
            let h = u.transpose() * a;
            let next = normalized_columns(&best_rows(a, &h, k));
            let next_cost = pnmf_cost(a, &next);
            if next_cost >= cost - tol {
                break;
            }
            u = next;
            cost = next_cost;
        }
        if cost < best.0 {
            let mut full = DMatrix::zeros(d, k);
            full.columns_mut(0, u.ncols()).copy_from(&u);
            best = (cost, full);
        }
    }
    Ok(OracleReport {
        opt_value: best.0,
        argmin: Argmin::Basis(rows_of(&best.1)),
        method: Method::AlternatingRestarts,
        resolution: None,
        error_bound: 0.0,
        bound_is_rigorous: false,
        upper_bound_only: true,
        evaluated,
    })
}

/// `min ‖B − WH‖_F²` over row-sparse `W ≥ 0` by scanning, per row and per
/// row `h_j` of `H`, the weights `λ ∈ {0, L/steps, …, L}` with
/// `L = ‖b_i‖/‖h_j‖`. Grid values are feasible, so `opt_value ≥ OPT`, and
/// `error_bound = Σ_i ‖b_i‖²/(4·steps²)` bounds the gap.
pub fn pnmf_rows_grid(b: &DMatrix<f64>, h: &DMatrix<f64>, steps: usize) -> Result<OracleReport> {
    if b.ncols() != h.ncols() {
        return Err(Error::InvalidInput(format!(
            "B has {} columns but H has {}",
            b.ncols(),
            h.ncols()
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be positive".into()));
    }
    let mut total = 0.0;
    let mut choices = Vec::with_capacity(b.nrows());
    let mut bound = 0.0;
    for i in 0..b.nrows() {
        let row = b.row(i);
        let mut best = (row.norm_squared(), None);
        for j in 0..h.nrows() {
            let hj = h.row(j);
            let hn = hj.norm();
            if hn == 0.0 {
                continue;
            }
            let top = row.norm() / hn;
            for t in 1..=steps {
                let lambda = top * t as f64 / steps as f64;
                let res = (row - hj * lambda).norm_squared();
                if res < best.0 {
                    best = (res, Some((j, lambda)));
                }
            }
        }
        total += best.0;
        bound += row.norm_squared() / (4.0 * (steps * steps) as f64);
        choices.push(best.1);
    }
    Ok(OracleReport {
        opt_value: total,
        argmin: Argmin::RowChoices(choices),
        method: Method::RowGrid,
        resolution: Some(1.0 / steps as f64),
        error_bound: bound,
        bound_is_rigorous: true,
        upper_bound_only: true,
        evaluated: (b.nrows() * h.nrows() * steps) as u64,
    })
}

// ---------------------------------------------------------------------------
// Sparse PCA

/// Exact row-sparse PCA on `A` itself: for every support of `s_rows` rows,
/// the top-`k` eigenvalue mass of `(AAᵀ)_{S,S}`. Reports the minimum
/// projection cost `‖A‖_F² − mass`.
pub fn sparse_pca_full_enum(a: &DMatrix<f64>, k: usize, s_rows: usize, budget: u64) -> Result<OracleReport> {
    let d = a.nrows();
    if k == 0 || k > s_rows || s_rows > d {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= k <= s_rows <= d, got k={k}, s_rows={s_rows}, d={d}"
        )));
    }
    let mut count: u128 = 1;
    for t in 0..s_rows {
        count = count * (d - t) as u128 / (t + 1) as u128;
    }
    let evaluated = check_budget(count, budget, "sparse PCA supports")?;
    let m = a * a.transpose();
    let mut support: Vec<usize> = (0..s_rows).collect();
    let mut best = (f64::NEG_INFINITY, support.clone());
    loop {
        let sub = DMatrix::from_fn(s_rows, s_rows, |i, j| m[(support[i], support[j])]);
        let (vals, _) = symmetric_eigen(&sub);
        let mass: f64 = vals.iter().take(k).sum();
        if mass > best.0 {
            best = (mass, support.clone());
        }
        // next combination in lexicographic order
        let Some(t) = (0..s_rows).rev().find(|&t| support[t] < d - s_rows + t) else {
            break;
        };
        support[t] += 1;
        for u in t + 1..s_rows {
            support[u] = support[u - 1] + 1;
        }
    }
    Ok(OracleReport {
        opt_value: (a.norm_squared() - best.0).max(0.0),
        argmin: Argmin::Support(best.1),
        method: Method::SupportEnumeration,
        resolution: None,
        error_bound: 0.0,
        bound_is_rigorous: true,
        upper_bound_only: false,
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use csa_core::linalg::Basis;
    use csa_core::rng::gaussian_matrix;

    fn random(d: usize, n: usize, seed: u64) -> DMatrix<f64> {
        gaussian_matrix(d, n, &mut stream(seed, "oracle-test", 0))
    }

    fn tail_energy(a: &DMatrix<f64>, k: usize) -> f64 {
        let (vals, _) = symmetric_eigen(&(a * a.transpose()));
        vals.iter().skip(k).map(|v| v.max(0.0)).sum()
    }

    #[test]
    fn kmeans_examples() {
        let pts = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 10.0]);
        let r = brute_kmeans(&pts, 2, ORACLE_BUDGET).unwrap();
        assert!((r.opt_value - 0.5).abs() < 1e-12);
        let pts = random(4, 3, 1);
        assert!(brute_kmeans(&pts, 4, ORACLE_BUDGET).unwrap().opt_value < 1e-24);
        assert!(matches!(brute_kmeans(&random(12, 2, 1), 3, 1000), Err(Error::Overflow(_))));
    }

    #[test]
    fn vacuous_grid_converges_to_svd() {
        let a = random(3, 8, 2);
        let opt = tail_energy(&a, 1);
        let spec = ConstraintSpec::Unconstrained { k: 1 };
        let coarse = brute_subspace_grid(&a, &spec, 2.0, 0.2, ORACLE_BUDGET).unwrap();
        let fine = brute_subspace_grid(&a, &spec, 2.0, 0.02, ORACLE_BUDGET).unwrap();
        for r in [&coarse, &fine] {
            assert!(r.opt_value >= opt - 1e-9);
            assert!(r.opt_value <= opt + r.error_bound);
        }
        assert!(fine.opt_value - opt <= coarse.opt_value - opt + 1e-12);
        assert!(fine.opt_value - opt < 1e-3 * a.norm_squared());
    }

    #[test]
    fn best_line_in_plane() {
        let a = DMatrix::from_row_slice(2, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0]);
        let m = &a * a.transpose();
        // smaller eigenvalue of a 2x2 symmetric matrix
        let (p, q, r): (f64, f64, f64) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
        let small = (p + r) / 2.0 - (((p - r) / 2.0).powi(2) + q * q).sqrt();
        let part = Partition::new(vec![Basis::full(2)]).unwrap();
        let rep = brute_subspace_grid(&a, &ConstraintSpec::Partition(part), 2.0, 1e-3, ORACLE_BUDGET).unwrap();
        assert!(rep.opt_value >= small - 1e-9);
        assert!(rep.opt_value <= small + 1e-5 * a.norm_squared());
    }

    #[test]
    fn planted_split_fits() {
        // columns in span(e0, e2); W = span(e0, e1), one direction each side
        let mut a = random(4, 6, 3);
        a.row_mut(1).fill(0.0);
        a.row_mut(3).fill(0.0);
        let split = SubspaceSplit::new(Basis::coordinate(4, &[0, 1]).unwrap(), 2, 1).unwrap();
        let rep = brute_subspace_grid(&a, &ConstraintSpec::SubspaceSplit(split), 2.0, 0.05, ORACLE_BUDGET).unwrap();
        assert!(rep.opt_value <= rep.error_bound);
        assert!(rep.opt_value < 1e-3 * a.norm_squared());
    }

    #[test]
    fn pnmf_exact_instances() {
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        assert!(brute_pnmf(&diag, 3, 20, 0).unwrap().opt_value < 1e-20);
        let block = DMatrix::from_row_slice(4, 4, &[1., 2., 0., 0., 2., 4., 0., 0., 0., 0., 3., 1., 0., 0., 3., 1.]);
        let rep = brute_pnmf(&block, 2, 20, 0).unwrap();
        assert!(rep.opt_value < 1e-20);
        assert!(rep.upper_bound_only);
    }

    #[test]
    fn row_grid_upper_bounds_closed_form() {
        let b = random(4, 3, 4);
        let h = random(2, 3, 5);
        let rep = pnmf_rows_grid(&b, &h, 1000).unwrap();
        let mut exact = 0.0;
        for i in 0..4 {
            let row = b.row(i);
            let mut best = row.norm_squared();
            for j in 0..2 {
                let hj = h.row(j);
                let lambda = (row.dot(&hj) / hj.norm_squared()).max(0.0);
                best = best.min((row - hj * lambda).norm_squared());
            }
            exact += best;
        }
        assert!(rep.opt_value >= exact - 1e-12);
        assert!(rep.opt_value <= exact + rep.error_bound);
    }

    #[test]
    fn sparse_pca_examples() {
        let a = random(5, 7, 6);
        let full = sparse_pca_full_enum(&a, 2, 5, ORACLE_BUDGET).unwrap();
        assert!((full.opt_value - tail_energy(&a, 2)).abs() < 1e-9 * a.norm_squared());
        // rank one with sparse left factor
        let u = DVector::from_vec(vec![0.0, 0.6, 0.0, 0.8, 0.0]);
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let a = &u * v.transpose() * 3.0;
        let rep = sparse_pca_full_enum(&a, 1, 2, ORACLE_BUDGET).unwrap();
        assert_eq!(rep.argmin, Argmin::Support(vec![1, 3]));
        assert!(rep.opt_value < 1e-12);
    }
}
