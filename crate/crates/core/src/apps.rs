//! Problem reductions onto the engine and their post-processing.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::coreset::{pcps_p2, pcps_size, Coreset};
use crate::engine::{coreset_guess_solve, multiplicative_delta, SolveConfig, Solution};
use crate::error::{Error, Result};
use crate::linalg::{gram_error, intersection_dim, orthonormalize, projection_cost, Basis, DenseMatrix, TAU_ORTH};
use crate::netgen::NetKind;
use crate::parallel::{map_indexed, Parallelism};
use crate::rng::{stream, STREAM_CORESET};
use crate::solvers::{
    is_row_sparse_nonnegative, kmeans_cost, solve_kmeans_centers, solve_sparse_pca_support, ConstraintSpec,
    Partition, SubspaceSplit, SUPPORT_BUDGET,
};

pub const DEFAULT_KAPPAS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
/// The κ schedule stops after two consecutive values improving by less than
/// this fraction.
pub const KAPPA_STOP_IMPROVEMENT: f64 = 0.01;
/// Default cap on the `k^q` assignments k-means enumerates.
pub const ASSIGNMENT_BUDGET: u64 = 1 << 24;
const ASSIGNMENT_CHUNK: u128 = 1 << 10;

/// Execution settings shared by the applications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub budget: Option<u64>,
    pub seed: u64,
    pub parallelism: Parallelism,
    pub prune: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            budget: None,
            seed: 0,
            parallelism: Parallelism::Sequential,
            prune: true,
        }
    }
}

impl RunOptions {
    pub fn config(&self, k: usize, p: f64, epsilon: f64, delta: f64) -> SolveConfig {
        SolveConfig {
            budget: self.budget,
            seed: self.seed,
            parallelism: self.parallelism,
            prune: self.prune,
            ..SolveConfig::new(k, p, epsilon, delta)
        }
    }
}

/// Orthonormal columns spanning `span(part)` extended inside `space` to
/// `target` columns. `part` must lie in `space`.
fn complete_within(part: &DMatrix<f64>, space: &Basis, target: usize) -> DMatrix<f64> {
    let d = space.ambient_dim();
    let mut q = if part.ncols() == 0 {
        DMatrix::zeros(d, 0)
    } else {
        orthonormalize(part).into_vectors()
    };
    if q.ncols() > target {
        q = q.columns(0, target).into_owned();
    }
    if q.ncols() < target {
        let s = space.vectors();
        let residual = s - &q * (q.transpose() * s);
        let extra = orthonormalize(&residual).into_vectors();
        let need = (target - q.ncols()).min(extra.ncols());
        let mut out = DMatrix::zeros(d, q.ncols() + need);
        out.columns_mut(0, q.ncols()).copy_from(&q);
        out.columns_mut(q.ncols(), need).copy_from(&extra.columns(0, need));
        q = out;
    }
    q
}

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn as_basis(v: DMatrix<f64>) -> Basis {
    Basis::orthonormal(v.clone()).unwrap_or_else(|_| orthonormalize(&v))
}

// ---------------------------------------------------------------------------
// Constrained subspace estimation

#[derive(Debug, Clone)]
pub struct CseInstance {
    pub a: DenseMatrix,
    /// Model subspace.
    pub w: Basis,
    pub k: usize,
    /// Required `dim(V ∩ W)`.
    pub l_min: usize,
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CseCase {
    pub intersection: usize,
    pub feasible: bool,
    pub cost_original: Option<f64>,
    pub cost_coreset: Option<f64>,
    pub guesses_evaluated: u64,
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct CseResult {
    /// Best case; `basis` is completed to exactly `k` columns, `i` of them in
    /// `W` and `k − i` in `W⊥`.
    pub solution: Solution,
    pub best_intersection: usize,
    pub cases: Vec<CseCase>,
    /// `dim(span ∩ W)` measured by principal angles.
    pub measured_intersection: usize,
}

/// One engine run per exact intersection dimension `i ∈ [ℓ_min, k]`.
pub fn run_cse(inst: &CseInstance, opts: &RunOptions) -> Result<CseResult> {
    let d = inst.a.rows();
    if inst.w.ambient_dim() != d {
        return Err(Error::InvalidInput(format!(
            "model subspace lives in dimension {} but A has {d} rows",
            inst.w.ambient_dim()
        )));
    }
    if !inst.w.is_orthonormal() {
        return Err(Error::InvalidInput("model subspace basis must be orthonormal".into()));
    }
    if inst.l_min > inst.k || inst.l_min > inst.w.dim() {
        return Err(Error::InvalidParameter(format!(
            "need l_min <= k and l_min <= dim W, got l_min={}, k={}, dim W={}",
            inst.l_min,
            inst.k,
            inst.w.dim()
        )));
    }
    let cfg = opts.config(inst.k, 2.0, inst.epsilon, inst.delta);
    let mut cases = Vec::new();
    let mut best: Option<(Solution, usize)> = None;
    for i in inst.l_min..=inst.k {
        let split = match SubspaceSplit::new(inst.w.clone(), inst.k, i) {
            Ok(split) => split,
            Err(Error::Infeasible(_)) => {
                cases.push(CseCase {
                    intersection: i,
                    feasible: false,
                    cost_original: None,
                    cost_coreset: None,
                    guesses_evaluated: 0,
                    truncated: false,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut sol = coreset_guess_solve(&inst.a, &ConstraintSpec::SubspaceSplit(split.clone()), &cfg, NetKind::Standard)?;
        let inside = complete_within(&sol.u.columns(0, i).into_owned(), split.model(), i);
        let w_perp = inst.w.complement();
        let outside = complete_within(&sol.u.columns(i, inst.k - i).into_owned(), &w_perp, inst.k - i);
        sol.basis = as_basis(hstack(&inside, &outside));
        sol.cost_original = projection_cost(&inst.a, &sol.basis, 2.0)?;
        cases.push(CseCase {
            intersection: i,
            feasible: true,
            cost_original: Some(sol.cost_original),
            cost_coreset: Some(sol.cost_coreset),
            guesses_evaluated: sol.guesses_evaluated,
            truncated: sol.truncated,
        });
        if best.as_ref().is_none_or(|(b, _)| sol.cost_original < b.cost_original) {
            best = Some((sol, i));
        }
    }
    let (solution, best_intersection) = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no intersection dimension in [{}, {}] fits W (dim {}) in R^{d}",
            inst.l_min,
            inst.k,
            inst.w.dim()
        ))
    })?;
    let measured_intersection = intersection_dim(&solution.basis, &inst.w, TAU_ORTH);
    Ok(CseResult {
        solution,
        best_intersection,
        cases,
        measured_intersection,
    })
}

// ---------------------------------------------------------------------------
// Partition-constrained subspace approximation

#[derive(Debug, Clone)]
pub struct PcsaGroup {
    pub subspace: Basis,
    pub capacity: usize,
}

#[derive(Debug, Clone)]
pub struct PcsaInstance {
    pub a: DenseMatrix,
    pub groups: Vec<PcsaGroup>,
    pub p: f64,
    pub epsilon: f64,
    /// Increasing condition-number bounds to try.
    pub kappas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaRun {
    pub kappa: f64,
    pub cost_original: f64,
    pub cost_coreset: f64,
    pub guesses_evaluated: u64,
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct PcsaResult {
    pub solution: Solution,
    /// Selected `v_j`, column `j` inside the `j`-th unit-capacity subspace.
    pub vectors: DMatrix<f64>,
    pub partition: Partition,
    pub kappa: f64,
    pub runs: Vec<KappaRun>,
    pub stopped_early: bool,
}

/// Expands capacities into unit-capacity copies of each subspace.
pub fn expand_groups(groups: &[PcsaGroup]) -> Result<Partition> {
    let mut subspaces = Vec::new();
    for (t, g) in groups.iter().enumerate() {
        if g.subspace.dim() == 0 {
            return Err(Error::InvalidInput(format!("subspace {t} is empty")));
        }
        if g.capacity == 0 {
            return Err(Error::InvalidInput(format!("subspace {t} has zero capacity")));
        }
        subspaces.extend(std::iter::repeat_n(g.subspace.clone(), g.capacity));
    }
    if subspaces.is_empty() {
        return Err(Error::InvalidInput("at least one subspace is required".into()));
    }
    Partition::new(subspaces)
}

/// Runs the conditioned-net engine over the κ schedule, keeping the best.
pub fn run_pcsa(inst: &PcsaInstance, opts: &RunOptions) -> Result<PcsaResult> {
    let partition = expand_groups(&inst.groups)?;
    if partition.ambient_dim() != inst.a.rows() {
        return Err(Error::InvalidInput(format!(
            "subspaces live in dimension {} but A has {} rows",
            partition.ambient_dim(),
            inst.a.rows()
        )));
    }
    if inst.kappas.is_empty() {
        return Err(Error::InvalidParameter("the kappa schedule is empty".into()));
    }
    let k = partition.k();
    let spec = ConstraintSpec::Partition(partition.clone());
    let mut runs = Vec::new();
    let mut best: Option<(Solution, f64)> = None;
    let mut used: u64 = 0;
    let mut slow = 0;
    let mut stopped_early = false;
    for (t, &kappa) in inst.kappas.iter().enumerate() {
        let budget = match opts.budget {
            Some(b) if used >= b => {
                stopped_early = true;
                break;
            }
            Some(b) => Some(b - used),
            None => None,
        };
        let mut cfg = opts.config(k, inst.p, inst.epsilon, inst.epsilon);
        cfg.kappa = Some(kappa);
        cfg.budget = budget;
        let sol = coreset_guess_solve(&inst.a, &spec, &cfg, NetKind::Conditioned)?;
        used = used.saturating_add(sol.guesses_evaluated);
        runs.push(KappaRun {
            kappa,
            cost_original: sol.cost_original,
            cost_coreset: sol.cost_coreset,
            guesses_evaluated: sol.guesses_evaluated,
            truncated: sol.truncated,
        });
        let improved = match &best {
            None => true,
            Some((b, _)) => {
                let gain = (b.cost_original - sol.cost_original) / b.cost_original.max(f64::MIN_POSITIVE);
                slow = if gain < KAPPA_STOP_IMPROVEMENT { slow + 1 } else { 0 };
                sol.cost_original < b.cost_original
            }
        };
        if improved {
            best = Some((sol, kappa));
        }
        if slow >= 2 && t + 1 < inst.kappas.len() {
            stopped_early = true;
            break;
        }
    }
    let (solution, kappa) = best.expect("the schedule is non-empty");
    Ok(PcsaResult {
        vectors: solution.u.clone(),
        solution,
        partition,
        kappa,
        runs,
        stopped_early,
    })
}

// ---------------------------------------------------------------------------
// Projective nonnegative matrix factorization

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaChoice {
    Fixed(f64),
    /// `δ = ε‖A − A_k‖_F²/‖A‖_F²`.
    Multiplicative,
}

#[derive(Debug, Clone)]
pub struct PnmfInstance {
    pub a: DenseMatrix,
    pub k: usize,
    pub epsilon: f64,
    pub delta: DeltaChoice,
}

#[derive(Debug, Clone)]
pub struct PnmfResult {
    /// `basis` is nonnegative with orthonormal columns.
    pub solution: Solution,
    pub delta: f64,
    /// Set in multiplicative mode when `A` has rank at most `k`.
    pub degenerate: bool,
}

/// Nonnegative, orthonormal columns, at most one nonzero per row.
pub fn is_pnmf_feasible(u: &DMatrix<f64>, tol: f64) -> bool {
    is_row_sparse_nonnegative(u) && gram_error(u) <= tol
}

/// Normalizes the nonzero columns of a nonnegative row-sparse `W`, then
/// pads with indicators of unused rows up to `k` columns.
fn pnmf_basis(w: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let d = w.nrows();
    let mut cols: Vec<nalgebra::DVector<f64>> = w
        .column_iter()
        .filter(|c| c.norm() > 0.0)
        .map(|c| c.normalize())
        .collect();
    let used: Vec<bool> = (0..d).map(|i| w.row(i).iter().any(|v| *v != 0.0)).collect();
    for i in (0..d).filter(|&i| !used[i]) {
        if cols.len() >= k {
            break;
        }
        let mut e = nalgebra::DVector::zeros(d);
        e[i] = 1.0;
        cols.push(e);
    }
    DMatrix::from_columns(&cols)
}

pub fn run_pnmf(inst: &PnmfInstance, opts: &RunOptions) -> Result<PnmfResult> {
    let (delta, degenerate) = match inst.delta {
        DeltaChoice::Fixed(delta) => (delta, false),
        DeltaChoice::Multiplicative => {
            let md = multiplicative_delta(&inst.a, inst.k, inst.epsilon)?;
            (md.delta, md.degenerate)
        }
    };
    let cfg = opts.config(inst.k, 2.0, inst.epsilon, delta);
    let mut solution = coreset_guess_solve(
        &inst.a,
        &ConstraintSpec::NonnegativeRowSparse { k: inst.k },
        &cfg,
        NetKind::Standard,
    )?;
    let u = pnmf_basis(&solution.u, inst.k);
    solution.basis = Basis::orthonormal(u)?;
    solution.cost_original = projection_cost(&inst.a, &solution.basis, 2.0)?;
    Ok(PnmfResult {
        solution,
        delta,
        degenerate,
    })
}

// ---------------------------------------------------------------------------
// k-means

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowCoreset {
    None,
    /// `size` rows drawn i.i.d. with probability mixing uniform and squared
    /// distance to the mean, reweighted by `1/(size·π_i)`.
    Sample { size: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct KmeansInstance {
    /// `n x d`, one point per row.
    pub points: DenseMatrix,
    pub k: usize,
    pub epsilon: f64,
    pub row_coreset: RowCoreset,
}

#[derive(Debug, Clone)]
pub struct KmeansResult {
    /// One center per row, original coordinates; empty clusters dropped.
    pub centers: DMatrix<f64>,
    /// Nearest center for every original point.
    pub assignment: Vec<usize>,
    /// Cost on the original points.
    pub cost: f64,
    /// Weighted cost of the winning assignment on the reduced rows.
    pub cost_coreset: f64,
    pub reduced_dim: usize,
    pub coreset_rows: Vec<usize>,
    pub weights: Vec<f64>,
    pub assignments_evaluated: u64,
}

fn sample_rows(b: &DMatrix<f64>, size: usize, seed: u64) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = b.nrows();
    if size == 0 {
        return Err(Error::InvalidParameter("row coreset size must be at least 1".into()));
    }
    let mean = b.row_mean();
    let dist: Vec<f64> = (0..n).map(|i| (b.row(i) - &mean).norm_squared()).collect();
    let total: f64 = dist.iter().sum();
    let probs: Vec<f64> = dist
        .iter()
        .map(|&x| {
            let spread = if total > 0.0 { x / total } else { 1.0 / n as f64 };
            0.5 / n as f64 + 0.5 * spread
        })
        .collect();
    let pick = WeightedIndex::new(&probs).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = stream(seed, STREAM_CORESET, 1);
    let rows: Vec<usize> = (0..size).map(|_| pick.sample(&mut rng)).collect();
    let weights = rows.iter().map(|&i| 1.0 / (size as f64 * probs[i])).collect();
    Ok((rows, weights))
}

fn decode_assignment(mut index: u128, k: usize, q: usize) -> Vec<usize> {
    let mut out = vec![0; q];
    for slot in out.iter_mut().rev() {
        *slot = (index % k as u128) as usize;
        index /= k as u128;
    }
    out
}

/// Reduce columns with the `p = 2` sketch, optionally sample rows, enumerate
/// every assignment of the reduced rows, lift the winning clusters back to
/// the original points.
pub fn run_kmeans(inst: &KmeansInstance, opts: &RunOptions) -> Result<KmeansResult> {
    let (n, d) = (inst.points.rows(), inst.points.cols());
    let k = inst.k;
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if !(inst.epsilon > 0.0 && inst.epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {}", inst.epsilon)));
    }
    let reduced = if d > pcps_size(k, inst.epsilon) && k <= d {
        pcps_p2(&inst.points, k, inst.epsilon)?.b.into_matrix()
    } else {
        inst.points.as_matrix().clone()
    };
    let (rows, weights) = match inst.row_coreset {
        RowCoreset::None => ((0..n).collect::<Vec<_>>(), vec![1.0; n]),
        RowCoreset::Sample { size, seed } => sample_rows(&reduced, size, seed)?,
    };
    let q = rows.len();
    let reduced_rows = reduced.select_rows(rows.iter());
    let budget = opts.budget.unwrap_or(ASSIGNMENT_BUDGET);
    let total = (k as u128)
        .checked_pow(q as u32)
        .filter(|t| *t <= u128::from(budget))
        .ok_or_else(|| {
            Error::Overflow(format!(
                "{k}^{q} assignments exceed the budget of {budget}; use a smaller row coreset"
            ))
        })?;
    let chunks = total.div_ceil(ASSIGNMENT_CHUNK) as usize;
    let parts = map_indexed(opts.parallelism, chunks, |chunk| {
        let lo = chunk as u128 * ASSIGNMENT_CHUNK;
        let hi = (lo + ASSIGNMENT_CHUNK).min(total);
        let mut best = (f64::INFINITY, lo);
        for t in lo..hi {
            let assignment = decode_assignment(t, k, q);
            let centers = solve_kmeans_centers(&reduced_rows, &assignment, &weights, k)?;
            let cost = kmeans_cost(&reduced_rows, &assignment, &weights, &centers.centers);
            if cost < best.0 {
                best = (cost, t);
            }
        }
        Ok(best)
    })?;
    let (cost_coreset, winner) = parts
        .into_iter()
        .fold((f64::INFINITY, 0u128), |acc, p| if p.0 < acc.0 { p } else { acc });
    let assignment = decode_assignment(winner, k, q);
    let original_rows = inst.points.as_matrix().select_rows(rows.iter());
    let lifted = solve_kmeans_centers(&original_rows, &assignment, &weights, k)?;
    let kept: Vec<usize> = (0..k).filter(|&j| !lifted.empty[j]).collect();
    let centers = lifted.centers.select_rows(kept.iter());
    let mut cost = 0.0;
    let full: Vec<usize> = (0..n)
        .map(|i| {
            let (dist, j) = (0..centers.nrows())
                .map(|j| ((inst.points.row(i) - centers.row(j)).norm_squared(), j))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .expect("at least one non-empty cluster");
            cost += dist;
            j
        })
        .collect();
    Ok(KmeansResult {
        centers,
        assignment: full,
        cost,
        cost_coreset,
        reduced_dim: reduced.ncols(),
        coreset_rows: rows,
        weights,
        assignments_evaluated: total as u64,
    })
}

// ---------------------------------------------------------------------------
// Sparse PCA

#[derive(Debug, Clone)]
pub struct SparsePcaInstance {
    pub a: DenseMatrix,
    pub k: usize,
    /// Maximum number of nonzero rows of `U`.
    pub s_rows: usize,
    pub epsilon: f64,
    /// Solve on `A` itself instead of the sketch.
    pub identity_coreset: bool,
}

#[derive(Debug, Clone)]
pub struct SparsePcaResult {
    pub basis: Basis,
    pub support: Vec<usize>,
    /// `‖A − UUᵀA‖_F²`.
    pub cost_min: f64,
    /// `‖UᵀA‖_F² = ⟨AAᵀ, UUᵀ⟩`.
    pub mass_max: f64,
    pub cost_coreset: f64,
    pub supports_evaluated: u64,
    pub coreset: Coreset,
}

pub fn run_sparse_pca(inst: &SparsePcaInstance, opts: &RunOptions) -> Result<SparsePcaResult> {
    let coreset = if inst.identity_coreset {
        Coreset::identity(&inst.a, inst.k, inst.epsilon)
    } else {
        pcps_p2(&inst.a, inst.k, inst.epsilon)?
    };
    let budget = opts.budget.unwrap_or(SUPPORT_BUDGET);
    let sol = solve_sparse_pca_support(coreset.b.as_matrix(), inst.k, inst.s_rows, budget, opts.parallelism)?;
    let basis = Basis::orthonormal(sol.u.clone()).unwrap_or_else(|_| orthonormalize(&sol.u));
    let cost_min = projection_cost(&inst.a, &basis, 2.0)?;
    let mass_max = (basis.vectors().transpose() * inst.a.as_matrix()).norm_squared();
    Ok(SparsePcaResult {
        basis,
        support: sol.support,
        cost_min,
        mass_max,
        cost_coreset: sol.cost,
        supports_evaluated: sol.supports_evaluated,
        coreset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::coreset_guess_solve;
    use crate::linalg::svd;
    use crate::rng::{gaussian_matrix, random_orthonormal};
    use crate::solvers::row_support;

    fn mat(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    fn random(d: usize, n: usize, seed: u64) -> DenseMatrix {
        DenseMatrix::new(gaussian_matrix(d, n, &mut stream(seed, "apps-test", 0))).unwrap()
    }

    #[test]
    fn cse_inside_model_subspace() {
        // columns of A inside W = span(e0, e1, e2), l = k = 2
        let mut a = random(4, 8, 1).into_matrix();
        a.row_mut(3).fill(0.0);
        let a = DenseMatrix::new(a).unwrap();
        let w = Basis::coordinate(4, &[0, 1, 2]).unwrap();
        let inst = CseInstance {
            a: a.clone(),
            w: w.clone(),
            k: 2,
            l_min: 2,
            epsilon: 0.5,
            delta: 0.5,
        };
        let res = run_cse(&inst, &RunOptions::default()).unwrap();
        let opt = svd(a.as_matrix()).unwrap().tail_energy(2);
        let sol = &res.solution;
        assert_eq!(res.best_intersection, 2);
        assert!(sol.cost_original >= opt * (1.0 - 1e-9));
        assert!(sol.cost_original <= 1.5 * opt + sol.diagnostics.delta_bound);
        assert_eq!(res.measured_intersection, 2);
        assert_eq!(sol.basis.dim(), 2);
    }

    #[test]
    fn cse_full_model_matches_unconstrained() {
        let a = random(3, 6, 2);
        let inst = CseInstance {
            a: a.clone(),
            w: Basis::full(3),
            k: 1,
            l_min: 1,
            epsilon: 0.5,
            delta: 0.5,
        };
        let res = run_cse(&inst, &RunOptions::default()).unwrap();
        let cfg = SolveConfig::new(1, 2.0, 0.5, 0.5);
        let free = coreset_guess_solve(&a, &ConstraintSpec::Unconstrained { k: 1 }, &cfg, NetKind::Standard).unwrap();
        assert!((res.solution.cost_coreset - free.cost_coreset).abs() <= 1e-9 * a.norm_squared());
    }

    #[test]
    fn cse_case_table_and_infeasibility() {
        let a = random(3, 5, 3);
        let w = Basis::coordinate(3, &[0, 1]).unwrap();
        // k = 3 in R^3: only i = 2 fits (k - i <= 1)
        let inst = CseInstance {
            a,
            w,
            k: 3,
            l_min: 1,
            epsilon: 0.9,
            delta: 1.0,
        };
        let opts = RunOptions {
            budget: Some(2000),
            ..RunOptions::default()
        };
        let res = run_cse(&inst, &opts).unwrap();
        let feasible: Vec<usize> = res.cases.iter().filter(|c| c.feasible).map(|c| c.intersection).collect();
        assert_eq!(feasible, vec![2]);
        assert!(res.solution.cost_original < 1e-9);

        let bad = CseInstance {
            a: random(3, 5, 3),
            w: Basis::coordinate(3, &[0]).unwrap(),
            k: 3,
            l_min: 0,
            epsilon: 0.5,
            delta: 0.5,
        };
        assert!(run_cse(&bad, &opts).is_ok());
        let bad = CseInstance {
            a: random(3, 5, 3),
            w: Basis::coordinate(3, &[0]).unwrap(),
            k: 2,
            l_min: 2,
            epsilon: 0.5,
            delta: 0.5,
        };
        assert!(matches!(run_cse(&bad, &opts), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn pcsa_orthogonal_groups_fit_exactly() {
        let a = mat(&[vec![1.0, 2.0, 0.0, 1.0], vec![0.0, 0.0, 3.0, 1.0], vec![0.0; 4]]);
        let inst = PcsaInstance {
            a,
            groups: vec![
                PcsaGroup {
                    subspace: Basis::coordinate(3, &[0]).unwrap(),
                    capacity: 1,
                },
                PcsaGroup {
                    subspace: Basis::coordinate(3, &[1]).unwrap(),
                    capacity: 1,
                },
            ],
            p: 2.0,
            epsilon: 0.5,
            kappas: DEFAULT_KAPPAS.to_vec(),
        };
        let opts = RunOptions {
            budget: Some(200_000),
            ..RunOptions::default()
        };
        let res = run_pcsa(&inst, &opts).unwrap();
        assert!(res.solution.cost_original < 1e-12);
        assert_eq!(res.kappa, 1.0);
        assert!(res.partition.is_feasible(&res.vectors, TAU_ORTH));
        // no improvement after kappa = 1 twice in a row
        assert!(res.stopped_early);
        assert_eq!(res.runs.len(), 3);
    }

    #[test]
    fn pcsa_single_free_group_matches_unconstrained() {
        let a = random(3, 5, 4);
        let inst = PcsaInstance {
            a: a.clone(),
            groups: vec![PcsaGroup {
                subspace: Basis::full(3),
                capacity: 1,
            }],
            p: 2.0,
            epsilon: 0.5,
            kappas: vec![1.0],
        };
        let res = run_pcsa(&inst, &RunOptions::default()).unwrap();
        let mut cfg = SolveConfig::new(1, 2.0, 0.5, 0.5);
        cfg.kappa = Some(1.0);
        let free = coreset_guess_solve(&a, &ConstraintSpec::Unconstrained { k: 1 }, &cfg, NetKind::Conditioned).unwrap();
        assert!((res.solution.cost_coreset - free.cost_coreset).abs() <= 1e-9 * a.norm_squared());
    }

    #[test]
    fn pcsa_rejects_empty_subspace() {
        let inst = PcsaInstance {
            a: random(3, 4, 5),
            groups: vec![PcsaGroup {
                subspace: Basis::empty(3),
                capacity: 1,
            }],
            p: 2.0,
            epsilon: 0.5,
            kappas: vec![1.0],
        };
        assert!(matches!(run_pcsa(&inst, &RunOptions::default()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn pnmf_block_diagonal_is_exact() {
        let a = mat(&[
            vec![1.0, 2.0, 0.0, 0.0],
            vec![2.0, 4.0, 0.0, 0.0],
            vec![0.0, 0.0, 3.0, 1.0],
            vec![0.0, 0.0, 3.0, 1.0],
        ]);
        let inst = PnmfInstance {
            a,
            k: 2,
            epsilon: 0.5,
            delta: DeltaChoice::Fixed(0.5),
        };
        let res = run_pnmf(&inst, &RunOptions::default()).unwrap();
        assert!(res.solution.cost_original < 1e-10);
        assert!(is_pnmf_feasible(res.solution.basis.vectors(), TAU_ORTH));
    }

    #[test]
    fn pnmf_diagonal_full_rank() {
        let a = mat(&[vec![3.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let inst = PnmfInstance {
            a,
            k: 3,
            epsilon: 0.5,
            delta: DeltaChoice::Fixed(1.0),
        };
        let res = run_pnmf(&inst, &RunOptions::default()).unwrap();
        assert!(res.solution.cost_original < 1e-10);
        assert!(is_pnmf_feasible(res.solution.basis.vectors(), TAU_ORTH));
    }

    #[test]
    fn pnmf_multiplicative_delta_is_echoed() {
        let a = mat(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 1.0], vec![1.0, 1.0, 0.0]]);
        let inst = PnmfInstance {
            a: a.clone(),
            k: 1,
            epsilon: 0.5,
            delta: DeltaChoice::Multiplicative,
        };
        let res = run_pnmf(&inst, &RunOptions::default()).unwrap();
        let s = svd(a.as_matrix()).unwrap();
        assert!((res.delta - 0.5 * s.tail_energy(1) / a.norm_squared()).abs() < 1e-12);
        assert!(is_pnmf_feasible(res.solution.basis.vectors(), TAU_ORTH));
    }

    #[test]
    fn kmeans_forced_split() {
        let inst = KmeansInstance {
            points: mat(&[vec![0.0], vec![1.0], vec![10.0]]),
            k: 2,
            epsilon: 0.5,
            row_coreset: RowCoreset::None,
        };
        let res = run_kmeans(&inst, &RunOptions::default()).unwrap();
        assert!((res.cost - 0.5).abs() < 1e-12);
        assert_eq!(res.assignment[0], res.assignment[1]);
        assert_ne!(res.assignment[0], res.assignment[2]);
    }

    #[test]
    fn kmeans_one_point_per_cluster() {
        let inst = KmeansInstance {
            points: random(3, 4, 6),
            k: 3,
            epsilon: 0.5,
            row_coreset: RowCoreset::None,
        };
        assert!(run_kmeans(&inst, &RunOptions::default()).unwrap().cost < 1e-20);
    }

    #[test]
    fn kmeans_assignment_is_nearest_and_budget_overflows() {
        let inst = KmeansInstance {
            points: random(9, 5, 7),
            k: 2,
            epsilon: 0.5,
            row_coreset: RowCoreset::Sample { size: 6, seed: 3 },
        };
        let res = run_kmeans(&inst, &RunOptions::default()).unwrap();
        for (i, &a) in res.assignment.iter().enumerate() {
            let own = (inst.points.row(i) - res.centers.row(a)).norm_squared();
            for j in 0..res.centers.nrows() {
                assert!(own <= (inst.points.row(i) - res.centers.row(j)).norm_squared());
            }
        }
        assert_eq!(res.coreset_rows.len(), 6);
        let opts = RunOptions {
            budget: Some(10),
            ..RunOptions::default()
        };
        assert!(matches!(run_kmeans(&inst, &opts), Err(Error::Overflow(_))));
    }

    #[test]
    fn sparse_pca_full_support_is_pca() {
        let a = random(4, 7, 8);
        let inst = SparsePcaInstance {
            a: a.clone(),
            k: 2,
            s_rows: 4,
            epsilon: 0.5,
            identity_coreset: false,
        };
        let res = run_sparse_pca(&inst, &RunOptions::default()).unwrap();
        let opt = svd(a.as_matrix()).unwrap().tail_energy(2);
        assert!((res.cost_min - opt).abs() <= 1e-9 * a.norm_squared());
        assert!((res.cost_min + res.mass_max - a.norm_squared()).abs() <= 1e-8 * a.norm_squared());
    }

    #[test]
    fn sparse_pca_coordinate_instance() {
        let a = mat(&[
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ]);
        let inst = SparsePcaInstance {
            a,
            k: 1,
            s_rows: 1,
            epsilon: 0.5,
            identity_coreset: false,
        };
        let res = run_sparse_pca(&inst, &RunOptions::default()).unwrap();
        assert_eq!(res.support, vec![0]);
        assert!(row_support(res.basis.vectors()).iter().all(|r| res.support.contains(r)));
    }

    #[test]
    fn complete_within_fills_subspace() {
        let mut rng = stream(9, "t", 0);
        let w = random_orthonormal(5, 3, &mut rng);
        let part = w.vectors().columns(0, 1).into_owned() * 2.0;
        let q = complete_within(&part, &w, 3);
        assert_eq!(q.ncols(), 3);
        assert!(gram_error(&q) < 1e-12);
        assert!(w.distance_to(&q) < 1e-12);
    }
}
