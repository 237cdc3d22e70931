//! Coreset, net, per-guess solve.
//!
//! [`coreset_guess_solve`] sketches `A` into `B`, enumerates a net of
//! coefficient matrices `C`, solves the constrained regression
//! `min_U ‖B − UC‖_{2,p}^p` for each guess and keeps the cheapest. The winner
//! is re-orthonormalized and its cost is evaluated on the original `A`.
//!
//! An exhaustive pass over the net is exponential in `k·r`. For exact `p = 2`
//! solvers the search runs as a branch and bound over the columns of `C`: the
//! optimal cost on a prefix of the columns plus the best rank-`k` residual of
//! the remaining columns lower-bounds every completion, so subtrees whose
//! bound exceeds the incumbent are skipped. The winner is the same guess a
//! plain odometer scan would return.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coreset::{coreset_general_p, pcps_p2, Coreset, CoresetKind, CoresetStrategy};
use crate::error::{Error, Result};
use crate::linalg::{
    check_p, mixed_norm_pow, orthonormalize, projection_cost, svd, Basis, DenseMatrix,
};
use crate::netgen::{coefficient_net, conditioned_net, CoefficientNet, NetKind};
use crate::parallel::{map_indexed, Parallelism};
use crate::rng::{gaussian_matrix, stream, STREAM_MONTE_CARLO};
use crate::solvers::{ConstraintSpec, CostForm, RegressionSolver};

/// Smallest `δ` [`multiplicative_delta`] returns.
pub const DELTA_MIN: f64 = 1e-6;
/// Relative slack before a subtree is pruned; keeps near-ties alive so the
/// pruned search and the plain scan agree on the winner.
pub const PRUNE_RELATIVE_SLACK: f64 = 1e-9;
/// Guesses per work item in scan mode.
const SCAN_CHUNK: u128 = 1 << 12;

/// Which sketch the engine builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CoresetChoice {
    /// Truncated-SVD sketch for `p = 2`, `A` itself otherwise.
    #[default]
    Auto,
    Identity,
    /// Sensitivity sample of this many columns (general `p`).
    Sample(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub k: usize,
    pub p: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub kappa: Option<f64>,
    /// Cap on evaluated guesses; a larger net is sampled instead.
    pub budget: Option<u64>,
    pub seed: u64,
    pub parallelism: Parallelism,
    /// Branch and bound for exact `p = 2` solvers.
    pub prune: bool,
    pub coreset: CoresetChoice,
}

impl SolveConfig {
    pub fn new(k: usize, p: f64, epsilon: f64, delta: f64) -> Self {
        SolveConfig {
            k,
            p,
            epsilon,
            delta,
            kappa: None,
            budget: None,
            seed: 0,
            parallelism: Parallelism::Sequential,
            prune: true,
            coreset: CoresetChoice::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        if self.k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::param(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::param(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if let Some(kappa) = self.kappa {
            if !(kappa.is_finite() && kappa >= 1.0) {
                return Err(Error::param(format!("kappa must be >= 1, got {kappa}")));
            }
        }
        if self.budget == Some(0) {
            return Err(Error::param("budget must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub net_kind: NetKind,
    pub coreset_kind: CoresetKind,
    pub coreset_size: usize,
    /// Saturates at `u128::MAX`.
    pub net_size: u128,
    /// Interior nodes of the branch and bound whose bound was computed.
    pub nodes_visited: u64,
    pub subtrees_pruned: u64,
    pub nonconverged_guesses: u64,
    pub exhaustive: bool,
    /// The additive term of the guarantee for this net and sketch.
    pub delta_bound: f64,
    /// Exhaustive net and every evaluated solve converged.
    pub guarantee_applies: bool,
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Orthonormal basis of the span of the winning `U`.
    pub basis: Basis,
    /// Winning `U` as returned by the solver.
    pub u: DMatrix<f64>,
    /// Winning guess `C`.
    pub guess: DMatrix<f64>,
    pub cost_original: f64,
    pub cost_coreset: f64,
    pub best_guess_index: u128,
    pub guesses_evaluated: u64,
    pub truncated: bool,
    pub coreset: Coreset,
    pub diagnostics: Diagnostics,
}

/// Builds the sketch `cfg` asks for.
pub fn build_coreset(a: &DenseMatrix, cfg: &SolveConfig) -> Result<Coreset> {
    match cfg.coreset {
        CoresetChoice::Auto if cfg.p == 2.0 => pcps_p2(a, cfg.k, cfg.epsilon),
        CoresetChoice::Auto | CoresetChoice::Identity => {
            coreset_general_p(a, cfg.k, cfg.epsilon, cfg.p, CoresetStrategy::Identity)
        }
        CoresetChoice::Sample(target_size) => coreset_general_p(
            a,
            cfg.k,
            cfg.epsilon,
            cfg.p,
            CoresetStrategy::SensitivitySample {
                target_size,
                seed: cfg.seed,
            },
        ),
    }
}

/// `(1+ε)·‖A‖_{2,p}^p·((1+g)^p − 1)` with `g = δ` for the standard net and
/// `g = ε` for the conditioned net (absolute resolution `ε‖b_i‖`).
pub fn additive_bound(a: &DMatrix<f64>, cfg: &SolveConfig, net_kind: NetKind) -> Result<f64> {
    let g = match net_kind {
        NetKind::Standard => cfg.delta,
        NetKind::Conditioned => cfg.epsilon,
    };
    Ok((1.0 + cfg.epsilon) * mixed_norm_pow(a, cfg.p)? * ((1.0 + g).powf(cfg.p) - 1.0))
}

/// Runs the pipeline with the regression of `spec`.
pub fn coreset_guess_solve(
    a: &DenseMatrix,
    spec: &ConstraintSpec,
    cfg: &SolveConfig,
    net_kind: NetKind,
) -> Result<Solution> {
    let solver = spec.regression(cfg.p)?;
    coreset_guess_solve_with(a, &solver, cfg, net_kind)
}

/// Runs the pipeline with an arbitrary per-guess solver.
pub fn coreset_guess_solve_with<S: RegressionSolver>(
    a: &DenseMatrix,
    solver: &S,
    cfg: &SolveConfig,
    net_kind: NetKind,
) -> Result<Solution> {
    cfg.validate()?;
    if solver.rank() != cfg.k {
        return Err(Error::param(format!(
            "solver has rank {} but the config asks for k = {}",
            solver.rank(),
            cfg.k
        )));
    }
    if solver.p() != cfg.p {
        return Err(Error::param("solver and config disagree on p"));
    }
    let coreset = build_coreset(a, cfg)?;
    let b = coreset.b.as_matrix();
    let net = match net_kind {
        NetKind::Standard => coefficient_net(b, cfg.k, cfg.delta)?,
        NetKind::Conditioned => {
            let kappa = cfg
                .kappa
                .ok_or_else(|| Error::param("the conditioned net needs kappa"))?;
            conditioned_net(b, cfg.k, kappa, cfg.epsilon)?
        }
    }
    .with_budget(cfg.budget, cfg.seed);

    let exhaustive = net.is_exhaustive();
    let outcome = search_net(b, &net, solver, cfg.prune, cfg.parallelism)?;

    let guess = net.guess(outcome.index);
    let winner = solver
        .solve(b, &guess)
        .map_err(|e| solver_error(outcome.index, e))?;
    let basis = orthonormalize(&winner.u);
    let cost_original = projection_cost(a, &basis, cfg.p)?;
    let diagnostics = Diagnostics {
        net_kind,
        coreset_kind: coreset.kind,
        coreset_size: coreset.size(),
        net_size: net.total_count(),
        nodes_visited: outcome.nodes,
        subtrees_pruned: outcome.pruned,
        nonconverged_guesses: outcome.nonconverged,
        exhaustive,
        delta_bound: additive_bound(a, cfg, net_kind)?,
        guarantee_applies: exhaustive && outcome.nonconverged == 0,
    };
    Ok(Solution {
        basis,
        u: winner.u,
        guess,
        cost_original,
        cost_coreset: winner.cost,
        best_guess_index: outcome.index,
        guesses_evaluated: outcome.evaluated,
        truncated: !exhaustive,
        coreset,
        diagnostics,
    })
}

fn solver_error(index: u128, source: Error) -> Error {
    Error::Solver {
        index,
        source: Box::new(source),
    }
}

/// Net point nearest to `U₀ᵀB` for the top-`k` left singular vectors `U₀`
/// of `B`; a good starting incumbent for most constraint families.
fn seed_guess(b: &DMatrix<f64>, net: &CoefficientNet) -> Result<Vec<usize>> {
    let k = net.k();
    let s = svd(b)?;
    let mut target = DMatrix::zeros(k, b.ncols());
    let top = s.rank.min(k);
    if top > 0 {
        let u0 = s.left.columns(0, top);
        target.rows_mut(0, top).copy_from(&(u0.transpose() * b));
    }
    Ok(net.nearest_digits(&target))
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    cost: f64,
    index: u128,
    evaluated: u64,
    nodes: u64,
    pruned: u64,
    nonconverged: u64,
}

impl Outcome {
    fn start(cost: f64, index: u128, converged: bool) -> Self {
        Outcome {
            cost,
            index,
            evaluated: 1,
            nodes: 0,
            pruned: 0,
            nonconverged: u64::from(!converged),
        }
    }

    fn offer(&mut self, cost: f64, index: u128) {
        if cost < self.cost || (cost == self.cost && index < self.index) {
            self.cost = cost;
            self.index = index;
        }
    }

    /// Folds `other` in; `shared` evaluations were counted by both sides.
    fn absorb(&mut self, other: &Outcome, shared: u64) {
        self.offer(other.cost, other.index);
        self.evaluated += other.evaluated - shared;
        self.nodes += other.nodes;
        self.pruned += other.pruned;
        self.nonconverged += other.nonconverged;
    }
}

/// Optimal regression cost on a prefix of the columns, maintained
/// incrementally. A state summarizes `C[:, ..j]`; the all-zero state is the
/// empty prefix.
trait PrefixCost: Sync {
    fn state_len(&self) -> usize;

    fn scratch_len(&self) -> usize {
        0
    }

    /// Writes into `child` the state of `parent` extended by column `j`.
    fn push(&self, parent: &[f64], child: &mut [f64], j: usize, c: &[f64]);

    /// Optimal cost on columns `..j`; `None` when the closed form does not
    /// apply and the caller must fall back to the solver.
    fn cost(&self, state: &[f64], j: usize, scratch: &mut [f64]) -> Result<Option<f64>>;

    /// Costs of `parent` extended by column `j` with each of `points`
    /// (concatenated, `k` entries each); NaN where [`PrefixCost::cost`]
    /// would return `None`. `child` is a spare state buffer.
    fn child_costs(
        &self,
        parent: &[f64],
        child: &mut [f64],
        j: usize,
        points: &[f64],
        out: &mut [f64],
        scratch: &mut [f64],
    ) -> Result<()> {
        default_child_costs(self, parent, child, j, points, out, scratch)
    }
}

/// Calls the solver on the prefix.
struct SolverPrefix<'a, S> {
    solver: &'a S,
    k: usize,
    prefixes: Vec<DMatrix<f64>>,
}

impl<S: RegressionSolver> PrefixCost for SolverPrefix<'_, S> {
    fn state_len(&self) -> usize {
        self.k * (self.prefixes.len() - 1)
    }

    fn push(&self, parent: &[f64], child: &mut [f64], j: usize, c: &[f64]) {
        child.copy_from_slice(parent);
        child[j * self.k..(j + 1) * self.k].copy_from_slice(c);
    }

    fn cost(&self, state: &[f64], j: usize, _scratch: &mut [f64]) -> Result<Option<f64>> {
        if j == 0 {
            return Ok(Some(0.0));
        }
        let c = DMatrix::from_column_slice(self.k, j, &state[..j * self.k]);
        Ok(Some(self.solver.solve(&self.prefixes[j], &c)?.cost))
    }
}

/// Free `U`, `p = 2`. With `K = BᵀB`, `G = CCᵀ` and `H = CKCᵀ` the optimal
/// prefix cost is `tr(K_pre) − tr(G⁻¹H)`. The state holds `G`, `H` and
/// `Z = C_pre K[..j, :]` (so column `j` of `Z` is the cross term for the next
/// column).
struct LeastSquaresPrefix {
    k: usize,
    gram: DMatrix<f64>,
    traces: Vec<f64>,
}

impl LeastSquaresPrefix {
    fn new(b: &DMatrix<f64>, k: usize) -> Self {
        let gram = b.transpose() * b;
        let mut traces = vec![0.0];
        for j in 0..gram.nrows() {
            traces.push(traces[j] + gram[(j, j)]);
        }
        LeastSquaresPrefix { k, gram, traces }
    }
}

impl PrefixCost for LeastSquaresPrefix {
    fn state_len(&self) -> usize {
        2 * self.k * self.k + self.k * self.gram.ncols()
    }

    fn scratch_len(&self) -> usize {
        5 * self.k * self.k + self.k
    }

    fn push(&self, parent: &[f64], child: &mut [f64], j: usize, c: &[f64]) {
        let k = self.k;
        let kk = k * k;
        child.copy_from_slice(parent);
        let kjj = self.gram[(j, j)];
        let (gh, z) = child.split_at_mut(2 * kk);
        let (g, h) = gh.split_at_mut(kk);
        let v = &parent[2 * kk + j * k..2 * kk + (j + 1) * k];
        for a in 0..k {
            for b in 0..k {
                let cc = c[a] * c[b];
                g[a * k + b] += cc;
                h[a * k + b] += c[a] * v[b] + v[a] * c[b] + kjj * cc;
            }
        }
        for l in 0..self.gram.ncols() {
            let kjl = self.gram[(j, l)];
            if kjl != 0.0 {
                for m in 0..k {
                    z[l * k + m] += c[m] * kjl;
                }
            }
        }
    }

    fn cost(&self, state: &[f64], j: usize, scratch: &mut [f64]) -> Result<Option<f64>> {
        let k = self.k;
        if j < k {
            return Ok(None);
        }
        let kk = k * k;
        let (l, rest) = scratch.split_at_mut(kk);
        if !cholesky(&state[..kk], k, l) {
            return Ok(None);
        }
        let h = &state[kk..2 * kk];
        let (x, rest) = rest.split_at_mut(kk);
        let y = &mut rest[..k];
        // tr(G⁻¹H) = tr(L⁻¹Xᵀ) with X = L⁻¹H
        for col in 0..k {
            for i in 0..k {
                let mut sum = h[i * k + col];
                for t in 0..i {
                    sum -= l[i * k + t] * x[t * k + col];
                }
                x[i * k + col] = sum / l[i * k + i];
            }
        }
        let mut trace = 0.0;
        for i in 0..k {
            for t in 0..=i {
                let mut sum = x[i * k + t];
                for q in 0..t {
                    sum -= l[t * k + q] * y[q];
                }
                y[t] = sum / l[t * k + t];
            }
            trace += y[i];
        }
        Ok(Some((self.traces[j] - trace).max(0.0)))
    }

    /// Recursive least squares: with `G` invertible, appending column `b`
    /// with coefficients `c` raises the optimal cost by
    /// `‖b − U₀c‖² / (1 + cᵀG⁻¹c)` where `U₀` is the parent's optimum. In
    /// terms of the state, `U₀ᵀb = G⁻¹v` and `U₀ᵀU₀ = G⁻¹HG⁻¹`.
    fn child_costs(
        &self,
        parent: &[f64],
        child: &mut [f64],
        j: usize,
        points: &[f64],
        out: &mut [f64],
        scratch: &mut [f64],
    ) -> Result<()> {
        let k = self.k;
        let kk = k * k;
        let base = match self.cost(parent, j, scratch)? {
            Some(cost) if j >= k => cost,
            _ => return default_child_costs(self, parent, child, j, points, out, scratch),
        };
        let (l, rest) = scratch.split_at_mut(kk);
        let (ginv, rest) = rest.split_at_mut(kk);
        let (q, rest) = rest.split_at_mut(kk);
        let (w, rest) = rest.split_at_mut(k);
        let tmp = &mut rest[..kk];
        // `cost` left the Cholesky factor of G in `l`
        invert_from_cholesky(l, k, ginv);
        let h = &parent[kk..2 * kk];
        let v = &parent[2 * kk + j * k..2 * kk + (j + 1) * k];
        for a in 0..k {
            w[a] = (0..k).map(|b| ginv[a * k + b] * v[b]).sum();
            for b in 0..k {
                tmp[a * k + b] = (0..k).map(|t| ginv[a * k + t] * h[t * k + b]).sum();
            }
        }
        for a in 0..k {
            for b in 0..k {
                q[a * k + b] = (0..k).map(|t| tmp[a * k + t] * ginv[t * k + b]).sum();
            }
        }
        let kjj = self.gram[(j, j)];
        if k == 2 {
            // unrolled hot path
            let (w0, w1) = (w[0], w[1]);
            let (q00, q01, q11) = (q[0], q[1] + q[2], q[3]);
            let (g00, g01, g11) = (ginv[0], ginv[1] + ginv[2], ginv[3]);
            for (o, c) in out.iter_mut().zip(points.chunks_exact(2)) {
                let (x, y) = (c[0], c[1]);
                let cqc = q00 * x * x + q01 * x * y + q11 * y * y;
                let cgc = g00 * x * x + g01 * x * y + g11 * y * y;
                let residual = (kjj - 2.0 * (x * w0 + y * w1) + cqc).max(0.0);
                *o = base + residual / (1.0 + cgc);
            }
            return Ok(());
        }
        for (o, c) in out.iter_mut().zip(points.chunks_exact(k)) {
            let mut cw = 0.0;
            let mut cqc = 0.0;
            let mut cgc = 0.0;
            for a in 0..k {
                cw += c[a] * w[a];
                let mut qa = 0.0;
                let mut ga = 0.0;
                for b in 0..k {
                    qa += q[a * k + b] * c[b];
                    ga += ginv[a * k + b] * c[b];
                }
                cqc += c[a] * qa;
                cgc += c[a] * ga;
            }
            let residual = (kjj - 2.0 * cw + cqc).max(0.0);
            *o = base + residual / (1.0 + cgc);
        }
        Ok(())
    }
}

fn default_child_costs<P: PrefixCost + ?Sized>(
    eval: &P,
    parent: &[f64],
    child: &mut [f64],
    j: usize,
    points: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    let k = points.len() / out.len();
    for (o, c) in out.iter_mut().zip(points.chunks_exact(k)) {
        eval.push(parent, child, j, c);
        *o = eval.cost(child, j + 1, scratch)?.unwrap_or(f64::NAN);
    }
    Ok(())
}

/// Lower Cholesky factor of the row-major `k x k` matrix `g` into `l`,
/// failing on a pivot below `1e-8` times the largest diagonal entry (the
/// threshold `least_squares` uses before switching to the pseudo-inverse).
fn cholesky(g: &[f64], k: usize, l: &mut [f64]) -> bool {
    let max_diag = (0..k).map(|i| g[i * k + i]).fold(0.0, f64::max);
    if max_diag <= 0.0 {
        return false;
    }
    for i in 0..k {
        for jj in 0..=i {
            let mut sum = g[i * k + jj];
            for t in 0..jj {
                sum -= l[i * k + t] * l[jj * k + t];
            }
            if i == jj {
                if sum <= 1e-8 * max_diag {
                    return false;
                }
                l[i * k + i] = sum.sqrt();
            } else {
                l[i * k + jj] = sum / l[jj * k + jj];
            }
        }
    }
    true
}

/// `G⁻¹ = L⁻ᵀL⁻¹` from the factor `l`.
fn invert_from_cholesky(l: &[f64], k: usize, out: &mut [f64]) {
    out.fill(0.0);
    // columns of L⁻¹ by forward substitution, stored transposed in `out`
    let mut linv = vec![0.0; k * k];
    for col in 0..k {
        for i in col..k {
            let mut sum = if i == col { 1.0 } else { 0.0 };
            for t in col..i {
                sum -= l[i * k + t] * linv[t * k + col];
            }
            linv[i * k + col] = sum / l[i * k + i];
        }
    }
    for a in 0..k {
        for b in 0..k {
            out[a * k + b] = (a.max(b)..k).map(|t| linv[t * k + a] * linv[t * k + b]).sum();
        }
    }
}

/// One nonnegative entry per row of `U`, `p = 2`. The state holds the row
/// inner products `⟨b_i, h_m⟩` and the norms `‖h_m‖²` over the prefix.
struct RowSparsePrefix<'a> {
    b: &'a DMatrix<f64>,
    k: usize,
    energies: Vec<f64>,
}

impl<'a> RowSparsePrefix<'a> {
    fn new(b: &'a DMatrix<f64>, k: usize) -> Self {
        let mut energies = vec![0.0];
        for (j, col) in b.column_iter().enumerate() {
            energies.push(energies[j] + col.norm_squared());
        }
        RowSparsePrefix { b, k, energies }
    }
}

impl PrefixCost for RowSparsePrefix<'_> {
    fn state_len(&self) -> usize {
        (self.b.nrows() + 1) * self.k
    }

    fn push(&self, parent: &[f64], child: &mut [f64], j: usize, c: &[f64]) {
        let k = self.k;
        child.copy_from_slice(parent);
        for i in 0..self.b.nrows() {
            let bij = self.b[(i, j)];
            if bij != 0.0 {
                for m in 0..k {
                    child[i * k + m] += bij * c[m];
                }
            }
        }
        let norms = &mut child[self.b.nrows() * k..];
        for m in 0..k {
            norms[m] += c[m] * c[m];
        }
    }

    fn cost(&self, state: &[f64], j: usize, _scratch: &mut [f64]) -> Result<Option<f64>> {
        let k = self.k;
        let d = self.b.nrows();
        let norms = &state[d * k..];
        let mut gain = 0.0;
        for i in 0..d {
            let mut best = 0.0;
            for m in 0..k {
                let dot = state[i * k + m];
                if norms[m] > 0.0 && dot > 0.0 {
                    best = f64::max(best, dot * dot / norms[m]);
                }
            }
            gain += best;
        }
        Ok(Some((self.energies[j] - gain).max(0.0)))
    }
}

struct Search<'a, S, P> {
    b: &'a DMatrix<f64>,
    net: &'a CoefficientNet,
    solver: &'a S,
    eval: P,
    /// Lower bound on the cost of `B[:, j..]` under any rank-`k` `U`.
    tails: Vec<f64>,
    slack: f64,
}

struct Workspace {
    digits: Vec<usize>,
    /// `states[j]` describes the columns `..j` of `digits`.
    states: Vec<Vec<f64>>,
    spare: Vec<f64>,
    costs: Vec<Vec<f64>>,
    scratch: Vec<f64>,
}

impl<S: RegressionSolver, P: PrefixCost> Search<'_, S, P> {
    fn workspace(&self) -> Workspace {
        let r = self.net.num_columns();
        let len = self.eval.state_len();
        Workspace {
            digits: vec![0; r],
            states: vec![vec![0.0; len]; r + 1],
            spare: vec![0.0; len],
            costs: (0..r).map(|j| vec![0.0; self.net.column_count(j)]).collect(),
            scratch: vec![0.0; self.eval.scratch_len()],
        }
    }

    fn push(&self, ws: &mut Workspace, j: usize) {
        let (lo, hi) = ws.states.split_at_mut(j + 1);
        let c = self.net.point(j, ws.digits[j]);
        self.eval.push(&lo[j], &mut hi[0], j, c);
    }

    /// Fills `ws.costs[j]` with the prefix costs of every choice for column
    /// `j`; with `only`, just that choice (stored at position 0).
    fn children(&self, ws: &mut Workspace, j: usize, only: Option<usize>) -> Result<()> {
        let k = self.net.k();
        let (points, out) = match only {
            Some(d) => (self.net.point(j, d), &mut ws.costs[j][..1]),
            None => (self.net.column_points(j), &mut ws.costs[j][..]),
        };
        self.eval
            .child_costs(&ws.states[j], &mut ws.spare, j, points, out, &mut ws.scratch)
            .map_err(|e| solver_error(self.net.encode(&ws.digits), e))?;
        debug_assert_eq!(points.len(), out.len() * k);
        Ok(())
    }

    /// `(cost, converged)` of the complete guess in `ws.digits` given its
    /// closed-form cost (NaN when unavailable).
    fn leaf(&self, ws: &Workspace, closed: f64) -> Result<(f64, bool)> {
        if !closed.is_nan() {
            return Ok((closed, true));
        }
        let sol = self
            .solver
            .solve(self.b, &self.net.matrix_from_digits(&ws.digits))
            .map_err(|e| solver_error(self.net.encode(&ws.digits), e))?;
        Ok((sol.cost, sol.converged))
    }

    fn prunes(&self, bound: f64, inc: &Outcome) -> bool {
        bound > inc.cost * (1.0 + PRUNE_RELATIVE_SLACK) + self.slack
    }

    /// Explores the children of the node whose columns `..depth` are set.
    fn expand(&self, depth: usize, ws: &mut Workspace, inc: &mut Outcome) -> Result<()> {
        let r = self.net.num_columns();
        let j = depth + 1;
        let count = self.net.column_count(depth);
        self.children(ws, depth, None)?;
        if j == r {
            ws.digits[depth] = 0;
            let base = self.net.encode(&ws.digits);
            for d in 0..count {
                let closed = ws.costs[depth][d];
                let cost = if closed.is_nan() {
                    ws.digits[depth] = d;
                    let (cost, converged) = self.leaf(ws, closed)?;
                    inc.nonconverged += u64::from(!converged);
                    cost
                } else {
                    closed
                };
                inc.offer(cost, base + d as u128);
            }
            inc.evaluated += count as u64;
            ws.digits[depth] = 0;
            return Ok(());
        }
        let tail = self.tails[j];
        let mut order: Vec<(f64, usize)> = ws.costs[depth]
            .iter()
            .enumerate()
            .map(|(d, &c)| (if c.is_nan() { 0.0 } else { c } + tail, d))
            .collect();
        inc.nodes += count as u64;
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (pos, &(bound, d)) in order.iter().enumerate() {
            if self.prunes(bound, inc) {
                // sorted by bound, so the rest go too
                inc.pruned += (order.len() - pos) as u64;
                break;
            }
            ws.digits[depth] = d;
            self.push(ws, depth);
            self.expand(j, ws, inc)?;
        }
        ws.digits[depth] = 0;
        Ok(())
    }

    /// Exact search equivalent to the full odometer scan. One task per digit
    /// of column 0, each starting from the seed incumbent, so the outcome and
    /// the counters do not depend on the thread count.
    fn branch_and_bound(&self, start: Outcome, par: Parallelism) -> Result<Outcome> {
        let r = self.net.num_columns();
        if r == 1 {
            let mut inc = start;
            self.expand(0, &mut self.workspace(), &mut inc)?;
            return Ok(inc);
        }
        let mut root = self.workspace();
        self.children(&mut root, 0, None)?;
        let roots = root.costs.swap_remove(0);
        let parts = map_indexed(par, self.net.column_count(0), |d0| {
            let mut inc = start;
            inc.nodes += 1;
            let bound = if roots[d0].is_nan() { 0.0 } else { roots[d0] } + self.tails[1];
            if self.prunes(bound, &inc) {
                inc.pruned += 1;
                return Ok(inc);
            }
            let mut ws = self.workspace();
            ws.digits[0] = d0;
            self.push(&mut ws, 0);
            self.expand(1, &mut ws, &mut inc)?;
            Ok(inc)
        })?;
        let mut out = parts[0];
        for part in &parts[1..] {
            out.absorb(part, 1);
        }
        Ok(out)
    }

    /// Cost of the single guess `digits`, reusing the states of the first
    /// `valid` columns already in `ws`. Returns the new number of valid
    /// columns.
    fn evaluate(&self, ws: &mut Workspace, digits: &[usize], valid: usize) -> Result<(f64, bool, usize)> {
        let r = self.net.num_columns();
        let keep = (0..valid.min(r - 1)).take_while(|&j| ws.digits[j] == digits[j]).count();
        ws.digits.copy_from_slice(digits);
        for j in keep..r - 1 {
            self.push(ws, j);
        }
        self.children(ws, r - 1, Some(digits[r - 1]))?;
        let (cost, converged) = self.leaf(ws, ws.costs[r - 1][0])?;
        Ok((cost, converged, r - 1))
    }

    /// Plain pass over the net: odometer order, or the budgeted sample whose
    /// first entry is the seed guess.
    fn scan(&self, seed_digits: &[usize], par: Parallelism) -> Result<Outcome> {
        let exhaustive = self.net.is_exhaustive();
        let len = self.net.pass_len();
        let chunks = usize::try_from(len.div_ceil(SCAN_CHUNK))
            .map_err(|_| Error::Overflow(format!("net of {len} guesses cannot be scanned")))?;
        let parts = map_indexed(par, chunks, |chunk| {
            let lo = chunk as u128 * SCAN_CHUNK;
            let hi = (lo + SCAN_CHUNK).min(len);
            let mut ws = self.workspace();
            let mut valid = 0;
            let mut out: Option<Outcome> = None;
            for t in lo..hi {
                let digits = if exhaustive {
                    self.net.decode(t)
                } else if t == 0 {
                    seed_digits.to_vec()
                } else {
                    self.net.sampled_digits(t as u64)
                };
                let (cost, converged, v) = self.evaluate(&mut ws, &digits, valid)?;
                valid = v;
                let index = self.net.encode(&digits);
                match out.as_mut() {
                    None => out = Some(Outcome::start(cost, index, converged)),
                    Some(o) => {
                        o.offer(cost, index);
                        o.evaluated += 1;
                        o.nonconverged += u64::from(!converged);
                    }
                }
            }
            Ok(out.expect("chunks are non-empty"))
        })?;
        let mut out = parts[0];
        for part in &parts[1..] {
            out.absorb(part, 0);
        }
        Ok(out)
    }
}

fn run_search<S: RegressionSolver, P: PrefixCost>(
    b: &DMatrix<f64>,
    net: &CoefficientNet,
    solver: &S,
    eval: P,
    prune: bool,
    par: Parallelism,
) -> Result<Outcome> {
    let r = net.num_columns();
    let k = net.k();
    let mut tails = Vec::with_capacity(r + 1);
    if prune {
        for j in 0..r {
            let s = svd(&b.columns(j, r - j).into_owned())?;
            tails.push(s.tail_energy(k) * (1.0 - 1e-9));
        }
    } else {
        tails.resize(r, 0.0);
    }
    tails.push(0.0);
    let search = Search {
        b,
        net,
        solver,
        eval,
        tails,
        slack: 1e-12 * b.norm_squared(),
    };
    let seed_digits = seed_guess(b, net)?;
    if !prune {
        return search.scan(&seed_digits, par);
    }
    let mut ws = search.workspace();
    let (cost, converged, _) = search.evaluate(&mut ws, &seed_digits, 0)?;
    search.branch_and_bound(Outcome::start(cost, net.encode(&seed_digits), converged), par)
}

fn search_net<S: RegressionSolver>(
    b: &DMatrix<f64>,
    net: &CoefficientNet,
    solver: &S,
    prune: bool,
    par: Parallelism,
) -> Result<Outcome> {
    let prune = prune && net.is_exhaustive() && solver.p() == 2.0;
    match solver.cost_form() {
        CostForm::LeastSquares if solver.p() == 2.0 => {
            run_search(b, net, solver, LeastSquaresPrefix::new(b, net.k()), prune, par)
        }
        CostForm::RowSparseNonnegative if solver.p() == 2.0 => {
            run_search(b, net, solver, RowSparsePrefix::new(b, net.k()), prune, par)
        }
        _ => {
            let eval = SolverPrefix {
                solver,
                k: net.k(),
                prefixes: (0..=b.ncols()).map(|j| b.columns(0, j).into_owned()).collect(),
            };
            run_search(b, net, solver, eval, prune, par)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplicativeDelta {
    pub delta: f64,
    /// `‖A − A_k‖_F = 0`: the optimum may be zero and no finite `δ` turns the
    /// additive term into a relative one.
    pub degenerate: bool,
}

/// `δ = ε‖A − A_k‖_F²/‖A‖_F²` clamped to `[DELTA_MIN, 1]`.
pub fn multiplicative_delta(a: &DenseMatrix, k: usize, epsilon: f64) -> Result<MultiplicativeDelta> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    let s = svd(a.as_matrix())?;
    let total = a.norm_squared();
    let tail = s.tail_energy(k);
    if total == 0.0 || tail <= 0.0 {
        return Ok(MultiplicativeDelta {
            delta: DELTA_MIN,
            degenerate: true,
        });
    }
    Ok(MultiplicativeDelta {
        delta: (epsilon * tail / total).clamp(DELTA_MIN, 1.0),
        degenerate: false,
    })
}

/// Fraction of Gaussian `R` (`n x rank(M)`) with `rank(MR) = rank(M)`.
pub fn mc_rank_preservation(m: &DenseMatrix, trials: usize, seed: u64, par: Parallelism) -> Result<f64> {
    if trials == 0 {
        return Err(Error::param("trials must be at least 1"));
    }
    let j = svd(m.as_matrix())?.rank;
    if j == 0 {
        return Ok(1.0);
    }
    let hits = map_indexed(par, trials, |t| {
        let mut rng = stream(seed, STREAM_MONTE_CARLO, t as u64);
        let r = gaussian_matrix(m.cols(), j, &mut rng);
        Ok(svd(&(m.as_matrix() * r))?.rank == j)
    })?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / trials as f64)
}
