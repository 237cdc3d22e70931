//! Reduced instances `B` that stand in for `A` during the search.
//!
//! For `p = 2` the reduced matrix keeps the top `r = k + ⌈k/ε⌉` singular
//! directions, stored compactly as the `d x r` matrix of scaled left singular
//! vectors `[σ_1 p_1, …, σ_r p_r]`. Dropping the right factor is harmless
//! because every projection cost `‖B − PB‖_F²` is invariant under right
//! multiplication by a matrix with orthonormal rows.
//!
//! The guarantee is one-sided with an offset: for every rank-`k` projection
//! `P`, `‖A − PA‖_F² − ‖B − PB‖_F²` lies in `[c − ε‖A − A_k‖_F², c]` for a
//! constant `c ≥ 0` that does not depend on `P`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_p, column_costs, mixed_norm_pow, projection_cost, svd, DenseMatrix};
use crate::parallel::{self, Parallelism};
use crate::rng::{random_orthonormal, stream, STREAM_CORESET, STREAM_VERIFY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoresetKind {
    /// Truncated SVD, `p = 2`; costs agree up to an offset and an additive band.
    OneSidedOffset,
    /// Reweighted column sample; costs agree up to a `(1 ± ε)` factor.
    Multiplicative,
    /// `B = A`.
    Identity,
}

#[derive(Debug, Clone)]
pub struct Coreset {
    pub b: DenseMatrix,
    pub epsilon: f64,
    pub kind: CoresetKind,
    pub source_dims: (usize, usize),
    pub k: usize,
    /// Per-column weights of a sampled coreset (already folded into `b`).
    pub weights: Option<Vec<f64>>,
    /// Original column index of each coreset column, for sampled coresets.
    pub sampled_columns: Option<Vec<usize>>,
}

impl Coreset {
    pub fn size(&self) -> usize {
        self.b.cols()
    }

    pub fn identity(a: &DenseMatrix, k: usize, epsilon: f64) -> Coreset {
        Coreset {
            b: a.clone(),
            epsilon,
            kind: CoresetKind::Identity,
            source_dims: (a.rows(), a.cols()),
            k,
            weights: None,
            sampled_columns: None,
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    Ok(())
}

fn check_rank_param(a: &DenseMatrix, k: usize) -> Result<()> {
    if k == 0 || k > a.rows().min(a.cols()) {
        return Err(Error::param(format!(
            "rank k = {k} must satisfy 1 <= k <= min(d, n) = {}",
            a.rows().min(a.cols())
        )));
    }
    Ok(())
}

/// Sketch size `k + ⌈k/ε⌉` before capping at the rank.
pub fn pcps_size(k: usize, epsilon: f64) -> usize {
    // guard against 3/0.3 = 10.000000000000002
    k + ((k as f64 / epsilon) - 1e-9).ceil().max(0.0) as usize
}

/// Projection-cost-preserving sketch for `p = 2`.
pub fn pcps_p2(a: &DenseMatrix, k: usize, epsilon: f64) -> Result<Coreset> {
    check_rank_param(a, k)?;
    check_epsilon(epsilon)?;
    let s = svd(a)?;
    let r = pcps_size(k, epsilon).min(s.rank);
    let b = if r == 0 {
        // zero matrix: a single zero column has the same (zero) costs
        DMatrix::zeros(a.rows(), 1)
    } else {
        let mut b = s.left.columns(0, r).into_owned();
        for (j, sigma) in s.singular_values.iter().take(r).enumerate() {
            b.column_mut(j).scale_mut(*sigma);
        }
        b
    };
    Ok(Coreset {
        b: DenseMatrix::new(b)?,
        epsilon,
        kind: CoresetKind::OneSidedOffset,
        source_dims: (a.rows(), a.cols()),
        k,
        weights: None,
        sampled_columns: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "strategy")]
pub enum CoresetStrategy {
    Identity,
    SensitivitySample { target_size: usize, seed: u64 },
}

/// Coreset for general `p`.
///
/// The sampling strategy draws columns i.i.d. with probability proportional
/// to a sensitivity proxy (rank-`k` leverage score plus the column's share of
/// the rank-`k` residual cost) and reweights each draw by `1/(m·π_i)`. Its
/// multiplicative guarantee is empirical only; see [`sample_ratio_report`].
pub fn coreset_general_p(
    a: &DenseMatrix,
    k: usize,
    epsilon: f64,
    p: f64,
    strategy: CoresetStrategy,
) -> Result<Coreset> {
    check_p(p)?;
    check_rank_param(a, k)?;
    check_epsilon(epsilon)?;
    let (target_size, seed) = match strategy {
        CoresetStrategy::Identity => return Ok(Coreset::identity(a, k, epsilon)),
        CoresetStrategy::SensitivitySample { target_size, seed } => (target_size, seed),
    };
    let n = a.cols();
    let m = target_size.clamp(1, n);
    if m == n {
        return Ok(Coreset {
            b: a.clone(),
            epsilon,
            kind: CoresetKind::Multiplicative,
            source_dims: (a.rows(), n),
            k,
            weights: Some(vec![1.0; n]),
            sampled_columns: Some((0..n).collect()),
        });
    }

    let probs = sensitivity_proxies(a, k, p)?;
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for q in &probs {
        acc += q;
        cumulative.push(acc);
    }
    let mut rng = stream(seed, STREAM_CORESET, 0);
    let mut b = DMatrix::zeros(a.rows(), m);
    let mut weights = Vec::with_capacity(m);
    let mut picked = Vec::with_capacity(m);
    for j in 0..m {
        let u: f64 = rng.random::<f64>() * acc;
        let i = cumulative.partition_point(|c| *c <= u).min(n - 1);
        let w = acc / (m as f64 * probs[i]);
        b.set_column(j, &(a.column(i) * w.powf(1.0 / p)));
        weights.push(w);
        picked.push(i);
    }
    Ok(Coreset {
        b: DenseMatrix::new(b)?,
        epsilon,
        kind: CoresetKind::Multiplicative,
        source_dims: (a.rows(), n),
        k,
        weights: Some(weights),
        sampled_columns: Some(picked),
    })
}

fn sensitivity_proxies(a: &DenseMatrix, k: usize, p: f64) -> Result<Vec<f64>> {
    let n = a.cols();
    let s = svd(a)?;
    let kk = k.min(s.rank);
    let leverage: Vec<f64> = (0..n)
        .map(|i| s.right.view((i, 0), (1, kk)).norm_squared())
        .collect();
    let residual = if kk == 0 {
        a.as_matrix().clone()
    } else {
        let top = s.left.columns(0, kk);
        a.as_matrix() - top * (top.transpose() * a.as_matrix())
    };
    let costs: Vec<f64> = column_costs(&residual, p).collect();
    let total: f64 = costs.iter().sum();
    let uniform = 1.0 / n as f64;
    Ok((0..n)
        .map(|i| {
            let share = if total > 0.0 { costs[i] / total } else { 0.0 };
            // the uniform floor keeps every column reachable
            leverage[i] + share + uniform
        })
        .collect())
}

/// Empirical ratios `‖(I−P)B‖ᵖ / ‖(I−P)A‖ᵖ` over random rank-`k` projections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRatioReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `max(1 − min, max − 1)`.
    pub observed_epsilon: f64,
    pub samples: usize,
}

pub fn sample_ratio_report(
    a: &DenseMatrix,
    coreset: &Coreset,
    p: f64,
    n_samples: usize,
    seed: u64,
    par: Parallelism,
) -> Result<SampleRatioReport> {
    let d = a.rows();
    let k = coreset.k;
    let ratios = parallel::map_indexed(par, n_samples, |t| {
        let mut rng = stream(seed, STREAM_VERIFY, t as u64);
        let u = random_orthonormal(d, k, &mut rng);
        let num = projection_cost(&coreset.b, &u, p)?;
        let den = projection_cost(a, &u, p)?;
        Ok(if den > 0.0 { num / den } else { 1.0 })
    })?;
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SampleRatioReport {
        min_ratio,
        max_ratio,
        observed_epsilon: (1.0 - min_ratio).max(max_ratio - 1.0),
        samples: n_samples,
    })
}

/// Band check of a `p = 2` sketch over sampled rank-`k` projections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub min_diff: f64,
    pub max_diff: f64,
    pub spread: f64,
    /// `ε ‖A − A_k‖_F²`.
    pub band: f64,
    pub tail_energy: f64,
    /// Absolute slack `1e-8 · ‖A‖_F²` allowed on both checks.
    pub tolerance: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Relative slack on the band, absorbing rounding in the sampled costs.
pub const BAND_RELATIVE_SLACK: f64 = 1e-6;
/// Absolute slack relative to `‖A‖_F²`.
pub const DIFF_ABSOLUTE_SLACK: f64 = 1e-8;

/// Samples `n_samples` random orthonormal `d x k` bases `U` and checks
/// `diff(P) = ‖A − PA‖_F² − ‖B − PB‖_F²` against the band: `diff ≥ −tol`
/// and `max diff − min diff ≤ ε‖A − A_k‖_F²`. The offset `c` itself is a
/// supremum over all projections and is not estimated.
pub fn verify_pcps(
    a: &DenseMatrix,
    b: &DenseMatrix,
    k: usize,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
    par: Parallelism,
) -> Result<VerificationReport> {
    if a.rows() != b.rows() {
        return Err(Error::input(format!(
            "sketch has {} rows, source has {}",
            b.rows(),
            a.rows()
        )));
    }
    let d = a.rows();
    let diffs = parallel::map_indexed(par, n_samples, |t| {
        let mut rng = stream(seed, STREAM_VERIFY, t as u64);
        let u = random_orthonormal(d, k, &mut rng);
        Ok(projection_cost(a, &u, 2.0)? - projection_cost(b, &u, 2.0)?)
    })?;
    let min_diff = diffs.iter().copied().fold(f64::INFINITY, f64::min);
    let max_diff = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = if diffs.is_empty() { 0.0 } else { max_diff - min_diff };
    let tail_energy = svd(a)?.tail_energy(k);
    let band = epsilon * tail_energy;
    let tolerance = DIFF_ABSOLUTE_SLACK * mixed_norm_pow(a, 2.0)?;
    let passed = min_diff >= -tolerance && spread <= band * (1.0 + BAND_RELATIVE_SLACK) + tolerance;
    Ok(VerificationReport {
        min_diff,
        max_diff,
        spread,
        band,
        tail_energy,
        tolerance,
        samples: n_samples,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_matrix;

    fn random(d: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut rng = stream(seed, "test", 0);
        DenseMatrix::new(gaussian_matrix(d, n, &mut rng)).unwrap()
    }

    #[test]
    fn sketch_size() {
        assert_eq!(pcps_size(2, 0.5), 6);
        assert_eq!(pcps_size(3, 0.3), 13);
        assert_eq!(pcps_size(1, 0.1), 11);
        let a = random(8, 20, 1);
        assert_eq!(pcps_p2(&a, 2, 0.5).unwrap().size(), 6);
        // capped at rank
        assert_eq!(pcps_p2(&a, 2, 0.25).unwrap().size(), 8);
    }

    #[test]
    fn parameter_errors() {
        let a = random(3, 4, 2);
        assert!(matches!(pcps_p2(&a, 4, 0.5), Err(Error::InvalidParameter(_))));
        assert!(matches!(pcps_p2(&a, 0, 0.5), Err(Error::InvalidParameter(_))));
        assert!(matches!(pcps_p2(&a, 1, 1.0), Err(Error::InvalidParameter(_))));
        assert!(coreset_general_p(&a, 1, 0.5, 0.9, CoresetStrategy::Identity).is_err());
    }

    #[test]
    fn low_rank_sketch_is_exact() {
        let mut rng = stream(3, "test", 0);
        let a = DenseMatrix::new(gaussian_matrix(6, 2, &mut rng) * gaussian_matrix(2, 10, &mut rng)).unwrap();
        let c = pcps_p2(&a, 1, 0.5).unwrap();
        assert_eq!(c.size(), 2);
        for t in 0..20 {
            let mut rng = stream(4, "test", t);
            let u = random_orthonormal(6, 1, &mut rng);
            let ca = projection_cost(&a, &u, 2.0).unwrap();
            let cb = projection_cost(&c.b, &u, 2.0).unwrap();
            assert!((ca - cb).abs() < 1e-9 * ca.max(1.0));
        }
    }

    #[test]
    fn sketch_never_adds_energy_and_is_deterministic() {
        let a = random(8, 20, 5);
        let c1 = pcps_p2(&a, 2, 0.5).unwrap();
        let c2 = pcps_p2(&a, 2, 0.5).unwrap();
        assert_eq!(c1.b, c2.b);
        assert!(mixed_norm_pow(&c1.b, 2.0).unwrap() <= mixed_norm_pow(&a, 2.0).unwrap());
    }

    #[test]
    fn band_holds_for_sketch() {
        let a = random(8, 20, 6);
        let c = pcps_p2(&a, 2, 0.5).unwrap();
        let rep = verify_pcps(&a, &c.b, 2, 0.5, 100, 9, Parallelism::Sequential).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.min_diff >= -rep.tolerance);
    }

    #[test]
    fn identity_sketch_has_zero_spread() {
        let a = random(5, 9, 7);
        let rep = verify_pcps(&a, &a, 2, 0.5, 50, 1, Parallelism::Sequential).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.spread, 0.0);
    }

    #[test]
    fn undersized_sketch_fails_on_flat_spectrum() {
        // flat spectrum: σ_i = 1 for all i, so dropping directions k+1..d
        // shifts costs by up to k while the band is only ε·(d − k)
        let mut rng = stream(8, "test", 0);
        let q = random_orthonormal(8, 8, &mut rng);
        let a = DenseMatrix::new(q.vectors().clone()).unwrap();
        let s = svd(&a).unwrap();
        let mut b = s.left.columns(0, 2).into_owned();
        for j in 0..2 {
            b.column_mut(j).scale_mut(s.singular_values[j]);
        }
        let b = DenseMatrix::new(b).unwrap();
        let rep = verify_pcps(&a, &b, 2, 0.1, 200, 3, Parallelism::Sequential).unwrap();
        assert!(!rep.passed, "{rep:?}");
    }

    #[test]
    fn general_p_identity_and_full_sample() {
        let a = random(4, 12, 10);
        let c = coreset_general_p(&a, 1, 0.5, 1.0, CoresetStrategy::Identity).unwrap();
        assert_eq!(c.kind, CoresetKind::Identity);
        assert_eq!(c.b, a);

        let full = coreset_general_p(
            &a,
            1,
            0.5,
            1.5,
            CoresetStrategy::SensitivitySample { target_size: 50, seed: 1 },
        )
        .unwrap();
        assert_eq!(full.size(), 12);
        let lhs = mixed_norm_pow(&full.b, 1.5).unwrap();
        let rhs = mixed_norm_pow(&a, 1.5).unwrap();
        assert!((lhs - rhs).abs() <= 1e-8 * rhs);
    }

    #[test]
    fn sampled_coreset_ratio_is_reported() {
        let a = random(6, 40, 11);
        let c = coreset_general_p(
            &a,
            1,
            0.5,
            1.0,
            CoresetStrategy::SensitivitySample { target_size: 20, seed: 4 },
        )
        .unwrap();
        assert_eq!(c.size(), 20);
        assert_eq!(c.kind, CoresetKind::Multiplicative);
        let rep = sample_ratio_report(&a, &c, 1.0, 200, 2, Parallelism::Sequential).unwrap();
        assert!(rep.min_ratio > 0.0 && rep.max_ratio.is_finite());
        assert!(rep.observed_epsilon >= 0.0);
    }
}
