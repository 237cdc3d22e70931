//! Deterministic nets over coefficient matrices `C ∈ ℝ^{k×r}`.
//!
//! Column `i` of `C` is guessed from a grid net of a `k`-dimensional ball.
//! The grid has spacing `2δR/√k`, so every cell has diagonal `2δR` and every
//! point of the ball of radius `R` rounds to a grid point within `δR`. Grid
//! points are kept out to radius `(1+δ)R` so the rounded point is never
//! discarded.
//!
//! A full matrix guess is addressed by an odometer index over the per-column
//! grids: column 0 is the most significant digit, the last column changes
//! fastest. Any guess can be rebuilt from its index alone.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, STREAM_NET};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallNetSpec {
    pub dim: usize,
    pub radius: f64,
    pub granularity: f64,
}

impl BallNetSpec {
    pub fn new(dim: usize, radius: f64, granularity: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("ball dimension must be at least 1"));
        }
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::param(format!("ball radius must be finite and >= 0, got {radius}")));
        }
        if !(granularity > 0.0 && granularity <= 1.0) {
            return Err(Error::param(format!("granularity must lie in (0, 1], got {granularity}")));
        }
        Ok(BallNetSpec {
            dim,
            radius,
            granularity,
        })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.granularity * self.radius / (self.dim as f64).sqrt()
    }

    /// Guaranteed covering distance `δ·R`.
    pub fn resolution(&self) -> f64 {
        self.granularity * self.radius
    }

    /// All net points, flattened column-major as `dim x count`.
    fn grid(&self) -> Vec<f64> {
        if self.radius == 0.0 {
            return vec![0.0; self.dim];
        }
        let h = self.spacing();
        let outer = (1.0 + self.granularity) * self.radius;
        let m = (outer / h + 1e-9).floor() as i64;
        let limit = outer * outer * (1.0 + 1e-12);
        let mut digits = vec![-m; self.dim];
        let mut out = Vec::new();
        loop {
            let sq: f64 = digits.iter().map(|&z| (z as f64 * h).powi(2)).sum();
            if sq <= limit {
                out.extend(digits.iter().map(|&z| z as f64 * h));
            }
            // lexicographic increment, last coordinate fastest
            let mut pos = self.dim;
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                if digits[pos] < m {
                    digits[pos] += 1;
                    break;
                }
                digits[pos] = -m;
            }
        }
    }
}

/// Points of the grid net of `spec`, in lexicographic order of their integer
/// coordinates. A zero radius yields only the origin.
pub fn ball_net(spec: &BallNetSpec) -> impl Iterator<Item = DVector<f64>> {
    let dim = spec.dim;
    let flat = spec.grid();
    let count = flat.len() / dim;
    (0..count).map(move |j| DVector::from_column_slice(&flat[j * dim..(j + 1) * dim]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetKind {
    /// Radius `‖b_i‖`, granularity `δ`.
    Standard,
    /// Radius `κ‖b_i‖`, granularity `ε/κ`.
    Conditioned,
}

#[derive(Debug, Clone)]
struct ColumnGrid {
    spec: BallNetSpec,
    points: Vec<f64>,
    count: usize,
}

#[derive(Debug, Clone)]
pub struct CoefficientNet {
    k: usize,
    kind: NetKind,
    columns: Vec<ColumnGrid>,
    total_count: u128,
    budget: Option<u64>,
    seed: u64,
}

/// Net for `C = UᵀB` with unit-norm columns of `U`: column `i` lives in the
/// ball of radius `‖b_i‖`.
pub fn coefficient_net(b: &DMatrix<f64>, k: usize, delta: f64) -> Result<CoefficientNet> {
    CoefficientNet::build(b, k, 1.0, delta, NetKind::Standard)
}

/// Net for a basis with condition number at most `κ`: radius `κ‖b_i‖` and
/// granularity `ε/κ`, so the absolute resolution is still `ε‖b_i‖`.
pub fn conditioned_net(b: &DMatrix<f64>, k: usize, kappa: f64, epsilon: f64) -> Result<CoefficientNet> {
    if !(kappa.is_finite() && kappa >= 1.0) {
        return Err(Error::param(format!("kappa must be >= 1, got {kappa}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    CoefficientNet::build(b, k, kappa, epsilon / kappa, NetKind::Conditioned)
}

impl CoefficientNet {
    fn build(b: &DMatrix<f64>, k: usize, scale: f64, granularity: f64, kind: NetKind) -> Result<Self> {
        let mut columns = Vec::with_capacity(b.ncols());
        let mut total: u128 = 1;
        for col in b.column_iter() {
            let spec = BallNetSpec::new(k, scale * col.norm(), granularity)?;
            let points = spec.grid();
            let count = points.len() / k;
            total = total.saturating_mul(count as u128);
            columns.push(ColumnGrid { spec, points, count });
        }
        Ok(CoefficientNet {
            k,
            kind,
            columns,
            total_count: total,
            budget: None,
            seed: 0,
        })
    }

    /// Caps the number of guesses; past the cap the net is sampled with
    /// i.i.d. uniform draws from `seed`'s net stream.
    pub fn with_budget(mut self, budget: Option<u64>, seed: u64) -> Self {
        self.budget = budget;
        self.seed = seed;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> NetKind {
        self.kind
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column_spec(&self, i: usize) -> &BallNetSpec {
        &self.columns[i].spec
    }

    pub fn column_count(&self, i: usize) -> usize {
        self.columns[i].count
    }

    /// Product of the per-column counts, saturating at `u128::MAX`.
    pub fn total_count(&self) -> u128 {
        self.total_count
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn is_exhaustive(&self) -> bool {
        self.budget.is_none_or(|b| self.total_count <= u128::from(b))
    }

    /// Number of guesses a full pass visits: the total count when exhaustive,
    /// otherwise the budget.
    pub fn pass_len(&self) -> u128 {
        match self.budget {
            Some(b) if !self.is_exhaustive() => u128::from(b),
            _ => self.total_count,
        }
    }

    /// All grid points of column `i`, concatenated.
    pub fn column_points(&self, i: usize) -> &[f64] {
        &self.columns[i].points
    }

    /// Column `i`'s grid point `j`.
    pub fn point(&self, i: usize, j: usize) -> &[f64] {
        &self.columns[i].points[j * self.k..(j + 1) * self.k]
    }

    pub fn decode(&self, mut index: u128) -> Vec<usize> {
        let mut digits = vec![0; self.columns.len()];
        for (i, col) in self.columns.iter().enumerate().rev() {
            let c = col.count as u128;
            digits[i] = (index % c) as usize;
            index /= c;
        }
        digits
    }

    pub fn encode(&self, digits: &[usize]) -> u128 {
        digits
            .iter()
            .zip(&self.columns)
            .fold(0u128, |acc, (&d, col)| acc * col.count as u128 + d as u128)
    }

    pub fn matrix_from_digits(&self, digits: &[usize]) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.k, self.columns.len());
        for (i, &d) in digits.iter().enumerate() {
            c.column_mut(i).copy_from_slice(self.point(i, d));
        }
        c
    }

    /// The guess with odometer index `index`.
    pub fn guess(&self, index: u128) -> DMatrix<f64> {
        self.matrix_from_digits(&self.decode(index))
    }

    /// Digits of the `draw`-th sampled guess.
    pub fn sampled_digits(&self, draw: u64) -> Vec<usize> {
        let mut rng = stream(self.seed, STREAM_NET, draw);
        self.columns.iter().map(|c| rng.random_range(0..c.count)).collect()
    }

    /// Visits one full pass: odometer order when exhaustive, the budgeted
    /// sample otherwise. Items are `(odometer index, C)`.
    pub fn iter(&self) -> impl Iterator<Item = (u128, DMatrix<f64>)> + '_ {
        let exhaustive = self.is_exhaustive();
        let len = self.pass_len();
        (0..len).map(move |t| {
            let digits = if exhaustive {
                self.decode(t)
            } else {
                self.sampled_digits(t as u64)
            };
            (self.encode(&digits), self.matrix_from_digits(&digits))
        })
    }

    /// Digits of the net point nearest to `target` (column by column).
    pub fn nearest_digits(&self, target: &DMatrix<f64>) -> Vec<usize> {
        (0..self.columns.len())
            .map(|i| {
                let col = target.column(i);
                (0..self.columns[i].count)
                    .map(|j| {
                        let p = self.point(i, j);
                        let dist: f64 = p.iter().zip(col.iter()).map(|(a, b)| (a - b).powi(2)).sum();
                        (dist, j)
                    })
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .map_or(0, |(_, j)| j)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_matrix;
    use rand_distr::{Distribution, StandardNormal};

    /// Uniform point in the closed ball, by normalizing a Gaussian and
    /// scaling with `U^{1/dim}`.
    fn sample_ball(dim: usize, radius: f64, rng: &mut crate::rng::StreamRng) -> DVector<f64> {
        let g = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let u: f64 = rng.random();
        g.normalize() * radius * u.powf(1.0 / dim as f64)
    }

    fn covering_distance(points: &[DVector<f64>], x: &DVector<f64>) -> f64 {
        points.iter().map(|p| (p - x).norm()).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn zero_radius_is_origin() {
        let pts: Vec<_> = ball_net(&BallNetSpec::new(3, 0.0, 0.5).unwrap()).collect();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].norm(), 0.0);
    }

    #[test]
    fn one_dimensional_grid() {
        let spec = BallNetSpec::new(1, 1.0, 0.5).unwrap();
        let pts: Vec<f64> = ball_net(&spec).map(|p| p[0]).collect();
        assert_eq!(pts, vec![-1.0, 0.0, 1.0]);
        let mut rng = stream(1, "test", 0);
        let all: Vec<_> = ball_net(&spec).collect();
        for _ in 0..1000 {
            let x = sample_ball(1, 1.0, &mut rng);
            assert!(covering_distance(&all, &x) <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn covering_property() {
        for (dim, radius, delta) in [(2, 1.0, 0.5), (2, 3.0, 0.25), (3, 1.5, 0.4), (1, 2.0, 0.1), (4, 1.0, 0.9)] {
            let spec = BallNetSpec::new(dim, radius, delta).unwrap();
            let all: Vec<_> = ball_net(&spec).collect();
            let mut rng = stream(2, "cover", dim as u64);
            for _ in 0..1000 {
                let x = sample_ball(dim, radius, &mut rng);
                let dist = covering_distance(&all, &x);
                assert!(dist <= spec.resolution() * (1.0 + 1e-12), "dim {dim}: {dist}");
            }
            for p in &all {
                assert!(p.norm() <= (1.0 + delta) * radius * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(BallNetSpec::new(0, 1.0, 0.5).is_err());
        assert!(BallNetSpec::new(2, -1.0, 0.5).is_err());
        assert!(BallNetSpec::new(2, 1.0, 0.0).is_err());
        assert!(BallNetSpec::new(2, 1.0, 1.5).is_err());
    }

    #[test]
    fn zero_column_gives_zero_guesses() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let net = coefficient_net(&b, 2, 0.5).unwrap();
        assert_eq!(net.column_count(1), 1);
        for (_, c) in net.iter() {
            assert_eq!(c.column(1).norm(), 0.0);
        }
    }

    #[test]
    fn total_count_matches_iteration() {
        let b = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let net = coefficient_net(&b, 1, 0.5).unwrap();
        assert_eq!(net.column_count(0), 3);
        assert_eq!(net.total_count(), 9);
        assert_eq!(net.iter().count() as u128, net.total_count());

        let mut rng = stream(3, "test", 0);
        let b = gaussian_matrix(3, 3, &mut rng);
        let net = coefficient_net(&b, 2, 0.6).unwrap();
        assert_eq!(net.iter().count() as u128, net.total_count());
    }

    #[test]
    fn odometer_round_trip_and_replay() {
        let mut rng = stream(4, "test", 0);
        let b = gaussian_matrix(2, 3, &mut rng);
        let net = coefficient_net(&b, 2, 0.7).unwrap();
        for (t, (idx, c)) in net.iter().enumerate() {
            assert_eq!(idx, t as u128);
            assert_eq!(net.encode(&net.decode(idx)), idx);
            assert_eq!(net.guess(idx), c);
        }
        let a: Vec<_> = net.iter().collect();
        let b2: Vec<_> = net.iter().collect();
        assert_eq!(a, b2);
    }

    #[test]
    fn some_guess_is_close_to_any_feasible_matrix() {
        let mut rng = stream(5, "test", 0);
        let b = gaussian_matrix(3, 3, &mut rng);
        let delta = 0.5;
        let net = coefficient_net(&b, 2, delta).unwrap();
        for _ in 0..50 {
            let mut target = DMatrix::zeros(2, 3);
            for i in 0..3 {
                target.set_column(i, &sample_ball(2, b.column(i).norm(), &mut rng));
            }
            let c = net.matrix_from_digits(&net.nearest_digits(&target));
            for i in 0..3 {
                let gap = (c.column(i) - target.column(i)).norm();
                assert!(gap <= b.column(i).norm() * delta * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn conditioned_net_behaviour() {
        let mut rng = stream(6, "test", 0);
        let b = gaussian_matrix(3, 2, &mut rng);
        let plain = coefficient_net(&b, 2, 0.5).unwrap();
        let cond = conditioned_net(&b, 2, 1.0, 0.5).unwrap();
        assert_eq!(plain.total_count(), cond.total_count());
        assert_eq!(plain.iter().collect::<Vec<_>>(), cond.iter().collect::<Vec<_>>());

        let mut last = 0;
        for kappa in [1.0, 2.0, 4.0] {
            let net = conditioned_net(&b, 2, kappa, 0.5).unwrap();
            assert!(net.total_count() > last);
            last = net.total_count();
            for _ in 0..20 {
                let mut target = DMatrix::zeros(2, 2);
                for i in 0..2 {
                    target.set_column(i, &sample_ball(2, kappa * b.column(i).norm(), &mut rng));
                }
                let c = net.matrix_from_digits(&net.nearest_digits(&target));
                for i in 0..2 {
                    let gap = (c.column(i) - target.column(i)).norm();
                    assert!(gap <= 0.5 * b.column(i).norm() * (1.0 + 1e-9));
                }
            }
        }
        assert!(conditioned_net(&b, 2, 0.5, 0.5).is_err());
    }

    #[test]
    fn budget_switches_to_sampling() {
        let mut rng = stream(7, "test", 0);
        let b = gaussian_matrix(2, 3, &mut rng);
        let net = coefficient_net(&b, 2, 0.5).unwrap();
        let total = net.total_count();
        let capped = net.clone().with_budget(Some(10), 3);
        assert!(!capped.is_exhaustive());
        assert_eq!(capped.iter().count(), 10);
        for (_, c) in capped.iter() {
            for i in 0..3 {
                assert!(c.column(i).norm() <= 1.5 * b.column(i).norm() + 1e-12);
            }
        }
        let roomy = net.with_budget(Some(total as u64), 3);
        assert!(roomy.is_exhaustive());
    }
}
