//! Small dense kernels kept separate from the audited crate.

use nalgebra::{DMatrix, DVector};

const JACOBI_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Eigenvalues come
/// back in decreasing order with eigenvectors as matching columns.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "symmetric_eigen needs a square matrix");
    let mut a = m.clone();
    let mut v = DMatrix::identity(n, n);
    let scale = m.norm().max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| v.column(i).into_owned()).collect::<Vec<_>>());
    (values, vectors)
}

/// Twice-applied modified Gram–Schmidt; columns whose residual falls below
/// `tol` times the largest input norm are dropped.
pub fn gram_schmidt(v: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let scale = v.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut out: Vec<DVector<f64>> = Vec::new();
    for c in v.column_iter() {
        let mut x = c.into_owned();
        for _ in 0..2 {
            for q in &out {
                let dot = q.dot(&x);
                x.axpy(-dot, q, 1.0);
            }
        }
        let norm = x.norm();
        if norm > tol * scale && norm > 0.0 {
            out.push(x / norm);
        }
    }
    if out.is_empty() {
        DMatrix::zeros(v.nrows(), 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Orthonormal basis of the complement of the orthonormal columns `q`.
pub fn complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let d = q.nrows();
    let mut all = DMatrix::zeros(d, q.ncols() + d);
    all.columns_mut(0, q.ncols()).copy_from(q);
    all.columns_mut(q.ncols(), d).copy_from(&DMatrix::identity(d, d));
    let full = gram_schmidt(&all, 1e-10);
    full.columns(q.ncols(), full.ncols() - q.ncols()).into_owned()
}

/// Columns `2..m` of the Householder reflection exchanging `e_1` and the
/// unit vector `x`: an orthonormal basis of `x⊥`.
pub fn householder_complement(x: &DVector<f64>) -> DMatrix<f64> {
    let m = x.len();
    let mut w = x.clone();
    w[0] -= 1.0;
    let norm = w.norm();
    let h = if norm < 1e-12 {
        DMatrix::identity(m, m)
    } else {
        let w = w / norm;
        DMatrix::identity(m, m) - (&w * w.transpose()) * 2.0
    };
    h.columns(1, m - 1).into_owned()
}

/// Unit vectors of `ℝ^m` in hyperspherical coordinates with angle step at
/// most `h`, one representative per `±` pair. Every unit vector lies within
/// the returned radius of some point or its negative.
pub fn sphere_grid(m: usize, h: f64) -> (Vec<DVector<f64>>, f64) {
    assert!(m >= 1 && h > 0.0);
    if m == 1 {
        return (vec![DVector::from_element(1, 1.0)], 0.0);
    }
    let n = (std::f64::consts::PI / h).ceil() as usize;
    let step = std::f64::consts::PI / n as f64;
    let angles = m - 1;
    let mut points = Vec::with_capacity((n + 1).pow(angles as u32));
    let mut idx = vec![0usize; angles];
    loop {
        let mut x = DVector::zeros(m);
        let mut sin_prod = 1.0;
        for (t, &i) in idx.iter().enumerate() {
            let phi = i as f64 * step;
            x[t] = sin_prod * phi.cos();
            sin_prod *= phi.sin();
        }
        x[m - 1] = sin_prod;
        points.push(x);
        let mut t = 0;
        loop {
            if t == angles {
                return (points, angles as f64 * step / 2.0);
            }
            idx[t] += 1;
            if idx[t] <= n {
                break;
            }
            idx[t] = 0;
            t += 1;
        }
    }
}

/// Number of points [`sphere_grid`] returns.
pub fn sphere_grid_len(m: usize, h: f64) -> u128 {
    if m <= 1 {
        return 1;
    }
    let n = (std::f64::consts::PI / h).ceil() as u128;
    (n + 1).pow((m - 1) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_reconstructs() {
        let b = DMatrix::from_fn(4, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let m = &b * b.transpose();
        let (vals, vecs) = symmetric_eigen(&m);
        let rebuilt = &vecs * DMatrix::from_diagonal(&DVector::from_vec(vals.clone())) * vecs.transpose();
        assert!((rebuilt - &m).norm() < 1e-10 * m.norm());
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn complement_is_orthogonal() {
        let q = gram_schmidt(&DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]), 1e-12);
        let c = complement(&q);
        assert_eq!(c.ncols(), 2);
        assert!((q.transpose() * &c).amax() < 1e-12);
        let x = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        let hc = householder_complement(&x);
        assert!((hc.transpose() * &x).amax() < 1e-12);
        assert!((hc.transpose() * &hc - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn sphere_grid_covers() {
        let (pts, rho) = sphere_grid(3, 0.3);
        assert_eq!(pts.len() as u128, sphere_grid_len(3, 0.3));
        for probe in [[0.3, -0.5, 0.81], [-1.0, 0.0, 0.0], [0.1, 0.2, -0.97]] {
            let u = DVector::from_row_slice(&probe).normalize();
            let best = pts
                .iter()
                .map(|g| (&u - g).norm().min((&u + g).norm()))
                .fold(f64::INFINITY, f64::min);
            assert!(best <= rho, "{best} > {rho}");
        }
    }
}
