//! Reference implementations used as oracles by the integration tests.
//!
//! Nothing here calls into the library's numerics: Hermitian matrices are
//! embedded as real symmetric `2n x 2n` matrices and diagonalized with a
//! cyclic Jacobi sweep.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

/// `[[Re H, -Im H], [Im H, Re H]]`.
pub fn embed(h: &CMat) -> RMat {
    let n = h.nrows();
    let mut r = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            r[(i, j)] = z.re;
            r[(i + n, j + n)] = z.re;
            r[(i + n, j)] = z.im;
            r[(i, j + n)] = -z.im;
        }
    }
    r
}

pub fn unembed(r: &RMat) -> CMat {
    let n = r.nrows() / 2;
    CMat::from_fn(n, n, |i, j| Complex64::new(r[(i, j)], r[(i + n, j)]))
}

/// Eigenvalues and orthonormal eigenvectors (columns) of a real symmetric matrix.
pub fn jacobi(a: &RMat) -> (Vec<f64>, RMat) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = RMat::identity(n, n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
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
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Eigenvalues of a Hermitian matrix, ascending. Each eigenvalue of the real
/// embedding appears twice; one copy of each pair is kept.
pub fn eigvals(h: &CMat) -> Vec<f64> {
    let (mut w, _) = jacobi(&embed(h));
    w.sort_by(f64::total_cmp);
    w.iter().step_by(2).copied().collect()
}

/// `f(H)` by spectral calculus on the real embedding.
pub fn herm_fn(h: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (w, v) = jacobi(&embed(h));
    let d = RMat::from_diagonal(&nalgebra::DVector::from_iterator(w.len(), w.iter().map(|&x| f(x))));
    unembed(&(&v * d * v.transpose()))
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).map(|z| z * 0.5)
}

pub fn trace_norm_h(h: &CMat) -> f64 {
    eigvals(&hermitize(h)).iter().map(|x| x.abs()).sum()
}

/// Singular values, descending, from the eigenvalues of `A^dag A`.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    let g = hermitize(&(a.adjoint() * a));
    let mut s: Vec<f64> = eigvals(&g).iter().map(|x| x.max(0.0).sqrt()).collect();
    s.reverse();
    s
}

pub fn trace_norm(a: &CMat) -> f64 {
    singular_values(a).iter().sum()
}

pub fn op_norm(a: &CMat) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

pub fn trace(h: &CMat) -> f64 {
    (0..h.nrows()).map(|i| h[(i, i)].re).sum()
}

/// `Re Tr[A B]`.
pub fn trace_prod(a: &CMat, b: &CMat) -> f64 {
    trace(&(a * b))
}

/// Projector onto eigenvalues strictly above `tol`.
pub fn pos_proj(h: &CMat, tol: f64) -> CMat {
    herm_fn(&hermitize(h), |x| if x > tol { 1.0 } else { 0.0 })
}

pub fn inv_sqrt_on_support(h: &CMat, tol: f64) -> CMat {
    herm_fn(&hermitize(h), |x| if x > tol { 1.0 / x.sqrt() } else { 0.0 })
}

pub fn support(h: &CMat, tol: f64) -> CMat {
    pos_proj(h, tol)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca, rb, cb) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    CMat::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

/// `Tr_B` of an operator on `A (x) B`.
pub fn trace_out_second(m: &CMat, da: usize, db: usize) -> CMat {
    CMat::from_fn(da, da, |i, j| (0..db).map(|k| m[(i * db + k, j * db + k)]).sum())
}

/// `Tr_A` of an operator on `A (x) B`.
pub fn trace_out_first(m: &CMat, da: usize, db: usize) -> CMat {
    CMat::from_fn(db, db, |i, j| (0..da).map(|k| m[(k * db + i, k * db + j)]).sum())
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `log2(1 - eps)`-style helper for binary entropies.
pub fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Minimum type-II mass of a commuting test: fractional knapsack over items
/// `(p, q)` keeping at least `1 - eps` of the `p` mass.
pub fn knapsack_beta(items: &[(f64, f64)], eps: f64) -> f64 {
    let mut it: Vec<(f64, f64)> = items.iter().copied().filter(|&(p, _)| p > 0.0).collect();
    it.sort_by(|a, b| {
        let ra = if a.1 == 0.0 { f64::INFINITY } else { a.0 / a.1 };
        let rb = if b.1 == 0.0 { f64::INFINITY } else { b.0 / b.1 };
        rb.total_cmp(&ra)
    });
    let target = 1.0 - eps;
    let (mut alpha, mut beta) = (0.0, 0.0);
    for (p, q) in it {
        if alpha >= target {
            break;
        }
        let take = ((target - alpha) / p).min(1.0);
        alpha += take * p;
        beta += take * q;
    }
    beta
}

/// Regularized lower incomplete gamma `P(k, x)` for integer `k`.
pub fn gamma_p_int(k: usize, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..k {
        term *= x / j as f64;
        sum += term;
    }
    1.0 - (-x).exp() * sum
}
