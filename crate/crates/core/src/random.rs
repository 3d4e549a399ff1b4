//! Random operators for experiments and property tests.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::operator::{CMat, DensityOperator, GeneralMatrix, HermitianOperator};

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Matrix with i.i.d. standard complex normal entries `(a + ib)/sqrt(2)`.
pub fn complex_normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| Complex64::new(normal(rng) * s, normal(rng) * s))
}

pub fn random_general<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> GeneralMatrix {
    GeneralMatrix::from_raw(complex_normal_matrix(rng, rows, cols))
}

/// GUE-like Hermitian matrix.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> HermitianOperator {
    let g = complex_normal_matrix(rng, dim, dim);
    HermitianOperator::from_symmetrized(&g + g.adjoint())
}

/// Haar-distributed unitary from the QR decomposition of a Ginibre matrix,
/// with the phases of R's diagonal absorbed into Q.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMat {
    let g = complex_normal_matrix(rng, dim, dim);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, k)] *= phase;
        }
    }
    q
}

/// Random state `W W^dagger / Tr` with `W` a `dim x rank` Ginibre matrix.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> DensityOperator {
    let w = complex_normal_matrix(rng, dim, rank.max(1));
    let m = &w * w.adjoint();
    let tr: f64 = (0..dim).map(|i| m[(i, i)].re).sum();
    let h = HermitianOperator::from_symmetrized(m.map(|z| z / tr));
    DensityOperator::new(h).expect("Ginibre construction yields a state")
}

/// Haar-random pure state vector.
pub fn random_pure_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<Complex64> {
    let v = complex_normal_matrix(rng, dim, 1);
    let n = v.norm();
    v.iter().map(|z| z / n).collect()
}

/// Diagonal state with Dirichlet(1,...,1) spectrum; `zeros` entries forced to 0.
pub fn random_diagonal_state<R: Rng + ?Sized>(rng: &mut R, dim: usize, zeros: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..dim).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    for k in 0..zeros.min(dim - 1) {
        w[k] = 0.0;
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Probability vector from the flat Dirichlet distribution.
pub fn random_probs<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    random_diagonal_state(rng, n, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::max_abs_entry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = random_unitary(&mut rng, 5);
        let e = u.adjoint() * &u - CMat::identity(5, 5);
        assert!(max_abs_entry(&e) < 1e-12);
    }

    #[test]
    fn densities_are_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for rank in 1..4 {
            let r = random_density(&mut rng, 4, rank);
            assert!((r.trace() - 1.0).abs() < 1e-12);
            assert!(r.min_eigenvalue() > -1e-12);
        }
        let p = random_probs(&mut rng, 6);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
