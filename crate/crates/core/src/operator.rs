//! Dense complex linear algebra for Hermitian operators.
//!
//! Eigendecompositions and SVDs are delegated to `nalgebra`; this module adds
//! the constrained operator types used throughout the crate (Hermitian,
//! density, projector), the scale-relative zero threshold, positive-part
//! projectors, functions of operators, tensor products and partial traces.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

/// Relative scale of the zero threshold: `tau = ZERO_REL * (1 + ||H||_inf)`.
pub const ZERO_REL: f64 = 1e-10;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Zero threshold used for spectral decisions on an operator of the given norm.
pub fn zero_threshold(op_norm: f64) -> f64 {
    ZERO_REL * (1.0 + op_norm)
}

/// Which side of a positive-part decision the kernel falls on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Eigenvalues `> tau` (the `{H > 0}` projector).
    Strict,
    /// Eigenvalues `>= -tau` (the `{H >= 0}` projector, kernel included).
    Weak,
}

/// Which tensor factor to trace out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    First,
    Second,
}

/// Eigenvalues in descending order with the matching unitary.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl Spectrum {
    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn op_norm(&self) -> f64 {
        self.max().abs().max(self.min().abs())
    }

    pub fn threshold(&self) -> f64 {
        zero_threshold(self.op_norm())
    }

    /// Smallest eigenvalue above the zero threshold, if any.
    pub fn min_positive(&self) -> Option<f64> {
        let tau = self.threshold();
        self.values.iter().rev().copied().find(|&v| v > tau)
    }

    /// `sum_k f(lambda_k) |u_k><u_k|`.
    pub fn reassemble(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, &v) in self.values.iter().enumerate() {
            let fv = f(v);
            for r in 0..d {
                scaled[(r, k)] *= fv;
            }
        }
        HermitianOperator::from_symmetrized(&scaled * self.vectors.adjoint())
    }

    /// Projector onto the span of the eigenvectors selected by `keep`.
    pub fn projector_where(&self, keep: impl Fn(f64) -> bool) -> Projector {
        let cols: Vec<usize> = (0..self.values.len())
            .filter(|&k| keep(self.values[k]))
            .collect();
        Projector::from_columns(&self.vectors, &cols)
    }
}

/// Square complex matrix with exact Hermitian symmetry.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    mat: CMat,
}

impl HermitianOperator {
    /// Symmetrizes `H <- (H + H^dagger)/2`. Rejects non-square or non-finite input.
    pub fn new(mat: CMat) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::shape(format!(
                "Hermitian operator must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if mat.nrows() == 0 {
            return Err(Error::InvalidOperator("empty operator".into()));
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidOperator("non-finite entry".into()));
        }
        Ok(Self::from_symmetrized(mat))
    }

    pub(crate) fn from_symmetrized(mut mat: CMat) -> Self {
        let d = mat.nrows();
        for i in 0..d {
            mat[(i, i)] = c(mat[(i, i)].re);
            for j in (i + 1)..d {
                let a = mat[(i, j)];
                let b = mat[(j, i)];
                let s = Complex64::new((a.re + b.re) / 2.0, (a.im - b.im) / 2.0);
                mat[(i, j)] = s;
                mat[(j, i)] = s.conj();
            }
        }
        Self { mat }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut m = CMat::zeros(d, d);
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = c(x);
        }
        Self { mat: m }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: CMat::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: CMat::zeros(dim, dim),
        }
    }

    /// `|psi><psi|` for a (not necessarily normalized) vector.
    pub fn outer(psi: &[Complex64]) -> Self {
        let d = psi.len();
        let m = CMat::from_fn(d, d, |i, j| psi[i] * psi[j].conj());
        Self::from_symmetrized(m)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    pub fn eig(&self) -> Spectrum {
        eig_h(self)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.mat.clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().unwrap()
    }

    /// Sum of absolute eigenvalues.
    pub fn trace_norm(&self) -> f64 {
        self.eigenvalues().iter().map(|v| v.abs()).sum()
    }

    pub fn operator_norm(&self) -> f64 {
        let v = self.eigenvalues();
        v[0].abs().max(v[v.len() - 1].abs())
    }

    /// `f(H)` through the spectral decomposition.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> Self {
        self.eig().reassemble(f)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            mat: self.mat.map(|z| z * s),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            mat: &self.mat + &other.mat,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            mat: &self.mat - &other.mat,
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        Self {
            mat: &self.mat + other.mat.map(|z| z * s),
        }
    }

    /// `X H X^dagger`; used for two-sided compressions such as `P H P`.
    pub fn sandwich(&self, x: &CMat) -> Self {
        Self::from_symmetrized(x * &self.mat * x.adjoint())
    }

    /// Re Tr[self * other].
    pub fn trace_product(&self, other: &Self) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += (self.mat[(i, j)] * other.mat[(j, i)]).re;
            }
        }
        acc
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self {
            mat: self.mat.kronecker(&other.mat),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_entry(&(&self.mat - &other.mat))
    }
}

/// Unit-trace positive semidefinite operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator(HermitianOperator);

impl DensityOperator {
    pub const EIG_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-10;

    pub fn new(h: HermitianOperator) -> Result<Self> {
        let tr = h.trace();
        if (tr - 1.0).abs() > Self::TRACE_TOL {
            return Err(Error::Validation(format!("trace {tr} differs from 1")));
        }
        let min = h.min_eigenvalue();
        if min < -Self::EIG_TOL {
            return Err(Error::Validation(format!(
                "density operator has negative eigenvalue {min:e}"
            )));
        }
        Ok(Self(h))
    }

    pub fn from_matrix(m: CMat) -> Result<Self> {
        Self::new(HermitianOperator::new(m)?)
    }

    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm2 <= 0.0 {
            return Err(Error::domain("zero state vector"));
        }
        let s = 1.0 / norm2.sqrt();
        let v: Vec<Complex64> = psi.iter().map(|z| z * s).collect();
        Self::new(HermitianOperator::outer(&v))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(HermitianOperator::identity(dim).scale(1.0 / dim as f64))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(HermitianOperator::from_real_diagonal(diag))
    }

    pub fn as_hermitian(&self) -> &HermitianOperator {
        &self.0
    }

    pub fn into_hermitian(self) -> HermitianOperator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &CMat {
        self.0.matrix()
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self(self.0.tensor(&other.0))
    }
}

impl std::ops::Deref for DensityOperator {
    type Target = HermitianOperator;
    fn deref(&self) -> &HermitianOperator {
        &self.0
    }
}

/// Orthogonal projector.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    op: HermitianOperator,
    rank: usize,
}

impl Projector {
    pub const TOL: f64 = 1e-8;

    /// Projector onto the span of the given orthonormal columns of `basis`.
    pub fn from_columns(basis: &CMat, cols: &[usize]) -> Self {
        let d = basis.nrows();
        let mut m = CMat::zeros(d, d);
        for &k in cols {
            let u = basis.column(k);
            m += &u * u.adjoint();
        }
        Self {
            op: HermitianOperator::from_symmetrized(m),
            rank: cols.len(),
        }
    }

    /// Validates idempotence and the {0,1} spectrum.
    pub fn new(h: HermitianOperator) -> Result<Self> {
        let sq = Self::idempotence_error(&h);
        if sq > Self::TOL {
            return Err(Error::Validation(format!("||P^2 - P||_inf = {sq:e}")));
        }
        let vals = h.eigenvalues();
        if vals
            .iter()
            .any(|&v| v.abs() > Self::TOL && (v - 1.0).abs() > Self::TOL)
        {
            return Err(Error::Validation("projector eigenvalues not in {0,1}".into()));
        }
        let rank = vals.iter().filter(|&&v| v > 0.5).count();
        Ok(Self { op: h, rank })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            op: HermitianOperator::identity(dim),
            rank: dim,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            op: HermitianOperator::zeros(dim),
            rank: 0,
        }
    }

    pub fn idempotence_error(h: &HermitianOperator) -> f64 {
        let m = h.matrix();
        let d = m - m * m;
        let hd = HermitianOperator::from_symmetrized(d);
        hd.operator_norm()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn as_hermitian(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn matrix(&self) -> &CMat {
        self.op.matrix()
    }

    pub fn complement(&self) -> Self {
        Self {
            op: HermitianOperator::identity(self.dim()).sub(&self.op),
            rank: self.dim() - self.rank,
        }
    }

    /// `P H P`.
    pub fn compress(&self, h: &HermitianOperator) -> HermitianOperator {
        h.sandwich(self.matrix())
    }

    /// Sum of projectors assumed mutually orthogonal.
    pub fn orthogonal_sum(parts: &[&Projector], dim: usize) -> Self {
        let mut m = CMat::zeros(dim, dim);
        let mut rank = 0;
        for p in parts {
            m += p.matrix();
            rank += p.rank;
        }
        Self {
            op: HermitianOperator::from_symmetrized(m),
            rank,
        }
    }

    /// `self - sub` where `sub <= self` is a sub-projector.
    pub fn minus(&self, sub: &Projector) -> Self {
        Self {
            op: self.op.sub(&sub.op),
            rank: self.rank - sub.rank,
        }
    }
}

impl std::ops::Deref for Projector {
    type Target = HermitianOperator;
    fn deref(&self) -> &HermitianOperator {
        &self.op
    }
}

/// Arbitrary rectangular complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralMatrix {
    mat: CMat,
}

impl GeneralMatrix {
    pub fn new(mat: CMat) -> Result<Self> {
        if mat.nrows() == 0 || mat.ncols() == 0 {
            return Err(Error::shape("empty matrix"));
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidOperator("non-finite entry".into()));
        }
        Ok(Self { mat })
    }

    pub(crate) fn from_raw(mat: CMat) -> Self {
        Self { mat }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            mat: CMat::zeros(rows, cols),
        }
    }

    pub fn rows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn cols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn singular_values(&self) -> Vec<f64> {
        singular_values(&self.mat)
    }

    pub fn trace_norm(&self) -> f64 {
        trace_norm(&self.mat)
    }

    pub fn operator_norm(&self) -> f64 {
        operator_norm(&self.mat)
    }
}

impl From<HermitianOperator> for GeneralMatrix {
    fn from(h: HermitianOperator) -> Self {
        Self { mat: h.mat }
    }
}

pub fn max_abs_entry(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigendecomposition of a Hermitian operator, eigenvalues descending.
///
/// Ties keep the order in which the solver returned them.
pub fn eig_h(h: &HermitianOperator) -> Spectrum {
    let d = h.dim();
    let eig = SymmetricEigen::new(h.mat.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(d, d, |r, k| eig.eigenvectors[(r, order[k])]);
    Spectrum { values, vectors }
}

/// Projector onto the positive (strict) or non-negative (weak) eigenspace.
pub fn positive_part_projector(h: &HermitianOperator, mode: Mode) -> Projector {
    let spec = h.eig();
    let tau = spec.threshold();
    match mode {
        Mode::Strict => spec.projector_where(|v| v > tau),
        Mode::Weak => spec.projector_where(|v| v >= -tau),
    }
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut sv: Vec<f64> = SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Sum of singular values.
pub fn trace_norm(m: &CMat) -> f64 {
    singular_values(m).iter().sum()
}

/// Largest singular value.
pub fn operator_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Pseudo-inverse square root: eigenvalues above the zero threshold map to
/// `lambda^{-1/2}`, the rest to zero.
pub fn inv_sqrt_on_support(h: &HermitianOperator) -> Result<HermitianOperator> {
    let spec = h.eig();
    let tau = spec.threshold();
    let min = spec.min();
    if min < -tau {
        return Err(Error::NotPositive { min_eigenvalue: min });
    }
    Ok(spec.reassemble(|v| if v > tau { 1.0 / v.sqrt() } else { 0.0 }))
}

/// Kronecker product `A (x) B`.
pub fn tensor(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Partial trace of an operator on `C^{dims.0} (x) C^{dims.1}`.
pub fn partial_trace(
    h: &HermitianOperator,
    dims: (usize, usize),
    traced: Subsystem,
) -> Result<HermitianOperator> {
    let (da, db) = dims;
    if da == 0 || db == 0 || da * db != h.dim() {
        return Err(Error::shape(format!(
            "dimension {} does not factor as {da} x {db}",
            h.dim()
        )));
    }
    let m = h.matrix();
    let out = match traced {
        Subsystem::Second => CMat::from_fn(da, da, |a, a2| {
            (0..db).map(|b| m[(a * db + b, a2 * db + b)]).sum()
        }),
        Subsystem::First => CMat::from_fn(db, db, |b, b2| {
            (0..da).map(|a| m[(a * db + b, a * db + b2)]).sum()
        }),
    };
    Ok(HermitianOperator::from_symmetrized(out))
}
