//! Complex Hermitian operators and the handful of spectral helpers the rest
//! of the crate is built on.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// A square complex matrix known to be Hermitian within `tol_herm`.
///
/// The stored matrix is exactly Hermitian: construction replaces the input
/// with `(H + H†)/2` once the deviation has been checked.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix, tol: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!(
                "operator is {}x{}, expected square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.nrows() == 0 {
            return Err(Error::Dimension("operator has dimension 0".into()));
        }
        let deviation = hermitian_deviation(&matrix);
        if deviation > tol * matrix.norm().max(1.0) {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self::symmetrized(matrix))
    }

    /// Like [`HermitianOperator::new`] but additionally requires `λ_min ≥ −tol_psd`.
    pub fn new_psd(matrix: CMatrix, tol_herm: f64, tol_psd: f64) -> Result<Self> {
        let op = Self::new(matrix, tol_herm)?;
        let min = op.min_eigenvalue();
        if min < -tol_psd * op.norm().max(1.0) {
            return Err(Error::NotPositive {
                min_eigenvalue: min,
            });
        }
        Ok(op)
    }

    /// Hermitian part of `matrix` without any check. Callers guarantee the
    /// input is Hermitian by construction (e.g. `A†A`).
    pub(crate) fn symmetrized(matrix: CMatrix) -> Self {
        let adj = matrix.adjoint();
        Self {
            matrix: (matrix + adj).scale(0.5),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        Self { matrix: m }
    }

    /// `|ψ⟩⟨ψ|` for an arbitrary (not necessarily normalized) vector.
    pub fn projector(psi: &[Complex64]) -> Self {
        let n = psi.len();
        let m = CMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj());
        Self::symmetrized(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            matrix: self.matrix.map(|z| z * s),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            matrix: &self.matrix + &other.matrix,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            matrix: &self.matrix - &other.matrix,
        }
    }

    /// `Tr[AB]`, real for Hermitian pairs.
    pub fn trace_product(&self, other: &Self) -> f64 {
        // Tr[AB] = Σ_ij A_ij B_ji = Σ_ij A_ij conj(B_ij) for Hermitian B.
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Number of eigenvalues above `tol · λ_max`.
    pub fn rank(&self, tol: f64) -> usize {
        let ev = self.eigenvalues();
        let top = ev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        ev.iter()
            .filter(|v| v.abs() > tol * top.max(f64::MIN_POSITIVE))
            .count()
    }

    pub fn is_psd(&self, tol_psd: f64) -> bool {
        self.min_eigenvalue() >= -tol_psd * self.norm().max(1.0)
    }

    /// Unit-trace rescaling. Fails on (numerically) zero trace.
    pub fn normalized(&self) -> Result<Self> {
        let t = self.trace();
        if t.abs() <= f64::EPSILON * self.norm().max(1.0) {
            return Err(Error::ZeroOperator);
        }
        Ok(self.scale(1.0 / t))
    }

    /// True when the operator is proportional to the identity.
    pub fn is_proportional_to_identity(&self, tol: f64) -> bool {
        let d = self.dim() as f64;
        let mean = self.trace() / d;
        let diff = &self.matrix - CMatrix::identity(self.dim(), self.dim()).map(|z| z * mean);
        diff.norm() <= tol * self.norm().max(f64::MIN_POSITIVE)
    }
}

pub(crate) fn hermitian_deviation(m: &CMatrix) -> f64 {
    let diff = m - m.adjoint();
    diff.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Checks a raw matrix against the Hermitian (and optionally PSD) invariants.
///
/// `dim` is the size the caller declared; a mismatch with the entries is an
/// error rather than a `false`.
pub fn validate_hermitian(
    dim: usize,
    entries: &CMatrix,
    tol: f64,
    require_psd: bool,
    tol_psd: f64,
) -> Result<bool> {
    if entries.nrows() != dim || entries.ncols() != dim {
        return Err(Error::Dimension(format!(
            "declared dim {dim} but entries are {}x{}",
            entries.nrows(),
            entries.ncols()
        )));
    }
    if dim == 0 {
        return Err(Error::Dimension("dim must be at least 1".into()));
    }
    if hermitian_deviation(entries) > tol * entries.norm().max(1.0) {
        return Ok(false);
    }
    if require_psd {
        let op = HermitianOperator::symmetrized(entries.clone());
        return Ok(op.is_psd(tol_psd));
    }
    Ok(true)
}

/// Returns `λ > 0` with `‖A − λB‖_F ≤ tol·‖A‖_F`, if one exists.
pub fn proportionality(
    a: &HermitianOperator,
    b: &HermitianOperator,
    tol: f64,
) -> Result<Option<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "proportionality of {}x{} and {}x{}",
            a.dim(),
            a.dim(),
            b.dim(),
            b.dim()
        )));
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroOperator);
    }
    let lambda = a.trace_product(b) / b.trace_product(b);
    if lambda <= 0.0 {
        return Ok(None);
    }
    let residual = (a.matrix() - b.matrix().map(|z| z * lambda)).norm();
    Ok((residual <= tol * na).then_some(lambda))
}

/// Convenience wrapper treating zero operands as non-proportional.
pub(crate) fn are_proportional(a: &HermitianOperator, b: &HermitianOperator, tol: f64) -> bool {
    matches!(proportionality(a, b, tol), Ok(Some(_)))
}

/// Kronecker product in party order `1…P`.
pub fn tensor_all(locals: &[HermitianOperator]) -> Result<HermitianOperator> {
    let (first, rest) = locals
        .split_first()
        .ok_or_else(|| Error::Dimension("tensor product of an empty list".into()))?;
    let m = rest
        .iter()
        .fold(first.matrix().clone(), |acc, op| acc.kronecker(op.matrix()));
    Ok(HermitianOperator { matrix: m })
}

/// Eigen-decomposition of the Hermitian part of `m` (ascending eigenvalues).
pub(crate) fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let herm = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(herm);
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub(crate) fn spectral_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = hermitian_eigen(m);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        let fv = f(*v);
        for i in 0..n {
            scaled[(i, j)] *= fv;
        }
    }
    scaled * vecs.adjoint()
}

/// Principal square root of a PSD matrix; slightly negative eigenvalues are clamped.
pub(crate) fn psd_sqrt(m: &CMatrix) -> CMatrix {
    spectral_map(m, |v| v.max(0.0).sqrt())
}

pub(crate) fn dagger_times(a: &CMatrix) -> CMatrix {
    a.adjoint() * a
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn projector_is_valid() {
        let m = dmatrix![c(1.0, 0.0), c(0.0, 0.0); c(0.0, 0.0), c(0.0, 0.0)];
        assert!(validate_hermitian(2, &m, 1e-10, true, 1e-9).unwrap());
    }

    #[test]
    fn upper_triangular_is_not_hermitian() {
        let m = dmatrix![c(0.0, 0.0), c(1.0, 0.0); c(0.0, 0.0), c(0.0, 0.0)];
        assert!(!validate_hermitian(2, &m, 1e-10, false, 1e-9).unwrap());
    }

    #[test]
    fn indefinite_fails_psd_flag() {
        // Eigenvalues (0.5 ± 2.5)/2 = {1.5, −1}.
        let m = dmatrix![c(1.0, 0.0), c(0.0, 1.0); c(0.0, -1.0), c(-0.5, 0.0)];
        assert!(validate_hermitian(2, &m, 1e-10, false, 1e-9).unwrap());
        assert!(!validate_hermitian(2, &m, 1e-10, true, 1e-9).unwrap());
        let ev = HermitianOperator::new(m, 1e-10).unwrap().eigenvalues();
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn declared_dim_mismatch_is_error() {
        let m = CMatrix::identity(2, 2);
        assert!(validate_hermitian(3, &m, 1e-10, false, 1e-9).is_err());
    }

    #[test]
    fn proportionality_examples() {
        let a = HermitianOperator::from_real_diagonal(&[1.0, 0.0]);
        let b = HermitianOperator::from_real_diagonal(&[2.0, 0.0]);
        let l = proportionality(&a, &b, 1e-10).unwrap().unwrap();
        assert!((l - 0.5).abs() < 1e-15);

        let e1 = HermitianOperator::from_real_diagonal(&[0.0, 1.0]);
        assert_eq!(proportionality(&a, &e1, 1e-10).unwrap(), None);

        let i2 = HermitianOperator::identity(2);
        let l = proportionality(&i2, &i2.scale(3.0), 1e-10)
            .unwrap()
            .unwrap();
        assert!((l - 1.0 / 3.0).abs() < 1e-15);

        assert!(matches!(
            proportionality(&a, &a.scale(0.0), 1e-10),
            Err(Error::ZeroOperator)
        ));
        // negative multiples are not rays of the same cone
        assert_eq!(proportionality(&a, &a.scale(-1.0), 1e-10).unwrap(), None);
    }

    #[test]
    fn tensor_examples() {
        let p0 = HermitianOperator::from_real_diagonal(&[1.0, 0.0]);
        let t = tensor_all(&[p0.clone(), p0.clone()]).unwrap();
        assert_eq!(
            t,
            HermitianOperator::from_real_diagonal(&[1.0, 0.0, 0.0, 0.0])
        );

        let i2 = HermitianOperator::identity(2);
        assert_eq!(
            tensor_all(&[i2.clone(), i2]).unwrap(),
            HermitianOperator::identity(4)
        );

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = HermitianOperator::projector(&[c(s, 0.0), c(s, 0.0)]);
        let t = tensor_all(&[plus, p0]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if [0, 2].contains(&i) && [0, 2].contains(&j) {
                    0.5
                } else {
                    0.0
                };
                assert!((t.matrix()[(i, j)] - c(expected, 0.0)).norm() < 1e-15);
            }
        }
        assert!(tensor_all(&[]).is_err());
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = dmatrix![c(2.0, 0.0), c(0.5, 0.5); c(0.5, -0.5), c(1.0, 0.0)];
        let r = psd_sqrt(&m);
        assert!((&r * &r - &m).norm() < 1e-12);
    }
}
