//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::DMatrix;

/// Matrix 2-norm (largest singular value). Zero for empty matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.is_square() && is_symmetric(m, 0.0) {
        return symmetric_spectral_radius(m);
    }
    match m.clone().try_svd(false, false, f64::EPSILON, MAX_ITERATIONS) {
        Some(svd) => svd.singular_values.max(),
        None => symmetric_spectral_radius(&(m.transpose() * m)).sqrt(),
    }
}

/// Cap on QR sweeps; nalgebra's defaults iterate without bound and can stall
/// on matrices with clustered eigenvalues.
const MAX_ITERATIONS: usize = 10_000;

/// `max |λ|` of a symmetric matrix.
pub fn symmetric_spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .try_symmetric_eigen(f64::EPSILON, MAX_ITERATIONS)
        .map(|e| e.eigenvalues.amax())
        .unwrap_or_else(|| gershgorin_bound(m))
}

/// Largest eigenvalue modulus of a square matrix. Falls back to the
/// Gershgorin bound if the Schur iteration does not converge.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral radius needs a square matrix");
    if m.is_empty() {
        return 0.0;
    }
    if is_symmetric(m, 0.0) {
        return symmetric_spectral_radius(m);
    }
    match m.clone().try_schur(f64::EPSILON, MAX_ITERATIONS) {
        Some(schur) => schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
        None => gershgorin_bound(m),
    }
}

/// Gershgorin bound: every eigenvalue lies in a row disk, so
/// `ρ(M) ≤ max_r (|m_rr| + Σ_{l≠r} |m_rl|)`.
pub fn gershgorin_bound(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "Gershgorin disks need a square matrix");
    (0..m.nrows())
        .map(|r| {
            let centre = m[(r, r)].abs();
            let radius: f64 = (0..m.ncols())
                .filter(|&l| l != r)
                .map(|l| m[(r, l)].abs())
                .sum();
            centre + radius
        })
        .fold(0.0, f64::max)
}

/// Smallest and largest singular values.
pub fn singular_value_range(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.clone().svd(false, false).singular_values;
    (sv.min(), sv.max())
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).iter().all(|v| v.abs() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -4.0]);
        assert!((spectral_norm(&m) - 4.0).abs() < 1e-12);
        assert!((spectral_radius(&m) - 4.0).abs() < 1e-12);
        assert!((gershgorin_bound(&m) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_has_complex_unit_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((spectral_radius(&m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gershgorin_dominates_radius() {
        let m = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, -0.1, 0.3, -0.7, 0.2, 0.0, 0.1, 0.9]);
        assert!(spectral_radius(&m) <= gershgorin_bound(&m) + 1e-12);
    }
}
