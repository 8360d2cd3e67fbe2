//! Hermitian eigendecomposition helpers shared by the SCA driver and the
//! solution audits.
//!
//! Eigenpairs are returned in descending eigenvalue order with a deterministic
//! phase convention (largest-magnitude entry rotated to the positive real
//! axis), so repeated runs and regression tests see identical vectors even
//! though eigenvectors are only defined up to a unit phase.

use num_complex::Complex;

use crate::{CMat, CVec};

/// Eigenvalues (descending) and matching phase-normalized unit eigenvectors of
/// a Hermitian matrix.
pub fn sorted_hermitian_eigen(matrix: &CMat) -> (Vec<f64>, Vec<CVec>) {
    let n = matrix.nrows();
    debug_assert_eq!(n, matrix.ncols(), "eigendecomposition needs a square matrix");
    let eigen = matrix.clone().symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    // Descending by eigenvalue; ties keep the solver's original order.
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .expect("eigenvalues of a finite Hermitian matrix are finite")
    });

    let values: Vec<f64> = order.iter().map(|&i| eigen.eigenvalues[i]).collect();
    let vectors: Vec<CVec> = order
        .iter()
        .map(|&i| normalize_phase(eigen.eigenvectors.column(i).into_owned()))
        .collect();
    (values, vectors)
}

/// Largest eigenvalue and its phase-normalized unit eigenvector.
pub fn principal_eigenpair(matrix: &CMat) -> (f64, CVec) {
    let (values, mut vectors) = sorted_hermitian_eigen(matrix);
    (values[0], vectors.swap_remove(0))
}

/// Spectral norm ‖W‖₂ of a Hermitian PSD matrix: its largest eigenvalue.
pub fn spectral_norm_psd(matrix: &CMat) -> f64 {
    sorted_hermitian_eigen(matrix).0[0]
}

/// Nuclear norm ‖W‖₊ of a Hermitian PSD matrix: its trace.
pub fn nuclear_norm_psd(matrix: &CMat) -> f64 {
    matrix.trace().re
}

/// Symmetrizes solver output: (M + Mᴴ)/2, discarding asymmetry at roundoff level.
pub fn hermitize(matrix: &CMat) -> CMat {
    (matrix + matrix.adjoint()) * Complex::new(0.5, 0.0)
}

// Rotates a vector so its largest-magnitude entry (first such entry on ties)
// is real and positive, and rescales to unit norm.
fn normalize_phase(mut v: CVec) -> CVec {
    let mut pivot = 0;
    let mut best = 0.0;
    for (i, z) in v.iter().enumerate() {
        let mag = z.norm();
        if mag > best {
            best = mag;
            pivot = i;
        }
    }
    if best > 0.0 {
        let rotation = v[pivot].conj() / best;
        v *= rotation;
    }
    let norm = v.norm();
    if norm > 0.0 {
        v /= Complex::new(norm, 0.0);
    }
    v
}
