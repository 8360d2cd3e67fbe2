//! Realification of complex Hermitian matrices and the index maps that lower
//! them onto real solver data.
//!
//! Two parameterizations appear here:
//!
//! * **hvec** — our packing of a Hermitian N×N matrix into N² reals: walking
//!   the upper triangle column-major, the diagonal contributes one slot per
//!   entry and each off-diagonal entry contributes (Re, Im) slots. hvec slots
//!   are the solver's decision variables for matrix unknowns.
//! * **svec** — the conic solver's scaled packing of a real symmetric d×d
//!   matrix into d(d+1)/2 reals (upper triangle column-major, off-diagonals
//!   ×√2), used for PSD cone slacks.
//!
//! The PSD constraint on a Hermitian H is enforced on its embedding
//! T(H) = [[Re H, −Im H], [Im H, Re H]], which is PSD exactly when H is.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::CMat;

use super::ConicError;

// Tolerance for declaring an input Hermitian, scaled by its magnitude.
const HERMITIAN_TOL: f64 = 1e-10;

/// Checks H = Hᴴ within 1e-10 (relative to the largest entry magnitude).
pub(crate) fn check_hermitian(h: &CMat) -> Result<(), String> {
    if h.nrows() != h.ncols() {
        return Err(format!("matrix is {}×{}, not square", h.nrows(), h.ncols()));
    }
    let scale = h.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for i in 0..h.nrows() {
        for j in i..h.ncols() {
            let asym = (h[(i, j)] - h[(j, i)].conj()).norm();
            if asym > HERMITIAN_TOL * scale {
                return Err(format!(
                    "entry ({i},{j}) differs from conjugate of ({j},{i}) by {asym:.3e}"
                ));
            }
        }
    }
    Ok(())
}

/// Realification T(H) = [[Re H, −Im H], [Im H, Re H]] of a Hermitian matrix.
///
/// T(H) is real symmetric, PSD iff H is PSD, with tr T(H) = 2·tr H and every
/// eigenvalue of H appearing twice.
pub fn embed_hermitian(h: &CMat) -> Result<DMatrix<f64>, ConicError> {
    check_hermitian(h).map_err(ConicError::Model)?;
    let n = h.nrows();
    let mut t = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            t[(i, j)] = z.re;
            t[(n + i, n + j)] = z.re;
            t[(i, n + j)] = -z.im;
            t[(n + i, j)] = z.im;
        }
    }
    Ok(t)
}

/// Inverse of [`embed_hermitian`]: recovers H from a 2N×2N embedding, averaging
/// the redundant blocks so roundoff asymmetry cancels.
pub fn extract_hermitian(t: &DMatrix<f64>) -> CMat {
    let n = t.nrows() / 2;
    CMat::from_fn(n, n, |i, j| {
        let re = 0.5 * (t[(i, j)] + t[(n + i, n + j)]);
        let im = 0.5 * (t[(n + i, j)] - t[(i, n + j)]);
        Complex::new(re, im)
    })
}

/// Which component of the Hermitian matrix a hvec slot stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SlotPart {
    Diag,
    Re,
    Im,
}

/// One hvec slot: component `part` of entry (i, j), i ≤ j.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HvecSlot {
    pub i: usize,
    pub j: usize,
    pub part: SlotPart,
}

/// Number of hvec slots for an n×n Hermitian matrix.
pub(crate) fn hvec_len(n: usize) -> usize {
    n * n
}

/// The hvec slot table in storage order.
pub(crate) fn hvec_slots(n: usize) -> Vec<HvecSlot> {
    let mut slots = Vec::with_capacity(hvec_len(n));
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                slots.push(HvecSlot { i, j, part: SlotPart::Diag });
            } else {
                slots.push(HvecSlot { i, j, part: SlotPart::Re });
                slots.push(HvecSlot { i, j, part: SlotPart::Im });
            }
        }
    }
    slots
}

/// Coefficient vector f with tr(C·H) = f · hvec(H) for Hermitian C.
pub(crate) fn hvec_functional(coeff: &CMat) -> Vec<f64> {
    let n = coeff.nrows();
    hvec_slots(n)
        .iter()
        .map(|slot| match slot.part {
            SlotPart::Diag => coeff[(slot.j, slot.j)].re,
            SlotPart::Re => 2.0 * coeff[(slot.i, slot.j)].re,
            SlotPart::Im => 2.0 * coeff[(slot.i, slot.j)].im,
        })
        .collect()
}

/// Packs a Hermitian matrix into its hvec coordinates (inverse of
/// [`hvec_to_matrix`], used by tests to cross-check the lowering).
#[cfg(test)]
pub(crate) fn matrix_to_hvec(h: &CMat) -> Vec<f64> {
    let n = h.nrows();
    hvec_slots(n)
        .iter()
        .map(|slot| match slot.part {
            SlotPart::Diag => h[(slot.j, slot.j)].re,
            SlotPart::Re => h[(slot.i, slot.j)].re,
            SlotPart::Im => h[(slot.i, slot.j)].im,
        })
        .collect()
}

/// Rebuilds the Hermitian matrix from hvec coordinates.
pub(crate) fn hvec_to_matrix(values: &[f64], n: usize) -> CMat {
    let mut h = CMat::zeros(n, n);
    for (slot, &v) in hvec_slots(n).iter().zip(values) {
        match slot.part {
            SlotPart::Diag => h[(slot.j, slot.j)] = Complex::new(v, 0.0),
            SlotPart::Re => {
                h[(slot.i, slot.j)].re = v;
                h[(slot.j, slot.i)].re = v;
            }
            SlotPart::Im => {
                h[(slot.i, slot.j)].im = v;
                h[(slot.j, slot.i)].im = -v;
            }
        }
    }
    h
}

/// The N² Hermitian coefficient matrices F_s with tr(F_s · H) = hvec(H)_s —
/// used to state entrywise linear constraints between matrix variables.
pub fn entry_functionals(n: usize) -> Vec<CMat> {
    hvec_slots(n)
        .iter()
        .map(|slot| {
            let mut f = CMat::zeros(n, n);
            match slot.part {
                SlotPart::Diag => f[(slot.j, slot.j)] = Complex::new(1.0, 0.0),
                SlotPart::Re => {
                    f[(slot.i, slot.j)] = Complex::new(0.5, 0.0);
                    f[(slot.j, slot.i)] = Complex::new(0.5, 0.0);
                }
                SlotPart::Im => {
                    f[(slot.i, slot.j)] = Complex::new(0.0, 0.5);
                    f[(slot.j, slot.i)] = Complex::new(0.0, -0.5);
                }
            }
            f
        })
        .collect()
}

/// svec length of the 2n×2n embedding of an n×n Hermitian matrix.
pub(crate) fn embedding_svec_len(n: usize) -> usize {
    let d = 2 * n;
    d * (d + 1) / 2
}

/// Linear map from hvec(H) to svec(T(H)): per svec row, the (hvec slot,
/// coefficient) pairs. Rows corresponding to the always-zero entries of the
/// embedding (diagonal of the skew block) come out empty.
pub(crate) fn psd_embedding_rows(n: usize) -> Vec<Vec<(usize, f64)>> {
    let d = 2 * n;
    let sqrt2 = std::f64::consts::SQRT_2;

    // Slot lookup tables: diag[i], re[(i,j)], im[(i,j)] for i < j.
    let mut diag = vec![0usize; n];
    let mut re = vec![vec![0usize; n]; n];
    let mut im = vec![vec![0usize; n]; n];
    for (idx, slot) in hvec_slots(n).iter().enumerate() {
        match slot.part {
            SlotPart::Diag => diag[slot.j] = idx,
            SlotPart::Re => re[slot.i][slot.j] = idx,
            SlotPart::Im => im[slot.i][slot.j] = idx,
        }
    }

    let mut rows = Vec::with_capacity(embedding_svec_len(n));
    for col in 0..d {
        for row in 0..=col {
            let mut entries = Vec::with_capacity(1);
            if row < n && col < n {
                // Block (1,1) = Re H.
                if row == col {
                    entries.push((diag[row], 1.0));
                } else {
                    entries.push((re[row][col], sqrt2));
                }
            } else if row >= n && col >= n {
                // Block (2,2) = Re H.
                let (p, q) = (row - n, col - n);
                if p == q {
                    entries.push((diag[p], 1.0));
                } else {
                    entries.push((re[p][q], sqrt2));
                }
            } else {
                // Block (1,2) = −Im H; row < n ≤ col here since row ≤ col.
                let (i, q) = (row, col - n);
                if i < q {
                    entries.push((im[i][q], -sqrt2));
                } else if i > q {
                    // −Im H[i][q] = +Im H[q][i] by Hermitian antisymmetry.
                    entries.push((im[q][i], sqrt2));
                }
                // i == q: −Im H[i][i] = 0 — empty row pins the slack to zero.
            }
            rows.push(entries);
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    const EXACT_TOL: f64 = 1e-10;

    fn random_hermitian(n: usize, rng: &mut ChaCha12Rng) -> CMat {
        let g = CMat::from_fn(n, n, |_, _| {
            Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        crate::linalg::hermitize(&g)
    }

    // Reference svec of a real symmetric matrix: upper triangle column-major,
    // off-diagonals scaled by √2.
    fn svec(t: &DMatrix<f64>) -> Vec<f64> {
        let d = t.nrows();
        let mut out = Vec::with_capacity(d * (d + 1) / 2);
        for col in 0..d {
            for row in 0..=col {
                if row == col {
                    out.push(t[(row, col)]);
                } else {
                    out.push(std::f64::consts::SQRT_2 * t[(row, col)]);
                }
            }
        }
        out
    }

    #[test]
    fn identity_embeds_to_identity() {
        let t = embed_hermitian(&CMat::identity(4, 4)).unwrap();
        assert_eq!(t, DMatrix::<f64>::identity(8, 8));
    }

    #[test]
    fn embedding_doubles_eigenvalues_of_a_skew_example() {
        // H = [[0, -j],[j, 0]] has eigenvalues ±1; the embedding has {±1, ±1}.
        let h = CMat::from_row_slice(
            2,
            2,
            &[
                Complex::new(0.0, 0.0),
                Complex::new(0.0, -1.0),
                Complex::new(0.0, 1.0),
                Complex::new(0.0, 0.0),
            ],
        );
        let t = embed_hermitian(&h).unwrap();
        let mut eigs: Vec<f64> = t.symmetric_eigen().eigenvalues.iter().cloned().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = [-1.0, -1.0, 1.0, 1.0];
        for (e, x) in eigs.iter().zip(expected) {
            assert_relative_eq!(*e, x, epsilon = 1e-9);
        }
    }

    #[test]
    fn embedding_doubles_the_trace() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let h = random_hermitian(5, &mut rng);
        let t = embed_hermitian(&h).unwrap();
        assert_relative_eq!(t.trace(), 2.0 * h.trace().re, max_relative = EXACT_TOL);
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let mut h = CMat::zeros(2, 2);
        h[(0, 1)] = Complex::new(1.0, 0.0);
        assert!(embed_hermitian(&h).is_err());
    }

    #[test]
    fn embedding_round_trips_to_high_accuracy() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let h = random_hermitian(6, &mut rng);
        let t = embed_hermitian(&h).unwrap();
        let back = extract_hermitian(&t);
        assert!((&h - &back).norm() < 1e-12);
        let t2 = embed_hermitian(&back).unwrap();
        assert!((&t - &t2).norm() < 1e-9);
    }

    #[test]
    fn quadratic_forms_agree_across_the_embedding() {
        // zᴴHz = [Re z; Im z]ᵀ T(H) [Re z; Im z] — no factor of 2 for forms.
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let n = 5;
        let h = random_hermitian(n, &mut rng);
        let z = nalgebra::DVector::<Complex<f64>>::from_fn(n, |_, _| {
            Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let complex_side = (z.adjoint() * &h * &z)[(0, 0)].re;

        let t = embed_hermitian(&h).unwrap();
        let mut stacked = nalgebra::DVector::<f64>::zeros(2 * n);
        for i in 0..n {
            stacked[i] = z[i].re;
            stacked[n + i] = z[i].im;
        }
        let real_side = (stacked.transpose() * &t * &stacked)[(0, 0)];
        assert_relative_eq!(complex_side, real_side, max_relative = EXACT_TOL);
    }

    #[test]
    fn hvec_functional_matches_complex_inner_product() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for n in [2, 4, 7] {
            let c = random_hermitian(n, &mut rng);
            let h = random_hermitian(n, &mut rng);
            let complex_side = (&c * &h).trace().re;
            let dot: f64 = hvec_functional(&c)
                .iter()
                .zip(matrix_to_hvec(&h))
                .map(|(a, b)| a * b)
                .sum();
            assert_relative_eq!(complex_side, dot, max_relative = EXACT_TOL);
        }
    }

    #[test]
    fn hvec_round_trips() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let h = random_hermitian(6, &mut rng);
        let packed = matrix_to_hvec(&h);
        assert_eq!(packed.len(), hvec_len(6));
        let back = hvec_to_matrix(&packed, 6);
        assert_eq!(h, back);
    }

    #[test]
    fn entry_functionals_extract_hvec_slots() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let n = 4;
        let h = random_hermitian(n, &mut rng);
        let packed = matrix_to_hvec(&h);
        for (f, expected) in entry_functionals(n).iter().zip(packed) {
            check_hermitian(f).unwrap();
            let value = (f * &h).trace().re;
            assert_relative_eq!(value, expected, max_relative = EXACT_TOL);
        }
    }

    #[test]
    fn psd_rows_reproduce_the_svec_of_the_embedding() {
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        for n in [2, 3, 5] {
            let h = random_hermitian(n, &mut rng);
            let packed = matrix_to_hvec(&h);
            let rows = psd_embedding_rows(n);
            assert_eq!(rows.len(), embedding_svec_len(n));
            let from_rows: Vec<f64> = rows
                .iter()
                .map(|row| row.iter().map(|&(slot, c)| c * packed[slot]).sum())
                .collect();
            let reference = svec(&embed_hermitian(&h).unwrap());
            for (a, b) in from_rows.iter().zip(reference) {
                assert_relative_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }
}
