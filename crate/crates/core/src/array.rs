//! Uniform-linear-array geometry: steering vectors, desired beampatterns,
//! achieved beampatterns, and the beampattern-matching error.
//!
//! All interfaces speak degrees; radians appear only inside the trigonometric
//! evaluations. Grids include both endpoints −90° and +90°.

use num_complex::Complex;
use thiserror::Error;

use crate::scenario::ScenarioConfig;
use crate::{CMat, CVec};

/// Errors from grid construction and beampattern evaluation.
#[derive(Debug, Error)]
pub enum ArrayError {
    #[error("grid spacing must be > 0, got {0}")]
    NonPositiveSpacing(f64),
    #[error("grid spacing {0}° does not divide the 180° span evenly")]
    UnevenSpacing(f64),
    #[error("beampattern value {min_value:.3e} below -feas_tol; covariance is not PSD")]
    NotPsd { min_value: f64 },
    #[error("desired pattern is identically zero; scale is undefined")]
    ZeroDesired,
}

/// Angular evaluation grid over [−90°, 90°], endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid {
    angles_deg: Vec<f64>,
}

impl AngularGrid {
    /// Builds the uniform grid −90°, −90°+spacing, …, +90°.
    pub fn from_spacing(spacing_deg: f64) -> Result<Self, ArrayError> {
        if !(spacing_deg > 0.0) {
            return Err(ArrayError::NonPositiveSpacing(spacing_deg));
        }
        let steps = 180.0 / spacing_deg;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(ArrayError::UnevenSpacing(spacing_deg));
        }
        let n_steps = steps.round() as usize;
        let mut angles_deg: Vec<f64> =
            (0..=n_steps).map(|i| -90.0 + i as f64 * spacing_deg).collect();
        // Pin the endpoint exactly regardless of accumulated rounding.
        *angles_deg.last_mut().expect("grid has at least two points") = 90.0;
        Ok(Self { angles_deg })
    }

    /// Grid angles in degrees.
    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    /// Number of grid points L.
    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    /// True when the grid is empty (never the case for constructed grids).
    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }
}

/// Rectangular desired beampattern: 1 inside a window around each target, 0 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredPattern {
    /// φ(θ_l) per grid point, each 0 or 1.
    pub values: Vec<f64>,
    /// Target directions the windows were built from (degrees).
    pub target_directions: Vec<f64>,
    /// Window width Δ (degrees).
    pub beam_width: f64,
}

/// Precomputed steering vectors a(θ_l) for every grid angle.
#[derive(Debug, Clone)]
pub struct SteeringMatrix {
    /// One length-N steering vector per grid point.
    pub columns: Vec<CVec>,
}

impl SteeringMatrix {
    /// Evaluates the steering vector at every grid angle.
    pub fn new(grid: &AngularGrid, n_antennas: usize, spacing_ratio: f64) -> Self {
        let columns = grid
            .angles_deg()
            .iter()
            .map(|&theta| steering_vector(theta, n_antennas, spacing_ratio))
            .collect();
        Self { columns }
    }

    /// Outer products a(θ_l)·a(θ_l)ᴴ, the per-angle coefficient matrices of the
    /// beampattern seen as a linear functional of the covariance.
    pub fn outer_products(&self) -> Vec<CMat> {
        self.columns.iter().map(|a| a * a.adjoint()).collect()
    }
}

/// Steering vector of an N-element ULA toward `theta_deg`:
/// entry n = exp(j·2π·(d/λ)·n·sin θ).
pub fn steering_vector(theta_deg: f64, n_antennas: usize, spacing_ratio: f64) -> CVec {
    let sin_theta = theta_deg.to_radians().sin();
    CVec::from_iterator(
        n_antennas,
        (0..n_antennas).map(|n| {
            let phase = 2.0 * std::f64::consts::PI * spacing_ratio * n as f64 * sin_theta;
            Complex::from_polar(1.0, phase)
        }),
    )
}

/// Builds the rectangular desired pattern: φ(θ_l) = 1 iff θ_l lies within Δ/2
/// of some target (closed windows, overlaps merged by the union).
pub fn desired_pattern(grid: &AngularGrid, targets: &[f64], beam_width: f64) -> DesiredPattern {
    let half = beam_width / 2.0;
    let values = grid
        .angles_deg()
        .iter()
        .map(|&theta| {
            let inside = targets.iter().any(|&phi| theta >= phi - half && theta <= phi + half);
            if inside {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    DesiredPattern {
        values,
        target_directions: targets.to_vec(),
        beam_width,
    }
}

// Raw beampattern values a(θ_l)ᴴ R a(θ_l) without PSD checking; the imaginary
// part vanishes for Hermitian R so only the real part is kept.
fn raw_power(covariance: &CMat, steering: &SteeringMatrix) -> Vec<f64> {
    steering
        .columns
        .iter()
        .map(|a| (a.adjoint() * covariance * a)[(0, 0)].re)
        .collect()
}

/// Transmit beampattern P(θ_l) = a(θ_l)ᴴ R a(θ_l) over the grid.
///
/// Values more negative than −feas_tol signal a non-PSD covariance and are an
/// error; tiny negatives within the tolerance are clamped to zero.
pub fn beampattern(
    covariance: &CMat,
    steering: &SteeringMatrix,
    feas_tol: f64,
) -> Result<Vec<f64>, ArrayError> {
    let raw = raw_power(covariance, steering);
    let min_value = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_value < -feas_tol {
        return Err(ArrayError::NotPsd { min_value });
    }
    Ok(raw.into_iter().map(|p| p.max(0.0)).collect())
}

/// Beampattern-matching error Σ_l |δ·φ(θ_l) − P(θ_l)|².
pub fn matching_error(
    delta: f64,
    covariance: &CMat,
    desired: &DesiredPattern,
    steering: &SteeringMatrix,
) -> f64 {
    debug_assert_eq!(desired.values.len(), steering.columns.len());
    raw_power(covariance, steering)
        .iter()
        .zip(&desired.values)
        .map(|(p, phi)| {
            let diff = delta * phi - p;
            diff * diff
        })
        .sum()
}

/// Closed-form minimizer of the matching error over the scale δ ≥ 0:
/// δ* = max(0, Σφ·P / Σφ²).
pub fn optimal_scale(
    covariance: &CMat,
    desired: &DesiredPattern,
    steering: &SteeringMatrix,
) -> Result<f64, ArrayError> {
    let denom: f64 = desired.values.iter().map(|phi| phi * phi).sum();
    if denom == 0.0 {
        return Err(ArrayError::ZeroDesired);
    }
    let numer: f64 = raw_power(covariance, steering)
        .iter()
        .zip(&desired.values)
        .map(|(p, phi)| phi * p)
        .sum();
    Ok((numer / denom).max(0.0))
}

/// dB floor applied when exporting beampatterns: values below 1e-12 clamp to −120 dB.
pub fn power_db(power_linear: f64) -> f64 {
    10.0 * power_linear.max(1e-12).log10()
}

/// Grid, steering vectors, their outer products, and the desired pattern for one
/// scenario — everything angle-dependent that programs and audits share.
#[derive(Debug, Clone)]
pub struct DesignContext {
    pub grid: AngularGrid,
    pub steering: SteeringMatrix,
    /// a(θ_l)·a(θ_l)ᴴ per grid point, reused as objective coefficients.
    pub steering_outer: Vec<CMat>,
    pub desired: DesiredPattern,
}

impl DesignContext {
    /// Precomputes the angular context for a scenario.
    pub fn from_config(config: &ScenarioConfig) -> Result<Self, ArrayError> {
        let grid = AngularGrid::from_spacing(config.grid_spacing)?;
        let steering = SteeringMatrix::new(&grid, config.n_antennas, config.antenna_spacing_ratio);
        let steering_outer = steering.outer_products();
        let desired = desired_pattern(&grid, &config.target_directions, config.beam_width);
        Ok(Self { grid, steering, steering_outer, desired })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Tolerance for identities that hold exactly up to floating-point roundoff.
    const EXACT_TOL: f64 = 1e-10;

    fn default_context() -> DesignContext {
        DesignContext::from_config(&ScenarioConfig::default()).unwrap()
    }

    fn random_psd(n: usize, rng: &mut ChaCha12Rng) -> CMat {
        let g = CMat::from_fn(n, n, |_, _| {
            Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        &g * g.adjoint()
    }

    #[test]
    fn grid_covers_span_with_exact_endpoints() {
        let grid = AngularGrid::from_spacing(1.0).unwrap();
        assert_eq!(grid.len(), 181);
        assert_eq!(grid.angles_deg()[0], -90.0);
        assert_eq!(*grid.angles_deg().last().unwrap(), 90.0);
        assert!(grid.angles_deg().windows(2).all(|w| w[1] > w[0]));

        assert!(AngularGrid::from_spacing(0.7).is_err());
        assert!(AngularGrid::from_spacing(0.0).is_err());
    }

    #[test]
    fn steering_vector_matches_phase_formula() {
        let broadside = steering_vector(0.0, 8, 0.5);
        for entry in broadside.iter() {
            assert_relative_eq!(entry.re, 1.0, max_relative = EXACT_TOL);
            assert!(entry.im.abs() < EXACT_TOL);
        }

        // sin(90°) = 1: second element is exp(jπ) = −1.
        let endfire = steering_vector(90.0, 2, 0.5);
        assert_relative_eq!(endfire[1].re, -1.0, max_relative = EXACT_TOL);
        assert!(endfire[1].im.abs() < EXACT_TOL);

        // sin(30°) = 0.5: second element is exp(jπ/2) = j.
        let oblique = steering_vector(30.0, 2, 0.5);
        assert!(oblique[1].re.abs() < EXACT_TOL);
        assert_relative_eq!(oblique[1].im, 1.0, max_relative = EXACT_TOL);
    }

    #[test]
    fn steering_entries_have_unit_modulus_and_unit_first_entry() {
        let ctx = default_context();
        for a in &ctx.steering.columns {
            assert_eq!(a[0], Complex::new(1.0, 0.0));
            for entry in a.iter() {
                assert_relative_eq!(entry.norm(), 1.0, max_relative = EXACT_TOL);
            }
        }
    }

    #[test]
    fn desired_pattern_windows_match_target_setup() {
        let ctx = default_context();
        let at = |theta: f64| {
            let idx = ctx.grid.angles_deg().iter().position(|&t| t == theta).unwrap();
            ctx.desired.values[idx]
        };
        assert_eq!(at(0.0), 1.0);
        assert_eq!(at(5.0), 1.0);
        assert_eq!(at(30.0), 0.0);
        assert_eq!(at(-58.0), 1.0);

        // Three closed 10°-wide windows on a 1° grid: 3 × 11 = 33 ones.
        let ones = ctx.desired.values.iter().filter(|&&v| v == 1.0).count();
        assert_eq!(ones, 33);
        assert_eq!(ctx.desired.values.len() - ones, 148);
    }

    #[test]
    fn desired_pattern_edge_cases() {
        let grid = AngularGrid::from_spacing(1.0).unwrap();
        let empty = desired_pattern(&grid, &[], 10.0);
        assert!(empty.values.iter().all(|&v| v == 0.0));

        let full = desired_pattern(&grid, &[0.0], 180.0);
        assert!(full.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn beampattern_of_identity_is_antenna_count() {
        let ctx = default_context();
        let identity = CMat::identity(8, 8);
        let p = beampattern(&identity, &ctx.steering, 1e-6).unwrap();
        for v in &p {
            assert_relative_eq!(*v, 8.0, max_relative = EXACT_TOL);
        }

        let scaled = identity * Complex::new(0.1 / 8.0, 0.0);
        let p = beampattern(&scaled, &ctx.steering, 1e-6).unwrap();
        for v in &p {
            assert_relative_eq!(*v, 0.1, max_relative = EXACT_TOL);
        }
    }

    #[test]
    fn beampattern_of_steered_rank_one_peaks_at_n_squared() {
        let ctx = default_context();
        let a0 = steering_vector(0.0, 8, 0.5);
        let r = &a0 * a0.adjoint();
        let p = beampattern(&r, &ctx.steering, 1e-6).unwrap();
        let broadside = ctx.grid.angles_deg().iter().position(|&t| t == 0.0).unwrap();
        assert_relative_eq!(p[broadside], 64.0, max_relative = EXACT_TOL);
    }

    #[test]
    fn beampattern_rejects_covariances_with_negative_power() {
        let ctx = default_context();
        // −I yields aᴴRa = −8 at every angle: clearly not a covariance.
        let neg = CMat::identity(8, 8) * Complex::new(-1.0, 0.0);
        match beampattern(&neg, &ctx.steering, 1e-6) {
            Err(ArrayError::NotPsd { min_value }) => {
                assert_relative_eq!(min_value, -8.0, max_relative = 1e-12);
            }
            other => panic!("expected NotPsd, got {other:?}"),
        }
        // Indefinite but with nonnegative power along every steering vector:
        // accepted, because the check is on evaluated powers.
        let mut skewed = CMat::identity(8, 8);
        skewed[(0, 0)] = Complex::new(-1.0, 0.0);
        assert!(beampattern(&skewed, &ctx.steering, 1e-6).is_ok());
    }

    #[test]
    fn beampattern_is_linear_in_the_covariance() {
        let ctx = default_context();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..5 {
            let r1 = random_psd(8, &mut rng);
            let r2 = random_psd(8, &mut rng);
            let p1 = beampattern(&r1, &ctx.steering, 1e-6).unwrap();
            let p2 = beampattern(&r2, &ctx.steering, 1e-6).unwrap();
            let p_sum = beampattern(&(&r1 + &r2), &ctx.steering, 1e-6).unwrap();
            for l in 0..p_sum.len() {
                assert_relative_eq!(p_sum[l], p1[l] + p2[l], max_relative = EXACT_TOL);
            }
        }
    }

    #[test]
    fn beampattern_sum_matches_trace_identity() {
        // Σ_l a_l^H R a_l = tr(R · Σ_l a_l a_l^H).
        let ctx = default_context();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let r = random_psd(8, &mut rng);
        let lhs: f64 = beampattern(&r, &ctx.steering, 1e-6).unwrap().iter().sum();
        let grid_operator = ctx
            .steering_outer
            .iter()
            .fold(CMat::zeros(8, 8), |acc, outer| acc + outer);
        let rhs = (&r * &grid_operator).trace().re;
        assert_relative_eq!(lhs, rhs, max_relative = EXACT_TOL);
    }

    #[test]
    fn matching_error_vanishes_on_exact_flat_match() {
        let grid = AngularGrid::from_spacing(1.0).unwrap();
        let steering = SteeringMatrix::new(&grid, 8, 0.5);
        let flat = desired_pattern(&grid, &[0.0], 180.0);
        let covariance = CMat::identity(8, 8) * Complex::new(0.1 / 8.0, 0.0);
        let err = matching_error(0.1, &covariance, &flat, &steering);
        assert!(err < 1e-30, "flat pattern should match exactly, got {err}");

        let zero = CMat::zeros(8, 8);
        assert_eq!(matching_error(0.0, &zero, &flat, &steering), 0.0);
    }

    #[test]
    fn matching_error_counts_out_of_window_grid_points() {
        // δ·φ matches the flat pattern exactly inside the 33 window points, so the
        // error is δ² on each of the remaining 148 points: 148·(0.1)² = 1.48.
        let ctx = default_context();
        let covariance = CMat::identity(8, 8) * Complex::new(0.1 / 8.0, 0.0);
        let err = matching_error(0.1, &covariance, &ctx.desired, &ctx.steering);
        assert_relative_eq!(err, 1.48, max_relative = 1e-12);
    }

    #[test]
    fn optimal_scale_closed_form_cases() {
        let grid = AngularGrid::from_spacing(1.0).unwrap();
        let steering = SteeringMatrix::new(&grid, 8, 0.5);
        let flat = desired_pattern(&grid, &[0.0], 180.0);

        let covariance = CMat::identity(8, 8) * Complex::new(0.1 / 8.0, 0.0);
        let scale = optimal_scale(&covariance, &flat, &steering).unwrap();
        assert_relative_eq!(scale, 0.1, max_relative = EXACT_TOL);

        let zero = CMat::zeros(8, 8);
        assert_eq!(optimal_scale(&zero, &flat, &steering).unwrap(), 0.0);

        let none = desired_pattern(&grid, &[], 10.0);
        assert!(matches!(
            optimal_scale(&covariance, &none, &steering),
            Err(ArrayError::ZeroDesired)
        ));
    }

    #[test]
    fn optimal_scale_matches_grid_search_oracle() {
        let ctx = default_context();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..3 {
            let r = random_psd(8, &mut rng);
            let p = beampattern(&r, &ctx.steering, 1e-6).unwrap();
            let p_max = p.iter().cloned().fold(0.0, f64::max);

            // Brute-force search over δ ∈ [0, 2·max P] with step 1e-4·max P.
            let step = 1e-4 * p_max;
            let mut best_delta = 0.0;
            let mut best_err = f64::INFINITY;
            let mut delta = 0.0;
            while delta <= 2.0 * p_max {
                let err = matching_error(delta, &r, &ctx.desired, &ctx.steering);
                if err < best_err {
                    best_err = err;
                    best_delta = delta;
                }
                delta += step;
            }

            let closed_form = optimal_scale(&r, &ctx.desired, &ctx.steering).unwrap();
            assert_relative_eq!(closed_form, best_delta, max_relative = 1e-3);

            // And the closed form is never beaten by any sampled δ.
            let err_at_optimum = matching_error(closed_form, &r, &ctx.desired, &ctx.steering);
            assert!(err_at_optimum <= best_err * (1.0 + 1e-12));
        }
    }

    #[test]
    fn matching_error_scales_with_the_covariance() {
        let ctx = default_context();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let r = random_psd(8, &mut rng);
        let c = 3.25;
        let scaled = &r * Complex::new(c, 0.0);
        let delta = 0.7;

        // Error of (δ, c·R) equals Σ (δφ − c·P)² computed from the base pattern.
        let p = beampattern(&r, &ctx.steering, 1e-6).unwrap();
        let manual: f64 = p
            .iter()
            .zip(&ctx.desired.values)
            .map(|(pi, phi)| {
                let diff = delta * phi - c * pi;
                diff * diff
            })
            .sum();
        let direct = matching_error(delta, &scaled, &ctx.desired, &ctx.steering);
        assert_relative_eq!(direct, manual, max_relative = EXACT_TOL);
    }

    #[test]
    fn power_db_floors_at_minus_120() {
        assert_eq!(power_db(0.0), -120.0);
        assert_eq!(power_db(1e-15), -120.0);
        assert_relative_eq!(power_db(1.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(power_db(0.1), -10.0, max_relative = 1e-12);
    }
}
