//! Scenario configuration, unit conversions, and deterministic channel generation.
//!
//! Everything downstream works in linear units (watts); decibel quantities are
//! converted once at the configuration boundary. Channel realizations are drawn
//! from a counter-based stream cipher RNG so that realization `r` is reproducible
//! without generating realizations `0..r`, which keeps parallel Monte Carlo
//! sweeps deterministic.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::CVec;

/// Physical scenario: array, users, sensing targets, powers, and rate floors.
///
/// Defaults reproduce the evaluation setup: an 8-antenna half-wavelength ULA
/// serving 5 users with one virtual sensing beam, three targets at ±60° and 0°
/// with 10°-wide desired beams, 20 dBm transmit power, −80 dBm noise, 80 dB
/// pathloss, and a 4.5 bits/s/Hz per-user rate floor.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Number of transmit antennas N.
    pub n_antennas: usize,
    /// Number of downlink users K.
    pub n_users: usize,
    /// Number of virtual (information-embedded) sensing beams M.
    pub n_virtual_beams: usize,
    /// Sensing target directions in degrees, strictly inside (−90°, 90°).
    pub target_directions: Vec<f64>,
    /// Desired beam width Δ in degrees around each target.
    pub beam_width: f64,
    /// Angular grid spacing in degrees; must divide the 180° span evenly.
    pub grid_spacing: f64,
    /// Transmit power budget in dBm.
    pub tx_power_dbm: f64,
    /// Receiver noise power in dBm.
    pub noise_power_dbm: f64,
    /// Large-scale pathloss in dB applied to every channel entry.
    pub pathloss_db: f64,
    /// Per-user minimum rate R_min in bits/s/Hz.
    pub min_rate_bits: f64,
    /// Antenna spacing over wavelength, d/λ.
    pub antenna_spacing_ratio: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_antennas: 8,
            n_users: 5,
            n_virtual_beams: 1,
            target_directions: vec![-60.0, 0.0, 60.0],
            beam_width: 10.0,
            grid_spacing: 1.0,
            tx_power_dbm: 20.0,
            noise_power_dbm: -80.0,
            pathloss_db: 80.0,
            min_rate_bits: 4.5,
            antenna_spacing_ratio: 0.5,
        }
    }
}

impl ScenarioConfig {
    /// Transmit power budget in watts.
    pub fn tx_power_watts(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    /// Noise power in watts.
    pub fn noise_power_watts(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }

    /// Per-entry channel variance 10^(−pathloss/10) (linear power scale).
    pub fn channel_variance(&self) -> f64 {
        10f64.powf(-self.pathloss_db / 10.0)
    }
}

/// Tolerances and iteration controls for the penalized SCA loop and the conic solver.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Initial penalty factor ρ.
    pub rho_init: f64,
    /// Geometric reduction factor ε applied to ρ after each outer pass, in (0, 1).
    pub rho_factor: f64,
    /// Outer-loop termination threshold ε₁ on the penalty value.
    pub penalty_tol: f64,
    /// Inner-loop threshold ε₂ on the fractional reduction of the penalized objective.
    pub inner_tol: f64,
    /// Cap on inner (Taylor-point) iterations per outer pass.
    pub max_inner_iters: usize,
    /// Cap on outer (ρ-reduction) passes.
    pub max_outer_iters: usize,
    /// λ₂/λ₁ threshold below which a lifted matrix counts as rank one.
    pub rank_tol: f64,
    /// Absolute feasibility slack for audits on normalized quantities.
    pub feas_tol: f64,
    /// Accuracy contract for conic solves: certified-optimal solutions have
    /// residuals and relative duality gap within this bound. The solver is
    /// asked for more internally; this is the guarantee downstream checks
    /// (objective comparisons, lifted-form margins) may rely on.
    pub solver_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho_init: 100.0,
            rho_factor: 0.2,
            penalty_tol: 1e-4,
            inner_tol: 1e-2,
            max_inner_iters: 30,
            max_outer_iters: 20,
            rank_tol: 1e-3,
            feas_tol: 1e-6,
            solver_tol: 1e-5,
        }
    }
}

/// One draw of the K downlink channels (pathloss included, linear amplitude).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Channel vectors h_k, one complex N-vector per user.
    pub channels: Vec<CVec>,
    /// Which Monte Carlo realization this is.
    pub realization_index: u64,
    /// Base seed the stream was derived from.
    pub seed: u64,
}

impl ChannelSet {
    /// Stable content hash (FNV-1a over the raw entry bits), used to confirm
    /// that schemes inside one Monte Carlo cell really share a channel draw.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut absorb = |bits: u64| {
            for byte in bits.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        absorb(self.seed);
        absorb(self.realization_index);
        for ch in &self.channels {
            for z in ch.iter() {
                absorb(z.re.to_bits());
                absorb(z.im.to_bits());
            }
        }
        h
    }
}

/// Converts a dBm power to watts: 10^((p−30)/10).
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// Converts a power in watts back to dBm: 10·log10(p) + 30.
pub fn watts_to_dbm(p_watts: f64) -> f64 {
    10.0 * p_watts.log10() + 30.0
}

/// Draws the K Rayleigh-fading channels for one Monte Carlo realization.
///
/// Entries are i.i.d. circularly symmetric complex Gaussian with per-entry
/// variance 10^(−pathloss/10). The generator is keyed by `seed` and positioned
/// on stream `realization_index`, so every (seed, index) pair is an independent,
/// bit-reproducible draw regardless of evaluation order.
pub fn generate_channels(config: &ScenarioConfig, seed: u64, realization_index: u64) -> ChannelSet {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(realization_index);
    // Per-component std dev: variance splits evenly across real and imaginary parts.
    let component_std = (config.channel_variance() / 2.0).sqrt();
    let channels = (0..config.n_users)
        .map(|_| {
            CVec::from_iterator(
                config.n_antennas,
                (0..config.n_antennas).map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex::new(re * component_std, im * component_std)
                }),
            )
        })
        .collect();
    ChannelSet { channels, realization_index, seed }
}

/// A single configuration-invariant violation, tied to the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Name of the configuration field that failed validation.
    pub field: &'static str,
    /// Human-readable description of the violated invariant.
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every invariant of a scenario + solver configuration pair.
///
/// Returns all violations at once rather than stopping at the first, so a bad
/// config file can be fixed in one pass.
pub fn validate_config(scenario: &ScenarioConfig, solver: &SolverConfig) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let mut check = |ok: bool, field: &'static str, message: String| {
        if !ok {
            violations.push(Violation { field, message });
        }
    };

    check(scenario.n_antennas >= 1, "n_antennas", "must be ≥ 1".into());
    check(scenario.n_users >= 1, "n_users", "must be ≥ 1".into());
    check(scenario.n_virtual_beams >= 1, "n_virtual_beams", "must be ≥ 1".into());
    for (i, &dir) in scenario.target_directions.iter().enumerate() {
        check(
            dir.is_finite() && dir > -90.0 && dir < 90.0,
            "target_directions",
            format!("direction #{i} ({dir}°) must lie strictly inside (-90°, 90°)"),
        );
    }
    check(
        scenario.beam_width.is_finite() && scenario.beam_width > 0.0,
        "beam_width",
        "must be > 0".into(),
    );
    let spacing_ok = scenario.grid_spacing.is_finite() && scenario.grid_spacing > 0.0;
    check(spacing_ok, "grid_spacing", "must be > 0".into());
    if spacing_ok {
        let steps = 180.0 / scenario.grid_spacing;
        check(
            (steps - steps.round()).abs() < 1e-9,
            "grid_spacing",
            format!("{}° does not divide the 180° span evenly", scenario.grid_spacing),
        );
    }
    check(scenario.tx_power_dbm.is_finite(), "tx_power_dbm", "must be finite".into());
    check(scenario.noise_power_dbm.is_finite(), "noise_power_dbm", "must be finite".into());
    check(scenario.pathloss_db.is_finite(), "pathloss_db", "must be finite".into());
    check(
        scenario.min_rate_bits.is_finite() && scenario.min_rate_bits >= 0.0,
        "min_rate_bits",
        "must be ≥ 0".into(),
    );
    check(
        scenario.antenna_spacing_ratio.is_finite() && scenario.antenna_spacing_ratio > 0.0,
        "antenna_spacing_ratio",
        "must be > 0".into(),
    );

    check(
        solver.rho_init.is_finite() && solver.rho_init > 0.0,
        "rho_init",
        "must be > 0".into(),
    );
    check(
        solver.rho_factor.is_finite() && solver.rho_factor > 0.0 && solver.rho_factor < 1.0,
        "rho_factor",
        "out of (0,1)".into(),
    );
    check(
        solver.penalty_tol.is_finite() && solver.penalty_tol >= 0.0,
        "penalty_tol",
        "must be ≥ 0".into(),
    );
    for (field, value) in [
        ("inner_tol", solver.inner_tol),
        ("rank_tol", solver.rank_tol),
        ("feas_tol", solver.feas_tol),
        ("solver_tol", solver.solver_tol),
    ] {
        check(value.is_finite() && value > 0.0, field, "must be > 0".into());
    }
    check(solver.max_inner_iters >= 1, "max_inner_iters", "must be ≥ 1".into());
    check(solver.max_outer_iters >= 1, "max_outer_iters", "must be ≥ 1".into());

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
