//! Solution post-processing: deployable beamformer recovery, per-user
//! achievable rates, SIC verification, and feasibility audits.
//!
//! Recovery reads the principal eigenpair out of each penalized covariance
//! (w = √λ₁·u₁, phase-normalized) and passes the general-rank residual
//! covariance through unchanged; the λ₂/λ₁ ratios say how much mass the
//! truncation discarded. Rates follow each scheme's interference model:
//! the proposed design cancels the virtual sensing beams through SIC so only
//! the residual covariance interferes, the ideal benchmark removes all
//! sensing power, the conventional one charges it in full, and comm-only has
//! none. Audits re-evaluate every design constraint at a given solution and
//! report signed margins — they measure, they never repair.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::DesignContext;
use crate::conic::AffineExpr;
use crate::linalg::{principal_eigenpair, sorted_hermitian_eigen};
use crate::scenario::{ChannelSet, ScenarioConfig, SolverConfig};
use crate::schemes::{build_relaxation, LiftedSolution, SchemeKind};
use crate::{CMat, CVec};

/// Slack, in bits, at which an audited per-user rate still counts as meeting
/// its floor. Truncating a penalty-converged covariance (penalty ≲ 1e-4)
/// perturbs the user signals enough to cost rate at this scale, while a
/// genuine constraint violation shows up orders of magnitude larger.
pub const RATE_TOL_BITS: f64 = 1e-3;

/// Failures while reading a deployable design out of a lifted solution.
#[derive(Debug, Error)]
pub enum EvaluateError {
    /// The matrix has no positive eigenvalue, so no direction can be read off.
    #[error("matrix is numerically zero (largest eigenvalue {lambda_max:e})")]
    ZeroMatrix { lambda_max: f64 },
    /// A covariance that must yield a beam has no positive principal eigenvalue.
    #[error("penalized covariance {index} has no positive principal eigenvalue")]
    NoPositiveBeam { index: usize },
}

/// λ₂/λ₁ of a PSD matrix, eigenvalues in descending order (λ₂ clamped at
/// zero): exactly 0 for rank ≤ 1, up to 1 for a balanced spectrum.
pub fn rank_one_ratio(matrix: &CMat) -> Result<f64, EvaluateError> {
    let (values, _) = sorted_hermitian_eigen(matrix);
    let top = values[0];
    if top <= 0.0 {
        return Err(EvaluateError::ZeroMatrix { lambda_max: top });
    }
    Ok(values.get(1).map_or(0.0, |v| v.max(0.0) / top))
}

/// A deployable design: one beamforming vector per communication and virtual
/// sensing beam, plus the general-rank residual sensing covariance.
#[derive(Debug, Clone)]
pub struct BeamformerSet {
    pub scheme: SchemeKind,
    /// Communication beamformers w_k, one per user.
    pub w_comm: Vec<CVec>,
    /// Virtual sensing beamformers w_{r,i} (empty for the benchmarks).
    pub w_virt: Vec<CVec>,
    /// Residual sensing covariance (or the whole sensing covariance for the
    /// ideal/conventional benchmarks); None for comm-only.
    pub r_resid: Option<CMat>,
    /// λ₂/λ₁ of each truncated covariance, communication beams first.
    pub rank_ratios: Vec<f64>,
    /// True when some truncated covariance exceeded the rank tolerance, i.e.
    /// the vectors lose a non-negligible part of the lifted solution.
    pub approximate: bool,
}

impl BeamformerSet {
    /// Total transmit covariance Σ w_k w_kᴴ + Σ w_{r,i} w_{r,i}ᴴ + R_resid.
    pub fn total_covariance(&self) -> CMat {
        let n = self
            .w_comm
            .first()
            .map(|w| w.len())
            .expect("a beamformer set always carries at least one user beam");
        let mut total = CMat::zeros(n, n);
        for w in self.w_comm.iter().chain(self.w_virt.iter()) {
            total += w * w.adjoint();
        }
        if let Some(r) = &self.r_resid {
            total += r;
        }
        total
    }

    /// Total transmit power tr(Σ w wᴴ + R_resid) = Σ ‖w‖² + tr(R_resid).
    pub fn total_power_watts(&self) -> f64 {
        let beams: f64 = self
            .w_comm
            .iter()
            .chain(self.w_virt.iter())
            .map(|w| w.norm_squared())
            .sum();
        beams + self.r_resid.as_ref().map_or(0.0, |r| r.trace().re)
    }

    /// The same design uniformly rescaled so the total transmit power equals
    /// `p_t` exactly.
    ///
    /// Truncation discards the non-principal mass of each covariance, leaving
    /// the design strictly inside the power budget; a transmitter would spend
    /// that slack. Uniform rescaling is the shape-preserving way to do so:
    /// the beampattern scales by the same factor everywhere, SIC margins keep
    /// their signs, and when the factor exceeds one every SINR improves
    /// (signal and interference scale together, noise does not).
    pub fn renormalized_to_power(&self, p_t: f64) -> BeamformerSet {
        let current = self.total_power_watts();
        assert!(current > 0.0, "cannot renormalize a zero-power design");
        let power_scale = p_t / current;
        let amp_scale = num_complex::Complex::new(power_scale.sqrt(), 0.0);
        BeamformerSet {
            scheme: self.scheme,
            w_comm: self.w_comm.iter().map(|w| w * amp_scale).collect(),
            w_virt: self.w_virt.iter().map(|w| w * amp_scale).collect(),
            r_resid: self
                .r_resid
                .as_ref()
                .map(|r| r * num_complex::Complex::new(power_scale, 0.0)),
            rank_ratios: self.rank_ratios.clone(),
            approximate: self.approximate,
        }
    }
}

/// Truncates a lifted solution to deployable beamformers: w = √λ₁·u₁ from the
/// principal eigenpair of each penalized covariance (deterministic phase:
/// largest-magnitude entry real positive), residual covariance passed through
/// unchanged. The set is flagged approximate when any λ₂/λ₁ exceeds
/// `rank_tol`, i.e. when the penalty loop has not actually finished its job.
pub fn recover_beamformers(
    lifted: &LiftedSolution,
    rank_tol: f64,
) -> Result<BeamformerSet, EvaluateError> {
    let mut rank_ratios = Vec::new();
    let mut truncate = |matrices: &[CMat], offset: usize| -> Result<Vec<CVec>, EvaluateError> {
        matrices
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let ratio = rank_one_ratio(w)
                    .map_err(|_| EvaluateError::NoPositiveBeam { index: offset + i })?;
                rank_ratios.push(ratio);
                let (lambda, u) = principal_eigenpair(w);
                Ok(u * num_complex::Complex::new(lambda.sqrt(), 0.0))
            })
            .collect()
    };
    let w_comm = truncate(&lifted.w_comm, 0)?;
    let w_virt = truncate(&lifted.w_virt, lifted.w_comm.len())?;
    let approximate = rank_ratios.iter().any(|r| *r > rank_tol);
    Ok(BeamformerSet {
        scheme: lifted.scheme,
        w_comm,
        w_virt,
        r_resid: lifted.r_resid.clone(),
        rank_ratios,
        approximate,
    })
}

/// Power refinement along the recovered beam directions.
///
/// Truncation drops the non-principal eigenvalue mass of each beam covariance.
/// That mass is tiny once the penalty loop has converged, but an active SIC or
/// rate row feels the loss one-sidedly, so the truncated vectors can sit a
/// hair outside the feasible set. The classical repair is to keep the beam
/// *directions* and re-optimize the *powers*: re-solve the scheme's relaxation
/// with every beam covariance confined to the ray of its recovered direction.
/// For a PSD variable W and a unit vector u, uᴴWu ≤ tr(W) always, so the
/// single affine row uᴴWu ≥ tr(W) pins W = p·uuᴴ with one free power p ≥ 0 —
/// the refined program is still convex and its solution truncates exactly.
///
/// The result keeps the original set's rank ratios and `approximate` flag:
/// they describe what truncation discarded, which refinement re-spends but
/// does not undo. Returns None when any beam direction is degenerate or the
/// refined program does not solve to a certified optimum.
fn refine_on_rays(
    truncated: &BeamformerSet,
    channels: &ChannelSet,
    config: &ScenarioConfig,
    solver: &SolverConfig,
    ctx: &DesignContext,
) -> Option<BeamformerSet> {
    let mut lp = build_relaxation(truncated.scheme, channels, config, ctx);
    let beams = truncated.w_comm.iter().chain(truncated.w_virt.iter());
    let vars = lp.vars.w_comm.iter().chain(lp.vars.w_virt.iter());
    for (idx, (w, &var)) in beams.zip(vars).enumerate() {
        let norm = w.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        let u = w / num_complex::Complex::new(norm, 0.0);
        let n = u.len();
        let ray = &u * u.adjoint() - CMat::identity(n, n);
        lp.program
            .add_ge(format!("ray_{idx}"), AffineExpr::zero().with_matrix_term(var, ray));
    }
    let outcome = lp.solve(solver.solver_tol).ok()?;
    let refined = recover_beamformers(&outcome.solution?, solver.rank_tol).ok()?;
    Some(BeamformerSet {
        rank_ratios: truncated.rank_ratios.clone(),
        approximate: truncated.approximate,
        ..refined
    })
}

/// Reads the deployable design out of a lifted solution: truncate each beam
/// covariance to its principal eigenvector, re-optimize the beam powers along
/// those directions ([`refine_on_rays`]), and rescale the whole design onto
/// the exact power budget. When refinement fails the truncated design itself
/// is renormalized and returned, so the function degrades to plain recovery
/// rather than erroring on a solvable instance.
pub fn deployable_design(
    lifted: &LiftedSolution,
    channels: &ChannelSet,
    config: &ScenarioConfig,
    solver: &SolverConfig,
    ctx: &DesignContext,
) -> Result<BeamformerSet, EvaluateError> {
    let truncated = recover_beamformers(lifted, solver.rank_tol)?;
    let refined = refine_on_rays(&truncated, channels, config, solver, ctx).unwrap_or(truncated);
    Ok(refined.renormalized_to_power(config.tx_power_watts()))
}

/// Signal/interference decomposition and achieved rate for one user.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEntry {
    /// Achievable rate log₂(1+SINR) in bits/s/Hz.
    pub rate_bits: f64,
    pub sinr_linear: f64,
    /// Desired-signal power |h_kᴴ w_k|².
    pub signal_watts: f64,
    /// Other users' beam power Σ_{j≠k} |h_kᴴ w_j|².
    pub inter_user_watts: f64,
    /// Sensing power this user's receiver removes (SIC, or by assumption).
    pub sensing_removed_watts: f64,
    /// Sensing power charged as interference in the SINR denominator.
    pub sensing_residual_watts: f64,
    pub noise_watts: f64,
}

/// Achieved rates and interference decompositions, one entry per user.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub users: Vec<RateEntry>,
}

impl RateReport {
    /// Per-user rates in bits/s/Hz.
    pub fn rates_bits(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.rate_bits).collect()
    }
}

// Splits the sensing power a user sees into the part its receiver removes
// and the part charged as interference. The proposed design cancels the
// virtual beams through SIC but keeps the residual; the ideal benchmark
// removes everything; the conventional one removes nothing; comm-only has no
// sensing power at all (both terms are zero for honest sets — routing the
// terms anyway keeps the power-accounting identity for arbitrary inputs).
fn split_sensing(scheme: SchemeKind, virt_watts: f64, resid_watts: f64) -> (f64, f64) {
    match scheme {
        SchemeKind::NomaSdr | SchemeKind::NomaSca => (virt_watts, resid_watts),
        SchemeKind::IdealIsac | SchemeKind::CommOnly => (virt_watts + resid_watts, 0.0),
        SchemeKind::ConventionalIsac => (0.0, virt_watts + resid_watts),
    }
}

fn entry_from_powers(
    scheme: SchemeKind,
    signal: f64,
    inter_user: f64,
    virt: f64,
    resid: f64,
    noise_watts: f64,
) -> RateEntry {
    let (sensing_removed_watts, sensing_residual_watts) = split_sensing(scheme, virt, resid);
    let sinr_linear = signal / (inter_user + sensing_residual_watts + noise_watts);
    RateEntry {
        rate_bits: (1.0 + sinr_linear).log2(),
        sinr_linear,
        signal_watts: signal,
        inter_user_watts: inter_user,
        sensing_removed_watts,
        sensing_residual_watts,
        noise_watts,
    }
}

// Quadratic form hᴴ·M·h, clamped at zero: for (numerically) PSD M the true
// value is nonnegative and the clamp only strips solver rounding noise.
fn quadratic_power(h: &CVec, m: &CMat) -> f64 {
    (h.adjoint() * m * h)[(0, 0)].re.max(0.0)
}

fn beam_power(h: &CVec, w: &CVec) -> f64 {
    h.dotc(w).norm_sqr()
}

/// Rate achieved by user `k` under the set's scheme-specific interference
/// model. Channels and noise must be on the same scale (both with pathloss
/// applied, or both normalized — the SINR is invariant to the common factor).
pub fn achievable_rate(
    channels: &ChannelSet,
    bf: &BeamformerSet,
    k: usize,
    noise_watts: f64,
) -> RateEntry {
    let h = &channels.channels[k];
    let signal = beam_power(h, &bf.w_comm[k]);
    let inter_user: f64 = bf
        .w_comm
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, w)| beam_power(h, w))
        .sum();
    let virt: f64 = bf.w_virt.iter().map(|w| beam_power(h, w)).sum();
    let resid = bf.r_resid.as_ref().map_or(0.0, |r| quadratic_power(h, r));
    entry_from_powers(bf.scheme, signal, inter_user, virt, resid, noise_watts)
}

/// Achieved rates for every user of a deployable design.
pub fn rate_report(channels: &ChannelSet, bf: &BeamformerSet, noise_watts: f64) -> RateReport {
    let users = (0..channels.channels.len())
        .map(|k| achievable_rate(channels, bf, k, noise_watts))
        .collect();
    RateReport { users }
}

/// Rates implied by a lifted solution, with beam powers read as quadratic
/// forms h_kᴴ·W·h_k of the covariances. Used by the lifted-form audit; equals
/// the recovered-beamformer rates whenever the covariances are exactly rank
/// one.
pub fn lifted_rate_report(
    channels: &ChannelSet,
    lifted: &LiftedSolution,
    noise_watts: f64,
) -> RateReport {
    let users = channels
        .channels
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let signal = quadratic_power(h, &lifted.w_comm[k]);
            let inter_user: f64 = lifted
                .w_comm
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, w)| quadratic_power(h, w))
                .sum();
            let virt: f64 = lifted.w_virt.iter().map(|w| quadratic_power(h, w)).sum();
            let resid = lifted.r_resid.as_ref().map_or(0.0, |r| quadratic_power(h, r));
            entry_from_powers(lifted.scheme, signal, inter_user, virt, resid, noise_watts)
        })
        .collect();
    RateReport { users }
}

/// SIC power-dominance margins |h_kᴴ w_{r,i}|² − |h_kᴴ w_k|², indexed [k][i]:
/// user k can decode and cancel virtual beam i only when its received power
/// dominates the user's own signal. Empty rows for schemes without virtual
/// beams.
pub fn sic_condition_check(channels: &ChannelSet, bf: &BeamformerSet) -> Vec<Vec<f64>> {
    channels
        .channels
        .iter()
        .zip(&bf.w_comm)
        .map(|(h, w_k)| {
            let own = beam_power(h, w_k);
            bf.w_virt.iter().map(|w_r| beam_power(h, w_r) - own).collect()
        })
        .collect()
}

/// Signed feasibility margins of one design with pass/fail at the audit bars.
///
/// Bars: rates pass at −[`RATE_TOL_BITS`]; SIC margins at −feas_tol·P_t·‖h_k‖²
/// (the natural scale of the quadratic forms involved); the power margin and
/// the PSD eigenvalues at −feas_tol·P_t. `feasible` covers the four design
/// constraint families; rank-one quality is reported separately so audits of
/// intentionally general-rank (lifted or benchmark) solutions stay meaningful.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Per-user achieved rate minus the rate floor, in bits.
    pub rate_margins_bits: Vec<f64>,
    /// SIC power-dominance margins, indexed [k][i], in watts.
    pub sic_margins: Vec<Vec<f64>>,
    /// Power budget minus spent power, in watts.
    pub power_margin_watts: f64,
    /// Smallest eigenvalue of each general-rank covariance in the design.
    pub psd_min_eigs: Vec<f64>,
    /// λ₂/λ₁ per penalized covariance, communication beams first.
    pub rank_ratios: Vec<f64>,
    pub rates_pass: bool,
    pub sic_pass: bool,
    pub power_pass: bool,
    pub psd_pass: bool,
    /// Rates, SIC, power, and PSD all hold at their bars.
    pub feasible: bool,
    /// Every penalized covariance is numerically rank one (ratio ≤ rank_tol).
    pub rank_one: bool,
}

#[allow(clippy::too_many_arguments)]
fn assemble_report(
    channels: &ChannelSet,
    config: &ScenarioConfig,
    solver: &SolverConfig,
    rate_margins_bits: Vec<f64>,
    sic_margins: Vec<Vec<f64>>,
    power_margin_watts: f64,
    psd_min_eigs: Vec<f64>,
    rank_ratios: Vec<f64>,
) -> FeasibilityReport {
    let p_t = config.tx_power_watts();
    let rates_pass = rate_margins_bits.iter().all(|m| *m >= -RATE_TOL_BITS);
    let sic_pass = sic_margins.iter().zip(&channels.channels).all(|(row, h)| {
        let bar = -solver.feas_tol * p_t * h.norm_squared();
        row.iter().all(|m| *m >= bar)
    });
    let power_pass = power_margin_watts >= -solver.feas_tol * p_t;
    let psd_pass = psd_min_eigs.iter().all(|e| *e >= -solver.feas_tol * p_t);
    let rank_one = rank_ratios.iter().all(|r| *r <= solver.rank_tol);
    FeasibilityReport {
        rate_margins_bits,
        sic_margins,
        power_margin_watts,
        psd_min_eigs,
        rank_ratios,
        rates_pass,
        sic_pass,
        power_pass,
        psd_pass,
        feasible: rates_pass && sic_pass && power_pass && psd_pass,
        rank_one,
    }
}

fn min_eigenvalue(matrix: &CMat) -> f64 {
    let (values, _) = sorted_hermitian_eigen(matrix);
    *values.last().expect("eigen-solve of a nonempty matrix yields eigenvalues")
}

/// Audits a deployable design against the true rate formula and the design
/// constraints it came from. Failures are data, not exceptions: the report
/// carries a signed margin for every constraint.
pub fn audit_recovered(
    channels: &ChannelSet,
    bf: &BeamformerSet,
    config: &ScenarioConfig,
    solver: &SolverConfig,
) -> FeasibilityReport {
    let rates = rate_report(channels, bf, config.noise_power_watts());
    let rate_margins_bits =
        rates.users.iter().map(|u| u.rate_bits - config.min_rate_bits).collect();
    let sic_margins = sic_condition_check(channels, bf);
    let power_margin_watts = config.tx_power_watts() - bf.total_power_watts();
    // The truncated beams are exact outer products, PSD by construction; the
    // residual covariance is the only part that can carry solver noise.
    let psd_min_eigs = bf.r_resid.as_ref().map(min_eigenvalue).into_iter().collect();
    assemble_report(
        channels,
        config,
        solver,
        rate_margins_bits,
        sic_margins,
        power_margin_watts,
        psd_min_eigs,
        bf.rank_ratios.clone(),
    )
}

/// Audits a lifted solution in covariance form: rates from quadratic-form
/// powers (pass/fail equivalent to the linearized rate rows the program
/// enforces), SIC margins between quadratic forms, and the PSD minimum
/// eigenvalue of every covariance block.
pub fn audit_lifted(
    channels: &ChannelSet,
    lifted: &LiftedSolution,
    config: &ScenarioConfig,
    solver: &SolverConfig,
) -> FeasibilityReport {
    let rates = lifted_rate_report(channels, lifted, config.noise_power_watts());
    let rate_margins_bits =
        rates.users.iter().map(|u| u.rate_bits - config.min_rate_bits).collect();
    let sic_margins = channels
        .channels
        .iter()
        .zip(&lifted.w_comm)
        .map(|(h, w_k)| {
            let own = quadratic_power(h, w_k);
            lifted.w_virt.iter().map(|w_r| quadratic_power(h, w_r) - own).collect()
        })
        .collect();
    let total = crate::schemes::assemble_covariance(lifted);
    let power_margin_watts = config.tx_power_watts() - total.trace().re;
    let psd_min_eigs = lifted
        .w_comm
        .iter()
        .chain(lifted.w_virt.iter())
        .chain(lifted.r_resid.iter())
        .map(min_eigenvalue)
        .collect();
    // Rank quality of the penalized covariances; a numerically zero matrix
    // has rank ≤ 1 trivially, so it audits as ratio 0.
    let rank_ratios = lifted
        .w_comm
        .iter()
        .chain(lifted.w_virt.iter())
        .map(|w| rank_one_ratio(w).unwrap_or(0.0))
        .collect();
    assemble_report(
        channels,
        config,
        solver,
        rate_margins_bits,
        sic_margins,
        power_margin_watts,
        psd_min_eigs,
        rank_ratios,
    )
}
