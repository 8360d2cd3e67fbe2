//! Lifted (covariance-form) program builders for the proposed design and its
//! benchmarks.
//!
//! Every scheme minimizes the beampattern-matching error
//! Σ_l (δ·φ(θ_l) − a_lᴴ R a_l)² over PSD beam covariances under a power budget;
//! they differ in which sensing terms exist and how sensing interference enters
//! the per-user rate constraint:
//!
//! * `NomaSdr` / `NomaSca` — communication beams W_k, virtual sensing beams
//!   W_{r,i} removable by SIC (so only the residual R_r̃ interferes), SIC
//!   power-dominance constraints. SDR solves the relaxation once; SCA adds
//!   rank-one penalties and iterates.
//! * `IdealIsac` — one general sensing covariance whose interference users
//!   magically cancel; no SIC constraints. Feasible set contains every other
//!   scheme's, so its optimum lower-bounds them all.
//! * `ConventionalIsac` — same variables, but the full sensing covariance
//!   interferes in every rate.
//! * `CommOnly` — no sensing signal at all; the desired pattern must be formed
//!   by the K communication beams alone.
//!
//! Two modeling details keep the programs well-conditioned and fast: channels
//! are rescaled to unit pathloss inside the builders (an exact reformulation —
//! both sides of each rate/SIC constraint scale together), and the quadratic
//! objective is written on one free Hermitian "total covariance" variable tied
//! to the parts by equality rows, so its dense quadratic block stays N²+1 wide
//! no matter how many beams there are.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::array::DesignContext;
use crate::conic::{
    AffineExpr, ConicError, ConvexProgram, Residuals, SolveStatus, VarId,
};
use crate::scenario::{ChannelSet, ScenarioConfig};
use crate::sca::{taylor_upper_bound, TaylorPoint};
use crate::CMat;

/// Which design problem a program or solution belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    /// Proposed NOMA-ISAC design, relaxation only (rank constraints dropped).
    #[serde(rename = "noma_sdr")]
    NomaSdr,
    /// Proposed NOMA-ISAC design solved by the penalized SCA loop.
    #[serde(rename = "noma_sca")]
    NomaSca,
    /// Benchmark: sensing interference perfectly removed, no SIC conditions.
    #[serde(rename = "ideal")]
    IdealIsac,
    /// Benchmark: full sensing covariance interferes at every user.
    #[serde(rename = "conventional")]
    ConventionalIsac,
    /// Benchmark: communication beams only, no sensing signal.
    #[serde(rename = "comm_only")]
    CommOnly,
}

impl SchemeKind {
    /// All schemes in canonical (output) order.
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::NomaSca,
        SchemeKind::NomaSdr,
        SchemeKind::IdealIsac,
        SchemeKind::ConventionalIsac,
        SchemeKind::CommOnly,
    ];

    /// Stable machine-readable identifier used on the CLI and in output files.
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::NomaSdr => "noma_sdr",
            SchemeKind::NomaSca => "noma_sca",
            SchemeKind::IdealIsac => "ideal",
            SchemeKind::ConventionalIsac => "conventional",
            SchemeKind::CommOnly => "comm_only",
        }
    }

    /// Parses a CLI scheme name.
    pub fn from_name(name: &str) -> Option<Self> {
        SchemeKind::ALL.iter().copied().find(|k| k.name() == name)
    }

    /// Schemes solved by the penalized SCA loop rather than a single relaxation.
    pub fn uses_sca(&self) -> bool {
        matches!(self, SchemeKind::NomaSca | SchemeKind::CommOnly)
    }

    /// Schemes with dedicated per-beam sensing variables and SIC constraints.
    pub fn has_virtual_beams(&self) -> bool {
        matches!(self, SchemeKind::NomaSdr | SchemeKind::NomaSca)
    }

    /// Schemes carrying a general-rank sensing covariance (residual or full).
    pub fn has_sensing_covariance(&self) -> bool {
        !matches!(self, SchemeKind::CommOnly)
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// SINR threshold Γ = 2^R_min − 1 equivalent to a minimum rate in bits/s/Hz.
pub fn gamma(min_rate_bits: f64) -> f64 {
    2f64.powf(min_rate_bits) - 1.0
}

/// Solution of a lifted program: covariance parts, pattern scale, and the
/// attained objective.
#[derive(Debug, Clone)]
pub struct LiftedSolution {
    pub scheme: SchemeKind,
    /// Communication beam covariances W_k, one per user.
    pub w_comm: Vec<CMat>,
    /// Virtual sensing beam covariances W_{r,i} (empty for benchmarks).
    pub w_virt: Vec<CMat>,
    /// Residual sensing covariance R_r̃, or the whole sensing covariance R_r
    /// for the ideal/conventional benchmarks. None for comm-only.
    pub r_resid: Option<CMat>,
    /// Desired-pattern scale δ ≥ 0.
    pub delta: f64,
    /// Program objective at this point (matching error, plus the weighted
    /// penalty for penalized subproblems).
    pub objective_value: f64,
}

/// Total transmit covariance R = Σ W_k + Σ W_{r,i} + R_r̃ (absent parts omitted).
pub fn assemble_covariance(solution: &LiftedSolution) -> CMat {
    let n = solution
        .w_comm
        .first()
        .map(|w| w.nrows())
        .expect("a lifted solution always carries at least one user beam");
    let mut total = CMat::zeros(n, n);
    for w in &solution.w_comm {
        total += w;
    }
    for w in &solution.w_virt {
        total += w;
    }
    if let Some(r) = &solution.r_resid {
        total += r;
    }
    total
}

/// Variable handles of a lifted program.
#[derive(Debug, Clone)]
pub struct SchemeVars {
    pub w_comm: Vec<VarId>,
    pub w_virt: Vec<VarId>,
    pub r_resid: Option<VarId>,
    /// Free Hermitian total-covariance variable the objective is written on.
    pub total: VarId,
    pub delta: VarId,
}

/// A built, ready-to-solve lifted program together with its variable handles.
#[derive(Debug, Clone)]
pub struct LiftedProgram {
    pub scheme: SchemeKind,
    pub program: ConvexProgram,
    pub vars: SchemeVars,
}

/// Outcome of solving a lifted program; `solution` is present exactly when the
/// solver certified optimality, while `iterate` also carries the best point
/// found when the solver stalled short of its certificate (its quality is
/// bounded by `residuals`; infeasible/unbounded outcomes carry neither).
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub solution: Option<LiftedSolution>,
    pub iterate: Option<LiftedSolution>,
    pub residuals: Residuals,
    pub iterations: u32,
    pub solve_seconds: f64,
}

impl LiftedProgram {
    /// Solves the program and extracts the scheme solution on success.
    pub fn solve(&self, tol: f64) -> Result<SolveOutcome, ConicError> {
        let conic = self.program.solve(tol)?;
        let extract = || LiftedSolution {
            scheme: self.scheme,
            w_comm: self.vars.w_comm.iter().map(|&v| conic.matrix(v).clone()).collect(),
            w_virt: self.vars.w_virt.iter().map(|&v| conic.matrix(v).clone()).collect(),
            r_resid: self.vars.r_resid.map(|v| conic.matrix(v).clone()),
            delta: conic.scalar(self.vars.delta),
            objective_value: conic.objective_value,
        };
        // On a numerical stall the solver's last point is still a meaningful
        // near-solution; on infeasibility/unboundedness the raw vector is a
        // certificate, not a point, and is not extracted.
        let iterate = matches!(conic.status, SolveStatus::Optimal | SolveStatus::NumericalFailure)
            .then(extract);
        let solution = (conic.status == SolveStatus::Optimal).then(|| {
            iterate.clone().expect("optimal outcomes always extract an iterate")
        });
        Ok(SolveOutcome {
            status: conic.status,
            solution,
            iterate,
            residuals: conic.residuals,
            iterations: conic.iterations,
            solve_seconds: conic.solve_seconds,
        })
    }
}

/// Relaxation of the proposed NOMA-ISAC design (rank-one constraints dropped).
pub fn build_noma_sdr(
    channels: &ChannelSet,
    config: &ScenarioConfig,
    ctx: &DesignContext,
) -> LiftedProgram {
    build(SchemeKind::NomaSdr, channels, config, ctx, None)
}

/// One penalized SCA subproblem: the scheme's relaxation plus the weighted
/// convexified rank-one penalty (1/ρ)·Σ(‖W‖₊ + T̃(W)) at the given Taylor point.
pub fn build_penalized_subproblem(
    scheme: SchemeKind,
    channels: &ChannelSet,
    config: &ScenarioConfig,
    ctx: &DesignContext,
    taylor: &TaylorPoint,
    rho: f64,
) -> LiftedProgram {
    assert!(scheme.uses_sca(), "penalized subproblems exist only for SCA schemes");
    assert!(rho > 0.0, "penalty factor must be positive");
    assert_eq!(taylor.comm.len(), config.n_users, "Taylor point has wrong user count");
    let expected_virt = if scheme.has_virtual_beams() { config.n_virtual_beams } else { 0 };
    assert_eq!(taylor.virt.len(), expected_virt, "Taylor point has wrong beam count");
    build(scheme, channels, config, ctx, Some(Penalty { taylor, rho }))
}

/// Benchmark: sensing interference perfectly cancelled at every user.
pub fn build_ideal_isac(
    channels: &ChannelSet,
    config: &ScenarioConfig,
    ctx: &DesignContext,
) -> LiftedProgram {
    build(SchemeKind::IdealIsac, channels, config, ctx, None)
}

/// Benchmark: full sensing covariance interferes at every user.
pub fn build_conventional_isac(
    channels: &ChannelSet,
    config: &ScenarioConfig,
    ctx: &DesignContext,
) -> LiftedProgram {
    build(SchemeKind::ConventionalIsac, channels, config, ctx, None)
}

/// Benchmark: communication beams only (relaxation; the SCA loop adds penalties).
pub fn build_comm_only(
    channels: &ChannelSet,
    config: &ScenarioConfig,
    ctx: &DesignContext,
) -> LiftedProgram {
    build(SchemeKind::CommOnly, channels, config, ctx, None)
}

/// Relaxation builder for any scheme kind (NomaSdr and NomaSca share one).
pub fn build_relaxation(
    scheme: SchemeKind,
    channels: &ChannelSet,
    config: &ScenarioConfig,
    ctx: &DesignContext,
) -> LiftedProgram {
    build(scheme, channels, config, ctx, None)
}

struct Penalty<'a> {
    taylor: &'a TaylorPoint,
    rho: f64,
}

// Channels scaled back to unit pathloss plus the matching noise power. The
// rescaling multiplies both sides of every rate/SIC constraint by the same
// positive factor, so the feasible set is untouched while all constraint data
// sit near unit magnitude for the interior-point solver.
fn normalized_channel_outers(channels: &ChannelSet, config: &ScenarioConfig) -> (Vec<CMat>, f64) {
    let amplitude_gain = 10f64.powf(config.pathloss_db / 20.0);
    let outers = channels
        .channels
        .iter()
        .map(|h| {
            let scaled = h * Complex::new(amplitude_gain, 0.0);
            &scaled * scaled.adjoint()
        })
        .collect();
    let noise = config.noise_power_watts() * amplitude_gain * amplitude_gain;
    (outers, noise)
}

fn build(
    scheme: SchemeKind,
    channels: &ChannelSet,
    config: &ScenarioConfig,
    ctx: &DesignContext,
    penalty: Option<Penalty<'_>>,
) -> LiftedProgram {
    let n = config.n_antennas;
    let k_users = config.n_users;
    assert_eq!(channels.channels.len(), k_users, "channel count must match user count");
    let m_beams = if scheme.has_virtual_beams() { config.n_virtual_beams } else { 0 };

    let mut program = ConvexProgram::new();
    let w_comm: Vec<VarId> =
        (0..k_users).map(|k| program.add_psd_var(&format!("W_comm_{k}"), n)).collect();
    let w_virt: Vec<VarId> =
        (0..m_beams).map(|i| program.add_psd_var(&format!("W_virt_{i}"), n)).collect();
    let r_resid = scheme
        .has_sensing_covariance()
        .then(|| program.add_psd_var("R_sense", n));
    let total = program.add_free_hermitian_var("R_total", n);
    let delta = program.add_scalar_var("delta", Some(0.0));

    let all_parts: Vec<VarId> = w_comm
        .iter()
        .chain(w_virt.iter())
        .chain(r_resid.iter())
        .copied()
        .collect();

    // Tie the free total-covariance variable to the sum of the parts entrywise.
    for functional in crate::conic::entry_functionals(n) {
        let mut expr = AffineExpr::zero().with_matrix_term(total, functional.clone());
        for &part in &all_parts {
            expr = expr.with_matrix_term(part, -functional.clone());
        }
        program.add_eq("total_link", expr);
    }

    // Matching-error objective: one square δ·φ(θ_l) − a_lᴴ R a_l per grid angle.
    for (outer, &phi) in ctx.steering_outer.iter().zip(&ctx.desired.values) {
        program.add_square(
            AffineExpr::zero()
                .with_matrix_term(total, -outer.clone())
                .with_scalar_term(delta, phi),
        );
    }

    let (channel_outers, noise) = normalized_channel_outers(channels, config);
    let threshold = gamma(config.min_rate_bits);

    // Per-user linearized rate constraint:
    // h_kᴴ W_k h_k ≥ Γ·(Σ_{i≠k} h_kᴴ W_i h_k + [sensing interference] + σ²).
    for k in 0..k_users {
        let outer = &channel_outers[k];
        let mut expr = AffineExpr::constant(-threshold * noise)
            .with_matrix_term(w_comm[k], outer.clone());
        for (i, &w) in w_comm.iter().enumerate() {
            if i != k {
                expr = expr.with_matrix_term(w, outer * Complex::new(-threshold, 0.0));
            }
        }
        let sensing_interferes = match scheme {
            // Virtual beams are decoded and cancelled; only the residual leaks.
            SchemeKind::NomaSdr | SchemeKind::NomaSca => true,
            SchemeKind::ConventionalIsac => true,
            SchemeKind::IdealIsac | SchemeKind::CommOnly => false,
        };
        if sensing_interferes {
            let r = r_resid.expect("schemes with sensing interference carry a covariance");
            expr = expr.with_matrix_term(r, outer * Complex::new(-threshold, 0.0));
        }
        program.add_ge(&format!("rate_{k}"), expr);
    }

    // SIC decodability: every virtual beam must reach user k at least as
    // strongly as user k's own beam.
    if scheme.has_virtual_beams() {
        for (i, &wv) in w_virt.iter().enumerate() {
            for k in 0..k_users {
                let outer = &channel_outers[k];
                program.add_ge(
                    &format!("sic_{k}_{i}"),
                    AffineExpr::zero()
                        .with_matrix_term(wv, outer.clone())
                        .with_matrix_term(w_comm[k], -outer.clone()),
                );
            }
        }
    }

    // Power budget on the total covariance: tr(R) = P_t. The budget is spent
    // in full — with the pattern scale δ jointly optimized, a slack budget
    // would let the whole design shrink toward the zero solution, which
    // defeats the sensing purpose (probing energy is the resource the
    // beampattern distributes).
    program.add_eq(
        "power",
        AffineExpr::constant(config.tx_power_watts())
            .with_matrix_term(total, -CMat::identity(n, n)),
    );

    // Rank-one penalty (1/ρ)·Σ (‖W‖₊ + T̃(W)) on every beam covariance; the
    // nuclear norm of a PSD variable is its trace, so both terms are affine.
    if let Some(Penalty { taylor, rho }) = penalty {
        let weight = 1.0 / rho;
        let identity = CMat::identity(n, n);
        let penalized = w_comm
            .iter()
            .zip(&taylor.comm)
            .chain(w_virt.iter().zip(&taylor.virt));
        for (&var, entry) in penalized {
            let nuclear = AffineExpr::zero().with_matrix_term(var, identity.clone());
            program.add_linear(nuclear.scaled(weight));
            program.add_linear(taylor_upper_bound(var, entry).scaled(weight));
        }
    }

    LiftedProgram {
        scheme,
        program,
        vars: SchemeVars { w_comm, w_virt, r_resid, total, delta },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_channels, SolverConfig};
    use approx::assert_relative_eq;
    use num_complex::Complex;

    const TOL: f64 = 1e-6;

    // Small, well-conditioned desk instance: unit pathloss, mild rate demand.
    fn desk_config() -> ScenarioConfig {
        ScenarioConfig {
            n_antennas: 4,
            n_users: 2,
            n_virtual_beams: 1,
            target_directions: vec![0.0],
            beam_width: 10.0,
            grid_spacing: 1.0,
            tx_power_dbm: 0.0,
            noise_power_dbm: -20.0,
            pathloss_db: 0.0,
            min_rate_bits: 1.0,
            antenna_spacing_ratio: 0.5,
        }
    }

    fn quad(outer: &CMat, w: &CMat) -> f64 {
        (outer * w).trace().re
    }

    #[test]
    fn gamma_matches_rate_thresholds() {
        assert_relative_eq!(gamma(4.5), 2f64.powf(4.5) - 1.0, max_relative = 1e-15);
        assert_relative_eq!(gamma(4.5), 21.627417, max_relative = 1e-6);
        assert_eq!(gamma(1.0), 1.0);
        assert_eq!(gamma(0.0), 0.0);
    }

    #[test]
    fn scheme_names_round_trip() {
        for kind in SchemeKind::ALL {
            assert_eq!(SchemeKind::from_name(kind.name()), Some(kind));
        }
        assert_eq!(SchemeKind::from_name("bogus"), None);
        assert_eq!(SchemeKind::NomaSca.name(), "noma_sca");
        assert_eq!(SchemeKind::IdealIsac.name(), "ideal");
    }

    #[test]
    fn hand_built_single_user_instance_satisfies_rate_and_sic() {
        // One user with channel e₁ on a 2-antenna array, σ² = 1 W, Γ = 1:
        // the solution must grant W₁ enough power at e₁ and dominate it with
        // the virtual beam.
        let config = ScenarioConfig {
            n_antennas: 2,
            n_users: 1,
            n_virtual_beams: 1,
            target_directions: vec![0.0],
            beam_width: 20.0,
            grid_spacing: 1.0,
            tx_power_dbm: 37.0, // ≈ 5 W
            noise_power_dbm: 30.0, // 1 W
            pathloss_db: 0.0,
            min_rate_bits: 1.0,
            antenna_spacing_ratio: 0.5,
        };
        let mut channels = generate_channels(&config, 1, 0);
        channels.channels[0] = crate::CVec::from_vec(vec![
            Complex::new(1.0, 0.0),
            Complex::new(0.0, 0.0),
        ]);
        let ctx = DesignContext::from_config(&config).unwrap();
        let outcome = build_noma_sdr(&channels, &config, &ctx).solve(TOL).unwrap();
        assert_eq!(outcome.status, SolveStatus::Optimal);
        let sol = outcome.solution.unwrap();

        let h_outer = &channels.channels[0] * channels.channels[0].adjoint();
        let signal = quad(&h_outer, &sol.w_comm[0]);
        let resid = quad(&h_outer, sol.r_resid.as_ref().unwrap());
        let sigma = config.noise_power_watts();
        assert!(signal - 1.0 * (resid + sigma) >= -1e-5, "rate constraint violated");
        let virt = quad(&h_outer, &sol.w_virt[0]);
        assert!(virt >= signal - 1e-5, "SIC dominance violated");
        let total = assemble_covariance(&sol);
        assert!(total.trace().re <= config.tx_power_watts() * (1.0 + 1e-6));
        assert!(sol.delta >= 0.0);
    }

    #[test]
    fn feasible_set_nesting_orders_the_optima() {
        // Ideal's feasible set contains both the NOMA relaxation's (merge all
        // sensing into R_r, drop SIC) and conventional's (weaker rate
        // constraint), so its optimum can beat neither of them by more than
        // solver accuracy.
        let config = desk_config();
        let channels = generate_channels(&config, 3, 0);
        let ctx = DesignContext::from_config(&config).unwrap();

        let ideal = build_ideal_isac(&channels, &config, &ctx).solve(TOL).unwrap();
        let noma = build_noma_sdr(&channels, &config, &ctx).solve(TOL).unwrap();
        let conv = build_conventional_isac(&channels, &config, &ctx).solve(TOL).unwrap();
        assert_eq!(ideal.status, SolveStatus::Optimal);
        assert_eq!(noma.status, SolveStatus::Optimal);
        assert_eq!(conv.status, SolveStatus::Optimal);

        let slack = 2.0 * TOL;
        let ideal_obj = ideal.solution.unwrap().objective_value;
        assert!(ideal_obj <= noma.solution.unwrap().objective_value + slack);
        assert!(ideal_obj <= conv.solution.unwrap().objective_value + slack);
    }

    #[test]
    fn impossible_rate_demand_is_infeasible() {
        // Γ(5 bits) = 31 against σ² = 10 µW needs ≈ 0.3 mW of received power,
        // but the budget is 0.1 µW: infeasible by three orders of magnitude.
        let config = ScenarioConfig {
            min_rate_bits: 5.0,
            tx_power_dbm: -40.0,
            ..desk_config()
        };
        let channels = generate_channels(&config, 4, 0);
        let ctx = DesignContext::from_config(&config).unwrap();
        let outcome = build_comm_only(&channels, &config, &ctx).solve(TOL).unwrap();
        assert_eq!(outcome.status, SolveStatus::Infeasible);
    }

    #[test]
    fn huge_rho_reduces_the_penalized_subproblem_to_the_relaxation() {
        let config = desk_config();
        let channels = generate_channels(&config, 5, 0);
        let ctx = DesignContext::from_config(&config).unwrap();

        let sdr = build_noma_sdr(&channels, &config, &ctx).solve(TOL).unwrap();
        assert_eq!(sdr.status, SolveStatus::Optimal);
        let sdr_sol = sdr.solution.unwrap();
        let taylor = TaylorPoint::from_solution(&sdr_sol);

        let rho = 1e12;
        let penalized =
            build_penalized_subproblem(SchemeKind::NomaSca, &channels, &config, &ctx, &taylor, rho)
                .solve(TOL)
                .unwrap();
        assert_eq!(penalized.status, SolveStatus::Optimal);
        // With weight 1/ρ ≈ 1e-12 the penalty cannot move the objective.
        let gap =
            (penalized.solution.unwrap().objective_value - sdr_sol.objective_value).abs();
        assert!(gap < 1e-4, "penalized objective drifted {gap} from relaxation");
    }

    #[test]
    fn assemble_covariance_sums_the_parts() {
        let n = 3;
        let zero = LiftedSolution {
            scheme: SchemeKind::NomaSdr,
            w_comm: vec![CMat::zeros(n, n)],
            w_virt: vec![CMat::zeros(n, n)],
            r_resid: Some(CMat::zeros(n, n)),
            delta: 0.0,
            objective_value: 0.0,
        };
        assert_eq!(assemble_covariance(&zero), CMat::zeros(n, n));

        let comm_only = LiftedSolution {
            scheme: SchemeKind::CommOnly,
            w_comm: vec![CMat::identity(n, n)],
            w_virt: vec![],
            r_resid: None,
            delta: 0.0,
            objective_value: 0.0,
        };
        assert_eq!(assemble_covariance(&comm_only), CMat::identity(n, n));

        let mixed = LiftedSolution {
            scheme: SchemeKind::NomaSdr,
            w_comm: vec![CMat::identity(n, n) * Complex::new(2.0, 0.0)],
            w_virt: vec![CMat::identity(n, n)],
            r_resid: Some(CMat::identity(n, n) * Complex::new(0.5, 0.0)),
            delta: 1.0,
            objective_value: 0.0,
        };
        assert_relative_eq!(
            assemble_covariance(&mixed).trace().re,
            2.0 * 3.0 + 3.0 + 0.5 * 3.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn solver_config_defaults_match_the_algorithm_schedule() {
        let solver = SolverConfig::default();
        assert_eq!(solver.rho_init, 100.0);
        assert_eq!(solver.rho_factor, 0.2);
        assert_eq!(solver.penalty_tol, 1e-4);
        assert_eq!(solver.inner_tol, 1e-2);
    }
}
