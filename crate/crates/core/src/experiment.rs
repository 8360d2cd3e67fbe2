//! Monte Carlo experiment protocol: sweeps over schemes, rate floors, and
//! channel realizations, aggregation, and file artifacts.
//!
//! A sweep evaluates every requested (scheme, R_min, realization) cell
//! independently: draw channels, solve (a single relaxation for the one-shot
//! schemes, the penalized SCA loop otherwise), recover and renormalize the
//! deployable design, audit it, and record the matching error both at the
//! lifted iterate and at the deployable design. Cells are independent work
//! items run on a worker pool; results come back canonicalized by
//! (scheme, R_min, realization), so parallelism never changes output bytes.
//!
//! Infeasible draws are resampled from reserved RNG streams up to
//! [`RESAMPLE_CAP`] redraws; past the cap the cell is recorded infeasible,
//! carries no error values, and is excluded from averages. One bad cell never
//! aborts a sweep — hard solver failures become degraded cells without a
//! stored solution.
//!
//! Artifacts written under a run directory:
//! * `results.csv` — one row per cell, fixed header.
//! * `aggregate.csv` — per (scheme, R_min) mean/std/counts over converged cells.
//! * `beampattern_<scheme>_<rmin>.csv` — realization-0 snapshot per group.
//! * `trace_<scheme>_<rmin>_<realization>.csv` — one row per subproblem solve.
//! * `solutions/<scheme>_<rmin>_<realization>.json` — portable solution plus
//!   audits, sufficient to re-check a cell without re-solving it.
//! * `manifest.json` — full configuration, seed, and artifact version.

use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{matching_error, optimal_scale, power_db, DesignContext};
use crate::conic::SolveStatus;
use crate::evaluate::{
    audit_lifted, audit_recovered, rate_report, recover_beamformers, BeamformerSet,
    FeasibilityReport, RateReport,
};
use crate::scenario::{
    generate_channels, validate_config, ScenarioConfig, SolverConfig, Violation,
};
use crate::sca::{penalty_value, run_algorithm1, RunStatus, ScaError, TraceRow};
use crate::schemes::{
    assemble_covariance, build_conventional_isac, build_ideal_isac, build_noma_sdr,
    LiftedSolution, SchemeKind,
};
use crate::{CMat, CVec};

/// Redraws allowed per cell before it is recorded as infeasible.
pub const RESAMPLE_CAP: u32 = 10;

// Reserved-stream layout for the counter-based channel RNG. Redraw `a` of a
// cell uses stream `realization + a·2³²`; with unshared channels each
// (scheme, R_min) group additionally gets its own 2⁴⁰-aligned base, which the
// redraw offsets can never reach (cap 10 ⇒ offsets stay below 2³⁶).
const RESAMPLE_STRIDE: u64 = 1 << 32;
const UNSHARED_STRIDE: u64 = 1 << 40;

/// Which (scheme, R_min, realization) cells a sweep runs.
///
/// Defaults reproduce the desk-scale evaluation protocol: all five schemes,
/// R_min ∈ {1.5, 2.5, 3.5, 4.5} bits/s/Hz, 10 realizations from seed 42, with
/// one shared channel draw per realization across schemes and rate floors so
/// per-instance scheme comparisons are paired.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// Rate floors to sweep, bits/s/Hz, strictly increasing.
    pub r_min_values: Vec<f64>,
    /// Schemes to run; canonicalized to [`SchemeKind::ALL`] order.
    pub schemes: Vec<SchemeKind>,
    /// Monte Carlo realizations per (scheme, R_min) group.
    pub n_realizations: u64,
    /// Base seed; all randomness in a run flows from this one value.
    pub base_seed: u64,
    /// Share the channel draw of realization r across schemes and rate floors.
    pub shared_channels: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            r_min_values: vec![1.5, 2.5, 3.5, 4.5],
            schemes: SchemeKind::ALL.to_vec(),
            n_realizations: 10,
            base_seed: 42,
            shared_channels: true,
        }
    }
}

/// Full run configuration: physical scenario, solver controls, sweep protocol.
///
/// This is the schema of the JSON config file the command line consumes;
/// missing sections or fields take the documented defaults, unknown fields are
/// rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub solver: SolverConfig,
    pub sweep: SweepSpec,
}

impl RunConfig {
    /// Checks every invariant of all three sections, reporting all violations
    /// at once.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut violations = match validate_config(&self.scenario, &self.solver) {
            Ok(()) => Vec::new(),
            Err(v) => v,
        };
        violations.extend(validate_sweep(&self.sweep));
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }
}

/// Checks the sweep-protocol invariants.
pub fn validate_sweep(spec: &SweepSpec) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut check = |ok: bool, field: &'static str, message: String| {
        if !ok {
            violations.push(Violation { field, message });
        }
    };
    check(spec.n_realizations >= 1, "n_realizations", "must be ≥ 1".into());
    check(!spec.r_min_values.is_empty(), "r_min_values", "must be nonempty".into());
    for (i, &r) in spec.r_min_values.iter().enumerate() {
        check(
            r.is_finite() && r >= 0.0,
            "r_min_values",
            format!("value #{i} ({r}) must be finite and ≥ 0"),
        );
    }
    check(
        spec.r_min_values.windows(2).all(|w| w[0] < w[1]),
        "r_min_values",
        "must be strictly increasing".into(),
    );
    check(!spec.schemes.is_empty(), "schemes", "must be nonempty".into());
    violations
}

/// How a cell ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    /// Solver-certified optimum (one-shot schemes) or a converged SCA run.
    Converged,
    /// A usable iterate exists but without the full certificate — or, when the
    /// cell carries no stored solution, the solver failed outright.
    Degraded,
    /// Still infeasible after [`RESAMPLE_CAP`] redraws.
    Infeasible,
}

impl CellStatus {
    /// Stable identifier used in output files.
    pub fn as_str(&self) -> &'static str {
        match self {
            CellStatus::Converged => "converged",
            CellStatus::Degraded => "degraded",
            CellStatus::Infeasible => "infeasible",
        }
    }
}

impl std::fmt::Display for CellStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One Monte Carlo cell's scalar outcome — a row of `results.csv`.
///
/// Error fields are present exactly when the cell produced a usable iterate;
/// an infeasible cell carries no values. `matching_error_recovered` is
/// measured on the deployable design (recovered beams, renormalized to the
/// power budget, at its own optimal pattern scale), `matching_error_lifted`
/// on the general-rank iterate at the solver's scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub scheme: SchemeKind,
    pub r_min_bits: f64,
    /// Nominal realization index of the cell (redraws keep this label).
    pub realization: u64,
    pub status: CellStatus,
    pub matching_error_recovered: Option<f64>,
    pub matching_error_lifted: Option<f64>,
    /// Raw conic objective of the final accepted solve (for penalized
    /// subproblems this includes the weighted penalty term).
    pub objective: Option<f64>,
    /// Exact rank-one penalty Σ(tr − λ₁) at the final iterate.
    pub penalty_final: Option<f64>,
    /// Redraws consumed before the cell solved (or the cap, when infeasible).
    pub resamples: u32,
    pub wall_seconds: f64,
}

/// A cell's full outcome: scalars plus everything needed to re-audit it.
#[derive(Debug, Clone)]
pub struct CellRecord {
    pub result: CellResult,
    /// Final iterate and deployable design in portable form; `None` when the
    /// solver failed before producing anything usable.
    pub solution: Option<StoredSolution>,
    /// Audit of the deployable design against the true rate formula.
    pub audit_recovered: Option<FeasibilityReport>,
    /// Audit of the lifted iterate in covariance form.
    pub audit_lifted: Option<FeasibilityReport>,
    /// Achieved rates of the deployable design.
    pub rates: Option<RateReport>,
    /// Content digest of the channel draw actually used (after redraws).
    pub channel_digest: u64,
    /// One row per subproblem solve; empty for one-shot schemes.
    pub trace: Vec<TraceRow>,
}

/// Complex matrix as plain JSON: row-major real and imaginary parts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComplexMatrixJson {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl ComplexMatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        let rows = |part: fn(&num_complex::Complex<f64>) -> f64| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| part(&m[(i, j)])).collect())
                .collect()
        };
        Self { re: rows(|z| z.re), im: rows(|z| z.im) }
    }

    pub fn to_matrix(&self) -> CMat {
        let nrows = self.re.len();
        let ncols = self.re.first().map_or(0, Vec::len);
        CMat::from_fn(nrows, ncols, |i, j| {
            num_complex::Complex::new(self.re[i][j], self.im[i][j])
        })
    }
}

/// Complex vector as plain JSON: real and imaginary parts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComplexVectorJson {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexVectorJson {
    pub fn from_vector(v: &CVec) -> Self {
        Self { re: v.iter().map(|z| z.re).collect(), im: v.iter().map(|z| z.im).collect() }
    }

    pub fn to_vector(&self) -> CVec {
        CVec::from_iterator(
            self.re.len(),
            self.re.iter().zip(&self.im).map(|(&re, &im)| num_complex::Complex::new(re, im)),
        )
    }
}

/// Deployable beamformers in portable form (power-renormalized).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredBeamformers {
    pub w_comm: Vec<ComplexVectorJson>,
    pub w_virt: Vec<ComplexVectorJson>,
    pub r_resid: Option<ComplexMatrixJson>,
    pub rank_ratios: Vec<f64>,
    pub approximate: bool,
}

/// A cell's solution in a binary-free portable form: the lifted covariances
/// (enough to re-run both audits without re-solving) plus the deployable
/// beamformers actually evaluated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredSolution {
    pub scheme: SchemeKind,
    pub delta: f64,
    pub objective_value: f64,
    pub w_comm: Vec<ComplexMatrixJson>,
    pub w_virt: Vec<ComplexMatrixJson>,
    pub r_resid: Option<ComplexMatrixJson>,
    pub recovered: Option<StoredBeamformers>,
}

impl StoredSolution {
    pub fn from_parts(lifted: &LiftedSolution, deployable: Option<&BeamformerSet>) -> Self {
        Self {
            scheme: lifted.scheme,
            delta: lifted.delta,
            objective_value: lifted.objective_value,
            w_comm: lifted.w_comm.iter().map(ComplexMatrixJson::from_matrix).collect(),
            w_virt: lifted.w_virt.iter().map(ComplexMatrixJson::from_matrix).collect(),
            r_resid: lifted.r_resid.as_ref().map(ComplexMatrixJson::from_matrix),
            recovered: deployable.map(|bf| StoredBeamformers {
                w_comm: bf.w_comm.iter().map(ComplexVectorJson::from_vector).collect(),
                w_virt: bf.w_virt.iter().map(ComplexVectorJson::from_vector).collect(),
                r_resid: bf.r_resid.as_ref().map(ComplexMatrixJson::from_matrix),
                rank_ratios: bf.rank_ratios.clone(),
                approximate: bf.approximate,
            }),
        }
    }

    /// Rebuilds the lifted solution (exact: JSON round-trips f64 losslessly).
    pub fn to_lifted(&self) -> LiftedSolution {
        LiftedSolution {
            scheme: self.scheme,
            w_comm: self.w_comm.iter().map(ComplexMatrixJson::to_matrix).collect(),
            w_virt: self.w_virt.iter().map(ComplexMatrixJson::to_matrix).collect(),
            r_resid: self.r_resid.as_ref().map(ComplexMatrixJson::to_matrix),
            delta: self.delta,
            objective_value: self.objective_value,
        }
    }

    /// Rebuilds the deployable design, when one was stored.
    pub fn deployable(&self) -> Option<BeamformerSet> {
        self.recovered.as_ref().map(|r| BeamformerSet {
            scheme: self.scheme,
            w_comm: r.w_comm.iter().map(ComplexVectorJson::to_vector).collect(),
            w_virt: r.w_virt.iter().map(ComplexVectorJson::to_vector).collect(),
            r_resid: r.r_resid.as_ref().map(ComplexMatrixJson::to_matrix),
            rank_ratios: r.rank_ratios.clone(),
            approximate: r.approximate,
        })
    }
}

// Stream index for a cell's channel draw. Shared channels: realization r uses
// stream r for every scheme and rate floor, so per-instance comparisons are
// paired. Unshared: each (scheme, R_min) group draws from its own reserved
// band. Redraw `attempt` shifts by attempt·2³² either way.
fn channel_stream(
    spec: &SweepSpec,
    scheme: SchemeKind,
    r_min_index: usize,
    realization: u64,
    attempt: u32,
) -> u64 {
    let base = if spec.shared_channels {
        0
    } else {
        let scheme_pos = SchemeKind::ALL
            .iter()
            .position(|k| *k == scheme)
            .expect("every scheme appears in the canonical list") as u64;
        let groups = spec.r_min_values.len() as u64;
        (1 + scheme_pos * groups + r_min_index as u64) * UNSHARED_STRIDE
    };
    base + u64::from(attempt) * RESAMPLE_STRIDE + realization
}

// One attempt at solving a cell on a fixed channel draw.
enum CellAttempt {
    Solved {
        status: CellStatus,
        solution: LiftedSolution,
        penalty_final: f64,
        trace: Vec<TraceRow>,
    },
    Infeasible,
    /// No usable iterate at all.
    Failed,
}

fn solve_cell(
    scheme: SchemeKind,
    channels: &crate::scenario::ChannelSet,
    config: &ScenarioConfig,
    solver: &SolverConfig,
    ctx: &DesignContext,
) -> CellAttempt {
    if scheme.uses_sca() {
        match run_algorithm1(scheme, channels, config, solver, ctx) {
            Ok(result) => CellAttempt::Solved {
                status: match result.status {
                    RunStatus::Converged => CellStatus::Converged,
                    RunStatus::Degraded { .. } => CellStatus::Degraded,
                },
                penalty_final: result.final_penalty,
                solution: result.solution,
                trace: result.trace,
            },
            Err(ScaError::Infeasible) => CellAttempt::Infeasible,
            Err(_) => CellAttempt::Failed,
        }
    } else {
        let program = match scheme {
            SchemeKind::NomaSdr => build_noma_sdr(channels, config, ctx),
            SchemeKind::IdealIsac => build_ideal_isac(channels, config, ctx),
            SchemeKind::ConventionalIsac => build_conventional_isac(channels, config, ctx),
            SchemeKind::NomaSca | SchemeKind::CommOnly => {
                unreachable!("SCA schemes are handled above")
            }
        };
        let outcome = match program.solve(solver.solver_tol) {
            Ok(outcome) => outcome,
            Err(_) => return CellAttempt::Failed,
        };
        match outcome.status {
            SolveStatus::Optimal => {
                let solution =
                    outcome.solution.expect("optimal outcomes always carry a solution");
                let penalty_final = penalty_value(&solution);
                CellAttempt::Solved {
                    status: CellStatus::Converged,
                    solution,
                    penalty_final,
                    trace: Vec::new(),
                }
            }
            SolveStatus::Infeasible => CellAttempt::Infeasible,
            SolveStatus::Unbounded => CellAttempt::Failed,
            SolveStatus::NumericalFailure => match outcome.iterate {
                Some(solution) => {
                    let penalty_final = penalty_value(&solution);
                    CellAttempt::Solved {
                        status: CellStatus::Degraded,
                        solution,
                        penalty_final,
                        trace: Vec::new(),
                    }
                }
                None => CellAttempt::Failed,
            },
        }
    }
}

/// Runs one Monte Carlo cell, resampling infeasible draws up to the cap.
///
/// `r_min_index` addresses `spec.r_min_values`; the configs must already be
/// valid. The cell never panics on solver trouble: hard failures come back as
/// a degraded record without a stored solution.
pub fn run_cell(
    scheme: SchemeKind,
    r_min_index: usize,
    realization: u64,
    spec: &SweepSpec,
    scenario: &ScenarioConfig,
    solver: &SolverConfig,
) -> CellRecord {
    let r_min = spec.r_min_values[r_min_index];
    let config = ScenarioConfig { min_rate_bits: r_min, ..scenario.clone() };
    let ctx = DesignContext::from_config(&config).expect("configuration validated upstream");
    let start = Instant::now();

    let mut attempt = 0u32;
    loop {
        let stream = channel_stream(spec, scheme, r_min_index, realization, attempt);
        let channels = generate_channels(&config, spec.base_seed, stream);
        let digest = channels.digest();
        match solve_cell(scheme, &channels, &config, solver, &ctx) {
            CellAttempt::Infeasible if attempt < RESAMPLE_CAP => {
                attempt += 1;
                continue;
            }
            CellAttempt::Infeasible => {
                return CellRecord {
                    result: CellResult {
                        scheme,
                        r_min_bits: r_min,
                        realization,
                        status: CellStatus::Infeasible,
                        matching_error_recovered: None,
                        matching_error_lifted: None,
                        objective: None,
                        penalty_final: None,
                        resamples: attempt,
                        wall_seconds: start.elapsed().as_secs_f64(),
                    },
                    solution: None,
                    audit_recovered: None,
                    audit_lifted: None,
                    rates: None,
                    channel_digest: digest,
                    trace: Vec::new(),
                };
            }
            CellAttempt::Failed => {
                return CellRecord {
                    result: CellResult {
                        scheme,
                        r_min_bits: r_min,
                        realization,
                        status: CellStatus::Degraded,
                        matching_error_recovered: None,
                        matching_error_lifted: None,
                        objective: None,
                        penalty_final: None,
                        resamples: attempt,
                        wall_seconds: start.elapsed().as_secs_f64(),
                    },
                    solution: None,
                    audit_recovered: None,
                    audit_lifted: None,
                    rates: None,
                    channel_digest: digest,
                    trace: Vec::new(),
                };
            }
            CellAttempt::Solved { mut status, solution, penalty_final, trace } => {
                let lifted_err = matching_error(
                    solution.delta,
                    &assemble_covariance(&solution),
                    &ctx.desired,
                    &ctx.steering,
                );
                let lifted_audit = audit_lifted(&channels, &solution, &config, solver);

                // Deployable design: truncate to beamformers, renormalize to
                // the exact power budget, evaluate at its own optimal scale.
                let deployable = recover_beamformers(&solution, solver.rank_tol)
                    .map(|bf| bf.renormalized_to_power(config.tx_power_watts()));
                let (recovered_err, recovered_audit, rates, deployable) = match deployable {
                    Ok(bf) => {
                        let total = bf.total_covariance();
                        let err = optimal_scale(&total, &ctx.desired, &ctx.steering)
                            .map(|d| matching_error(d, &total, &ctx.desired, &ctx.steering))
                            .ok();
                        let audit = audit_recovered(&channels, &bf, &config, solver);
                        let rates = rate_report(&channels, &bf, config.noise_power_watts());
                        (err, Some(audit), Some(rates), Some(bf))
                    }
                    // A beam with no positive power direction cannot be
                    // deployed; keep the lifted numbers but flag the cell.
                    Err(_) => {
                        status = CellStatus::Degraded;
                        (None, None, None, None)
                    }
                };

                return CellRecord {
                    result: CellResult {
                        scheme,
                        r_min_bits: r_min,
                        realization,
                        status,
                        matching_error_recovered: recovered_err,
                        matching_error_lifted: Some(lifted_err),
                        objective: Some(solution.objective_value),
                        penalty_final: Some(penalty_final),
                        resamples: attempt,
                        wall_seconds: start.elapsed().as_secs_f64(),
                    },
                    solution: Some(StoredSolution::from_parts(&solution, deployable.as_ref())),
                    audit_recovered: recovered_audit,
                    audit_lifted: Some(lifted_audit),
                    rates,
                    channel_digest: digest,
                    trace,
                };
            }
        }
    }
}

/// Runs every cell of a sweep on the global worker pool.
///
/// Output order is canonical regardless of scheduling: schemes in
/// [`SchemeKind::ALL`] order (duplicates collapsed), then rate floors in
/// listed order, then realizations.
pub fn run_sweep(
    spec: &SweepSpec,
    scenario: &ScenarioConfig,
    solver: &SolverConfig,
) -> Vec<CellRecord> {
    let schemes: Vec<SchemeKind> =
        SchemeKind::ALL.iter().copied().filter(|k| spec.schemes.contains(k)).collect();
    let mut jobs = Vec::new();
    for &scheme in &schemes {
        for r_min_index in 0..spec.r_min_values.len() {
            for realization in 0..spec.n_realizations {
                jobs.push((scheme, r_min_index, realization));
            }
        }
    }
    jobs.par_iter()
        .map(|&(scheme, r_min_index, realization)| {
            run_cell(scheme, r_min_index, realization, spec, scenario, solver)
        })
        .collect()
}

/// The matching error a cell contributes to Fig. 3-style averages: the
/// deployable (recovered) value for SCA schemes, the lifted relaxation value
/// for one-shot schemes, which serve as performance bounds.
pub fn headline_error(result: &CellResult) -> Option<f64> {
    if result.scheme.uses_sca() {
        result.matching_error_recovered
    } else {
        result.matching_error_lifted
    }
}

/// Mean/std of the headline matching error over converged cells of one
/// (scheme, R_min) group, with status counts.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub scheme: SchemeKind,
    pub r_min_bits: f64,
    /// `None` when the group has no converged cells — never a silent zero.
    pub mean_matching_error: Option<f64>,
    /// Sample standard deviation; 0 for a single converged cell.
    pub std_matching_error: Option<f64>,
    pub converged: usize,
    pub degraded: usize,
    pub infeasible: usize,
}

/// Aggregates cell results per (scheme, R_min) group in canonical order.
pub fn aggregate(results: &[CellResult]) -> Vec<AggregateRow> {
    let mut r_mins: Vec<f64> = results.iter().map(|r| r.r_min_bits).collect();
    r_mins.sort_by(f64::total_cmp);
    r_mins.dedup();

    let mut rows = Vec::new();
    for &scheme in &SchemeKind::ALL {
        for &r_min in &r_mins {
            let group: Vec<&CellResult> = results
                .iter()
                .filter(|r| r.scheme == scheme && r.r_min_bits == r_min)
                .collect();
            if group.is_empty() {
                continue;
            }
            let count = |status: CellStatus| {
                group.iter().filter(|r| r.status == status).count()
            };
            let errors: Vec<f64> = group
                .iter()
                .filter(|r| r.status == CellStatus::Converged)
                .filter_map(|r| headline_error(r))
                .collect();
            let (mean, std) = if errors.is_empty() {
                (None, None)
            } else {
                let n = errors.len() as f64;
                let mean = errors.iter().sum::<f64>() / n;
                let std = if errors.len() == 1 {
                    0.0
                } else {
                    (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                };
                (Some(mean), Some(std))
            };
            rows.push(AggregateRow {
                scheme,
                r_min_bits: r_min,
                mean_matching_error: mean,
                std_matching_error: std,
                converged: count(CellStatus::Converged),
                degraded: count(CellStatus::Degraded),
                infeasible: count(CellStatus::Infeasible),
            });
        }
    }
    rows
}

/// One angle of a beampattern snapshot.
#[derive(Debug, Clone, Serialize)]
pub struct BeampatternRow {
    pub theta_deg: f64,
    /// Desired pattern δ·φ(θ) at the design's own scale.
    pub desired: f64,
    pub power_linear: f64,
    pub power_db: f64,
}

/// Achieved and desired beampattern of a solved cell, one row per grid angle.
///
/// Uses the same design the cell's headline error is measured on: the
/// deployable (recovered, renormalized) design for SCA schemes at its optimal
/// scale, the lifted covariance at the solver's scale for one-shot schemes.
/// The cell must carry a stored solution.
pub fn beampattern_snapshot(record: &CellRecord, ctx: &DesignContext, feas_tol: f64) -> Vec<BeampatternRow> {
    let stored = record
        .solution
        .as_ref()
        .expect("beampattern snapshots require a solved cell");
    let (delta, total) = match stored.deployable().filter(|_| stored.scheme.uses_sca()) {
        Some(bf) => {
            let total = bf.total_covariance();
            let delta = optimal_scale(&total, &ctx.desired, &ctx.steering)
                .expect("a deployable design has a PSD total covariance");
            (delta, total)
        }
        None => (stored.delta, assemble_covariance(&stored.to_lifted())),
    };
    let pattern = crate::array::beampattern(&total, &ctx.steering, feas_tol)
        .expect("a solved cell's total covariance is PSD within tolerance");
    ctx.grid
        .angles_deg()
        .iter()
        .zip(&ctx.desired.values)
        .zip(&pattern)
        .map(|((&theta_deg, &phi), &p)| BeampatternRow {
            theta_deg,
            desired: delta * phi,
            power_linear: p,
            power_db: power_db(p),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Artifact rendering. All floats are printed with the shortest representation
// that round-trips, so identical runs produce identical bytes; wall-clock
// fields use fixed precision and are the only nondeterministic columns.
// ---------------------------------------------------------------------------

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

/// `results.csv` content, one row per cell.
pub fn results_csv(records: &[CellRecord]) -> String {
    let mut out = String::from(
        "scheme,r_min_bits,realization,matching_error_recovered,matching_error_lifted,\
         penalty_final,status,resamples,wall_seconds\n",
    );
    for record in records {
        let r = &record.result;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.3}\n",
            r.scheme.name(),
            r.r_min_bits,
            r.realization,
            fmt_opt(r.matching_error_recovered),
            fmt_opt(r.matching_error_lifted),
            fmt_opt(r.penalty_final),
            r.status,
            r.resamples,
            r.wall_seconds,
        ));
    }
    out
}

/// `aggregate.csv` content, one row per (scheme, R_min) group.
pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "scheme,r_min_bits,mean_matching_error,std_matching_error,converged,degraded,infeasible\n",
    );
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.scheme.name(),
            row.r_min_bits,
            fmt_opt(row.mean_matching_error),
            fmt_opt(row.std_matching_error),
            row.converged,
            row.degraded,
            row.infeasible,
        ));
    }
    out
}

/// Convergence-trace CSV content, one row per subproblem solve.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from(
        "outer_iter,inner_iter,rho,penalized_objective,matching_error,penalty_value,solve_seconds\n",
    );
    for row in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6}\n",
            row.outer_iter,
            row.inner_iter,
            row.rho,
            row.penalized_objective,
            row.matching_error,
            row.penalty_value,
            row.solve_seconds,
        ));
    }
    out
}

/// Beampattern CSV content, one row per grid angle.
pub fn beampattern_csv(rows: &[BeampatternRow]) -> String {
    let mut out = String::from("theta_deg,desired,power_linear,power_db\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.theta_deg, row.desired, row.power_linear, row.power_db
        ));
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact_version: &'static str,
    seed: u64,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct CellDossier<'a> {
    result: &'a CellResult,
    /// Hex digest of the channel draw the cell actually used.
    channel_digest: String,
    solution: &'a StoredSolution,
    audit_recovered: &'a Option<FeasibilityReport>,
    audit_lifted: &'a Option<FeasibilityReport>,
    rates: &'a Option<RateReport>,
}

fn file_label(r_min: f64) -> String {
    format!("{r_min}")
}

/// Writes the full artifact set of a sweep under `out_dir`.
///
/// Beampattern snapshots are written for realization 0 of each
/// (scheme, R_min) group — the representative cell — and traces for every
/// cell that ran the SCA loop.
pub fn write_run_artifacts(
    out_dir: &Path,
    run: &RunConfig,
    records: &[CellRecord],
) -> io::Result<()> {
    let solutions_dir = out_dir.join("solutions");
    fs::create_dir_all(&solutions_dir)?;

    fs::write(out_dir.join("results.csv"), results_csv(records))?;
    let results: Vec<CellResult> = records.iter().map(|r| r.result.clone()).collect();
    fs::write(out_dir.join("aggregate.csv"), aggregate_csv(&aggregate(&results)))?;

    let manifest = Manifest {
        artifact_version: env!("CARGO_PKG_VERSION"),
        seed: run.sweep.base_seed,
        config: run,
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    fs::write(out_dir.join("manifest.json"), manifest_json)?;

    // The angular context is rate-independent, so one serves every cell.
    let ctx = DesignContext::from_config(&run.scenario)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;

    for record in records {
        let r = &record.result;
        let label = file_label(r.r_min_bits);
        if !record.trace.is_empty() {
            let name = format!("trace_{}_{}_{}.csv", r.scheme.name(), label, r.realization);
            fs::write(out_dir.join(name), trace_csv(&record.trace))?;
        }
        if let Some(solution) = &record.solution {
            let dossier = CellDossier {
                result: r,
                channel_digest: format!("{:016x}", record.channel_digest),
                solution,
                audit_recovered: &record.audit_recovered,
                audit_lifted: &record.audit_lifted,
                rates: &record.rates,
            };
            let mut json = serde_json::to_string_pretty(&dossier)?;
            json.push('\n');
            let name = format!("{}_{}_{}.json", r.scheme.name(), label, r.realization);
            fs::write(solutions_dir.join(name), json)?;

            if r.realization == 0 {
                let rows = beampattern_snapshot(record, &ctx, run.solver.feas_tol);
                let name = format!("beampattern_{}_{}.csv", r.scheme.name(), label);
                fs::write(out_dir.join(name), beampattern_csv(&rows))?;
            }
        }
    }
    Ok(())
}
