//! Command-line front end: configuration loading, experiment commands, and
//! exit codes.
//!
//! Every command reads a JSON run configuration (`--config`); `--seed`
//! overrides the configured base seed (default 42) and `--out` picks the
//! artifact directory (default `./runs/<timestamp>`). Machine-readable output
//! goes only to files; everything printed is human-readable and goes to
//! standard error.
//!
//! Exit codes: 0 success (including degraded cells that still carry a usable
//! iterate), 2 configuration or usage error (violations printed one per
//! line), 3 when any requested cell is still infeasible after resampling,
//! 4 when the solver failed without producing a usable iterate. I/O failures
//! exit 1.

use std::fs;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use crate::array::DesignContext;
use crate::experiment::{
    beampattern_csv, beampattern_snapshot, run_cell, run_sweep, trace_csv, validate_sweep,
    write_run_artifacts, CellRecord, CellStatus, RunConfig, SweepSpec,
};
use crate::scenario::Violation;
use crate::schemes::SchemeKind;

const EXIT_OK: i32 = 0;
const EXIT_IO: i32 = 1;
const EXIT_CONFIG: i32 = 2;
const EXIT_INFEASIBLE: i32 = 3;
const EXIT_NUMERICAL: i32 = 4;

fn parse_scheme(s: &str) -> Result<SchemeKind, String> {
    SchemeKind::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = SchemeKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown scheme '{s}' (expected one of: {})", names.join(", "))
    })
}

#[derive(Parser)]
#[command(
    name = "noma-isac",
    version,
    about = "Joint communication-sensing transmit beamforming experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration (scenario, solver, sweep sections).
    #[arg(long)]
    config: PathBuf,
    /// Base seed override; all randomness flows from this one value.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory; defaults to ./runs/<timestamp>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available hardware parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CellArgs {
    /// Scheme to solve.
    #[arg(long, value_parser = parse_scheme, default_value = "noma_sca")]
    scheme: SchemeKind,
    /// Rate floor in bits/s/Hz; defaults to the configured min_rate_bits.
    #[arg(long = "r-min")]
    r_min: Option<f64>,
    /// Monte Carlo realization index.
    #[arg(long, default_value_t = 0)]
    realization: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration file, reporting every violation at once.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Solve one (scheme, R_min, realization) cell and write its artifacts.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        cell: CellArgs,
    },
    /// Run the Monte Carlo sweep and write the full artifact set.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the configured rate floors (comma-separated, bits/s/Hz).
        #[arg(long = "r-min", value_delimiter = ',')]
        r_min: Vec<f64>,
        /// Override the configured schemes (comma-separated names).
        #[arg(long, value_delimiter = ',', value_parser = parse_scheme)]
        schemes: Vec<SchemeKind>,
        /// Override the configured realization count.
        #[arg(long)]
        realizations: Option<u64>,
    },
    /// Write the achieved and desired beampattern of one solved cell.
    Beampattern {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        cell: CellArgs,
    },
    /// Run the penalty-SCA convergence trace for one cell.
    Trace {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        cell: CellArgs,
    },
}

/// Parses arguments, runs the selected command, and returns the exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { common } => match load_config(&common) {
            Ok(_) => {
                eprintln!("configuration valid: {}", common.config.display());
                EXIT_OK
            }
            Err(code) => code,
        },
        Command::Solve { common, cell } => single_cell(&common, &cell, CellCommand::Solve),
        Command::Beampattern { common, cell } => {
            single_cell(&common, &cell, CellCommand::Beampattern)
        }
        Command::Trace { common, cell } => single_cell(&common, &cell, CellCommand::Trace),
        Command::Sweep { common, r_min, schemes, realizations } => {
            sweep(&common, r_min, schemes, realizations)
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, i32> {
    let text = fs::read_to_string(&common.config).map_err(|e| {
        eprintln!("{}: {e}", common.config.display());
        EXIT_CONFIG
    })?;
    let mut run: RunConfig = serde_json::from_str(&text).map_err(|e| {
        eprintln!("{}: {e}", common.config.display());
        EXIT_CONFIG
    })?;
    if let Some(seed) = common.seed {
        run.sweep.base_seed = seed;
    }
    match run.validate() {
        Ok(()) => Ok(run),
        Err(violations) => {
            report(&violations);
            Err(EXIT_CONFIG)
        }
    }
}

fn report(violations: &[Violation]) {
    for v in violations {
        eprintln!("{v}");
    }
}

fn configure_pool(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // Fails only if a global pool already exists, which cannot happen
        // before the first solve of this process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn output_dir(common: &CommonArgs) -> PathBuf {
    common.out.clone().unwrap_or_else(|| {
        let millis = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        PathBuf::from("runs").join(millis.to_string())
    })
}

/// Exit code implied by a batch of finished cells: infeasibility wins over
/// hard numerical failure; degraded cells with a usable iterate still count
/// as success.
fn exit_code_for(records: &[CellRecord]) -> i32 {
    let infeasible =
        records.iter().any(|r| r.result.status == CellStatus::Infeasible);
    let hard_failure = records
        .iter()
        .any(|r| r.result.status == CellStatus::Degraded && r.solution.is_none());
    if infeasible {
        EXIT_INFEASIBLE
    } else if hard_failure {
        EXIT_NUMERICAL
    } else {
        EXIT_OK
    }
}

fn describe(record: &CellRecord) -> String {
    let r = &record.result;
    let errors = match (r.matching_error_recovered, r.matching_error_lifted) {
        (Some(rec), Some(lift)) => {
            format!("error recovered {rec:.6} / lifted {lift:.6}")
        }
        (None, Some(lift)) => format!("error lifted {lift:.6}"),
        _ => "no usable iterate".to_string(),
    };
    format!(
        "{} r_min={} realization={}: {} ({errors}, {} resamples, {:.1}s)",
        r.scheme.name(),
        r.r_min_bits,
        r.realization,
        r.status,
        r.resamples,
        r.wall_seconds
    )
}

enum CellCommand {
    Solve,
    Beampattern,
    Trace,
}

fn single_cell(common: &CommonArgs, cell: &CellArgs, command: CellCommand) -> i32 {
    let mut run = match load_config(common) {
        Ok(run) => run,
        Err(code) => return code,
    };
    if matches!(command, CellCommand::Trace) && !cell.scheme.uses_sca() {
        eprintln!(
            "scheme: trace requires a scheme solved by the SCA loop (one of: noma_sca, comm_only)"
        );
        return EXIT_CONFIG;
    }
    configure_pool(common.jobs);

    let r_min = cell.r_min.unwrap_or(run.scenario.min_rate_bits);
    let spec = SweepSpec {
        r_min_values: vec![r_min],
        schemes: vec![cell.scheme],
        n_realizations: cell.realization + 1,
        ..run.sweep.clone()
    };
    let violations = validate_sweep(&spec);
    if !violations.is_empty() {
        report(&violations);
        return EXIT_CONFIG;
    }
    run.sweep = spec;

    let record = run_cell(cell.scheme, 0, cell.realization, &run.sweep, &run.scenario, &run.solver);
    eprintln!("{}", describe(&record));

    let out = output_dir(common);
    let io_result = match command {
        CellCommand::Solve => write_run_artifacts(&out, &run, std::slice::from_ref(&record)),
        CellCommand::Beampattern => record.solution.as_ref().map_or(Ok(()), |_| {
            let ctx = DesignContext::from_config(&run.scenario)
                .expect("configuration validated above");
            let rows = beampattern_snapshot(&record, &ctx, run.solver.feas_tol);
            let name =
                format!("beampattern_{}_{}.csv", cell.scheme.name(), record.result.r_min_bits);
            fs::create_dir_all(&out).and_then(|()| fs::write(out.join(name), beampattern_csv(&rows)))
        }),
        CellCommand::Trace => {
            let name = format!(
                "trace_{}_{}_{}.csv",
                cell.scheme.name(),
                record.result.r_min_bits,
                record.result.realization
            );
            fs::create_dir_all(&out).and_then(|()| fs::write(out.join(name), trace_csv(&record.trace)))
        }
    };
    if let Err(e) = io_result {
        eprintln!("{}: {e}", out.display());
        return EXIT_IO;
    }
    eprintln!("artifacts written to {}", out.display());
    exit_code_for(std::slice::from_ref(&record))
}

fn sweep(
    common: &CommonArgs,
    r_min: Vec<f64>,
    schemes: Vec<SchemeKind>,
    realizations: Option<u64>,
) -> i32 {
    let mut run = match load_config(common) {
        Ok(run) => run,
        Err(code) => return code,
    };
    if !r_min.is_empty() {
        run.sweep.r_min_values = r_min;
    }
    if !schemes.is_empty() {
        run.sweep.schemes = schemes;
    }
    if let Some(n) = realizations {
        run.sweep.n_realizations = n;
    }
    let violations = validate_sweep(&run.sweep);
    if !violations.is_empty() {
        report(&violations);
        return EXIT_CONFIG;
    }
    configure_pool(common.jobs);

    let records = run_sweep(&run.sweep, &run.scenario, &run.solver);
    for record in &records {
        if record.result.resamples > 0 {
            eprintln!("{}", describe(record));
        }
    }
    let count = |status: CellStatus| {
        records.iter().filter(|r| r.result.status == status).count()
    };
    eprintln!(
        "{} cells: {} converged, {} degraded, {} infeasible",
        records.len(),
        count(CellStatus::Converged),
        count(CellStatus::Degraded),
        count(CellStatus::Infeasible)
    );

    let out = output_dir(common);
    if let Err(e) = write_run_artifacts(&out, &run, &records) {
        eprintln!("{}: {e}", out.display());
        return EXIT_IO;
    }
    eprintln!("artifacts written to {}", out.display());
    exit_code_for(&records)
}
