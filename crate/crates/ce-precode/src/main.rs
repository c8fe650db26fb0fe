use ce_precode::harness::{
    apply_scale_defaults, emit_csv, parse_preset, run_experiment, Cell, ExperimentKind,
    ExperimentSpec,
};
use ce_precode::CeError;
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ce-precode",
    version,
    about = "Constant-envelope multi-user MIMO precoding experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Preset file with key=value defaults.
    #[arg(long, value_name = "FILE")]
    preset: Option<PathBuf>,

    /// Master seed; every random stream derives from it.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Worker thread count; CE_PRECODE_WORKERS is the fallback.
    #[arg(long, value_name = "K")]
    workers: Option<usize>,

    /// Output CSV path; a sidecar is written at PATH.meta.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Full-scale Monte Carlo counts instead of the desk-scale defaults.
    #[arg(long)]
    full: bool,

    /// Parameter overrides, e.g. m=10 n_list=60,100.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Ergodic multi-user interference versus antenna count.
    MuiVsN(RunArgs),
    /// Highest symbol energy meeting a fixed MUI target, versus antenna count.
    EStarVsN(RunArgs),
    /// Minimum power for a target per-user rate: precoder, capacity bound and gap.
    MinPowerVsN(RunArgs),
    /// Power gap to the capacity bound across target rates, with the
    /// zero-forcing phase-only baseline.
    PowerGapVsRate(RunArgs),
    /// Per-user rate under total power scaled as P0/N.
    RateVsNScaledPower(RunArgs),
    /// Gaussian-limit diagnostics of the noise-free received vector.
    CltCheck(RunArgs),
    /// Probability that the received vector lands in a box around a symbol
    /// vector, against the Gaussian prediction.
    BoxProb(RunArgs),
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::MuiVsN(a) => (ExperimentKind::MuiVsN, a),
            Command::EStarVsN(a) => (ExperimentKind::EStarVsN, a),
            Command::MinPowerVsN(a) => (ExperimentKind::MinPowerVsN, a),
            Command::PowerGapVsRate(a) => (ExperimentKind::PowerGapVsRate, a),
            Command::RateVsNScaledPower(a) => (ExperimentKind::RateVsNScaledPower, a),
            Command::CltCheck(a) => (ExperimentKind::CltCheck, a),
            Command::BoxProb(a) => (ExperimentKind::BoxProb, a),
        }
    }
}

fn exit_code_for(err: &CeError) -> u8 {
    match err {
        CeError::InvalidSpec(_) | CeError::Parse(_) | CeError::Dimension(_) => 2,
        CeError::Bracket(_) => 3,
        _ => 1,
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<u8, CeError> {
    let mut params: BTreeMap<String, String> = match &args.preset {
        Some(path) => parse_preset(path)?,
        None => BTreeMap::new(),
    };
    for pair in &args.overrides {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            CeError::InvalidSpec(format!("expected KEY=VALUE, got `{pair}`"))
        })?;
        params.insert(key.trim().to_string(), value.trim().to_string());
    }
    apply_scale_defaults(kind, &mut params, args.full);

    let workers = args.workers.or_else(|| {
        std::env::var("CE_PRECODE_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(k) = workers {
        if k == 0 {
            return Err(CeError::InvalidSpec("workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CeError::InvalidSpec(format!("thread pool: {e}")))?;
    }

    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", kind.name())));
    let spec = ExperimentSpec::new(kind, params, args.seed, out.clone());
    spec.validate()?;
    eprintln!("{}: seed={} out={}", kind.name(), spec.master_seed, out.display());

    let record = run_experiment(&spec)?;
    emit_csv(&record, &spec, &out)?;
    eprintln!(
        "{}: {} rows in {:.1}s -> {}",
        kind.name(),
        record.rows.len(),
        record.wall_time_seconds,
        out.display()
    );

    // Rows that hit a bracket failure carry a message in the `error` column.
    let failed = record
        .columns
        .iter()
        .position(|c| c == "error")
        .map(|i| {
            record
                .rows
                .iter()
                .any(|row| matches!(row[i], Cell::Text(_)))
        })
        .unwrap_or(false);
    if failed {
        eprintln!("{}: some rows failed; see the error column", kind.name());
        return Ok(3);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match run(kind, args) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
