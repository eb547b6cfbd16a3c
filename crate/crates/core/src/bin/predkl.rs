//! `predkl`: run the predictive-density experiments from the command line.
//!
//! Exit codes: 0 all checks passed, 2 a statistical check failed, 1 error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use predkl::experiments::{
    emit_plotdata, load_config, rerun, run, write_outputs, ExperimentConfig, ExperimentKind, OutputFormat, PlotKind,
    RunRecord, Status, OUTPUT_DIR_ENV,
};

#[derive(Parser)]
#[command(name = "predkl", version, about = "Predictive density experiments under KL loss")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Config file in the `key = value` grammar
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output file; the directory is replaced by $PREDKL_OUTPUT_DIR when set
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Print the resolved config and exit
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Bayes KL risks for each prior over a grid of |mu|
    RiskTable(RunArgs),
    /// Check the KL / quadratic-risk identity per prior and |mu|
    VerifyBridge(RunArgs),
    /// Plug-in vs Bayes risk curves
    DominanceScan(RunArgs),
    /// Average-risk gaps for truncated priors (p <= 2)
    BlythRun(RunArgs),
    /// Condition table and admissibility route per prior and dimension
    CheckAdmissibility(RunArgs),
    /// Truncation construction on a one-dimensional density
    TruncationDemo(RunArgs),
    /// Long-format table from a saved record
    PlotData {
        #[arg(long)]
        record: PathBuf,
        /// risk, bridge, blyth, admissibility or truncation (default: by experiment)
        #[arg(long)]
        kind: Option<String>,
        /// Write here instead of stdout
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-execute a saved record and compare every cell bit for bit
    Rerun {
        #[arg(long)]
        record: PathBuf,
    },
}

fn resolve(kind: ExperimentKind, args: &RunArgs) -> predkl::Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => load_config(path, Some(kind))?,
        None => ExperimentConfig::default_for(kind),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(w) = args.workers {
        config.workers = w;
    }
    if let Some(out) = &args.output {
        config.output.path = Some(out.clone());
    }
    if let Some(f) = &args.format {
        config.output.format = f.parse::<OutputFormat>().map_err(|m| predkl::Error::Config {
            line: 0,
            field: "format".into(),
            message: m,
        })?;
    }
    config.validate()?;
    Ok(config)
}

fn output_dir() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn summarize(record: &RunRecord) {
    for c in &record.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for f in record.failures() {
        if let predkl::experiments::Cell::Failure { series, x, message } = f {
            println!("ERROR {series}{}: {message}", x.map(|x| format!(" at {x}")).unwrap_or_default());
        }
    }
    let status = match record.status {
        Status::Pass => "pass",
        Status::CheckFailed => "check failed",
        Status::Error => "error",
    };
    println!(
        "{}: {status} ({} checks, {} cells, {:.1}s)",
        record.config.experiment,
        record.checks.len(),
        record.cells.len(),
        record.wall_clock_seconds
    );
}

fn run_experiment(kind: ExperimentKind, args: &RunArgs) -> predkl::Result<ExitCode> {
    let config = resolve(kind, args)?;
    if args.print_config {
        print!("{}", config.to_text());
        return Ok(ExitCode::SUCCESS);
    }
    let record = run(&config)?;
    summarize(&record);
    for path in write_outputs(&record, output_dir().as_deref())? {
        eprintln!("wrote {}", path.display());
    }
    Ok(ExitCode::from(record.status.exit_code() as u8))
}

fn plot_data(record: &Path, kind: Option<&str>, output: Option<&Path>) -> predkl::Result<ExitCode> {
    let rec = RunRecord::load(record)?;
    let kind = kind.map(String::from).unwrap_or_else(|| {
        PlotKind::NAMES[PlotKind::default_for(rec.config.experiment) as usize].to_string()
    });
    let table = emit_plotdata(&rec, &kind)?;
    match output {
        Some(path) => {
            let path = match output_dir() {
                Some(dir) => dir.join(path.file_name().unwrap_or(path.as_os_str())),
                None => path.to_path_buf(),
            };
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, table)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{table}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn rerun_record(record: &Path) -> predkl::Result<ExitCode> {
    let rec = RunRecord::load(record)?;
    let report = rerun(&rec)?;
    if report.identical {
        println!("identical: {} cells reproduced bit-exactly", rec.cells.len());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("MISMATCH in cells {:?}", report.mismatched_cells);
        Ok(ExitCode::from(2))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RiskTable(a) => run_experiment(ExperimentKind::RiskTable, a),
        Command::VerifyBridge(a) => run_experiment(ExperimentKind::VerifyBridge, a),
        Command::DominanceScan(a) => run_experiment(ExperimentKind::DominanceScan, a),
        Command::BlythRun(a) => run_experiment(ExperimentKind::BlythRun, a),
        Command::CheckAdmissibility(a) => run_experiment(ExperimentKind::CheckAdmissibility, a),
        Command::TruncationDemo(a) => run_experiment(ExperimentKind::TruncationDemo, a),
        Command::PlotData { record, kind, output } => plot_data(record, kind.as_deref(), output.as_deref()),
        Command::Rerun { record } => rerun_record(record),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
