//! `bids` — balanced influence-based data selection pipeline.
//!
//! Wires the library into a file-to-file pipeline:
//! `gen → (influence) → normalize → select → analyze → compare`.
//! Every JSON the tool writes embeds a [`manifest::RunManifest`] describing
//! the run that produced it.
//!
//! Exit codes: 0 on success, 2 for usage or input validation errors, 1 for
//! internal errors (panics).

mod manifest;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::io::Read;
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bids_core::analysis::{self, AnalysisReport};
use bids_core::influence;
use bids_core::io::{self, MatrixFormat, AMAT_MAGIC};
use bids_core::normalize::{normality_diagnostic, normalize_columns};
use bids_core::select::{
    select_bids, select_instance_max, select_random, select_rds, select_sum, select_task_max,
    Aggregator,
};
use bids_core::synth::{self, SynthConfig};
use bids_core::{AttributionMatrix, Budget, Method};
use manifest::{embed, RunManifest};

#[derive(Parser)]
#[command(
    name = "bids",
    version,
    about = "Balanced influence-based training-subset selection",
    after_help = "Environment:\n  BIDS_THREADS        cap worker parallelism (default: all cores)\n  SOURCE_DATE_EPOCH   pin manifest timestamps for reproducible outputs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Output encoding for matrix files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    /// AMAT v1 binary (bit-exact round trips).
    Binary,
    /// Comma-separated decimal text.
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic attribution matrix and its task partition.
    Gen {
        /// Generator configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Destination matrix file.
        #[arg(long)]
        out_matrix: PathBuf,
        /// Destination partition JSON.
        #[arg(long)]
        out_partition: PathBuf,
        #[arg(long, value_enum, default_value_t = OutFormat::Binary)]
        format: OutFormat,
        /// Write a CSV id header row/column.
        #[arg(long)]
        header: bool,
    },
    /// Aggregate per-epoch gradient features into an attribution matrix.
    Influence {
        /// Feature-set manifest JSON (lists per-epoch AMAT files).
        #[arg(long)]
        manifest: PathBuf,
        /// Destination matrix file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = OutFormat::Binary)]
        format: OutFormat,
    },
    /// Column-normalize a matrix (z-standardize every validation column).
    Normalize {
        /// Input matrix (binary or CSV, detected by content).
        #[arg(long)]
        matrix: PathBuf,
        /// Destination matrix file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = OutFormat::Binary)]
        format: OutFormat,
        /// Input/output CSVs carry an id header row/column.
        #[arg(long)]
        header: bool,
        /// Also write a normality diagnostic JSON (KS distance + histogram
        /// per column).
        #[arg(long)]
        diagnostic: Option<PathBuf>,
        /// Comma-separated column indices for the diagnostic (default: all).
        #[arg(long, requires = "diagnostic")]
        diag_cols: Option<String>,
    },
    /// Select a training subset from a matrix.
    Select {
        /// Input matrix (binary or CSV, detected by content).
        #[arg(long)]
        matrix: PathBuf,
        /// bids | task_max | instance_max | sum | random | rds.
        #[arg(long)]
        method: String,
        /// Absolute count ("2000"), fraction ("0.1"), or percentage ("10%").
        #[arg(long)]
        budget: String,
        /// Task partition JSON (required by task_max).
        #[arg(long)]
        partition: Option<PathBuf>,
        /// Column-normalize before selecting. `--method bids --normalize`
        /// is the full two-stage pipeline; omit the flag for ablations.
        #[arg(long)]
        normalize: bool,
        /// Per-task aggregation for task_max: sum | mean.
        #[arg(long, default_value = "sum")]
        aggregator: String,
        /// PRNG seed (required by random).
        #[arg(long)]
        seed: Option<u64>,
        /// Destination selection JSON.
        #[arg(long)]
        out: PathBuf,
        /// Input CSV carries an id header row/column.
        #[arg(long)]
        header: bool,
    },
    /// Compute the analysis report for a selection.
    Analyze {
        /// The matrix the selection was made from.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        /// Selection JSON produced by `select`.
        #[arg(long)]
        selection: PathBuf,
        /// Destination report JSON.
        #[arg(long)]
        out: PathBuf,
        /// Report AID over the matrix as given instead of over its
        /// column-normalized form.
        #[arg(long)]
        raw_aid: bool,
        /// Input CSV carries an id header row/column.
        #[arg(long)]
        header: bool,
    },
    /// Merge two or more reports into a side-by-side comparison.
    Compare {
        /// Report JSONs produced by `analyze` (first one is the baseline
        /// for deltas).
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        /// Destination comparison JSON.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
        Err(_) => {
            eprintln!("internal error (panic); please report this");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Gen {
            config,
            out_matrix,
            out_partition,
            format,
            header,
        } => cmd_gen(&config, &out_matrix, &out_partition, format, header),
        Command::Influence { manifest, out, format } => cmd_influence(&manifest, &out, format),
        Command::Normalize {
            matrix,
            out,
            format,
            header,
            diagnostic,
            diag_cols,
        } => cmd_normalize(&matrix, &out, format, header, diagnostic.as_deref(), diag_cols.as_deref()),
        Command::Select {
            matrix,
            method,
            budget,
            partition,
            normalize,
            aggregator,
            seed,
            out,
            header,
        } => cmd_select(SelectArgs {
            matrix,
            method,
            budget,
            partition,
            normalize,
            aggregator,
            seed,
            out,
            header,
        }),
        Command::Analyze {
            matrix,
            partition,
            selection,
            out,
            raw_aid,
            header,
        } => cmd_analyze(&matrix, &partition, &selection, &out, raw_aid, header),
        Command::Compare { reports, out } => cmd_compare(&reports, &out),
    }
}

/// Honor `BIDS_THREADS` before any parallel work starts.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("BIDS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("BIDS_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("worker pool already initialized")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Load a matrix, detecting AMAT binaries by magic and falling back to CSV.
fn read_matrix(path: &Path, csv_header: bool) -> Result<AttributionMatrix> {
    let mut head = [0u8; 4];
    let mut file = std::fs::File::open(path)
        .with_context(|| format!("cannot open matrix {}", path.display()))?;
    let is_binary = matches!(file.read(&mut head), Ok(4) if &head == AMAT_MAGIC);
    drop(file);
    let matrix = if is_binary {
        io::load_matrix(path, MatrixFormat::Binary)?
    } else {
        io::load_csv(path, csv_header)?
    };
    Ok(matrix)
}

fn write_matrix(
    matrix: &AttributionMatrix,
    path: &Path,
    format: OutFormat,
    csv_header: bool,
) -> Result<()> {
    match format {
        OutFormat::Binary => io::save_matrix(matrix, path, MatrixFormat::Binary)?,
        OutFormat::Csv => io::save_csv(matrix, path, csv_header)?,
    }
    Ok(())
}

fn format_name(format: OutFormat) -> &'static str {
    match format {
        OutFormat::Binary => "binary",
        OutFormat::Csv => "csv",
    }
}

/// Budget syntax: a trailing `%` or a decimal point means fraction,
/// otherwise an absolute row count.
fn parse_budget(raw: &str) -> Result<Budget> {
    if let Some(pct) = raw.strip_suffix('%') {
        let p: f64 = pct
            .trim()
            .parse()
            .with_context(|| format!("bad percentage budget {raw:?}"))?;
        Ok(Budget::Fraction(p / 100.0))
    } else if raw.contains('.') {
        let p: f64 = raw
            .parse()
            .with_context(|| format!("bad fraction budget {raw:?}"))?;
        Ok(Budget::Fraction(p))
    } else {
        let b: usize = raw
            .parse()
            .with_context(|| format!("bad absolute budget {raw:?}"))?;
        Ok(Budget::Absolute(b))
    }
}

fn parse_aggregator(raw: &str) -> Result<Aggregator> {
    match raw {
        "sum" => Ok(Aggregator::Sum),
        "mean" => Ok(Aggregator::Mean),
        other => bail!("unknown aggregator {other:?} (expected sum | mean)"),
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_gen(
    config_path: &Path,
    out_matrix: &Path,
    out_partition: &Path,
    format: OutFormat,
    header: bool,
) -> Result<()> {
    let file = std::fs::File::open(config_path)
        .with_context(|| format!("cannot open config {}", config_path.display()))?;
    let config: SynthConfig = serde_json::from_reader(std::io::BufReader::new(file))
        .context("config JSON does not match the generator schema")?;
    let (matrix, partition) = synth::generate(&config)?;
    write_matrix(&matrix, out_matrix, format, header)?;

    let run = RunManifest::new("gen")
        .input(config_path)?
        .param("format", format_name(format))
        .param("out_matrix", out_matrix.display())
        .param("seed", config.seed);
    io::write_json(&embed(io::partition_to_value(&partition), &run), out_partition)?;
    eprintln!(
        "generated {}x{} matrix -> {}, partition -> {}",
        matrix.n_train(),
        matrix.n_val(),
        out_matrix.display(),
        out_partition.display()
    );
    Ok(())
}

fn cmd_influence(manifest_path: &Path, out: &Path, format: OutFormat) -> Result<()> {
    let set = influence::load_feature_set(manifest_path)?;
    let matrix = influence::adam_influence(&set)?;
    write_matrix(&matrix, out, format, false)?;
    eprintln!(
        "aggregated {} epochs into {}x{} matrix -> {}",
        set.epochs(),
        matrix.n_train(),
        matrix.n_val(),
        out.display()
    );
    Ok(())
}

fn cmd_normalize(
    matrix_path: &Path,
    out: &Path,
    format: OutFormat,
    header: bool,
    diagnostic: Option<&Path>,
    diag_cols: Option<&str>,
) -> Result<()> {
    let matrix = read_matrix(matrix_path, header)?;
    let normalized = normalize_columns(&matrix)?;
    write_matrix(&normalized, out, format, header)?;

    if let Some(diag_path) = diagnostic {
        let cols: Vec<usize> = match diag_cols {
            Some(spec) => spec
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .with_context(|| format!("bad column index {s:?} in --diag-cols"))
                })
                .collect::<Result<_>>()?,
            None => (0..normalized.n_val()).collect(),
        };
        let columns = normality_diagnostic(&normalized, &cols)?;
        let run = RunManifest::new("normalize")
            .input(matrix_path)?
            .param("out", out.display())
            .param("format", format_name(format));
        io::write_json(&embed(json!({ "columns": columns }), &run), diag_path)?;
    }
    eprintln!(
        "normalized {}x{} matrix -> {}",
        normalized.n_train(),
        normalized.n_val(),
        out.display()
    );
    Ok(())
}

struct SelectArgs {
    matrix: PathBuf,
    method: String,
    budget: String,
    partition: Option<PathBuf>,
    normalize: bool,
    aggregator: String,
    seed: Option<u64>,
    out: PathBuf,
    header: bool,
}

fn cmd_select(args: SelectArgs) -> Result<()> {
    let method: Method = args.method.parse()?;
    let budget = parse_budget(&args.budget)?;
    let aggregator = parse_aggregator(&args.aggregator)?;

    let loaded = read_matrix(&args.matrix, args.header)?;
    let working = if args.normalize {
        normalize_columns(&loaded)?
    } else {
        loaded
    };
    let b = budget.resolve(working.n_train())?;

    let selection = match method {
        Method::Bids => select_bids(&working, b)?,
        Method::InstanceMax => select_instance_max(&working, b)?,
        Method::Sum => select_sum(&working, b)?,
        Method::Rds => select_rds(&working, b)?,
        Method::TaskMax => {
            let partition_path = args
                .partition
                .as_deref()
                .context("method task_max requires --partition")?;
            let partition = io::load_partition(partition_path)?;
            select_task_max(&working, &partition, b, aggregator)?
        }
        Method::Random => {
            let seed = args.seed.context("method random requires --seed")?;
            select_random(working.n_train(), b, seed)?
        }
    };

    let mut run = RunManifest::new("select")
        .input(&args.matrix)?
        .param("method", method)
        .param("budget", &args.budget)
        .param("resolved_budget", b)
        .param("normalize", args.normalize)
        .param_opt("seed", args.seed);
    if method == Method::TaskMax {
        run = run
            .input(args.partition.as_deref().expect("checked above"))?
            .param("aggregator", &args.aggregator);
    }
    io::write_json(&embed(serde_json::to_value(&selection)?, &run), &args.out)?;
    eprintln!(
        "selected {} of {} rows with {} -> {}",
        b,
        working.n_train(),
        method,
        args.out.display()
    );
    Ok(())
}

fn cmd_analyze(
    matrix_path: &Path,
    partition_path: &Path,
    selection_path: &Path,
    out: &Path,
    raw_aid: bool,
    header: bool,
) -> Result<()> {
    let matrix = read_matrix(matrix_path, header)?;
    let partition = io::load_partition(partition_path)?;
    let selection = io::load_selection(selection_path)?;

    // THI always reflects the matrix the selection ranked; AID defaults to
    // the column-normalized view so magnitudes are cross-method comparable.
    let aid_basis = if raw_aid {
        matrix.clone()
    } else {
        normalize_columns(&matrix)?
    };
    let report = analysis::report(&matrix, &partition, &selection, &aid_basis)?;

    let run = RunManifest::new("analyze")
        .input(matrix_path)?
        .input(partition_path)?
        .input(selection_path)?
        .param("aid", if raw_aid { "raw" } else { "normalized" });
    io::write_json(&embed(serde_json::to_value(&report)?, &run), out)?;
    eprintln!(
        "report for {} (budget {}) -> {}",
        report.method,
        report.budget,
        out.display()
    );
    Ok(())
}

fn cmd_compare(report_paths: &[PathBuf], out: &Path) -> Result<()> {
    let mut reports: Vec<AnalysisReport> = Vec::with_capacity(report_paths.len());
    for path in report_paths {
        let file = std::fs::File::open(path)
            .with_context(|| format!("cannot open report {}", path.display()))?;
        let report: AnalysisReport = serde_json::from_reader(std::io::BufReader::new(file))
            .with_context(|| format!("{} is not an analysis report", path.display()))?;
        reports.push(report);
    }
    let (n_val, m) = (reports[0].aid.len(), reports[0].thi_instance_level.len());
    for (path, report) in report_paths.iter().zip(&reports).skip(1) {
        if report.aid.len() != n_val || report.thi_instance_level.len() != m {
            bail!(
                "{}: report shape ({} columns, {} tasks) differs from baseline ({n_val}, {m})",
                path.display(),
                report.aid.len(),
                report.thi_instance_level.len()
            );
        }
    }

    let aid_extremes = |r: &AnalysisReport| {
        let max = r.aid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = r.aid.iter().copied().fold(f64::INFINITY, f64::min);
        (max, min)
    };

    let methods: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            let (aid_max, aid_min) = aid_extremes(r);
            json!({
                "method": r.method,
                "budget": r.budget,
                "balance": serde_json::to_value(&r.balance).expect("balance serializes"),
                "aid_max": aid_max,
                "aid_min": aid_min,
                "thi_instance": r.thi_instance_level,
            })
        })
        .collect();

    let (base_max, base_min) = aid_extremes(&reports[0]);
    let deltas: Vec<serde_json::Value> = reports
        .iter()
        .skip(1)
        .map(|r| {
            let (aid_max, aid_min) = aid_extremes(r);
            json!({
                "method": r.method,
                "entropy_delta": r.balance.entropy - reports[0].balance.entropy,
                "aid_max_delta": aid_max - base_max,
                "aid_min_delta": aid_min - base_min,
            })
        })
        .collect();

    let mut run = RunManifest::new("compare").param("baseline", reports[0].method);
    for path in report_paths {
        run = run.input(path)?;
    }
    let value = json!({ "methods": methods, "deltas": deltas });
    io::write_json(&embed(value, &run), out)?;
    eprintln!("compared {} reports -> {}", reports.len(), out.display());
    Ok(())
}
