//! `hiddenpop` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
//! Errors are printed as a single `error[<kind>]: <message>` line on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hiddenpop::api::{ArmSet, QueryIndex};
use hiddenpop::dataset::{load_dataset, write_dataset, Declaration};
use hiddenpop::eval::ablation::{run_ablation, write_ablation, Axis};
use hiddenpop::eval::experiment::{read_summary, run_on_dataset, write_outputs, ExperimentSpec, RunOptions, SUMMARY_FILE};
use hiddenpop::eval::report::{load_report, write_bundle};
use hiddenpop::eval::EvalError;
use hiddenpop::synth::{generate, SynthProfile, SynthSpec};

const OUTPUT_ENV: &str = "HIDDENPOP_OUTPUT_DIR";
const JOBS_ENV: &str = "HIDDENPOP_JOBS";

#[derive(Parser)]
#[command(name = "hiddenpop", version, about = "Budgeted sampling of hidden populations through a simulated query API")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run(RunArgs),
    /// Rerun an experiment across values of one factor.
    Ablate(AblateArgs),
    /// Write a synthetic dataset and its declaration.
    GenSynth(SynthArgs),
    /// Summarize a results directory and write the plot bundle.
    Report(ReportArgs),
    /// Load a dataset and print its statistics.
    ValidateDataset(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long, env = OUTPUT_ENV)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, env = JOBS_ENV)]
    jobs: Option<usize>,
    /// Override the number of replicates.
    #[arg(long)]
    replicates: Option<u32>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Validate and print the resolved plan without running it.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    /// page-size, attributes, cardinality or shuffle.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Planted,
    Clustered,
}

#[derive(Args)]
struct SynthArgs {
    /// Comma-separated attribute cardinalities.
    #[arg(long, value_delimiter = ',', required = true)]
    cards: Vec<usize>,
    #[arg(long)]
    records: usize,
    #[arg(long)]
    target_fraction: f64,
    /// Strength of the planted cell in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    correlation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated 0-based value indices of the planted cell.
    #[arg(long, value_delimiter = ',')]
    hot_cell: Option<Vec<u16>>,
    /// Fill cells in equal contiguous blocks.
    #[arg(long)]
    balanced: bool,
    #[arg(long, value_enum, default_value = "planted")]
    profile: Profile,
    /// Precision gap between clusters (clustered profile).
    #[arg(long, default_value_t = 0.3)]
    gap: f64,
    /// Precision spread within a cluster (clustered profile).
    #[arg(long, default_value_t = 0.05)]
    spread: f64,
    /// Directory for `<name>.csv` and `<name>.toml`.
    #[arg(long, env = OUTPUT_ENV)]
    out: PathBuf,
    #[arg(long, default_value = "synth")]
    name: String,
}

#[derive(Args)]
struct ReportArgs {
    /// Results directory written by `run` or an axis directory from `ablate`.
    results: PathBuf,
    /// Bundle directory (default: `<results>/bundle`).
    #[arg(long)]
    bundle: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Delimited data file.
    data: PathBuf,
    /// TOML declaration.
    declaration: PathBuf,
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Failure {
        Failure { code: 2, kind: "config", message: message.to_string() }
    }

    fn runtime(message: impl ToString) -> Failure {
        Failure { code: 1, kind: "runtime", message: message.to_string() }
    }
}

type Outcome = Result<(), Failure>;

fn load_spec(c: &Common) -> Result<ExperimentSpec, Failure> {
    let text = fs::read_to_string(&c.config).map_err(|e| Failure::config(format!("{}: {e}", c.config.display())))?;
    let mut spec = ExperimentSpec::from_toml(&text).map_err(|e| Failure::config(format!("{}: {e}", c.config.display())))?;
    let base = c.config.parent().unwrap_or(Path::new("."));
    spec.dataset.resolve_against(base);
    if let Some(r) = c.replicates {
        spec.replicates = r;
    }
    if let Some(s) = c.seed {
        spec.seed = s;
    }
    spec.output_dir = Some(match (&c.out, &spec.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_relative() => base.join(o),
        (None, Some(o)) => o.clone(),
        (None, None) => PathBuf::from("results").join(&spec.name),
    });
    spec.validate().map_err(Failure::config)?;
    Ok(spec)
}

fn options(c: &Common) -> Result<RunOptions, Failure> {
    if c.jobs == Some(0) {
        return Err(Failure::config("--jobs must be at least 1"));
    }
    Ok(RunOptions { jobs: c.jobs })
}

fn run_failure(e: EvalError) -> Failure {
    match e {
        EvalError::Spec(_) | EvalError::Dataset(_) | EvalError::Synth(_) => Failure::config(e),
        _ => Failure::runtime(e),
    }
}

fn cmd_run(args: RunArgs) -> Outcome {
    let spec = load_spec(&args.common)?;
    let opts = options(&args.common)?;
    if args.dry_run {
        print!("{}", spec.to_toml());
        return Ok(());
    }
    let dataset = spec.materialize().map_err(Failure::config)?;
    log::info!("{}: {} records, {} targets", spec.name, dataset.len(), dataset.target_count());
    let out = run_on_dataset(&spec, dataset, opts).map_err(run_failure)?;
    let dir = spec.output_dir.clone().expect("resolved by load_spec");
    write_outputs(&dir, &spec, &out).map_err(Failure::runtime)?;
    let summary = fs::read_to_string(dir.join(SUMMARY_FILE)).map_err(|e| Failure::runtime(e))?;
    print!("{summary}");
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Outcome {
    let axis: Axis = args.axis.parse().map_err(Failure::config)?;
    let spec = load_spec(&args.common)?;
    let opts = options(&args.common)?;
    let out = run_ablation(&spec, axis, &args.values, opts).map_err(run_failure)?;
    let dir = spec.output_dir.clone().expect("resolved by load_spec");
    write_ablation(&dir, &out).map_err(Failure::runtime)?;
    let root = dir.join(axis.name());
    if out.deltas.is_empty() {
        let text = fs::read_to_string(root.join("combined.tsv")).map_err(Failure::runtime)?;
        print!("{text}");
    } else {
        println!("sampler\tbudget\tfrom\tto\trecall_from\trecall_to\tdelta_r_pct");
        for d in &out.deltas {
            println!(
                "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:+.2}",
                d.sampler, d.budget, d.from, d.to, d.recall_from, d.recall_to, d.delta_pct
            );
        }
    }
    eprintln!("wrote {}", root.display());
    Ok(())
}

fn cmd_gen_synth(args: SynthArgs) -> Outcome {
    let mut spec = SynthSpec::new(args.cards, args.records, args.target_fraction, args.correlation, args.seed);
    spec.balanced = args.balanced;
    spec.hot_cell = args.hot_cell;
    if let Profile::Clustered = args.profile {
        spec.profile = SynthProfile::Clustered { gap: args.gap, spread: args.spread };
    }
    let s = generate(&spec).map_err(Failure::config)?;
    fs::create_dir_all(&args.out).map_err(|e| Failure::runtime(format!("{}: {e}", args.out.display())))?;
    let csv = args.out.join(format!("{}.csv", args.name));
    let decl = args.out.join(format!("{}.toml", args.name));
    write_dataset(&s.dataset, &csv, &decl).map_err(Failure::runtime)?;
    let cell: Vec<String> = s.best_cell.iter().map(|v| v.to_string()).collect();
    println!(
        "{}\t{} records\t{} targets\tbest cell {}",
        csv.display(),
        s.dataset.len(),
        s.dataset.target_count(),
        cell.join(",")
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Outcome {
    let report = load_report(&args.results).map_err(Failure::config)?;
    if report.ablation.is_none() {
        read_summary(&args.results.join(SUMMARY_FILE)).map_err(Failure::config)?;
    }
    let bundle = args.bundle.unwrap_or_else(|| args.results.join("bundle"));
    write_bundle(&args.results, &bundle).map_err(Failure::runtime)?;
    print!("{}", report.render());
    eprintln!("wrote {}", bundle.display());
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Outcome {
    let decl = Declaration::from_file(&args.declaration).map_err(Failure::config)?;
    let (d, report) = load_dataset(&args.data, &decl).map_err(Failure::config)?;
    println!("records\t{}", d.len());
    println!("rows_read\t{}", report.rows_read);
    println!("rows_dropped_missing\t{}", report.rows_dropped_missing);
    println!("targets\t{}", d.target_count());
    println!("target_fraction\t{:.6}", d.target_fraction());
    let schema = d.schema();
    for i in 0..schema.len() {
        println!("attribute\t{}\t{}", schema.attribute(i).name, schema.cardinality(i));
    }
    let index = QueryIndex::build(&d);
    match index.enumerate_nonempty(ArmSet::AllNonEmpty, 5_000_000) {
        Ok(all) => println!("nonempty_queries\t{}", all.queries.len()),
        Err(e) => println!("nonempty_queries\t{e}"),
    }
    if let Ok(cells) = index.enumerate_nonempty(ArmSet::FullyBound, 5_000_000) {
        println!("nonempty_fully_bound\t{}", cells.queries.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::GenSynth(a) => cmd_gen_synth(a),
        Command::Report(a) => cmd_report(a),
        Command::ValidateDataset(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind, f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
