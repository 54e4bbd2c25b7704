use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use forge::harness::{
    self, dataset_stats, make_fixture, run_convert, run_eval, validate_file, ConvertOptions, DatasetFilter,
    EvalOptions, HarnessError, ReportFormat,
};
use forge::metrics::ApMode;
use forge::schema::CategoryDict;

#[derive(Parser)]
#[command(
    name = "forge",
    version,
    about = "Build and score remote-sensing instruction datasets"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Filter {
    /// Only these datasets (repeatable).
    #[arg(long = "include", value_name = "DATASET")]
    include: Vec<String>,
    /// Skip these datasets (repeatable).
    #[arg(long = "exclude", value_name = "DATASET")]
    exclude: Vec<String>,
}

impl From<Filter> for DatasetFilter {
    fn from(f: Filter) -> Self {
        DatasetFilter {
            include: f.include.into_iter().collect(),
            exclude: f.exclude.into_iter().collect(),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Convert configured sources into one unified JSONL file.
    Convert {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        filter: Filter,
    },
    /// Write a seeded synthetic corpus with a matching convert config.
    Fixture {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        images: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every sample of a unified file.
    Validate { unified: PathBuf },
    /// Score predictions against a unified file.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "paper")]
        ap_mode: ApMode,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write ground-truth answers to --pred first.
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        filter: Filter,
    },
    /// Sample counts per dataset and task.
    Stats {
        unified: PathBuf,
        /// List every sample id instead.
        #[arg(long)]
        ids: bool,
    },
}

fn run(cli: Cli) -> harness::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let print = |out: &mut std::io::StdoutLock, s: &str| {
        writeln!(out, "{s}").map_err(|e| HarnessError::Io {
            path: "<stdout>".into(),
            source: e,
        })
    };
    match cli.cmd {
        Cmd::Convert {
            config,
            out: path,
            workers,
            seed,
            filter,
        } => {
            let mut opts = ConvertOptions::new(config, path);
            opts.workers = workers;
            opts.seed = seed;
            opts.datasets = filter.into();
            let sidecar = run_convert(&opts)?;
            print(
                &mut out,
                &format!("wrote {} samples to {}", sidecar.samples, opts.out.display()),
            )?;
        }
        Cmd::Fixture { seed, images, out: dir } => {
            let m = make_fixture(seed, images, &dir)?;
            print(
                &mut out,
                &format!(
                    "fixture in {} ({} expected samples)",
                    dir.display(),
                    m.expected_samples()
                ),
            )?;
        }
        Cmd::Validate { unified } => {
            let mut lines = Vec::new();
            let sum = validate_file(&unified, CategoryDict::builtin(), |id, msg| {
                lines.push(format!("{id}: {msg}"))
            })?;
            for l in &lines {
                print(&mut out, l)?;
            }
            print(&mut out, &format!("{} samples, {} invalid", sum.samples, sum.invalid))?;
            if sum.invalid > 0 {
                return Err(HarnessError::Data(format!("{} invalid samples", sum.invalid)));
            }
        }
        Cmd::Eval {
            gt,
            pred,
            ap_mode,
            report,
            oracle,
            filter,
        } => {
            let mut opts = EvalOptions::new(gt, pred);
            opts.ap_mode = ap_mode;
            opts.report_dir = report;
            opts.oracle = oracle;
            opts.datasets = filter.into();
            let r = run_eval(&opts)?;
            print(&mut out, &harness::render_report(&r, ReportFormat::Markdown))?;
        }
        Cmd::Stats { unified, ids } => {
            let mut err = None;
            let st = dataset_stats(&unified, |id| {
                if ids && err.is_none() {
                    err = writeln!(out, "{id}").err();
                }
            })?;
            if let Some(e) = err {
                return Err(HarnessError::Io {
                    path: "<stdout>".into(),
                    source: e,
                });
            }
            if !ids {
                let text = serde_json::to_string_pretty(&st).expect("stats serialize");
                print(&mut out, &text)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FORGE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(HarnessError::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("forge: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
