//! `powvar`: run power-variation experiments from a TOML config.
//!
//! Exit codes: 0 all bands pass, 1 some band fails, 2 admissibility refusal,
//! 64 usage or config error, 74 I/O error.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use powvar::harness::report::{rate_plot_rows, write_rate_plot_csv, Refusal};
use powvar::harness::{self, ExperimentPlan, Report};
use powvar::limits::Theorem;
use powvar::simulate::{simulate_batch, write_jumps_csv, write_path_csv};
use powvar::SamplingSpec;

use config::{Config, Mode};
use output::{write_atomic, write_atomic_with};

const EXIT_FAIL: u8 = 1;
const EXIT_REFUSED: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(name = "powvar", version, about = "Realized power variation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Replicates per rung (overrides every experiment block).
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Dump simulated paths as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of paths.
        #[arg(long, default_value_t = 1)]
        paths: usize,
        /// Also write each path's jump record.
        #[arg(long)]
        dump: bool,
    },
    /// Law-of-large-numbers error curves and rate fits.
    Lln(Common),
    /// Studentised central limit checks.
    Clt(Common),
    /// Pairwise joint-CLT covariance checks.
    Cov(Common),
    /// Plot data (log₂Δn, log₂RMSE, fitted line) from an LLN report.
    RatePlot {
        /// Report JSON written by `lln`.
        report: PathBuf,
        /// Output CSV (defaults to the report path with a `_rate.csv` suffix).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the theorems the harness can check.
    ListTheorems,
}

enum Failure {
    Usage(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_IO,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Io(m) => eprintln!("I/O error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::ListTheorems => {
            for th in Theorem::ALL {
                let clt = if th.has_clt() { "clt" } else { "lln" };
                println!("{:<6} {:<4} {}", th.tag(), clt, th.describe());
            }
            Ok(0)
        }
        Command::RatePlot { report, out } => rate_plot(&report, out),
        Command::Simulate { common, paths, dump } => {
            let (cfg, out) = load(&common)?;
            with_jobs(common.jobs, || simulate(&cfg, &out, paths, dump))
        }
        Command::Lln(common) => experiments(&common, Mode::Lln),
        Command::Clt(common) => experiments(&common, Mode::Clt),
        Command::Cov(common) => experiments(&common, Mode::Cov),
    }
}

fn load(common: &Common) -> Result<(Config, PathBuf), Failure> {
    let src = std::fs::read_to_string(&common.config)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", common.config.display())))?;
    let mut cfg = Config::parse(&src).map_err(|e| Failure::Usage(format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(m) = common.replicates {
        for b in cfg.lln.iter_mut().chain(cfg.clt.iter_mut()).chain(cfg.cov.iter_mut()) {
            b.replicates = m;
        }
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("powvar-out"));
    Ok((cfg, out))
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

fn simulate(cfg: &Config, out: &Path, paths: usize, dump: bool) -> Result<u8, Failure> {
    if paths == 0 {
        eprintln!("warning: --paths 0 requested; nothing written");
        return Ok(0);
    }
    let sampling = SamplingSpec::new(cfg.sampling.horizon, cfg.finest_delta(), cfg.sampling.refine)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    std::fs::create_dir_all(out)?;
    for (k, path) in simulate_batch(&cfg.model, &sampling, cfg.seed, paths).enumerate() {
        let path = path.map_err(|e| Failure::Usage(e.to_string()))?;
        write_atomic_with(&out.join(format!("path_{k:04}.csv")), |w| write_path_csv(&path, w))?;
        if dump {
            write_atomic_with(&out.join(format!("jumps_{k:04}.csv")), |w| write_jumps_csv(&path, w))?;
        }
    }
    eprintln!("wrote {paths} path(s) to {}", out.display());
    Ok(0)
}

fn experiments(common: &Common, mode: Mode) -> Result<u8, Failure> {
    let (cfg, out) = load(common)?;
    let blocks = cfg.blocks(mode);
    if blocks.is_empty() {
        return Err(Failure::Usage(format!(
            "{} has no [[{}]] experiment blocks",
            common.config.display(),
            mode.key()
        )));
    }
    std::fs::create_dir_all(&out)?;
    let mut refused = false;
    let mut failed = false;
    for (i, block) in blocks.iter().enumerate() {
        let plan = cfg.plan(mode, i).map_err(Failure::Usage)?;
        let report = with_jobs(common.jobs, || execute(mode, plan))?;
        let stem = format!("{}_{}", mode.key(), block.name);
        write_atomic(&out.join(format!("{stem}.json")), report.to_json().as_bytes())?;
        if mode == Mode::Cov {
            write_atomic_with(&out.join(format!("{stem}.csv")), |w| {
                output::write_covariance_csv(&report, w)
            })?;
        } else {
            write_atomic_with(&out.join(format!("{stem}.csv")), |w| report.write_rungs_csv(w))?;
        }
        summarize(&report, &stem);
        refused |= report.refusal.is_some();
        failed |= !report.pass;
    }
    Ok(if refused {
        EXIT_REFUSED
    } else if failed {
        EXIT_FAIL
    } else {
        0
    })
}

fn execute(mode: Mode, plan: ExperimentPlan) -> Result<Report, Failure> {
    let mut report = Report::new(mode.key(), plan.clone());
    let outcome = match mode {
        Mode::Lln => harness::run_lln(&plan).map(|t| report.theorems = t),
        Mode::Clt => harness::run_clt(&plan).map(|t| report.theorems = t),
        Mode::Cov => harness::run_covariance_pair(&plan).map(|c| report.covariance = Some(c)),
    };
    match outcome {
        Ok(()) => {}
        Err(e) if e.is_refusal() => {
            let region = plan
                .functionals
                .iter()
                .find_map(|f| harness::refusal_region(f, &plan.model));
            report.refusal = Some(Refusal {
                message: e.to_string(),
                region,
            });
        }
        Err(e) => return Err(Failure::Usage(e.to_string())),
    }
    Ok(report.finalize())
}

fn summarize(report: &Report, stem: &str) {
    if let Some(r) = &report.refusal {
        eprintln!("{stem}: REFUSED: {}", r.message);
        return;
    }
    for t in &report.theorems {
        for c in &t.checks {
            let verdict = if c.pass { "pass" } else { "FAIL" };
            eprintln!(
                "{stem}: {} {} = {:.6} ({}) {verdict}",
                t.functional, c.name, c.value, c.band
            );
        }
        if let Some(rate) = t.rate.as_ref().and_then(|r| r.note.as_ref()) {
            eprintln!("{stem}: {}: note: {rate}", t.functional);
        }
    }
    if let Some(cov) = &report.covariance {
        for c in &cov.checks {
            let verdict = if c.pass { "pass" } else { "FAIL" };
            eprintln!("{stem}: {} = {:.6} ({}) {verdict}", c.name, c.value, c.band);
        }
    }
}

fn rate_plot(report: &Path, out: Option<PathBuf>) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(report)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", report.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{} is not a report: {e}", report.display())))?;
    let rows = rate_plot_rows(&value).map_err(|e| Failure::Usage(format!("{}: {e}", report.display())))?;
    let out = out.unwrap_or_else(|| {
        let stem = report.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        report.with_file_name(format!("{stem}_rate.csv"))
    });
    write_atomic_with(&out, |w| write_rate_plot_csv(&rows, w))?;
    eprintln!("wrote {}", out.display());
    Ok(0)
}
