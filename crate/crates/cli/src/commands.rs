//! Subcommand definitions and their implementations. Every command writes
//! its main output to `out` and notices to `err`, and returns an exit status
//! from [`crate::exit`].

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use hrt_core::generator::{generate, sfas_like, GeneratorConfig, SFAS_LIST_LEN};
use hrt_core::io::{parse_instance, parse_matching_pairs, serialize_instance, serialize_matching};
use hrt_core::oracle::{enumerate_stable_matchings, OracleError, OracleLimit};
use hrt_core::pipeline::{solve_instance, PipelineError, PipelineOptions};
use hrt_core::preprocess::reduce;
use hrt_core::solver::SolveError;
use hrt_core::instance::{hospital_name, resident_name, validate_pairs};
use hrt_core::{blocking_pairs, export_lp, Instance, Matching, Violation};
use thiserror::Error;

use crate::bench::{self, AggregateReport, BenchError, RunRecord, SweepConfig};
use crate::exit;

#[derive(Debug, Parser)]
#[command(name = "hrt", version, about = "Maximum weakly stable matchings for Hospitals/Residents with Ties")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve an instance to optimality (or until the time limit).
    Solve(SolveArgs),
    /// Check a matching for validity and weak stability.
    Check(CheckArgs),
    /// Enumerate every stable matching of a small instance.
    Oracle(OracleArgs),
    /// Generate a random instance.
    Generate(GenerateArgs),
    /// Remove pairs that belong to no stable matching.
    Reduce(ReduceArgs),
    /// Sweep hospital tie densities at fixed sizes.
    BenchTieDensity(BenchTieDensityArgs),
    /// Sweep instance sizes at a fixed hospital tie density.
    BenchSize(BenchSizeArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub instance: PathBuf,
    /// Seconds before the search stops with its best matching.
    #[arg(long, default_value_t = 300.0)]
    pub time_limit: f64,
    #[arg(long)]
    pub no_reduce: bool,
    #[arg(long)]
    pub no_warm_start: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the solved 0-1 program in LP format.
    #[arg(long, value_name = "PATH")]
    pub emit_lp: Option<PathBuf>,
    /// Write the run record here instead of standard error.
    #[arg(long, value_name = "PATH")]
    pub stats: Option<PathBuf>,
    /// Write the matching here instead of standard output.
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub instance: PathBuf,
    pub matching: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub instance: PathBuf,
    #[arg(long, default_value_t = OracleLimit::default().max_residents)]
    pub max_residents: usize,
    #[arg(long, default_value_t = OracleLimit::default().max_pairs)]
    pub max_pairs: usize,
    #[arg(long, default_value_t = OracleLimit::default().node_budget)]
    pub node_budget: u64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n1: usize,
    /// Hospital-side tie density.
    #[arg(long, default_value_t = 0.85)]
    pub td: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to max(floor(0.07 n1), 5).
    #[arg(long)]
    pub n2: Option<usize>,
    /// Defaults to n1.
    #[arg(long)]
    pub posts: Option<u32>,
    #[arg(long, default_value_t = SFAS_LIST_LEN)]
    pub list_len: usize,
    /// Resident-side tie density.
    #[arg(long, default_value_t = 0.0)]
    pub td_residents: f64,
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    pub instance: PathBuf,
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 100)]
    pub reps: u64,
    /// Seconds allowed per instance.
    #[arg(long, default_value_t = 300.0)]
    pub cutoff: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the run records here instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchTieDensityArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [300])]
    pub n1: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub td_start: f64,
    #[arg(long, default_value_t = 1.0)]
    pub td_end: f64,
    #[arg(long, default_value_t = 0.05)]
    pub td_step: f64,
    #[command(flatten)]
    pub sweep: SweepArgs,
}

#[derive(Debug, Args)]
pub struct BenchSizeArgs {
    #[arg(long, default_value_t = 100)]
    pub n1_start: usize,
    #[arg(long, default_value_t = 50)]
    pub n1_step: usize,
    #[arg(long, default_value_t = 300)]
    pub n1_max: usize,
    #[arg(long, default_value_t = 0.85)]
    pub td: f64,
    #[command(flatten)]
    pub sweep: SweepArgs,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {}", path.display(), render_diagnostics(.source))]
    Parse {
        path: PathBuf,
        source: hrt_core::io::ParseError,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Internal(String),
}

fn render_diagnostics(e: &hrt_core::io::ParseError) -> String {
    e.diagnostics
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Usage(_) => exit::USAGE,
            CliError::Internal(_) => exit::INTERNAL,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Solve(SolveError::InvalidTimeLimit) => CliError::Usage(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Generator(g) => CliError::Usage(g.to_string()),
            solve @ BenchError::Solve { .. } => CliError::Internal(solve.to_string()),
        }
    }
}

/// Runs a parsed command line and returns the exit status.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a, out, err),
        Command::Check(a) => cmd_check(&a, out),
        Command::Oracle(a) => cmd_oracle(&a, out, err),
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Reduce(a) => cmd_reduce(&a, out, err),
        Command::BenchTieDensity(a) => cmd_bench_tie_density(&a, out, err),
        Command::BenchSize(a) => cmd_bench_size(&a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text),
        None => out.write_all(text.as_bytes()).map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

/// Reads an instance, echoing parser warnings to `err`.
pub fn load_instance(path: &Path, err: &mut dyn Write) -> Result<Instance, CliError> {
    let text = read(path)?;
    let (inst, warnings) = parse_instance(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    for w in warnings {
        let _ = writeln!(err, "{}: {w}", path.display());
    }
    Ok(inst)
}

fn positive_seconds(secs: f64, flag: &str) -> Result<Duration, CliError> {
    if !secs.is_finite() || secs <= 0.0 {
        return Err(CliError::Usage(format!("{flag} must be a positive number of seconds")));
    }
    Ok(Duration::from_secs_f64(secs))
}

/// Fraction of adjacent entries in hospital lists that are tied.
pub fn hospital_tie_density(inst: &Instance) -> f64 {
    let (mut tied, mut adjacent) = (0usize, 0usize);
    for h in inst.hospitals() {
        let n = h.prefs.len();
        if n > 1 {
            adjacent += n - 1;
            tied += h.prefs.groups().iter().map(|g| g.len() - 1).sum::<usize>();
        }
    }
    if adjacent == 0 {
        0.0
    } else {
        tied as f64 / adjacent as f64
    }
}

fn csv_text(records: &[RunRecord]) -> Result<String, CliError> {
    let mut buf = Vec::new();
    bench::write_csv(&mut buf, records).map_err(|e| CliError::Internal(e.to_string()))?;
    String::from_utf8(buf).map_err(|e| CliError::Internal(e.to_string()))
}

pub fn cmd_solve(a: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, CliError> {
    let time_limit = positive_seconds(a.time_limit, "--time-limit")?;
    let inst = load_instance(&a.instance, err)?;
    let opts = PipelineOptions {
        time_limit,
        reduce: !a.no_reduce,
        warm_start: !a.no_warm_start,
        seed: a.seed,
    };
    let res = solve_instance(&inst, &opts)?;
    if opts.reduce && !res.reduced {
        let _ = writeln!(err, "notice: resident lists contain ties; reduction skipped");
    }
    if let Some(path) = &a.emit_lp {
        write_file(path, &export_lp(&res.model))?;
    }
    let o = &res.outcome;
    let _ = writeln!(
        err,
        "status {} size {} bound {} nodes {} deleted {} time {:.3}s",
        o.status.as_str(),
        o.objective,
        o.proof_bound,
        o.nodes,
        res.deleted.len(),
        o.wall_time.as_secs_f64()
    );
    let record = RunRecord {
        instance_id: a
            .instance
            .file_stem()
            .map_or_else(|| "instance".into(), |s| s.to_string_lossy().into_owned()),
        n1: inst.n_residents(),
        n2: inst.n_hospitals(),
        td: hospital_tie_density(&inst),
        seed: a.seed,
        status: o.status.as_str().to_string(),
        time_s: o.wall_time.as_secs_f64(),
        size: o.objective,
        warm_size: res.warm_size.unwrap_or(0),
        nodes: o.nodes,
    };
    let stats = csv_text(&[record])?;
    match &a.stats {
        Some(path) => write_file(path, &stats)?,
        None => {
            let _ = err.write_all(stats.as_bytes());
        }
    }
    emit(a.output.as_deref(), &serialize_matching(&o.matching), out)?;
    Ok(exit::OK)
}

pub fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let mut sink = io::sink();
    let inst = load_instance(&a.instance, &mut sink)?;
    let text = read(&a.matching)?;
    let pairs = parse_matching_pairs(&text, &inst).map_err(|source| CliError::Parse {
        path: a.matching.clone(),
        source,
    })?;
    let violations = validate_pairs(&inst, &pairs);
    let mut report = String::new();
    report.push_str(&format!("size: {}\n", pairs.len()));
    if violations.is_empty() {
        report.push_str("violations: none\n");
    } else {
        report.push_str(&format!("violations: {}\n", violations.len()));
        for v in &violations {
            report.push_str(&format!("  {v}\n"));
        }
    }
    // blocking pairs are only meaningful for a well-formed assignment
    let blocking = if violations.iter().any(|v| {
        matches!(
            v,
            Violation::UnknownResident(_) | Violation::DuplicateResident(_) | Violation::Unacceptable(..)
        )
    }) {
        None
    } else {
        let m = Matching::from_pairs(inst.n_residents(), pairs)
            .map_err(|v| CliError::Internal(v.to_string()))?;
        Some(blocking_pairs(&inst, &inst.ranks(), &m))
    };
    match &blocking {
        None => report.push_str("blocking pairs: not checked\n"),
        Some(b) if b.is_empty() => report.push_str("blocking pairs: none\n"),
        Some(b) => {
            report.push_str(&format!("blocking pairs: {}\n", b.len()));
            for &(r, h) in b {
                report.push_str(&format!("  ({}, {})\n", resident_name(r), hospital_name(h)));
            }
        }
    }
    let ok = violations.is_empty() && blocking.as_ref().is_some_and(Vec::is_empty);
    report.push_str(if ok { "verdict: stable\n" } else { "verdict: NOT stable\n" });
    emit(None, &report, out)?;
    Ok(if ok { exit::OK } else { exit::INVALID })
}

pub fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, CliError> {
    let inst = load_instance(&a.instance, err)?;
    let limit = OracleLimit {
        max_residents: a.max_residents,
        max_pairs: a.max_pairs,
        node_budget: a.node_budget,
    };
    let all = enumerate_stable_matchings(&inst, &limit).map_err(|e| match e {
        OracleError::BudgetExceeded(_) => CliError::Usage(format!("{e}; raise --node-budget")),
        other => CliError::Usage(other.to_string()),
    })?;
    let best = all
        .iter()
        .max_by_key(|m| m.size())
        .ok_or_else(|| CliError::Internal("no stable matching found".into()))?;
    let mut sizes = std::collections::BTreeMap::<usize, usize>::new();
    for m in &all {
        *sizes.entry(m.size()).or_default() += 1;
    }
    let mut report = format!("stable matchings: {}\nmaximum size: {}\n", all.len(), best.size());
    for (size, count) in sizes.iter().rev() {
        report.push_str(&format!("  size {size}: {count}\n"));
    }
    report.push_str("a maximum stable matching:\n");
    report.push_str(&serialize_matching(best));
    emit(None, &report, out)?;
    Ok(exit::OK)
}

pub fn generator_config(a: &GenerateArgs) -> Result<GeneratorConfig, CliError> {
    let base = sfas_like(a.n1, a.td, a.seed);
    let mut config = match base {
        Ok(c) => c,
        Err(e) if a.n2.is_none() => return Err(CliError::Usage(e.to_string())),
        Err(_) => GeneratorConfig {
            n_residents: a.n1,
            n_hospitals: 0,
            posts: u32::try_from(a.n1).unwrap_or(u32::MAX),
            list_len: SFAS_LIST_LEN,
            td_residents: 0.0,
            td_hospitals: a.td,
            seed: a.seed,
        },
    };
    if let Some(n2) = a.n2 {
        config.n_hospitals = n2;
    }
    if let Some(posts) = a.posts {
        config.posts = posts;
    }
    config.list_len = a.list_len;
    config.td_residents = a.td_residents;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

pub fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let config = generator_config(a)?;
    let inst = generate(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    emit(a.output.as_deref(), &serialize_instance(&inst), out)?;
    Ok(exit::OK)
}

pub fn cmd_reduce(a: &ReduceArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, CliError> {
    let inst = load_instance(&a.instance, err)?;
    let red = reduce(&inst).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut text = format!("# deleted {} of {} pairs\n", red.deleted.len(), inst.num_pairs());
    for &(r, h) in &red.deleted {
        text.push_str(&format!("# deleted {} {}\n", resident_name(r), hospital_name(h)));
    }
    text.push_str(&serialize_instance(&red.instance));
    emit(a.output.as_deref(), &text, out)?;
    Ok(exit::OK)
}

fn sweep_config(s: &SweepArgs) -> Result<SweepConfig, CliError> {
    if s.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    Ok(SweepConfig {
        reps: s.reps,
        cutoff: positive_seconds(s.cutoff, "--cutoff")?,
        seed: s.seed,
    })
}

fn run_and_report(
    cells: &[(usize, f64)],
    s: &SweepArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8, CliError> {
    let config = sweep_config(s)?;
    let total = cells.len() as u64 * config.reps;
    let mut done = 0u64;
    let records = bench::run_sweep(cells, &config, &mut |rec| {
        done += 1;
        if done.is_multiple_of(config.reps) {
            let _ = writeln!(err, "[{done}/{total}] finished n1={} td={}", rec.n1, rec.td);
        }
    })?;
    emit(s.csv.as_deref(), &csv_text(&records)?, out)?;
    let _ = write!(err, "{}", AggregateReport::from_records(&records).render());
    Ok(exit::OK)
}

fn check_density(td: f64, flag: &str) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&td) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{flag} must lie in [0, 1]")))
    }
}

pub fn cmd_bench_tie_density(
    a: &BenchTieDensityArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8, CliError> {
    check_density(a.td_start, "--td-start")?;
    check_density(a.td_end, "--td-end")?;
    if a.td_step.is_nan() || a.td_step <= 0.0 || a.td_start > a.td_end {
        return Err(CliError::Usage(
            "need --td-step > 0 and --td-start <= --td-end".into(),
        ));
    }
    let densities = bench::density_steps(a.td_start, a.td_end, a.td_step);
    let cells: Vec<_> = a
        .n1
        .iter()
        .flat_map(|&n1| densities.iter().map(move |&td| (n1, td)))
        .collect();
    run_and_report(&cells, &a.sweep, out, err)
}

pub fn cmd_bench_size(a: &BenchSizeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, CliError> {
    check_density(a.td, "--td")?;
    if a.n1_step == 0 || a.n1_start == 0 || a.n1_start > a.n1_max {
        return Err(CliError::Usage(
            "need --n1-step > 0 and 0 < --n1-start <= --n1-max".into(),
        ));
    }
    let cells: Vec<_> = (a.n1_start..=a.n1_max)
        .step_by(a.n1_step)
        .map(|n1| (n1, a.td))
        .collect();
    run_and_report(&cells, &a.sweep, out, err)
}
