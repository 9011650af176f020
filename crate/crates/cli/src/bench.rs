//! Benchmark harness: generate instances, solve them under a cutoff, record
//! one row per run and summarize per (size, tie density) cell.

use std::fmt::Write as _;
use std::io;
use std::time::Duration;

use hrt_core::generator::{generate, sfas_like, GeneratorError};
use hrt_core::pipeline::{solve_instance, PipelineError, PipelineOptions};
use hrt_core::SolveStatus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One solved instance, as written to the CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub n1: usize,
    pub n2: usize,
    pub td: f64,
    pub seed: u64,
    /// `Optimal` or `FeasibleTimeout`.
    pub status: String,
    pub time_s: f64,
    pub size: usize,
    pub warm_size: usize,
    pub nodes: u64,
}

impl RunRecord {
    pub fn solved(&self) -> bool {
        self.status == SolveStatus::Optimal.as_str()
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error("{id}: {source}")]
    Solve {
        id: String,
        #[source]
        source: PipelineError,
    },
}

/// Settings shared by every run of a sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub reps: u64,
    pub cutoff: Duration,
    /// Rep `k` of every cell uses seed `seed + k`, so cells share their
    /// random streams and differ only in size and tie density.
    pub seed: u64,
}

pub fn instance_id(n1: usize, td: f64, rep: u64) -> String {
    format!("n{n1:04}-td{td:.3}-r{rep:05}")
}

/// Solves one `sfas_like` instance under the cutoff.
pub fn run_one(n1: usize, td: f64, rep: u64, config: &SweepConfig) -> Result<RunRecord, BenchError> {
    let seed = config.seed.wrapping_add(rep);
    let gen = sfas_like(n1, td, seed)?;
    let inst = generate(&gen)?;
    let id = instance_id(n1, td, rep);
    let opts = PipelineOptions {
        time_limit: config.cutoff,
        seed,
        ..PipelineOptions::default()
    };
    let res = solve_instance(&inst, &opts).map_err(|source| BenchError::Solve {
        id: id.clone(),
        source,
    })?;
    Ok(RunRecord {
        instance_id: id,
        n1,
        n2: gen.n_hospitals,
        td,
        seed,
        status: res.outcome.status.as_str().to_string(),
        time_s: res.outcome.wall_time.as_secs_f64(),
        size: res.outcome.objective,
        warm_size: res.warm_size.unwrap_or(0),
        nodes: res.outcome.nodes,
    })
}

/// Runs every rep of every cell, calling `progress` after each run. Records
/// come back sorted by instance id.
pub fn run_sweep(
    cells: &[(usize, f64)],
    config: &SweepConfig,
    progress: &mut dyn FnMut(&RunRecord),
) -> Result<Vec<RunRecord>, BenchError> {
    let mut records = Vec::new();
    for &(n1, td) in cells {
        for rep in 0..config.reps {
            let rec = run_one(n1, td, rep, config)?;
            progress(&rec);
            records.push(rec);
        }
    }
    records.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok(records)
}

/// Tie densities `start, start + step, ...` up to `end` inclusive, rounded
/// to six decimals so that the ids and CSV values stay tidy.
pub fn density_steps(start: f64, end: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if step <= 0.0 {
        return vec![start];
    }
    let mut k = 0u32;
    loop {
        let td = ((start + f64::from(k) * step) * 1e6).round() / 1e6;
        if td > end + 1e-9 {
            break;
        }
        out.push(td);
        k += 1;
    }
    out
}

pub fn write_csv<W: io::Write>(out: W, records: &[RunRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in records {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(input: R) -> csv::Result<Vec<RunRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Published percent of instances solved within a 300 s cutoff for n1 of
/// 200, 250 and 300 (densities not listed were all solved), used as the
/// reference column of the report.
pub fn reference_solved_percent(n1: usize, td: f64) -> Option<f64> {
    let column = match n1 {
        200 => 0,
        250 => 1,
        300 => 2,
        _ => return None,
    };
    const ROWS: [(f64, [f64; 3]); 5] = [
        (0.75, [100.00, 100.00, 99.85]),
        (0.80, [99.98, 99.88, 99.39]),
        (0.85, [99.90, 99.29, 97.76]),
        (0.90, [99.70, 99.28, 98.60]),
        (0.95, [99.99, 100.00, 100.00]),
    ];
    let row = ROWS.iter().find(|(t, _)| (t - td).abs() < 1e-9);
    Some(row.map_or(100.0, |(_, v)| v[column]))
}

/// Summary of one (n1, td) cell. Runtime and size statistics cover solved
/// runs only, so that timeouts do not skew them.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub n1: usize,
    pub td: f64,
    pub count: usize,
    pub solved: usize,
    pub mean_time: Option<f64>,
    pub median_time: Option<f64>,
    pub mean_size: Option<f64>,
    pub min_size: Option<usize>,
    pub max_size: Option<usize>,
}

impl CellSummary {
    pub fn percent_solved(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            100.0 * self.solved as f64 / self.count as f64
        }
    }
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub cells: Vec<CellSummary>,
}

impl AggregateReport {
    /// Groups records by (n1, td) in order of first appearance after
    /// sorting by n1 then td.
    pub fn from_records(records: &[RunRecord]) -> Self {
        let mut keys: Vec<(usize, f64)> = records.iter().map(|r| (r.n1, r.td)).collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        keys.dedup();
        let cells = keys
            .into_iter()
            .map(|(n1, td)| {
                let runs: Vec<&RunRecord> = records
                    .iter()
                    .filter(|r| r.n1 == n1 && r.td == td)
                    .collect();
                let solved: Vec<&RunRecord> = runs.iter().copied().filter(|r| r.solved()).collect();
                let mut times: Vec<f64> = solved.iter().map(|r| r.time_s).collect();
                times.sort_by(f64::total_cmp);
                let sizes: Vec<usize> = solved.iter().map(|r| r.size).collect();
                let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
                let size_f: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
                CellSummary {
                    n1,
                    td,
                    count: runs.len(),
                    solved: solved.len(),
                    mean_time: mean(&times),
                    median_time: median(&times),
                    mean_size: mean(&size_f),
                    min_size: sizes.iter().copied().min(),
                    max_size: sizes.iter().copied().max(),
                }
            })
            .collect();
        AggregateReport { cells }
    }

    /// Plain-text table, with the reference solve rate where one exists.
    pub fn render(&self) -> String {
        let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>5} {:>6} {:>6} {:>8} {:>10} {:>10} {:>12} {:>9} {:>9} {:>9}",
            "n1", "td", "runs", "solved%", "reference%", "mean_s", "median_s", "mean|M|", "min|M|", "max|M|"
        );
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:>5} {:>6.3} {:>6} {:>8.2} {:>10} {:>10} {:>12} {:>9} {:>9} {:>9}",
                c.n1,
                c.td,
                c.count,
                c.percent_solved(),
                opt(reference_solved_percent(c.n1, c.td), 2),
                opt(c.mean_time, 4),
                opt(c.median_time, 4),
                opt(c.mean_size, 2),
                c.min_size.map_or("-".into(), |v| v.to_string()),
                c.max_size.map_or("-".into(), |v| v.to_string()),
            );
        }
        out
    }
}
