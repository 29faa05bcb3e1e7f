//! Seeded sweeps: one job per (cell, seed), run on a bounded thread pool, with
//! every output file written atomically.
//!
//! Output layout under the sweep directory:
//!
//! ```text
//! spec.json                      resolved spec
//! runs/<cell>.csv, <cell>.json   regret trace and its resolved-config sidecar
//! aggregate.csv                  per-iteration mean / 95% interval per cell
//! plots/<function>_m<m>_{instant,cumulative}.svg
//! seek/<cell>_trajectory.csv, seek/<cell>.json
//! seek_summary.csv
//! failures.json
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use gmes::sim::{run_seek, SeekResult};
use gmes::testbed::{run_experiment, ExperimentConfig, RegretTrace};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AggregateFlags, SeekCell, SweepSpec};
use crate::plot::{line_chart, Series};

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn experiment_label(index: usize, e: &ExperimentConfig, seed: u64) -> String {
    format!("c{index:02}_{}_{}_m{}_seed{seed}", e.algorithm, e.function, e.agents)
}

pub fn seek_label(index: usize, c: &SeekCell, seed: u64) -> String {
    format!("s{index:02}_{}_m{}_seed{seed}", c.scenario.name, c.config.agents)
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub run: String,
    pub error: String,
}

#[derive(Debug, Serialize)]
struct RunSidecar<'a> {
    experiment: &'a ExperimentConfig,
    seed: u64,
    output_offset: f64,
    output_scale: f64,
}

#[derive(Debug, Default)]
pub struct SweepReport {
    pub completed: usize,
    pub failures: Vec<Failure>,
    pub seek_results: Vec<SeekResult>,
}

enum Job<'a> {
    Experiment(usize, &'a ExperimentConfig, u64),
    Seek(usize, &'a SeekCell, u64),
}

enum Outcome {
    Experiment { cell: usize, csv: String },
    Seek(Box<SeekResult>),
}

fn run_job(job: &Job, out: &Path) -> Result<Outcome, Failure> {
    let fail = |run: &str, error: String| Failure {
        run: run.to_string(),
        error,
    };
    match *job {
        Job::Experiment(cell, e, seed) => {
            let label = experiment_label(cell, e, seed);
            let outcome = run_experiment(e, seed).map_err(|err| fail(&label, err.to_string()))?;
            let csv = outcome.trace.to_csv();
            let sidecar = RunSidecar {
                experiment: e,
                seed,
                output_offset: outcome.trace.output_offset,
                output_scale: outcome.trace.output_scale,
            };
            let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
            write_atomic(&out.join("runs").join(format!("{label}.csv")), csv.as_bytes())
                .and_then(|_| write_atomic(&out.join("runs").join(format!("{label}.json")), json.as_bytes()))
                .map_err(|err| fail(&label, err.to_string()))?;
            Ok(Outcome::Experiment { cell, csv })
        }
        Job::Seek(cell, c, seed) => {
            let label = seek_label(cell, c, seed);
            let result = run_seek(&c.scenario, &c.config, seed).map_err(|err| fail(&label, err.to_string()))?;
            let json = serde_json::to_string_pretty(&result).expect("seek result serializes");
            write_atomic(&out.join("seek").join(format!("{label}_trajectory.csv")), result.trajectory_csv().as_bytes())
                .and_then(|_| write_atomic(&out.join("seek").join(format!("{label}.json")), json.as_bytes()))
                .map_err(|err| fail(&label, err.to_string()))?;
            Ok(Outcome::Seek(Box::new(result)))
        }
    }
}

/// Runs every job of the sweep. Per-run failures are collected, never fatal;
/// the `Err` case is reserved for problems writing the sweep-level files.
pub fn run_sweep(spec: &SweepSpec, seed_offset: u64) -> std::io::Result<SweepReport> {
    let out = spec.output_dir.as_path();
    std::fs::create_dir_all(out)?;
    write_atomic(&out.join("spec.json"), spec.to_json().as_bytes())?;
    let seeds: Vec<u64> = spec.seeds.iter().map(|s| s.wrapping_add(seed_offset)).collect();

    let mut jobs = Vec::new();
    for (i, e) in spec.experiments.iter().enumerate() {
        jobs.extend(seeds.iter().map(|&s| Job::Experiment(i, e, s)));
    }
    for (i, c) in spec.seek_cells.iter().enumerate() {
        jobs.extend(seeds.iter().map(|&s| Job::Seek(i, c, s)));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(std::io::Error::other)?;
    let outcomes: Vec<Result<Outcome, Failure>> = pool.install(|| jobs.par_iter().map(|j| run_job(j, out)).collect());

    let mut report = SweepReport::default();
    let mut per_cell: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for o in outcomes {
        match o {
            Ok(Outcome::Experiment { cell, csv }) => {
                report.completed += 1;
                per_cell.entry(cell).or_default().push(csv);
            }
            Ok(Outcome::Seek(r)) => {
                report.completed += 1;
                report.seek_results.push(*r);
            }
            Err(f) => report.failures.push(f),
        }
    }

    if !spec.experiments.is_empty() {
        let mut cells = Vec::new();
        for (i, e) in spec.experiments.iter().enumerate() {
            let csvs = per_cell.get(&i).map(Vec::as_slice).unwrap_or_default();
            let rows = aggregate_csvs(csvs).map_err(std::io::Error::other)?;
            cells.push((i, e, rows));
        }
        write_atomic(&out.join("aggregate.csv"), aggregate_table(&cells, spec.aggregate).as_bytes())?;
        for (name, svg) in plots(&cells) {
            write_atomic(&out.join("plots").join(name), svg.as_bytes())?;
        }
    }
    if !spec.seek_cells.is_empty() {
        write_atomic(&out.join("seek_summary.csv"), seek_summary(&report.seek_results).as_bytes())?;
    }
    let failures = serde_json::to_string_pretty(&report.failures).expect("failures serialize");
    write_atomic(&out.join("failures.json"), failures.as_bytes())?;
    Ok(report)
}

/// Per-iteration statistics of one cell across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iter: usize,
    pub n: usize,
    pub instant: Summary,
    pub cumulative: Summary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub half_width: f64,
}

/// Mean and `1.96·s/√n` with the sample standard deviation (`0` for one seed).
pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let half_width = if xs.len() > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        1.96 * var.sqrt() / n.sqrt()
    } else {
        0.0
    };
    Summary { mean, half_width }
}

/// Parses `(iter, instant, cumulative)` columns from a run CSV.
pub fn parse_run_csv(csv: &str) -> Result<Vec<(usize, f64, f64)>, String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().ok_or("empty run csv")?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or(format!("run csv lacks `{name}`"));
    let (ci, cr, cc) = (col("iter")?, col("instant_regret")?, col("cumulative_regret")?);
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |k: usize| f.get(k).and_then(|v| v.parse::<f64>().ok()).ok_or(format!("bad row `{l}`"));
            Ok((num(ci)? as usize, num(cr)?, num(cc)?))
        })
        .collect()
}

/// Aggregates run CSVs of one cell; iterations missing from some runs use the
/// runs that have them.
pub fn aggregate_csvs(csvs: &[String]) -> Result<Vec<AggregateRow>, String> {
    let mut by_iter: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for csv in csvs {
        for (it, r, c) in parse_run_csv(csv)? {
            let e = by_iter.entry(it).or_default();
            e.0.push(r);
            e.1.push(c);
        }
    }
    Ok(by_iter
        .into_iter()
        .map(|(iter, (r, c))| AggregateRow {
            iter,
            n: r.len(),
            instant: summarize(&r),
            cumulative: summarize(&c),
        })
        .collect())
}

fn aggregate_table(cells: &[(usize, &ExperimentConfig, Vec<AggregateRow>)], flags: AggregateFlags) -> String {
    let mut s = String::from("cell,algorithm,function,agents,iter,n_seeds");
    for metric in ["instant", "cumulative"] {
        if flags.mean {
            let _ = write!(s, ",{metric}_mean");
        }
        if flags.ci95 {
            let _ = write!(s, ",{metric}_ci_low,{metric}_ci_high");
        }
    }
    s.push('\n');
    for (i, e, rows) in cells {
        for r in rows {
            let _ = write!(s, "{i},{},{},{},{},{}", e.algorithm, e.function, e.agents, r.iter, r.n);
            for m in [r.instant, r.cumulative] {
                if flags.mean {
                    let _ = write!(s, ",{}", m.mean);
                }
                if flags.ci95 {
                    let _ = write!(s, ",{},{}", m.mean - m.half_width, m.mean + m.half_width);
                }
            }
            s.push('\n');
        }
    }
    s
}

fn plots(cells: &[(usize, &ExperimentConfig, Vec<AggregateRow>)]) -> Vec<(String, String)> {
    let mut groups: BTreeMap<(String, usize), Vec<&(usize, &ExperimentConfig, Vec<AggregateRow>)>> = BTreeMap::new();
    for c in cells {
        groups.entry((c.1.function.to_string(), c.1.agents)).or_default().push(c);
    }
    let mut out = Vec::new();
    for ((function, m), members) in groups {
        for (kind, log_y) in [("instant", true), ("cumulative", false)] {
            let series: Vec<Series> = members
                .iter()
                .map(|(i, e, rows)| {
                    let dup = members.iter().filter(|o| o.1.algorithm == e.algorithm).count() > 1;
                    let pick = |r: &AggregateRow| if kind == "instant" { r.instant } else { r.cumulative };
                    Series {
                        label: if dup { format!("{} (c{i:02})", e.algorithm) } else { e.algorithm.to_string() },
                        points: rows.iter().map(|r| (r.iter as f64, pick(r).mean)).collect(),
                        band: Some(
                            rows.iter()
                                .map(|r| (r.iter as f64, pick(r).mean - pick(r).half_width, pick(r).mean + pick(r).half_width))
                                .collect(),
                        ),
                    }
                })
                .collect();
            let title = format!("{function}, m = {m}: {kind} regret");
            out.push((
                format!("{function}_m{m}_{kind}.svg"),
                line_chart(&title, "iteration", &format!("{kind} regret"), &series, log_y),
            ));
        }
    }
    out
}

fn seek_summary(results: &[SeekResult]) -> String {
    let mut s = String::from("scenario,agents,seed,converged,iterations_to_converge,sim_time_s,min_pair_distance,safety_stalls\n");
    for r in results {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.scenario,
            r.agents,
            r.seed,
            r.converged,
            r.iterations_to_converge,
            r.sim_time_s,
            r.min_pair_distance.map_or(String::new(), |d| d.to_string()),
            r.safety_stalls
        );
    }
    s
}

/// Final instant regret of one run, the `bench` summary.
pub fn final_regret(trace: &RegretTrace) -> Option<f64> {
    trace.records.last().map(|r| r.instant_regret)
}
