//! Experiment orchestration: seed sweeps over a scenario file, per-run
//! trace/summary export, cross-seed aggregation and optional SVG plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mudra::controller::ControllerKind;
use mudra::exec::{self, ExecMode};
use mudra::export;
use mudra::sim::{self, oracle_sweep, Summary, Trace};
use mudra::video::{self, VideoReport};
use mudra::Scenario;

pub mod plot;

/// Exit statuses of the command-line tool.
pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Name of the marker file left next to partial outputs after a failure.
pub const FAILURE_MARKER: &str = "FAILED";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario_path: PathBuf,
    pub out_dir: PathBuf,
    /// Overrides the scenario's seed list when set.
    pub seeds: Option<Vec<u64>>,
    /// Overrides the scenario's controller list when set.
    pub controller: Option<ControllerKind>,
    pub plots: bool,
    pub oracle: bool,
    pub mode: ExecMode,
}

/// Parses `1,2,3`, `1..4` (half-open) and `1..=3`, or any comma-separated
/// mix of them.
pub fn parse_seeds(list: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..=") {
            let (a, b): (u64, u64) = (a.parse()?, b.parse()?);
            seeds.extend(a..=b);
        } else if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (a.parse()?, b.parse()?);
            seeds.extend(a..b);
        } else {
            seeds.push(part.parse().with_context(|| format!("bad seed `{part}`"))?);
        }
    }
    if seeds.is_empty() {
        bail!("seed list is empty");
    }
    Ok(seeds)
}

/// Errors split by the exit status they map to.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Run(_) => EXIT_RUN_FAILURE,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Run(e) => write!(f, "run failed: {e:#}"),
        }
    }
}

/// One finished (controller, seed) run.
pub struct RunOutput {
    pub trace: Trace,
    pub summary: Summary,
    pub video: Option<VideoReport>,
}

/// Cross-seed means for one controller.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AggregateRow {
    pub controller: ControllerKind,
    pub seeds: usize,
    pub throughput_mbps: f64,
    pub goodput_mbps: f64,
    pub sla_violation_fraction: f64,
    pub control_overhead_kbps: f64,
    pub rate_changes: f64,
    pub nodes_below_low_fraction: f64,
    pub converged_runs: usize,
    pub airtime: BTreeMap<u32, f64>,
}

pub fn aggregate(summaries: &[&Summary]) -> Option<AggregateRow> {
    let first = summaries.first()?;
    let n = summaries.len() as f64;
    let mean = |f: &dyn Fn(&Summary) -> f64| summaries.iter().map(|s| f(s)).sum::<f64>() / n;
    let mut airtime = BTreeMap::new();
    for s in summaries {
        for (&r, &a) in &s.airtime {
            *airtime.entry(r).or_insert(0.0) += a / n;
        }
    }
    Some(AggregateRow {
        controller: first.controller,
        seeds: summaries.len(),
        throughput_mbps: mean(&|s| s.mean_throughput_mbps),
        goodput_mbps: mean(&|s| s.mean_goodput_mbps),
        sla_violation_fraction: mean(&|s| s.sla_violation_fraction),
        control_overhead_kbps: mean(&|s| s.control_overhead_bps / 1e3),
        rate_changes: mean(&|s| s.rate_changes as f64),
        nodes_below_low_fraction: mean(&|s| s.nodes_below_low_fraction),
        converged_runs: summaries.iter().filter(|s| s.convergence_s.is_some()).count(),
        airtime,
    })
}

/// Plain-text comparison table, one row per controller.
pub fn format_table(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>5} {:>10} {:>10} {:>9} {:>10} {:>8} {:>8}",
        "controller", "seeds", "thr_mbps", "good_mbps", "sla_viol", "ctrl_kbps", "changes", "below_L"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>10.2} {:>10.2} {:>9.3} {:>10.1} {:>8.1} {:>8.3}",
            r.controller.as_str(),
            r.seeds,
            r.throughput_mbps,
            r.goodput_mbps,
            r.sla_violation_fraction,
            r.control_overhead_kbps,
            r.rate_changes,
            r.nodes_below_low_fraction
        );
    }
    out
}

fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "controller,seeds,throughput_mbps,goodput_mbps,sla_violation_fraction,control_overhead_kbps,rate_changes,nodes_below_low_fraction,converged_runs\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.3},{:.6},{}",
            r.controller.as_str(),
            r.seeds,
            r.throughput_mbps,
            r.goodput_mbps,
            r.sla_violation_fraction,
            r.control_overhead_kbps,
            r.rate_changes,
            r.nodes_below_low_fraction,
            r.converged_runs
        );
    }
    out
}

fn run_one(scenario: &Scenario, kind: ControllerKind, seed: u64) -> mudra::Result<RunOutput> {
    let trace = sim::run_with(scenario, kind, seed, ExecMode::Serial)?;
    let summary = sim::summarize(&trace, scenario.thresholds.low);
    let video = match &scenario.video {
        Some(cfg) => Some(video::evaluate_trace(&trace, cfg)?),
        None => None,
    };
    Ok(RunOutput { trace, summary, video })
}

fn write_run(dir: &Path, run: &RunOutput, plots: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let file = fs::File::create(dir.join("trace.csv"))?;
    export::write_trace(&run.trace, std::io::BufWriter::new(file))?;
    fs::write(dir.join("summary.json"), export::summary_to_json(&run.summary) + "\n")?;
    if let Some(v) = &run.video {
        let file = fs::File::create(dir.join("video_grades.csv"))?;
        export::write_grades(&v.nodes, file)?;
        fs::write(dir.join("video.json"), serde_json::to_string_pretty(v)? + "\n")?;
    }
    if plots {
        plot::write_plots(dir, &run.trace, &run.summary)?;
    }
    Ok(())
}

fn write_oracle(dir: &Path, scenario: &Scenario, seeds: &[u64]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = String::from("seed,rate_mbps,abnormal,mid,a_max\n");
    for &seed in seeds {
        for row in oracle_sweep(scenario, seed, 0.0)? {
            let _ = writeln!(out, "{seed},{},{},{},{}", row.rate.mbps(), row.abnormal, row.mid, row.a_max);
        }
    }
    fs::write(dir.join("oracle.csv"), out)?;
    Ok(())
}

/// Loads the scenario, runs every (controller, seed) pair and writes
/// results under `out_dir/<scenario>/`. Returns the aggregate table.
pub fn run_experiments(cfg: &RunConfig) -> std::result::Result<Vec<AggregateRow>, Failure> {
    let scenario = mudra::load_scenario(&cfg.scenario_path).map_err(|e| Failure::Config(e.into()))?;
    let seeds = cfg.seeds.clone().unwrap_or_else(|| scenario.seeds.clone());
    if seeds.is_empty() {
        return Err(Failure::Config(anyhow::anyhow!("seed list is empty")));
    }
    let controllers = match cfg.controller {
        Some(c) => vec![c],
        None => scenario.controllers.clone(),
    };
    let root = cfg.out_dir.join(&scenario.name);
    fs::create_dir_all(&root)
        .with_context(|| format!("output directory {} is not writable", root.display()))
        .map_err(Failure::Config)?;
    let marker = root.join(FAILURE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Failure::Run(e.into()))?;
    }

    let jobs: Vec<(ControllerKind, u64)> = controllers
        .iter()
        .flat_map(|&c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results = exec::map(cfg.mode, &jobs, |&(kind, seed)| run_one(&scenario, kind, seed));

    let mut failures = Vec::new();
    let mut done: Vec<RunOutput> = Vec::new();
    for (&(kind, seed), result) in jobs.iter().zip(results) {
        let dir = root.join(kind.as_str()).join(format!("seed-{seed}"));
        match result.map_err(anyhow::Error::from).and_then(|run| {
            write_run(&dir, &run, cfg.plots)?;
            Ok(run)
        }) {
            Ok(run) => done.push(run),
            Err(e) => failures.push(format!("{} seed {seed}: {e:#}", kind.as_str())),
        }
    }
    if cfg.oracle {
        if let Err(e) = write_oracle(&root, &scenario, &seeds) {
            failures.push(format!("oracle sweep: {e:#}"));
        }
    }

    let rows: Vec<AggregateRow> = controllers
        .iter()
        .filter_map(|&c| {
            let s: Vec<&Summary> = done.iter().filter(|r| r.summary.controller == c).map(|r| &r.summary).collect();
            aggregate(&s)
        })
        .collect();
    let write_aggregate = || -> Result<()> {
        fs::write(root.join("aggregate.csv"), aggregate_csv(&rows))?;
        fs::write(root.join("aggregate.json"), serde_json::to_string_pretty(&rows)? + "\n")?;
        Ok(())
    };
    if let Err(e) = write_aggregate() {
        failures.push(format!("aggregate: {e:#}"));
    }

    if !failures.is_empty() {
        let _ = fs::write(&marker, failures.join("\n") + "\n");
        return Err(Failure::Run(anyhow::anyhow!("{} run(s) failed:\n{}", failures.len(), failures.join("\n"))));
    }
    Ok(rows)
}

/// Grades a previously written trace.
pub fn grade_trace(trace_path: &Path, scenario: Option<&Path>) -> Result<VideoReport> {
    let cfg = match scenario {
        Some(p) => mudra::load_scenario(p)?.video.unwrap_or_default(),
        None => Default::default(),
    };
    let file = fs::File::open(trace_path).with_context(|| format!("opening {}", trace_path.display()))?;
    let trace = export::read_trace(std::io::BufReader::new(file))?;
    Ok(video::evaluate_trace(&trace, &cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1,2,3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("1..4").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("1..=3,9").unwrap(), vec![1, 2, 3, 9]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn aggregate_means() {
        let mut a = Summary {
            scenario: "s".into(),
            controller: ControllerKind::Sra,
            seed: 1,
            intervals: 10,
            mean_throughput_mbps: 10.0,
            mean_goodput_mbps: 8.5,
            airtime: BTreeMap::from([(6, 1.0)]),
            sla_violation_fraction: 0.2,
            control_overhead_bps: 1000.0,
            rate_changes: 4,
            convergence_s: None,
            target_condition_fraction: 0.0,
            oracle_match_fraction: 0.0,
            nodes_below_low_fraction: 0.1,
            node_mean_pdr: vec![],
        };
        let mut b = a.clone();
        b.mean_throughput_mbps = 20.0;
        b.convergence_s = Some(3.0);
        a.airtime.insert(9, 0.0);
        let row = aggregate(&[&a, &b]).unwrap();
        assert_eq!(row.throughput_mbps, 15.0);
        assert_eq!(row.converged_runs, 1);
        assert_eq!(row.airtime[&6], 1.0);
        assert!(format_table(&[row]).contains("sra"));
    }
}
