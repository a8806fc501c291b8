//! Benchmark plumbing: dataset loading, metrics CSV, run manifests and
//! equal-budget comparison tables.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::net::{DemandMatrix, Network, NetworkError};
use crate::solver::{
    run, Budget, DirectionMode, IterationRecord, Method, Precision, RunResult, SamplerConfig, SamplingMode,
    SolverConfig, SolverError, StepRule,
};
use crate::tntp::{self, format_f64, TntpError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Tntp { path: PathBuf, source: TntpError },
    #[error("{}: {source}", path.display())]
    Network { path: PathBuf, source: NetworkError },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("metrics line {line}: {message}")]
    Metrics { line: usize, message: String },
    #[error("comparison needs at least two runs")]
    TooFewRuns,
    #[error("write failed: {0}")]
    Write(#[from] std::io::Error),
}

/// A network with its demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub network: Network,
    pub demand: DemandMatrix,
}

impl Dataset {
    pub fn load(net_path: &Path, trips_path: &Path) -> Result<Self, HarnessError> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|source| HarnessError::Io { path: p.into(), source });
        let net_text = read(net_path)?;
        let (meta, links) =
            tntp::parse_net(&net_text).map_err(|source| HarnessError::Tntp { path: net_path.into(), source })?;
        let network = Network::build(&links, meta.n_nodes, meta.n_zones, meta.first_thru_node)
            .map_err(|source| HarnessError::Network { path: net_path.into(), source })?;
        let trips_text = read(trips_path)?;
        let trips =
            tntp::parse_trips(&trips_text).map_err(|source| HarnessError::Tntp { path: trips_path.into(), source })?;
        trips
            .demand
            .check_against(&network)
            .map_err(|e| HarnessError::Tntp { path: trips_path.into(), source: TntpError::Demand(e) })?;
        Ok(Self { network, demand: trips.demand })
    }
}

pub const METRICS_HEADER: &str = "iter,wall_clock_s,sp_calls,objective,fw_gap,rel_gap,step,audit_sp_calls";

/// Writes checkpoints as CSV, floats at 17 significant digits.
pub fn write_metrics<W: Write>(records: &[IterationRecord], sink: &mut W) -> Result<(), HarnessError> {
    writeln!(sink, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{}",
            r.iter,
            format_f64(r.wall_clock_s),
            r.sp_calls,
            format_f64(r.objective),
            format_f64(r.fw_gap),
            format_f64(r.rel_gap),
            format_f64(r.step),
            r.audit_sp_calls
        )?;
    }
    Ok(())
}

/// Parses the output of [`write_metrics`].
pub fn read_metrics(text: &str) -> Result<Vec<IterationRecord>, HarnessError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == METRICS_HEADER => {}
        _ => return Err(HarnessError::Metrics { line: 1, message: "unexpected header".into() }),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 8 {
            return Err(HarnessError::Metrics { line: line_no, message: format!("{} fields", fields.len()) });
        }
        let bad = |c: usize| HarnessError::Metrics { line: line_no, message: format!("bad value `{}`", fields[c]) };
        let int = |c: usize| fields[c].parse::<u64>().map_err(|_| bad(c));
        let float = |c: usize| fields[c].parse::<f64>().map_err(|_| bad(c));
        out.push(IterationRecord {
            iter: int(0)?,
            wall_clock_s: float(1)?,
            sp_calls: int(2)?,
            objective: float(3)?,
            fw_gap: float(4)?,
            rel_gap: float(5)?,
            step: float(6)?,
            audit_sp_calls: int(7)?,
        });
    }
    Ok(out)
}

/// A solver configuration with a unique label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledConfig {
    pub label: String,
    pub config: SolverConfig,
}

/// Parsed manifest: one dataset, shared budgets, several runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub net: PathBuf,
    pub trips: PathBuf,
    pub runs: Vec<LabeledConfig>,
    pub budget: Budget,
    pub gap_interval: u64,
    pub out: Option<PathBuf>,
    /// Run configs concurrently. Timing columns are then not comparable.
    pub parallel: bool,
}

pub fn parse_method(s: &str) -> Option<(Method, SamplingMode)> {
    match s {
        "fw" => Some((Method::FrankWolfe, SamplingMode::Uniform)),
        "sofw" => Some((Method::StochasticOrigin, SamplingMode::Uniform)),
        "sofw-w" => Some((Method::StochasticOrigin, SamplingMode::DemandWeighted)),
        _ => None,
    }
}

pub fn parse_step(s: &str) -> Option<StepRule> {
    match s {
        "linesearch" => Some(StepRule::LineSearch),
        "decaying" => Some(StepRule::Decaying),
        "theorem" => Some(StepRule::Theorem),
        _ => None,
    }
}

pub fn parse_direction(s: &str) -> Option<DirectionMode> {
    match s {
        "block" => Some(DirectionMode::BlockReplacement),
        "paper" => Some(DirectionMode::ImportanceWeighted),
        _ => None,
    }
}

pub fn parse_precision(s: &str) -> Option<Precision> {
    match s {
        "f64" => Some(Precision::F64),
        "f32" => Some(Precision::F32),
        _ => None,
    }
}

#[derive(Default)]
struct RunSection {
    line: usize,
    label: Option<String>,
    method: Option<(Method, SamplingMode)>,
    alpha: Option<f64>,
    seed: Option<u64>,
    step: Option<StepRule>,
    direction: Option<DirectionMode>,
    precision: Option<Precision>,
}

impl RunManifest {
    /// Parses the `key = value` manifest format. Relative paths are resolved
    /// against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut net = None;
        let mut trips = None;
        let mut out = None;
        let mut budget = Budget::default();
        let mut gap_interval = 0;
        let mut parallel = false;
        let mut sections: Vec<RunSection> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| HarnessError::Manifest { line: line_no, message };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line == "[run]" {
                sections.push(RunSection { line: line_no, ..RunSection::default() });
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(format!("expected `key = value`, got `{line}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            let bad = || err(format!("invalid value `{value}` for `{key}`"));
            let float = || value.parse::<f64>().map_err(|_| bad());
            let int = || value.parse::<u64>().map_err(|_| bad());

            if let Some(section) = sections.last_mut() {
                match key {
                    "label" => section.label = Some(value.to_string()),
                    "method" => section.method = Some(parse_method(value).ok_or_else(bad)?),
                    "alpha" => section.alpha = Some(float()?),
                    "seed" => section.seed = Some(int()?),
                    "step" => section.step = Some(parse_step(value).ok_or_else(bad)?),
                    "direction" => section.direction = Some(parse_direction(value).ok_or_else(bad)?),
                    "precision" => section.precision = Some(parse_precision(value).ok_or_else(bad)?),
                    _ => return Err(err(format!("unknown run key `{key}`"))),
                }
                continue;
            }
            match key {
                "net" => net = Some(base_dir.join(value)),
                "trips" => trips = Some(base_dir.join(value)),
                "out" => out = Some(base_dir.join(value)),
                "max_iter" => budget.max_iter = Some(int()?),
                "sp_budget" => budget.sp_calls = Some(int()?),
                "time_budget" => budget.wall_clock_s = Some(float()?),
                "gap_target" => budget.rel_gap = Some(float()?),
                "gap_interval" => gap_interval = int()?,
                "parallel" => parallel = value.parse::<bool>().map_err(|_| bad())?,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }

        let missing = |what: &str| HarnessError::Manifest { line: 0, message: format!("missing `{what}`") };
        let net = net.ok_or_else(|| missing("net"))?;
        let trips = trips.ok_or_else(|| missing("trips"))?;
        if !budget.is_set() {
            return Err(missing("budget (max_iter, sp_budget, time_budget or gap_target)"));
        }
        let mut runs: Vec<LabeledConfig> = Vec::new();
        for s in sections {
            let err = |message: String| HarnessError::Manifest { line: s.line, message };
            let label = s.label.ok_or_else(|| err("run without label".into()))?;
            if runs.iter().any(|r| r.label == label) {
                return Err(err(format!("duplicate label `{label}`")));
            }
            let (method, mode) = s.method.ok_or_else(|| err(format!("run `{label}` has no method")))?;
            let defaults = SolverConfig::default();
            let config = SolverConfig {
                method,
                sampler: SamplerConfig {
                    mode,
                    fraction: s.alpha.unwrap_or(defaults.sampler.fraction),
                    seed: s.seed.unwrap_or(0),
                },
                step_rule: s.step.unwrap_or_default(),
                direction: s.direction.unwrap_or_default(),
                precision: s.precision.unwrap_or_default(),
                budget,
                gap_interval,
                line_search_tol: defaults.line_search_tol,
            };
            config.validate().map_err(|e| err(e.to_string()))?;
            runs.push(LabeledConfig { label, config });
        }
        Ok(Self { net, trips, runs, budget, gap_interval, out, parallel })
    }
}

/// Gap at budget level `level`: the latest checkpoint with `sp_calls ≤ level`.
pub fn gap_at(records: &[IterationRecord], level: u64) -> Option<f64> {
    records.iter().take_while(|r| r.sp_calls <= level).last().map(|r| r.fw_gap)
}

/// `fw_gap` of each run at common shortest-path budget levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub labels: Vec<String>,
    pub levels: Vec<u64>,
    /// `gaps[level][run]`.
    pub gaps: Vec<Vec<f64>>,
    /// `gap(first run) / gap(run)` at the final common level.
    pub final_ratios: Vec<f64>,
    /// Runs ended at different solver budgets.
    pub budget_mismatch: bool,
}

impl ComparisonTable {
    /// Aligns runs on the grid `start + j·interval`, capped at the smallest
    /// final budget among the runs.
    pub fn build(labels: &[String], runs: &[&[IterationRecord]], interval: u64) -> Result<Self, HarnessError> {
        if runs.len() < 2 {
            return Err(HarnessError::TooFewRuns);
        }
        let start = runs.iter().map(|r| r[0].sp_calls).max().unwrap_or(0);
        let finals: Vec<u64> = runs.iter().map(|r| r.last().map_or(0, |x| x.sp_calls)).collect();
        let common = *finals.iter().min().unwrap_or(&0);
        let budget_mismatch = finals.iter().any(|&f| f != common);
        if budget_mismatch {
            log::warn!("runs ended at different budgets {finals:?}; aligning at {common}");
        }

        let mut levels = Vec::new();
        if interval > 0 {
            let mut l = start;
            while l < common {
                levels.push(l);
                l += interval;
            }
        } else {
            levels.push(start);
        }
        if levels.last() != Some(&common) {
            levels.push(common);
        }
        let gaps: Vec<Vec<f64>> =
            levels.iter().map(|&l| runs.iter().map(|r| gap_at(r, l).unwrap_or(f64::NAN)).collect()).collect();
        let last = gaps.last().expect("at least one level");
        let final_ratios = last.iter().map(|g| last[0] / g).collect();
        Ok(Self { labels: labels.to_vec(), levels, gaps, final_ratios, budget_mismatch })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sp_calls");
        for l in &self.labels {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        for (level, row) in self.levels.iter().zip(&self.gaps) {
            let _ = write!(s, "{level}");
            for g in row {
                let _ = write!(s, ",{}", format_f64(*g));
            }
            s.push('\n');
        }
        s.push_str("ratio_final");
        for r in &self.final_ratios {
            let _ = write!(s, ",{}", format_f64(*r));
        }
        s.push('\n');
        s
    }
}

/// Results of a multi-run comparison.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub results: Vec<(String, RunResult)>,
    pub table: ComparisonTable,
}

/// Runs every labeled config on the same dataset and tabulates the gaps.
pub fn compare_runs(
    dataset: &Dataset,
    runs: &[LabeledConfig],
    gap_interval: u64,
    parallel: bool,
) -> Result<Comparison, HarnessError> {
    if runs.len() < 2 {
        return Err(HarnessError::TooFewRuns);
    }
    let exec = |r: &LabeledConfig| run(&dataset.network, &dataset.demand, &r.config).map(|res| (r.label.clone(), res));
    let results: Vec<(String, RunResult)> = if parallel {
        runs.par_iter().map(exec).collect::<Result<_, _>>()?
    } else {
        runs.iter().map(exec).collect::<Result<_, _>>()?
    };
    let labels: Vec<String> = results.iter().map(|(l, _)| l.clone()).collect();
    let records: Vec<&[IterationRecord]> = results.iter().map(|(_, r)| r.records.as_slice()).collect();
    let interval = if gap_interval > 0 { gap_interval } else { dataset.demand.n_origins() as u64 };
    let table = ComparisonTable::build(&labels, &records, interval)?;
    Ok(Comparison { results, table })
}
