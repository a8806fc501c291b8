//! `assign`: run traffic assignment solvers on TNTP datasets.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use assign_core::cost::beckmann_objective;
use assign_core::harness::{
    compare_runs, parse_direction, parse_method, parse_precision, parse_step, write_metrics, Dataset, HarnessError,
    RunManifest,
};
use assign_core::solver::{run, Budget, SamplerConfig, SolverConfig};
use assign_core::tntp::write_flows;
use clap::Parser;

#[derive(Parser, Debug)]
#[command(name = "assign", version, about = "User-equilibrium traffic assignment with (stochastic origin) Frank-Wolfe")]
struct Args {
    /// Multi-run comparison manifest; replaces the single-run flags.
    #[arg(long, conflicts_with_all = ["net", "trips"])]
    manifest: Option<PathBuf>,

    /// TNTP network file.
    #[arg(long, required_unless_present = "manifest")]
    net: Option<PathBuf>,

    /// TNTP trips file.
    #[arg(long, required_unless_present = "manifest")]
    trips: Option<PathBuf>,

    /// fw | sofw | sofw-w
    #[arg(long, default_value = "fw", value_parser = check(parse_method))]
    method: String,

    /// Fraction of origins sampled per iteration.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// linesearch | decaying | theorem
    #[arg(long, default_value = "linesearch", value_parser = check(parse_step))]
    step: String,

    /// block | paper
    #[arg(long, default_value = "block", value_parser = check(parse_direction))]
    direction: String,

    #[arg(long)]
    max_iter: Option<u64>,

    /// Solver shortest-path calls, initialization included.
    #[arg(long)]
    sp_budget: Option<u64>,

    /// Solver seconds, gap checkpoints excluded.
    #[arg(long)]
    time_budget: Option<f64>,

    /// Stop once the relative gap reaches this value.
    #[arg(long)]
    gap_target: Option<f64>,

    /// Checkpoint spacing in shortest-path calls (0: every iteration).
    #[arg(long, default_value_t = 0)]
    gap_interval: u64,

    /// f64 | f32 storage for per-origin flows.
    #[arg(long, default_value = "f64", value_parser = check(parse_precision))]
    precision: String,

    /// Run manifest entries concurrently (timings then not comparable).
    #[arg(long)]
    parallel: bool,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn check<T>(parse: fn(&str) -> Option<T>) -> impl Fn(&str) -> Result<String, String> + Clone + Send + Sync + 'static
where
    T: 'static,
{
    move |s: &str| parse(s).map(|_| s.to_string()).ok_or_else(|| format!("unsupported value `{s}`"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

enum CliError {
    Usage(String),
    Run(HarnessError),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Run(e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Run(HarnessError::Io { path: path.to_path_buf(), source })
}

fn execute(args: Args) -> Result<(), CliError> {
    if let Some(manifest) = &args.manifest {
        return execute_manifest(manifest, &args);
    }
    let (net, trips) = (args.net.clone().unwrap(), args.trips.clone().unwrap());
    let budget = Budget {
        max_iter: args.max_iter,
        sp_calls: args.sp_budget,
        wall_clock_s: args.time_budget,
        rel_gap: args.gap_target,
    };
    if !budget.is_set() {
        return Err(CliError::Usage(
            "at least one of --max-iter, --sp-budget, --time-budget, --gap-target is required".into(),
        ));
    }
    let out = args.out.clone().ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let (method, mode) = parse_method(&args.method).expect("validated by clap");
    let config = SolverConfig {
        method,
        sampler: SamplerConfig { mode, fraction: args.alpha, seed: args.seed },
        step_rule: parse_step(&args.step).expect("validated by clap"),
        direction: parse_direction(&args.direction).expect("validated by clap"),
        precision: parse_precision(&args.precision).expect("validated by clap"),
        budget,
        gap_interval: args.gap_interval,
        ..SolverConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let dataset = Dataset::load(&net, &trips)?;
    let result = run(&dataset.network, &dataset.demand, &config).map_err(HarnessError::from)?;
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    write_run(&out, &dataset, &result.records, result.store.total())?;
    let last = result.last();
    println!(
        "{}: stopped by {} after {} iterations, sp_calls={}, objective={:.10e}, rel_gap={:.3e}",
        args.method, result.stop_reason, last.iter, last.sp_calls, last.objective, last.rel_gap
    );
    Ok(())
}

fn write_run(
    dir: &Path,
    dataset: &Dataset,
    records: &[assign_core::solver::IterationRecord],
    flows: &[f64],
) -> Result<(), CliError> {
    let metrics = dir.join("metrics.csv");
    let mut w = BufWriter::new(File::create(&metrics).map_err(io_err(&metrics))?);
    write_metrics(records, &mut w)?;

    let flows_path = dir.join("flows.txt");
    let objective = beckmann_objective(&dataset.network, flows).map_err(|e| HarnessError::Solver(e.into()))?;
    let mut w = BufWriter::new(File::create(&flows_path).map_err(io_err(&flows_path))?);
    write_flows(&dataset.network, flows, objective, &mut w)
        .map_err(|source| HarnessError::Tntp { path: flows_path.clone(), source })?;
    Ok(())
}

fn execute_manifest(path: &Path, args: &Args) -> Result<(), CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let manifest = RunManifest::parse(&text, base)?;
    if manifest.runs.len() < 2 {
        return Err(CliError::Run(HarnessError::TooFewRuns));
    }
    let out = args
        .out
        .clone()
        .or_else(|| manifest.out.clone())
        .ok_or_else(|| CliError::Usage("--out or `out =` in the manifest is required".into()))?;
    let dataset = Dataset::load(&manifest.net, &manifest.trips)?;
    let comparison = compare_runs(&dataset, &manifest.runs, manifest.gap_interval, manifest.parallel || args.parallel)?;

    for (label, result) in &comparison.results {
        let dir = out.join(label);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_run(&dir, &dataset, &result.records, result.store.total())?;
    }
    let table_path = out.join("comparison.csv");
    let csv = comparison.table.to_csv();
    fs::write(&table_path, &csv).map_err(io_err(&table_path))?;
    print!("{csv}");
    Ok(())
}
