//! Scenario files, CSV output and the `run` / `sweep` / `validate` commands.
//!
//! A scenario is a TOML file with up to four tables:
//!
//! ```toml
//! [simulation]   # any SimConfig field
//! num_devices = 20
//! arrival_rate = 0.5
//!
//! [strategy]     # any StrategyParams field
//! gamma1 = 0.5
//!
//! [run]
//! strategy = "cloud-edge"
//! seed = 0
//!
//! [sweep]
//! rates = [0.5, 1.0]
//! strategies = ["cloud-edge", "local"]
//! seeds = [0, 1, 2]
//! out = "sweep.csv"
//! ```
//!
//! Missing keys take the reference defaults; unknown keys are rejected.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::sim::{cell_config, run, sweep, SimConfig, SimError, SimMetrics, SweepRow};
use crate::strategies::{StrategyKind, StrategyParams};

pub use crate::sim::defaults;

/// Environment variable naming the scenario used when `--scenario` is absent.
pub const SCENARIO_ENV: &str = "OFFLOAD_SCENARIO";

pub const CSV_HEADER: &str = "strategy,seed,arrival_rate,avg_task_delay_s,processing_rate,peak_blocking_kb,\
final_blocking_kb,total_energy_j,offload_success_rate,ot_iterations_mean,ot_fallback_count";

pub const SUMMARY_HEADER: &str = "arrival_rate,strategy,seeds,avg_task_delay_s,processing_rate,peak_blocking_kb,\
final_blocking_kb,total_energy_j,offload_success_rate,ot_iterations_mean,ot_fallback_count";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}{key}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        key: String,
        line: Option<usize>,
        message: String,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("unknown strategy {name:?}; valid names: {valid}")]
    UnknownStrategy { name: String, valid: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl CliError {
    /// 1 for I/O failures, 2 for usage and validation errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Scenario(ScenarioError::Io { .. }) => 1,
            CliError::Sim(SimError::Config(_)) => 2,
            CliError::Sim(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub strategy: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub rates: Option<Vec<f64>>,
    pub strategies: Option<Vec<String>>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawScenario {
    simulation: SimConfig,
    strategy: StrategyParams,
    run: RunSection,
    sweep: SweepSection,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Includes the strategy parameters in `config.params`.
    pub config: SimConfig,
    pub run: RunSection,
    pub sweep: SweepSection,
}

impl Default for Scenario {
    /// The desk-scale scenario.
    fn default() -> Self {
        Self {
            config: SimConfig::desk_scale(),
            run: RunSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// 1-based line where `key` is assigned inside `[section]`.
fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
        } else if current == section {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Section that holds `key` for the purpose of error locations.
fn section_of(key: &str) -> &'static str {
    const STRATEGY_KEYS: [&str; 6] = ["gamma1", "epsilon", "epsilon_scale", "tol", "max_iter", "capacity_horizon"];
    if STRATEGY_KEYS.contains(&key) {
        "strategy"
    } else {
        "simulation"
    }
}

fn invalid(source: &str, section: &str, key: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        key: key.to_string(),
        line: locate(source, section, key),
        message: message.into(),
    }
}

fn parse_strategy(name: &str) -> Result<StrategyKind, CliError> {
    name.parse().map_err(|_| CliError::UnknownStrategy {
        name: name.to_string(),
        valid: StrategyKind::valid_names(),
    })
}

/// Parses and validates scenario text.
pub fn parse_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(source).map_err(|e| ScenarioError::Parse {
        line: e.span().map_or(1, |s| line_of_offset(source, s.start)),
        message: e.message().to_string(),
    })?;
    let mut config = raw.simulation;
    config.params = raw.strategy;
    config
        .validate()
        .map_err(|e| invalid(source, section_of(e.key), e.key, e.message))?;

    if let Some(name) = &raw.run.strategy {
        if name.parse::<StrategyKind>().is_err() {
            let msg = format!("unknown strategy {name:?}; valid names: {}", StrategyKind::valid_names());
            return Err(invalid(source, "run", "strategy", msg));
        }
    }
    let sweep = &raw.sweep;
    if let Some(rates) = &sweep.rates {
        if rates.is_empty() || rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(invalid(source, "sweep", "rates", "must be a nonempty list of nonnegative rates"));
        }
    }
    if let Some(names) = &sweep.strategies {
        if names.is_empty() {
            return Err(invalid(source, "sweep", "strategies", "must not be empty"));
        }
        if let Some(bad) = names.iter().find(|n| n.parse::<StrategyKind>().is_err()) {
            let msg = format!("unknown strategy {bad:?}; valid names: {}", StrategyKind::valid_names());
            return Err(invalid(source, "sweep", "strategies", msg));
        }
    }
    if sweep.seeds.as_ref().is_some_and(Vec::is_empty) {
        return Err(invalid(source, "sweep", "seeds", "must not be empty"));
    }
    Ok(Scenario {
        config,
        run: raw.run,
        sweep: raw.sweep,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let source = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&source)
}

/// Loads `path`, else the file named by [`SCENARIO_ENV`], else the desk-scale
/// defaults.
pub fn resolve_scenario(path: Option<&Path>) -> Result<Scenario, ScenarioError> {
    match path {
        Some(p) => load_scenario(p),
        None => match std::env::var_os(SCENARIO_ENV) {
            Some(p) if !p.is_empty() => load_scenario(Path::new(&p)),
            _ => Ok(Scenario::default()),
        },
    }
}

/// `x` with 9 significant digits, without trailing zeros.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // Rounding can carry into a new digit; that still leaves 9 significant.
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.8e}");
        let (mantissa, e) = s.split_once('e').expect("exponent present");
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{mantissa}e{e}")
    };
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

pub fn csv_row(strategy: StrategyKind, seed: u64, arrival_rate: f64, m: &SimMetrics) -> String {
    let f = format_float;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        strategy,
        seed,
        f(arrival_rate),
        f(m.avg_task_delay),
        f(m.processing_rate),
        f(m.peak_blocking_queue),
        f(m.final_blocking_queue),
        f(m.total_energy),
        f(m.offload_success_rate),
        f(m.ot_iterations_mean),
        m.ot_fallback_count
    )
}

/// Per-(rate, strategy) means over seeds, in first-appearance order.
pub fn summary_rows(rows: &[SweepRow]) -> Vec<String> {
    let mut groups: Vec<((f64, StrategyKind), Vec<&SimMetrics>)> = Vec::new();
    for row in rows {
        let key = (row.arrival_rate, row.strategy);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, ms)) => ms.push(&row.metrics),
            None => groups.push((key, vec![&row.metrics])),
        }
    }
    groups
        .into_iter()
        .map(|((rate, strategy), ms)| {
            let n = ms.len() as f64;
            let mean = |get: fn(&SimMetrics) -> f64| format_float(ms.iter().map(|m| get(m)).sum::<f64>() / n);
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                format_float(rate),
                strategy,
                ms.len(),
                mean(|m| m.avg_task_delay),
                mean(|m| m.processing_rate),
                mean(|m| m.peak_blocking_queue),
                mean(|m| m.final_blocking_queue),
                mean(|m| m.total_energy),
                mean(|m| m.offload_success_rate),
                mean(|m| m.ot_iterations_mean),
                mean(|m| m.ot_fallback_count as f64),
            )
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Appends `lines` to `path`, writing `header` first if the file is new or
/// empty.
fn append_csv(path: &Path, header: &str, lines: &[String]) -> Result<(), CliError> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let empty = file.metadata().map_err(io_err(path))?.len() == 0;
    let mut text = String::new();
    if empty {
        text.push_str(header);
        text.push('\n');
    }
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    file.write_all(text.as_bytes()).map_err(io_err(path))
}

/// Path of the summary written next to a sweep's detail CSV.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_summary.csv"))
}

#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub strategy: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Runs one simulation. The CSV row goes to `out` when given (header on
/// first write), otherwise to `stdout` with a header. Returns the row and a
/// one-line summary.
pub fn cmd_run(scenario: &Scenario, args: &RunArgs, stdout: &mut dyn Write) -> Result<(String, String), CliError> {
    let name = args
        .strategy
        .as_deref()
        .or(scenario.run.strategy.as_deref())
        .unwrap_or(StrategyKind::CloudEdge.name());
    let strategy = parse_strategy(name)?;
    let seed = args.seed.or(scenario.run.seed).unwrap_or(0);
    let rate = scenario.config.arrival_rate;
    let metrics = run(&cell_config(&scenario.config, rate, seed), strategy)?;
    let row = csv_row(strategy, seed, rate, &metrics);
    match args.out.as_ref().or(scenario.run.out.as_ref()) {
        Some(path) => append_csv(path, CSV_HEADER, std::slice::from_ref(&row))?,
        None => writeln!(stdout, "{CSV_HEADER}\n{row}").map_err(io_err(Path::new("<stdout>")))?,
    }
    let summary = format!(
        "{strategy} seed={seed} rate={}: {} tasks, delay {} s, {} tasks/slot, blocking {} kb, energy {} J, success {}",
        format_float(rate),
        metrics.generated_tasks,
        format_float(metrics.avg_task_delay),
        format_float(metrics.processing_rate),
        format_float(metrics.final_blocking_queue),
        format_float(metrics.total_energy),
        format_float(metrics.offload_success_rate),
    );
    Ok((row, summary))
}

#[derive(Debug, Clone, Default)]
pub struct SweepArgs {
    pub rates: Option<Vec<f64>>,
    pub strategies: Option<Vec<String>>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// Rates 0.1 through 2.0 in steps of 0.1.
pub fn default_rates() -> Vec<f64> {
    (1..=20).map(|i| f64::from(i) / 10.0).collect()
}

pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub detail_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Runs the full grid, writes the detail CSV to the output path (replacing
/// it) and the per-(rate, strategy) means to `<stem>_summary.csv`.
pub fn cmd_sweep(scenario: &Scenario, args: &SweepArgs) -> Result<SweepOutput, CliError> {
    let sw = &scenario.sweep;
    let rates = args.rates.clone().or_else(|| sw.rates.clone()).unwrap_or_else(default_rates);
    let strategies = match args.strategies.as_ref().or(sw.strategies.as_ref()) {
        Some(names) => names.iter().map(|n| parse_strategy(n)).collect::<Result<Vec<_>, _>>()?,
        None => StrategyKind::ALL.to_vec(),
    };
    let seeds = args.seeds.clone().or_else(|| sw.seeds.clone()).unwrap_or_else(|| (0..5).collect());
    if rates.is_empty() || strategies.is_empty() || seeds.is_empty() {
        return Err(CliError::Usage("sweep grids must be nonempty".into()));
    }
    if let Some(r) = rates.iter().find(|r| !r.is_finite() || **r < 0.0) {
        return Err(CliError::Usage(format!("invalid arrival rate {r}")));
    }
    let out = args
        .out
        .clone()
        .or_else(|| sw.out.clone())
        .unwrap_or_else(|| PathBuf::from("sweep.csv"));
    let jobs = args.jobs.or(sw.jobs).unwrap_or(0);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    let rows = pool.install(|| sweep(&scenario.config, &rates, &strategies, &seeds))?;

    let mut detail = String::new();
    detail.push_str(CSV_HEADER);
    detail.push('\n');
    for r in &rows {
        let _ = writeln!(detail, "{}", csv_row(r.strategy, r.seed, r.arrival_rate, &r.metrics));
    }
    fs::write(&out, detail).map_err(io_err(&out))?;
    let summary_out = summary_path(&out);
    let mut summary = String::new();
    summary.push_str(SUMMARY_HEADER);
    summary.push('\n');
    for l in summary_rows(&rows) {
        summary.push_str(&l);
        summary.push('\n');
    }
    fs::write(&summary_out, summary).map_err(io_err(&summary_out))?;
    Ok(SweepOutput {
        rows,
        detail_path: out,
        summary_path: summary_out,
    })
}

/// Parses `a:b:step` (inclusive) or a comma list.
pub fn parse_rates(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("invalid number {t:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || b < a {
            return Err(format!("invalid range {s:?}"));
        }
        let n = ((b - a) / step + 1e-9).floor() as u64;
        // Round to the step's precision so 0.1:0.3:0.1 gives 0.3, not 0.30000000000000004.
        return Ok((0..=n).map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9).collect());
    }
    s.split(',').map(num).collect()
}

/// Parses `a..b` (exclusive) or a comma list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("invalid seed {t:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if b <= a {
            return Err(format!("empty seed range {s:?}"));
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(num).collect()
}

/// Comma list; `all` selects every strategy.
pub fn parse_strategy_list(s: &str) -> Vec<String> {
    if s.trim() == "all" {
        return StrategyKind::ALL.iter().map(|k| k.name().to_string()).collect();
    }
    s.split(',').map(|t| t.trim().to_string()).collect()
}
