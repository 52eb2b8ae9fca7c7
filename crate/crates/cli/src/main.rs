use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use swarmsim::engine::ValidationReport;
use swarmsim::scenario::{self, cli_value};
use swarmsim::sweep::{self, MetricRow, SweepSpec};
use swarmsim::{Error, SimConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Run a UAV swarm offloading scenario, or sweep one parameter over several
/// values and seeds.
#[derive(Debug, Parser)]
#[command(name = "swarmsim", version)]
struct Args {
    /// TOML scenario file; keys mirror the config fields. Defaults apply
    /// when omitted.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// random | greedy_nearest | greedy_least_loaded | coop | bandit
    #[arg(long, value_name = "NAME")]
    policy: Option<String>,
    /// hierarchical | distributed
    #[arg(long, value_name = "NAME")]
    mode: Option<String>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Sweep one key, e.g. `n_devices=6,8,10`.
    #[arg(long, value_name = "KEY=v1,v2,...")]
    sweep: Option<String>,
    #[arg(long, value_name = "N", requires = "sweep")]
    seeds_per_point: Option<usize>,
}

enum Failure {
    Usage(String),
    Invalid(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation(_) | Error::Scenario { .. } => Failure::Invalid(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<ValidationReport> for Failure {
    fn from(r: ValidationReport) -> Self {
        Failure::Invalid(r.to_string())
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", path.display()))
}

/// Splits on commas outside brackets and quotes, so array values survive.
fn split_values(s: &str) -> Vec<&str> {
    let (mut depth, mut quoted, mut start) = (0i32, false, 0);
    let mut out = Vec::new();
    for (i, c) in s.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '[' if !quoted => depth += 1,
            ']' if !quoted => depth -= 1,
            ',' if !quoted && depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

fn base_config(args: &Args) -> Result<SimConfig, Failure> {
    let mut cfg = match &args.scenario {
        Some(p) => scenario::load(p)?,
        None => SimConfig::default(),
    };
    let mut report = ValidationReport::default();
    let overrides = [
        ("seed", args.seed.map(|s| s.to_string())),
        ("policy", args.policy.clone()),
        ("control_mode", args.mode.clone()),
    ];
    for (key, v) in overrides {
        if let Some(v) = v {
            let value = if key == "seed" { cli_value(&v) } else { toml::Value::String(v) };
            if let Err(e) = scenario::apply(&mut cfg, key, &value) {
                report.push(key, e);
            }
        }
    }
    report.into_result()?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let f = File::create(path).map_err(io_err(path))?;
    sweep::write_rows(BufWriter::new(f), rows).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn run_single(cfg: &SimConfig, out: &Path) -> Result<String, Failure> {
    let (log, metrics) = swarmsim::run(cfg)?;
    let row = MetricRow::new(cfg, &metrics, log.hash_hex(), "", "");
    write_csv(&out.join("metrics.csv"), &[row])?;
    let path = out.join("events.jsonl");
    let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    log.write_jsonl(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
    Ok(format!(
        "{} events, hash {}\navg_execution_time {} s, avg_computation_rate {} cycles/s, avg_offloaded_data {} bits\ncompleted {}, dropped {}, generated {}",
        log.len(),
        log.hash_hex(),
        show(metrics.avg_execution_time),
        show(metrics.avg_computation_rate),
        show(metrics.avg_offloaded_data),
        metrics.completed_tasks,
        metrics.dropped_tasks,
        metrics.generated_tasks,
    ))
}

fn run_sweep(cfg: SimConfig, spec: &str, seeds: usize, out: &Path) -> Result<String, Failure> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| Failure::Usage(format!("--sweep expects KEY=v1,v2,... (got `{spec}`)")))?;
    let values = split_values(values).into_iter().filter(|v| !v.is_empty()).map(cli_value).collect();
    let spec = SweepSpec { base: cfg, key: key.trim().to_string(), values, seeds_per_point: seeds };
    let result = sweep::run_sweep(&spec)?;
    write_csv(&out.join("metrics.csv"), &result.rows)?;
    write_csv(&out.join("summary.csv"), &result.summary)?;
    Ok(format!("{} runs over {} points", result.rows.len(), result.summary.len()))
}

fn main_inner(args: Args) -> Result<String, Failure> {
    let cfg = base_config(&args)?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    match &args.sweep {
        Some(spec) => run_sweep(cfg, spec, args.seeds_per_point.unwrap_or(1), &args.out),
        None => run_single(&cfg, &args.out),
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match main_inner(args) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::split_values;

    #[test]
    fn splits_outside_brackets() {
        assert_eq!(split_values("6,8, 10"), vec!["6", "8", "10"]);
        assert_eq!(split_values("[[1,2]],[[3,4]]"), vec!["[[1,2]]", "[[3,4]]"]);
        assert_eq!(split_values("\"a,b\",c"), vec!["\"a,b\"", "c"]);
    }
}
