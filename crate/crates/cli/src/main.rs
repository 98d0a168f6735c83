//! Command-line entry points for simulation runs and their reports.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use carbonsim::report::{ReportTable, METRICS};
use carbonsim::trace::verify;
use carbonsim::{run_episode, EntPolicySpec, EpisodeSpec, EpisodeTrace, GovPolicySpec, SimConfig, Verdict};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

const OUT_ENV: &str = "CARBONSIM_OUT";

#[derive(Parser)]
#[command(name = "carbonsim", version, about = "Cap-and-trade carbon market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one government policy over a list of seeds and write a trace per seed.
    Run {
        #[command(flatten)]
        common: RunArgs,
        /// Government policy, e.g. flat-si, decreasing×gf, convex-bm, random.
        #[arg(long, value_parser = parse_gov)]
        gov_policy: GovPolicySpec,
        /// Punishment level the government aims for.
        #[arg(long)]
        punishment: Option<f64>,
    },
    /// Run every schedule × indicator baseline, in parallel, and rank them by mean swf.
    Sweep {
        #[command(flatten)]
        common: RunArgs,
        /// Comma-separated punishment levels; defaults to the config's default punishment.
        #[arg(long, value_delimiter = ',')]
        punishment: Vec<f64>,
    },
    /// Aggregate the traces in a directory into tables and bar charts.
    Report {
        /// Directory holding .jsonl traces.
        trace_dir: PathBuf,
        /// Where to write report.csv, report.txt and charts; defaults to the trace directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate a trace from its header and compare it line by line.
    Replay { trace: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Enterprise policy (scripted/random/noop/mixed).
    #[arg(long, default_value = "scripted", value_parser = parse_ent)]
    ent_policy: EntPolicySpec,
    /// Seeds: a list and/or inclusive ranges, e.g. 1..10 or 1,4,7..9.
    #[arg(long, default_value = "1..10", value_parser = parse_seeds)]
    seeds: Seeds,
    /// Output directory for traces.
    #[arg(long, env = OUT_ENV, default_value = "carbonsim-out")]
    out: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
struct Seeds(Vec<u64>);

fn parse_gov(s: &str) -> Result<GovPolicySpec, String> {
    s.parse().map_err(|e: carbonsim::policies::PolicyError| e.to_string())
}

fn parse_ent(s: &str) -> Result<EntPolicySpec, String> {
    s.parse().map_err(|e: carbonsim::policies::PolicyError| e.to_string())
}

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |x: &str| x.trim().parse::<u64>().map_err(|_| format!("bad seed {x:?}"));
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
                if a > b {
                    return Err(format!("empty seed range {part}"));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(num(part)?),
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(Seeds(seeds))
}

/// A failure after argument parsing; `usage` picks exit code 2 over 1.
struct Failure {
    usage: bool,
    message: String,
}

impl Failure {
    fn runtime(message: impl Into<String>) -> Self {
        Self {
            usage: false,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self {
            usage: true,
            message: message.into(),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig, Failure> {
    let Some(path) = path else {
        return Ok(SimConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    SimConfig::from_json(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn trace_name(spec: &EpisodeSpec) -> String {
    format!("{}_p{}_{}_seed{}.jsonl", spec.gov, spec.punishment, spec.ent, spec.seed)
}

/// Runs the specs in parallel and writes one trace file each.
fn run_specs(specs: &[EpisodeSpec], out: &Path) -> Result<Vec<EpisodeTrace>, Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
    specs
        .par_iter()
        .map(|spec| {
            let trace = run_episode(spec).map_err(|e| Failure::runtime(format!("seed {}: {e}", spec.seed)))?;
            let path = out.join(trace_name(spec));
            fs::write(&path, trace.to_jsonl()).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
            Ok(trace)
        })
        .collect()
}

fn table(traces: &[EpisodeTrace]) -> Result<ReportTable, Failure> {
    Ok(ReportTable::from_traces(traces)
        .map_err(|e| Failure::runtime(e.to_string()))?
        .ranked_by_swf())
}

fn specs(common: &RunArgs, govs: &[GovPolicySpec], punishments: &[f64]) -> Result<Vec<EpisodeSpec>, Failure> {
    let config = load_config(common.config.as_deref())?;
    let mut out = Vec::new();
    for &gov in govs {
        for &punishment in punishments {
            if !(0.0..=config.max_punishment).contains(&punishment) {
                return Err(Failure::usage(format!(
                    "punishment {punishment} outside 0..={}",
                    config.max_punishment
                )));
            }
            out.extend(common.seeds.0.iter().map(|&seed| EpisodeSpec {
                config: config.clone(),
                seed,
                gov,
                ent: common.ent_policy,
                punishment,
            }));
        }
    }
    Ok(out)
}

fn default_punishment(common: &RunArgs) -> Result<f64, Failure> {
    Ok(load_config(common.config.as_deref())?.default_punishment)
}

fn cmd_run(common: &RunArgs, gov: GovPolicySpec, punishment: Option<f64>) -> Result<(), Failure> {
    let punishment = match punishment {
        Some(p) => p,
        None => default_punishment(common)?,
    };
    let specs = specs(common, &[gov], &[punishment])?;
    let traces = run_specs(&specs, &common.out)?;
    println!("{} traces written to {}", traces.len(), common.out.display());
    print!("{}", table(&traces)?.to_text());
    Ok(())
}

fn cmd_sweep(common: &RunArgs, punishments: &[f64]) -> Result<(), Failure> {
    let punishments = if punishments.is_empty() {
        vec![default_punishment(common)?]
    } else {
        punishments.to_vec()
    };
    let specs = specs(common, &GovPolicySpec::all_baselines(), &punishments)?;
    let traces = run_specs(&specs, &common.out)?;
    let table = table(&traces)?;
    write_report(&table, &common.out)?;
    println!("{} traces written to {}", traces.len(), common.out.display());
    print!("{}", table.to_text());
    Ok(())
}

fn write_report(table: &ReportTable, out: &Path) -> Result<(), Failure> {
    let write = |name: &str, body: &str| {
        let path = out.join(name);
        fs::write(&path, body).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
    };
    fs::create_dir_all(out).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
    write("report.csv", &table.to_csv())?;
    write("report.txt", &table.to_text())?;
    for metric in METRICS {
        write(
            &format!("chart_{metric}.svg"),
            &table.bar_chart_svg(metric).expect("known metric"),
        )?;
    }
    Ok(())
}

fn cmd_report(dir: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::runtime(format!("no .jsonl traces in {}", dir.display())));
    }
    let traces = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))?;
            EpisodeTrace::from_jsonl(&text).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let table = table(&traces)?;
    write_report(&table, out.unwrap_or(dir))?;
    print!("{}", table.to_text());
    Ok(())
}

fn cmd_replay(path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    match verify(&text).map_err(|e| Failure::runtime(e.to_string()))? {
        Verdict::Verified => {
            println!("verified");
            Ok(())
        }
        Verdict::Diverged {
            line,
            t,
            expected,
            found,
        } => {
            let step = t.map_or("n/a".to_string(), |t| t.to_string());
            Err(Failure::runtime(format!(
                "diverged at line {line} (step {step})\n  expected: {}\n  found:    {}",
                expected.as_deref().unwrap_or("<end of trace>"),
                found.as_deref().unwrap_or("<end of trace>")
            )))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            common,
            gov_policy,
            punishment,
        } => cmd_run(common, *gov_policy, *punishment),
        Command::Sweep { common, punishment } => cmd_sweep(common, punishment),
        Command::Report { trace_dir, out } => cmd_report(trace_dir, out.as_deref()),
        Command::Replay { trace } => cmd_replay(trace),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(if f.usage { 2 } else { 1 })
        }
    }
}
