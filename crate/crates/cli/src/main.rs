//! `tbsim`: run scenarios, check traces, sweep seeds and evaluate the
//! recovery bound.
//!
//! Exit codes: 0 every selected oracle passed, 1 an oracle failed (or the
//! simulator caught a forgery), 2 configuration or input error, 3 some
//! liveness oracle was inconclusive.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use tenderbake::metrics::metrics;
use tenderbake::scenario::{Property, Scenario, SeedRange};
use tenderbake::sim::{self, SimError};
use tenderbake::sweep::{run_all, summarize, GroupReport};
use tenderbake::trace::Trace;
use tenderbake::verifier::{
    check_property, check_recovery, recovery_bound, Outcome, TraceView, Verdict,
};

const OUT_ENV: &str = "TBSIM_OUT_DIR";

#[derive(Parser)]
#[command(name = "tbsim", version, about = "Tenderbake simulation harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one scenario and write its trace and metrics.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Check a trace file against the oracles.
    Check {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        props: Props,
    },
    /// Simulate every seed and grid point of a scenario and tally verdicts.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Seed range `a..b`, overriding the scenario's sweep section.
        #[arg(long)]
        seeds: Option<SeedRange>,
        #[command(flatten)]
        props: Props,
        /// Worker threads; all cores when unset.
        #[arg(long)]
        jobs: Option<usize>,
        /// Also write the report as JSON into this directory.
        #[arg(long, env = OUT_ENV)]
        out: Option<PathBuf>,
    },
    /// Compare the measured recovery time with the analytic bound.
    Bound {
        #[arg(long)]
        scenario: PathBuf,
        /// Trace of the scenario; simulated afresh when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct Props {
    /// Comma-separated properties; the scenario's selection when unset.
    #[arg(long, value_delimiter = ',')]
    props: Option<Vec<Property>>,
}

impl Props {
    fn or_scenario(&self, s: &Scenario) -> Vec<Property> {
        self.props.clone().unwrap_or_else(|| s.properties())
    }
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct InputError(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run { scenario, out } => cmd_run(&scenario, &out.out),
        Cmd::Check { trace, props } => cmd_check(&trace, &props),
        Cmd::Sweep {
            scenario,
            seeds,
            props,
            jobs,
            out,
        } => cmd_sweep(&scenario, seeds, &props, jobs, out.as_deref()),
        Cmd::Bound { scenario, trace } => cmd_bound(&scenario, trace.as_deref()),
    };
    match res {
        Ok(code) => code,
        Err(InputError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, InputError> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Scenario::from_toml(&text).with_context(|| format!("scenario {}", path.display()))?)
}

fn load_trace(path: &Path) -> Result<Trace, InputError> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(
        Trace::read_jsonl(BufReader::new(f))
            .with_context(|| format!("trace {}", path.display()))?,
    )
}

/// Simulation errors: bad configuration is an input error, a forgery is a
/// failed run.
fn simulate(s: &Scenario) -> Result<Result<Trace, String>, InputError> {
    match sim::run(s) {
        Ok(t) => Ok(Ok(t)),
        Err(SimError::Config(e)) => Err(anyhow!(e).context("scenario").into()),
        Err(e @ SimError::Forgery { .. }) => Ok(Err(e.to_string())),
    }
}

fn exit_for(outcomes: impl IntoIterator<Item = Outcome>) -> ExitCode {
    let mut inconclusive = false;
    for o in outcomes {
        match o {
            Outcome::Fail => return ExitCode::from(1),
            Outcome::Inconclusive => inconclusive = true,
            Outcome::Pass => {}
        }
    }
    ExitCode::from(if inconclusive { 3 } else { 0 })
}

fn cmd_run(path: &Path, out: &Path) -> Result<ExitCode, InputError> {
    let s = load_scenario(path)?;
    let trace = match simulate(&s)? {
        Ok(t) => t,
        Err(e) => {
            eprintln!("aborted: {e}");
            return Ok(ExitCode::from(1));
        }
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stem = format!("{}-s{}", s.name, s.sim.seed);
    let trace_path = out.join(format!("{stem}.trace.jsonl"));
    let metrics_path = out.join(format!("{stem}.metrics.json"));
    let w = BufWriter::new(
        File::create(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?,
    );
    trace.write_jsonl(w)?;
    let view = TraceView::new(&trace)?;
    let m = metrics(&view);
    let mut w = BufWriter::new(File::create(&metrics_path)?);
    serde_json::to_writer_pretty(&mut w, &m)?;
    writeln!(w)?;
    w.flush()?;
    println!("trace    {}", trace_path.display());
    println!("metrics  {}", metrics_path.display());
    println!(
        "records {}  end {} ({:?})  min decided level {}  max decision round {}",
        trace.records.len(),
        m.end_time,
        m.end_reason,
        m.min_decided_level,
        m.max_decision_round
    );
    Ok(ExitCode::SUCCESS)
}

fn print_verdicts(verdicts: &[Verdict]) {
    println!(
        "{:<16} {:<13} {:>8}  detail",
        "property", "outcome", "index"
    );
    for v in verdicts {
        let idx = v.counterexample.map_or("-".to_string(), |i| i.to_string());
        println!(
            "{:<16} {:<13} {:>8}  {}",
            v.property.name(),
            v.outcome.to_string(),
            idx,
            v.detail
        );
    }
}

fn cmd_check(path: &Path, props: &Props) -> Result<ExitCode, InputError> {
    let trace = load_trace(path)?;
    let view = TraceView::new(&trace)?;
    let verdicts: Vec<Verdict> = props
        .or_scenario(trace.scenario())
        .into_iter()
        .map(|p| check_property(&view, p))
        .collect();
    print_verdicts(&verdicts);
    Ok(exit_for(verdicts.iter().map(|v| v.outcome)))
}

fn print_group(label: &str, g: &GroupReport) {
    let props: Vec<String> = g
        .properties
        .iter()
        .map(|(p, t)| format!("{}={}/{}/{}", p.name(), t.pass, t.fail, t.inconclusive))
        .collect();
    let rounds: Vec<String> = g
        .decision_rounds
        .iter()
        .map(|(r, c)| format!("r{r}:{c}"))
        .collect();
    println!(
        "{label}\n  runs {}  errors {}  buffer max {}\n  {}\n  decision rounds {}",
        g.runs,
        g.errors,
        g.buffer_high_water,
        props.join("  "),
        rounds.join(" ")
    );
}

fn cmd_sweep(
    path: &Path,
    seeds: Option<SeedRange>,
    props: &Props,
    jobs: Option<usize>,
    out: Option<&Path>,
) -> Result<ExitCode, InputError> {
    let s = load_scenario(path)?;
    if jobs == Some(0) {
        return Err(anyhow!("--jobs must be at least 1").into());
    }
    let props = props.or_scenario(&s);
    let runs = run_all(&s.expand_sweep(seeds.map(|r| r.0)), &props, jobs);
    let report = summarize(&runs);
    println!("pass/fail/inconclusive per property");
    for (label, g) in &report.groups {
        print_group(label, g);
    }
    print_group("total", &report.total);
    for r in &runs {
        if let Some(e) = &r.error {
            println!("error: {} seed {}: {e}", r.label, r.seed);
        }
        for v in r.verdicts.iter().filter(|v| v.outcome == Outcome::Fail) {
            println!(
                "FAIL: {} seed {}: {} at {:?}: {}",
                r.label, r.seed, v.property, v.counterexample, v.detail
            );
        }
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let p = dir.join(format!("{}.sweep.json", s.name));
        let mut w = BufWriter::new(File::create(&p)?);
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
        w.flush()?;
        println!("report   {}", p.display());
    }
    if report.total.errors > 0 {
        return Ok(ExitCode::from(1));
    }
    Ok(exit_for(
        runs.iter()
            .flat_map(|r| r.verdicts.iter().map(|v| v.outcome)),
    ))
}

fn cmd_bound(path: &Path, trace: Option<&Path>) -> Result<ExitCode, InputError> {
    let s = load_scenario(path)?;
    let trace = match trace {
        Some(p) => {
            let t = load_trace(p)?;
            if *t.scenario() != s {
                return Err(
                    anyhow!("{} was not produced by {}", p.display(), path.display()).into(),
                );
            }
            t
        }
        None => match simulate(&s)? {
            Ok(t) => t,
            Err(e) => {
                eprintln!("aborted: {e}");
                return Ok(ExitCode::from(1));
            }
        },
    };
    let view = TraceView::new(&trace)?;
    let b = recovery_bound(&view);
    let v = check_recovery(&view);
    println!(
        "τ {}  level at τ {}  t¹ {}  Δpull {}",
        b.tau, b.level, b.t1, b.delta_pull
    );
    println!("r {}  r′ {}  bound {}", b.r, b.r_prime, b.bound);
    match metrics(&view).measured_recovery {
        Some(m) => println!("measured Δrt {m}"),
        None => println!("measured Δrt -"),
    }
    print_verdicts(std::slice::from_ref(&v));
    Ok(exit_for([v.outcome]))
}
