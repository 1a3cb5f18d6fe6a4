//! `qurd`: simulate, verify, estimate and map the reservation protocol.
//!
//! Exit status: 0 on success or when the property holds, 1 when it is
//! violated, 2 on usage or validation errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qurd_core::estimate::{estimate, run_cartography, ParameterGrid};
use qurd_core::oracle::{oracle_probability, ratio_to_decimal};
use qurd_core::verify::{check, Coverage, Property};
use qurd_core::{simulate, ActorId, Scenario, SimTime, Trace};

#[derive(Parser)]
#[command(
    name = "qurd",
    version,
    about = "Distributed resource reservation simulator and verifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded simulation and write its trace.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Trace file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a property on one or more trace files.
    Verify {
        #[arg(long, required = true, num_args = 1..)]
        trace: Vec<PathBuf>,
        #[command(flatten)]
        query: QueryArgs,
        /// Scenario the traces came from; fixes the client list.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of a property's probability.
    Estimate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value_t = 1000)]
        runs: u64,
        /// Worker threads; 0 uses every core. Results do not depend on it.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Estimate a property over a parameter grid and write a CSV map.
    Cartography {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value_t = 1000)]
        runs: u64,
        /// `name=v1,v2,...`; repeatable. `deadline` sweeps the deadline.
        #[arg(long = "axis")]
        axes: Vec<String>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact probability by exhaustive branch enumeration (tiny scenarios).
    Oracle {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        query: QueryArgs,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file, or the name of a built-in preset.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<String>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, value_enum)]
    property: PropertyName,
    /// Required for `--property deadline`.
    #[arg(long)]
    deadline: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PropertyName {
    ExclusiveAccess,
    Complete,
    Deadline,
    NoDeadTransitions,
}

enum Failure {
    Usage(String),
    Violated,
}

type Outcome = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn load_scenario(name: &str) -> Result<Scenario, Failure> {
    if Path::new(name).exists() {
        let text = fs::read_to_string(name).map_err(|e| usage(format!("{name}: {e}")))?;
        Scenario::parse(&text).map_err(|e| usage(format!("{name}: {e}")))
    } else {
        Scenario::preset(name)
            .map_err(|_| usage(format!("`{name}` is neither a scenario file nor a preset")))
    }
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<Scenario, Failure> {
        let mut s = load_scenario(&self.scenario)?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(h) = &self.horizon {
            s = s.with_override("horizon", h).map_err(usage)?;
        }
        Ok(s)
    }
}

fn parse_time(flag: &str, v: &str) -> Result<SimTime, Failure> {
    v.parse().map_err(|e| usage(format!("--{flag} `{v}`: {e}")))
}

impl QueryArgs {
    fn resolve(&self) -> Result<Property, Failure> {
        let deadline = self
            .deadline
            .as_deref()
            .map(|d| parse_time("deadline", d))
            .transpose()?;
        Ok(match (self.property, deadline) {
            (PropertyName::ExclusiveAccess, _) => Property::ExclusiveAccess,
            (PropertyName::Complete, None) => Property::AllJobsComplete,
            (PropertyName::Complete, Some(d)) | (PropertyName::Deadline, Some(d)) => {
                Property::DeadlineMet(d)
            }
            (PropertyName::Deadline, None) => {
                return Err(usage("--property deadline needs --deadline"))
            }
            (PropertyName::NoDeadTransitions, _) => Property::NoDeadTransitions,
        })
    }
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn verdict(holds: bool) -> Outcome {
    if holds {
        Ok(())
    } else {
        Err(Failure::Violated)
    }
}

fn per_run(property: Property) -> Result<Property, Failure> {
    if property == Property::NoDeadTransitions {
        Err(usage(
            "no-dead-transitions is checked over traces with `verify`",
        ))
    } else {
        Ok(property)
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate { scenario, out } => {
            let s = scenario.resolve()?;
            emit(out.as_deref(), &simulate(&s, s.seed).to_text())
        }
        Command::Verify {
            trace,
            query,
            scenario,
            out,
        } => {
            let property = query.resolve()?;
            let mut traces = Vec::new();
            for path in &trace {
                let text = fs::read_to_string(path)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?;
                let t =
                    Trace::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                traces.push(t);
            }
            let n_clients = match &scenario {
                Some(name) => load_scenario(name)?.clients.len(),
                None => traces
                    .iter()
                    .flat_map(|t| t.iter())
                    .filter_map(|r| match r.actor {
                        ActorId::Client(c) => Some(c.0 as usize + 1),
                        _ => None,
                    })
                    .max()
                    .unwrap_or(0),
            };
            let mut doc = String::new();
            let mut holds = true;
            if property == Property::NoDeadTransitions {
                let mut coverage = Coverage::new();
                for t in &traces {
                    coverage.add(t);
                }
                let result = coverage.result();
                holds = result.holds;
                doc.push_str(&result.to_document());
            } else {
                for (path, t) in trace.iter().zip(&traces) {
                    let result = check(t, property, n_clients)
                        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
                    holds &= result.holds;
                    doc.push_str(&format!("trace\t{}\n", path.display()));
                    doc.push_str(&result.to_document());
                }
            }
            emit(out.as_deref(), &doc)?;
            verdict(holds)
        }
        Command::Estimate {
            scenario,
            query,
            runs,
            threads,
        } => {
            let s = scenario.resolve()?;
            let property = per_run(query.resolve()?)?;
            if runs == 0 {
                return Err(usage("--runs must be at least 1"));
            }
            let e = estimate(&s, property, runs, threads);
            println!(
                "property={property} p_hat={:.6} ci95=[{:.6},{:.6}] successes={} runs={}",
                e.p_hat, e.ci_low, e.ci_high, e.successes, e.runs
            );
            Ok(())
        }
        Command::Cartography {
            scenario,
            query,
            runs,
            axes,
            threads,
            out,
        } => {
            let s = scenario.resolve()?;
            let property = per_run(query.resolve()?)?;
            let mut parsed = Vec::new();
            for a in &axes {
                let (name, values) = a
                    .split_once('=')
                    .ok_or_else(|| usage(format!("--axis `{a}`: expected name=v1,v2,...")))?;
                let values = values
                    .split(',')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(String::from)
                    .collect();
                parsed.push((name.trim().to_string(), values));
            }
            let grid = ParameterGrid::new(s, parsed, runs, property).map_err(usage)?;
            emit(out.as_deref(), &run_cartography(&grid, threads))
        }
        Command::Oracle { scenario, query } => {
            let s = scenario.resolve()?;
            let property = per_run(query.resolve()?)?;
            let r = oracle_probability(&s, property).map_err(usage)?;
            if r.is_exact() {
                println!(
                    "property={property} probability={} ({}) leaves={}",
                    r.probability,
                    ratio_to_decimal(&r.probability, 6),
                    r.state_count
                );
            } else {
                println!(
                    "property={property} lower={} ({}) upper={} ({}) leaves={}",
                    r.probability,
                    ratio_to_decimal(&r.probability, 6),
                    r.upper,
                    ratio_to_decimal(&r.upper, 6),
                    r.state_count
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violated) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
