// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use pronet::bf::{aggregation_residual, bf_aggregate, BandwidthFunction};
use pronet::harness::{self, figures, RunSummary};
use pronet::scenario::{parse_assignment, Scenario};

#[derive(Parser)]
#[command(name = "pronet", version, about = "Tenant-level bandwidth allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and check its expectations.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a scenario field, e.g. `pronet.alpha=0.0`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the bundled scenarios of one figure.
    Reproduce {
        #[arg(value_name = "FIGURE")]
        figure: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Scenarios to run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Bandwidth-function utilities.
    Bf {
        #[command(subcommand)]
        command: BfCommand,
    },
}

#[derive(Subcommand)]
enum BfCommand {
    /// Split a tenant BF over flow BFs and report the residual.
    Aggregate {
        tenant: PathBuf,
        #[arg(required = true)]
        flows: Vec<PathBuf>,
        /// Directory for the aggregated BFs (`agg_<i>.json`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Bandwidth at a fair share.
    Eval { bf: PathBuf, share: f64 },
    /// Smallest fair share reaching a bandwidth.
    Inverse { bf: PathBuf, bandwidth: f64 },
}

fn read_bf(path: &Path) -> Result<BandwidthFunction> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: malformed bandwidth function", path.display()))
}

/// Output errors (a closed pipe) are ignored.
fn print_summary(s: &RunSummary) {
    let _ = write_summary(&mut io::stdout().lock(), s);
}

fn write_summary(w: &mut impl Write, s: &RunSummary) -> io::Result<()> {
    for c in &s.checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        match (&c.value, &c.error) {
            (Some(v), _) => writeln!(w, "{status} {}  (measured {v:.4})", c.expectation)?,
            (None, Some(e)) => writeln!(w, "{status} {}  ({e})", c.expectation)?,
            (None, None) => writeln!(w, "{status} {}", c.expectation)?,
        }
    }
    let m = &s.measurements;
    for (id, r) in &m.tenant_ratios {
        writeln!(w, "tenant {id}: ratio {r:.3}")?;
    }
    if let (Some(link), Some(u)) = (&m.bottleneck, m.bottleneck_utilization) {
        writeln!(w, "bottleneck {link}: utilization {u:.3}")?;
    }
    if let Some(t) = m.convergence_time {
        writeln!(w, "convergence: {t:.3} s")?;
    }
    Ok(())
}

fn run_one(scenario: &Scenario, out: &Path) -> Result<RunSummary> {
    info!("running {} into {}", scenario.name, out.display());
    let (summary, _) = harness::execute(scenario, Some(out))?;
    Ok(summary)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PRONET_LOG", "warn")).init();
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            out,
            seed,
            set,
        } => {
            let mut overrides = set
                .iter()
                .map(|s| parse_assignment(s))
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(seed) = seed {
                overrides.push(("seed".into(), seed.to_string()));
            }
            let scenario = Scenario::load(&scenario, &overrides)?;
            let summary = run_one(&scenario, &out)?;
            print_summary(&summary);
            Ok(summary.pass)
        }
        Command::Reproduce {
            figure,
            out,
            seed,
            jobs,
        } => {
            let mut scenarios = figures::scenarios(&figure)?;
            if let Some(seed) = seed {
                for s in &mut scenarios {
                    s.seed = seed;
                }
            }
            let results: Mutex<Vec<Option<Result<RunSummary>>>> =
                Mutex::new((0..scenarios.len()).map(|_| None).collect());
            let next = Mutex::new(0usize);
            std::thread::scope(|scope| {
                for _ in 0..jobs.max(1) {
                    scope.spawn(|| loop {
                        let i = {
                            let mut n = next.lock().unwrap();
                            let i = *n;
                            *n += 1;
                            i
                        };
                        let Some(s) = scenarios.get(i) else { break };
                        let r = run_one(s, &out.join(&s.name));
                        results.lock().unwrap()[i] = Some(r);
                    });
                }
            });
            let mut pass = true;
            for (s, r) in scenarios.iter().zip(results.into_inner().unwrap()) {
                let _ = writeln!(io::stdout(), "== {}", s.name);
                let summary = r.expect("every scenario ran")?;
                print_summary(&summary);
                pass &= summary.pass;
            }
            Ok(pass)
        }
        Command::Bf { command } => {
            match command {
                BfCommand::Aggregate {
                    tenant,
                    flows,
                    out,
                    samples,
                } => {
                    let tenant_bf = read_bf(&tenant)?;
                    let flow_bfs = flows.iter().map(|p| read_bf(p)).collect::<Result<Vec<_>>>()?;
                    let agg = bf_aggregate(&flow_bfs, &tenant_bf)?;
                    match out {
                        Some(dir) => {
                            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                            for (i, bf) in agg.iter().enumerate() {
                                let path = dir.join(format!("agg_{i}.json"));
                                fs::write(&path, serde_json::to_string_pretty(bf)? + "\n")
                                    .with_context(|| format!("writing {}", path.display()))?;
                            }
                        }
                        None => {
                            for bf in &agg {
                                println!("{}", serde_json::to_string(bf)?);
                            }
                        }
                    }
                    println!("residual {:e}", aggregation_residual(&agg, &tenant_bf, samples));
                }
                BfCommand::Eval { bf, share } => {
                    if !(share >= 0.0) {
                        bail!("share must be non-negative");
                    }
                    println!("{}", read_bf(&bf)?.eval(share));
                }
                BfCommand::Inverse { bf, bandwidth } => {
                    println!("{}", read_bf(&bf)?.inverse(bandwidth)?);
                }
            }
            Ok(true)
        }
    }
}
