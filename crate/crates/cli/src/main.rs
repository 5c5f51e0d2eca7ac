//! `revshare`: command-line front end for the revenue-sharing game solvers.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use revshare_core::equilibrium::{solve_ese_mamd, MamdOptions};
use revshare_core::experiments::{run_counterexamples, run_sweep, sample_instance, BaseConfig, SweepParam, SweepSpec};
use revshare_core::optimizer::{theoretical_constants, with_power_strong_convexity};
use revshare_core::stability::{min_stable_rho, rule_equilibrium, ScanOptions};
use revshare_core::*;

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_FAILURE: u8 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "revshare",
    version,
    about = "Equilibrium and revenue-sharing solvers for creator/GenAI platforms"
)]
struct Cli {
    /// Size of the worker pool (defaults to the number of CPUs).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Instance JSON (for `sweep`: base configuration JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed used to sample a default instance when no config is given.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for JSON and CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    rho_grid: usize,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Method {
    Foc,
    Mamd,
    Dynamics,
    Btes,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Rule {
    Proportional,
    Wta,
    Btes,
}

impl From<Rule> for RuleKind {
    fn from(r: Rule) -> Self {
        match r {
            Rule::Proportional => RuleKind::Proportional,
            Rule::Wta => RuleKind::Wta,
            Rule::Btes => RuleKind::Btes,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ObjectiveArg {
    PlatformRevenue,
    TotalQuality,
    CreatorWelfare,
    Regularized,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the enforced-sharing equilibrium at one rho.
    SolveEse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rho: f64,
        #[arg(long, value_enum, default_value = "foc")]
        method: Method,
        #[arg(long, default_value_t = 100_000)]
        mamd_steps: usize,
    },
    /// Check whether full sharing is an epsilon-FSE.
    CheckFse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rho: f64,
        #[arg(long, value_enum, default_value = "proportional")]
        rule: Rule,
        /// Candidate qualities, comma separated. Defaults to the rule's equilibrium.
        #[arg(long, value_delimiter = ',')]
        x: Option<Vec<f64>>,
    },
    /// Grid search for the best stable rho.
    OptimizeRho {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        /// Stability tolerance; defaults to epsilon / 4.
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, value_enum, default_value = "platform-revenue")]
        objective: ObjectiveArg,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        /// Refine around the best grid point.
        #[arg(long)]
        refine: bool,
        /// Take delta and eta from the theoretical constants.
        #[arg(long)]
        theoretical: bool,
    },
    /// Smallest stable rho on an inclusive grid.
    MinStableRho {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "proportional")]
        rule: Rule,
        #[arg(long)]
        refine: bool,
    },
    /// One-parameter sweep over random instances.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `param=v1,v2,...`, e.g. `n=5,10,20` or `alpha=2,5,10`.
        #[arg(long, default_value = "n=5,10,20")]
        vary: String,
        #[arg(long, default_value_t = 30)]
        instances: usize,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        /// Full-scale run: n = 5..50 with 150 instances per point.
        #[arg(long)]
        full: bool,
    },
    /// Reproduce the instability of the equal-shares and winner-takes-all rules.
    Counterexamples {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Theoretical accuracy constants of an instance.
    Constants {
        #[command(flatten)]
        common: Common,
    },
}

fn load_instance(common: &Common) -> anyhow::Result<GameInstance> {
    match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(GameInstance::from_json(&text)?)
        }
        None => Ok(sample_instance(&BaseConfig::default(), common.seed)?),
    }
}

fn emit_json(out: Option<&Path>, name: &str, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => return Err(e.into()),
        _ => {}
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), text + "\n")?;
    }
    Ok(())
}

fn csv_target(out: Option<&Path>, name: &str) -> anyhow::Result<Box<dyn io::Write>> {
    Ok(match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Box::new(io::BufWriter::new(fs::File::create(dir.join(name))?))
        }
        None => Box::new(io::sink()),
    })
}

fn parse_vary(text: &str) -> anyhow::Result<(SweepParam, Vec<f64>)> {
    let (name, values) = text.split_once('=').context("expected `param=v1,v2,...`")?;
    let param = SweepParam::parse(name.trim())?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad value `{v}`")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok((param, values))
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::SolveEse {
            common,
            rho,
            method,
            mamd_steps,
        } => {
            let g = load_instance(&common)?;
            let result = match method {
                Method::Foc => solve_ese_foc(&g, rho, &EseOptions::default())?,
                Method::Btes => solve_ese_btes(&g, rho, &EseOptions::default())?,
                Method::Dynamics => solve_ese_dynamics_beta(&g, rho, &DynamicsOptions::default())?,
                Method::Mamd => solve_ese_mamd(
                    &g,
                    rho,
                    &MamdOptions {
                        steps: mamd_steps,
                        ..Default::default()
                    },
                )?,
            };
            emit_json(common.out.as_deref(), "ese.json", &result)?;
            Ok(if result.converged { 0 } else { EXIT_FAILURE })
        }
        Command::CheckFse { common, rho, rule, x } => {
            let g = load_instance(&common)?;
            let kind = RuleKind::from(rule);
            let x = match x {
                Some(x) => x,
                None => rule_equilibrium(&g, kind, rho, &EseOptions::default(), &DynamicsOptions::default())?.x_star,
            };
            let rule = AllocationRule::new(kind, rho)?;
            let report = check_fse(&g, &x, &rule, common.epsilon, &SearchOptions::default())?;
            emit_json(common.out.as_deref(), "fse.json", &report)?;
            Ok(if report.is_fse { 0 } else { EXIT_INFEASIBLE })
        }
        Command::OptimizeRho {
            common,
            delta,
            eta,
            objective,
            lambda,
            refine,
            theoretical,
        } => {
            let mut g = load_instance(&common)?;
            if theoretical {
                g = with_power_strong_convexity(&g)?;
            }
            let config = OptimizerConfig {
                delta,
                eta: eta.unwrap_or(common.epsilon / 4.0),
                epsilon: common.epsilon,
                objective: match objective {
                    ObjectiveArg::PlatformRevenue => Objective::PlatformRevenue,
                    ObjectiveArg::TotalQuality => Objective::TotalQuality,
                    ObjectiveArg::CreatorWelfare => Objective::CreatorWelfare,
                    ObjectiveArg::Regularized => Objective::Regularized { lambda },
                },
                refine,
                use_theoretical_constants: theoretical,
                ..Default::default()
            };
            let result = optimize_rho(&g, &config)?;
            result.write_trace_csv(csv_target(common.out.as_deref(), "optimizer_trace.csv")?)?;
            emit_json(common.out.as_deref(), "optimizer.json", &result)?;
            Ok(if result.feasible { 0 } else { EXIT_INFEASIBLE })
        }
        Command::MinStableRho { common, rule, refine } => {
            let g = load_instance(&common)?;
            let opts = ScanOptions {
                rule: rule.into(),
                refine,
                ..Default::default()
            };
            let scan = min_stable_rho(&g, common.rho_grid, common.epsilon, &opts)?;
            scan.write_csv(csv_target(common.out.as_deref(), "min_stable_rho.csv")?)?;
            let failures = scan.rows.iter().filter(|r| r.error.is_some()).count();
            emit_json(
                common.out.as_deref(),
                "min_stable_rho.json",
                &serde_json::json!({ "min_stable_rho": scan.min_stable_rho, "failed_points": failures }),
            )?;
            Ok(if scan.min_stable_rho.is_some() {
                0
            } else {
                EXIT_INFEASIBLE
            })
        }
        Command::Sweep {
            common,
            vary,
            instances,
            delta,
            bootstrap,
            full,
        } => {
            let mut spec = if full {
                SweepSpec::full_scale(common.seed)
            } else {
                SweepSpec::desk_scale(common.seed)
            };
            if !full {
                let (param, values) = parse_vary(&vary)?;
                spec.vary = param;
                spec.values = values;
                spec.instances_per_point = instances;
            }
            if let Some(path) = &common.config {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                spec.base = serde_json::from_str(&text)?;
            }
            spec.rho_grid = common.rho_grid;
            spec.epsilon = common.epsilon;
            spec.delta = delta;
            spec.bootstrap_resamples = bootstrap;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("sweep-out"));
            let output = run_sweep(&spec)?;
            let paths = output.write_csvs(&out)?;
            let converged = output.records.iter().filter(|r| r.converged).count();
            emit_json(
                None,
                "",
                &serde_json::json!({
                    "instances": output.records.len(),
                    "converged": converged,
                    "files": paths,
                }),
            )?;
            Ok(0)
        }
        Command::Counterexamples { out } => {
            let report = run_counterexamples()?;
            emit_json(out.as_deref(), "counterexamples.json", &report)?;
            for c in &report.checks {
                eprintln!("{} {}", if c.passed { "ok  " } else { "FAIL" }, c.name);
            }
            Ok(if report.all_passed { 0 } else { EXIT_FAILURE })
        }
        Command::Constants { common } => {
            let g = with_power_strong_convexity(&load_instance(&common)?)?;
            let constants = theoretical_constants(&g)?;
            emit_json(common.out.as_deref(), "constants.json", &constants)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(k) = cli.workers {
        if k == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(EXIT_FAILURE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
