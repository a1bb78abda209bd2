use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use l2f::harness::{
    self, build_policy, casestudy, evaluate, gate_failures, gen_data, read_jsonl, read_scenarios, simulate,
    train_on_labels, write_eval_outputs, write_sim_csv, ConfigError, HarnessConfig, HarnessError, LabelRecord,
    EVAL_SCENARIOS, TRAIN_LABELS,
};
use l2f::lstm::Network;
use l2f::policies::PolicyName;

const WEIGHTS_FILE: &str = "weights.json";

#[derive(Parser)]
#[command(name = "l2f", version, about = "Pairwise deconfliction experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Comma separated: random, greedy, learned, milp.
    #[arg(long, global = true, value_delimiter = ',')]
    policy: Vec<String>,
    /// Comma separated tube-radius to separation ratios.
    #[arg(long, global = true, value_delimiter = ',')]
    rho_over_delta: Vec<f64>,
    /// Exit with status 3 when the run misses its acceptance thresholds.
    #[arg(long, global = true)]
    gate: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training scenarios with centralized labels and an evaluation set.
    GenData,
    /// Train the sequence classifier on the generated labels.
    Train,
    /// Run every policy over the evaluation set and the ratio sweep.
    Evaluate,
    /// Dump one scenario before and after deconfliction.
    Simulate {
        /// Seed of an evaluation scenario.
        #[arg(long)]
        scenario: u64,
    },
    /// Four-vehicle reach-avoid study.
    Casestudy,
}

enum Failure {
    Config(String),
    Gate(Vec<String>),
    Run(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => Failure::Config(c.to_string()),
            e => Failure::Run(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load_config(c: &Common) -> Result<HarnessConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(d) = &c.out_dir {
        cfg.out_dir = d.clone();
    }
    if !c.policy.is_empty() {
        cfg.eval.policies = c
            .policy
            .iter()
            .map(|p| PolicyName::parse(p).ok_or_else(|| Failure::Config(format!("unknown policy {p:?}"))))
            .collect::<Result<_, _>>()?;
    }
    if !c.rho_over_delta.is_empty() {
        cfg.eval.rho_over_delta = c.rho_over_delta.clone();
    }
    cfg.validate()?;
    for r in cfg.flagged_ratios() {
        log::warn!("ratio {r} is below 0.5; the tubes cannot hold both vehicles apart");
    }
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::Run(e.to_string()))?;
    fs::write(path, text).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

fn mkdir(p: &Path) -> Result<(), Failure> {
    fs::create_dir_all(p).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))
}

fn weights_path(cfg: &HarnessConfig) -> Option<PathBuf> {
    cfg.eval.weights.clone().or_else(|| Some(cfg.out_dir.join(WEIGHTS_FILE)).filter(|p| p.exists()))
}

fn load_net(cfg: &HarnessConfig, needed: bool) -> Result<Option<Network>, Failure> {
    if !needed {
        return Ok(None);
    }
    match weights_path(cfg) {
        Some(p) => Ok(Some(Network::load(&p).map_err(HarnessError::from)?)),
        None => Err(HarnessError::MissingWeights.into()),
    }
}

fn eval_set(cfg: &HarnessConfig) -> Result<Vec<l2f::trajectory::ConflictScenario>, Failure> {
    let p = cfg.out_dir.join(EVAL_SCENARIOS);
    if p.exists() {
        Ok(read_scenarios(&p)?)
    } else {
        log::info!("{} not found, generating the evaluation set", p.display());
        Ok(harness::generate_scenarios(cfg, cfg.seed + cfg.data.eval_seed_offset, cfg.data.eval_count)?)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.common)?;
    mkdir(&cfg.out_dir)?;
    match cli.command {
        Command::GenData => {
            let r = gen_data(&cfg, &cfg.out_dir)?;
            println!(
                "labeled {}/{} training scenarios ({} infeasible, {} over budget); {} evaluation scenarios",
                r.train.labeled, r.train.scenarios, r.train.infeasible, r.train.budget_exhausted, r.eval_scenarios
            );
        }
        Command::Train => {
            let labels: Vec<LabelRecord> = read_jsonl(&cfg.out_dir.join(TRAIN_LABELS))?;
            let (net, report) = train_on_labels(&labels, &cfg.train, cfg.scenario.delta)?;
            let wp = cfg.out_dir.join(WEIGHTS_FILE);
            net.save(&wp).map_err(HarnessError::from)?;
            write_json(&cfg.out_dir.join("train_report.json"), &report)?;
            println!(
                "trained on {} sequences; final loss {:.4}; weights in {}",
                report.train_examples,
                report.epoch_loss.last().copied().unwrap_or(f64::NAN),
                wp.display()
            );
        }
        Command::Evaluate => {
            let scenarios = eval_set(&cfg)?;
            let net = load_net(&cfg, cfg.eval.policies.contains(&PolicyName::Learned))?;
            let out = evaluate(&cfg, &scenarios, net.as_ref())?;
            write_eval_outputs(&cfg.out_dir, &out)?;
            for r in &out.report.rates {
                println!(
                    "{:8} {:5}  {:.3}  ({}/{}, {} excluded)",
                    r.policy.as_str(),
                    r.rho_over_delta,
                    r.separation_rate,
                    r.resolved,
                    r.evaluated,
                    r.excluded_infeasible
                );
            }
            if cli.common.gate {
                let f = gate_failures(&out.report);
                if !f.is_empty() {
                    return Err(Failure::Gate(f));
                }
            }
        }
        Command::Simulate { scenario } => {
            let scenarios = eval_set(&cfg)?;
            let base = scenarios
                .iter()
                .find(|s| s.seed == scenario)
                .ok_or(HarnessError::UnknownScenario(scenario))?;
            let s = match cfg.eval.rho_over_delta.first() {
                Some(&r) if !cli.common.rho_over_delta.is_empty() => base.with_rho(r * base.delta),
                _ => base.clone(),
            };
            let name = if cli.common.policy.is_empty() { PolicyName::Greedy } else { cfg.eval.policies[0] };
            let net = load_net(&cfg, name == PolicyName::Learned)?;
            let policy = build_policy(name, &cfg, net.as_ref())?;
            let (status, rows) = simulate(&s, &policy, &cfg.model(), cfg.eval.first_mover)?;
            let p = cfg.out_dir.join(format!("simulate_{scenario}.csv"));
            write_sim_csv(&p, &rows)?;
            println!("{}: {} steps, status {}", p.display(), rows.len(), status.name());
        }
        Command::Casestudy => {
            let name = if cli.common.policy.is_empty() { cfg.casestudy.policy } else { cfg.eval.policies[0] };
            let net = load_net(&cfg, name == PolicyName::Learned)?;
            let policy = build_policy(name, &cfg, net.as_ref())?;
            let r = casestudy(&cfg, &policy)?;
            write_json(&cfg.out_dir.join("casestudy.json"), &r)?;
            println!(
                "{} runs, {} planned, {} resolved, {} satisfy the joint mission; speedup {:.2}",
                r.runs.len(),
                r.planned_runs,
                r.resolved_runs,
                r.mission_satisfied,
                r.speedup
            );
            if cli.common.gate {
                let mut f = Vec::new();
                if r.mission_satisfied != r.resolved_runs {
                    f.push(format!("{} resolved runs miss the joint mission", r.resolved_runs - r.mission_satisfied));
                }
                if r.speedup < 1.5 {
                    f.push(format!("planning speedup {:.2} below 1.5", r.speedup));
                }
                if !f.is_empty() {
                    return Err(Failure::Gate(f));
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Gate(fs)) => {
            for f in fs {
                eprintln!("gate: {f}");
            }
            ExitCode::from(3)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
