//! Experiment harness: dataset generation, policy evaluation over a tube
//! radius sweep, per-scenario dumps and the four-vehicle case study.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campc::{l2f_with, CampcError, EventLogRow, FirstMover, L2fOutcome, L2fStatus};
use crate::conflict::{detect, separation_profile, separation_satisfied, DecisionSequence};
use crate::dynamics::{LinearModel, ModelParams, VehicleState};
use crate::lstm::{self, Example, Network, TrainConfig, TrainReport};
use crate::milp::{solve_milp, MilpBudget, MilpStatus};
use crate::planner::{plan, PlanError, PlannerSettings, PlanningProblem};
use crate::policies::{Policy, PolicyError, PolicyName, DEFAULT_PRESET};
use crate::stl::{robustness, robustness_joint, BoxRegion, Polarity, RobustnessTube, StlFormula};
use crate::trajectory::{generate_conflict_pair, ConflictScenario, ScenarioConfig, Trajectory, TrajectoryError};

/// Tolerance for tube membership checks on solver output.
pub const TUBE_CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed record in {path} line {line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
    #[error("the learned policy needs a weights file")]
    MissingWeights,
    #[error("weights: {0}")]
    Weights(#[from] lstm::WeightsError),
    #[error("training: {0}")]
    Train(#[from] lstm::TrainError),
    #[error("no scenario with seed {0}")]
    UnknownScenario(u64),
    #[error("vehicle {vehicle} could not be planned: {source}")]
    PlanFailed { vehicle: usize, source: PlanError },
    #[error(transparent)]
    Scenario(#[from] TrajectoryError),
    #[error(transparent)]
    Stl(#[from] crate::stl::StlError),
    #[error(transparent)]
    Campc(#[from] CampcError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_count: usize,
    pub eval_count: usize,
    /// Evaluation seeds start here so the two sets never share a scenario.
    pub eval_seed_offset: u64,
    pub label_budget: MilpBudget,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { train_count: 1500, eval_count: 300, eval_seed_offset: 1_000_000, label_budget: MilpBudget::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub rho_over_delta: Vec<f64>,
    pub policies: Vec<PolicyName>,
    pub random_seed: u64,
    pub greedy_preset: u8,
    pub milp_budget: MilpBudget,
    pub weights: Option<PathBuf>,
    pub first_mover: FirstMover,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            rho_over_delta: vec![0.5, 0.75, 0.95, 1.15],
            policies: PolicyName::ALL.to_vec(),
            random_seed: 0,
            greedy_preset: DEFAULT_PRESET,
            milp_budget: MilpBudget::default(),
            weights: None,
            first_mover: FirstMover::VehicleA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseStudyConfig {
    pub runs: usize,
    pub waypoints: usize,
    pub restarts: usize,
    pub iterations: usize,
    pub delta: f64,
    pub horizon: f64,
    pub policy: PolicyName,
    /// Half-width of the uniform jitter applied to start positions.
    pub start_jitter: f64,
    /// All vehicles start at one point and share one goal.
    pub degenerate: bool,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        Self {
            runs: 100,
            waypoints: 5,
            restarts: 8,
            iterations: 50,
            delta: 0.1,
            horizon: 4.0,
            policy: PolicyName::Greedy,
            start_jitter: 0.1,
            degenerate: false,
        }
    }
}

/// The single declarative configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: ModelParams,
    pub scenario: ScenarioConfig,
    pub data: DataConfig,
    pub eval: EvalSettings,
    pub train: TrainConfig,
    pub casestudy: CaseStudyConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            model: ModelParams::default(),
            scenario: ScenarioConfig::default(),
            data: DataConfig::default(),
            eval: EvalSettings::default(),
            train: TrainConfig::default(),
            casestudy: CaseStudyConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let m = &self.model;
        if !(m.dt > 0.0 && m.v_max > 0.0 && m.a_max > 0.0) {
            return bad("model dt, v_max and a_max must be positive".into());
        }
        let s = &self.scenario;
        if !(s.delta > 0.0 && s.rho >= 0.0 && s.horizon >= 2.0 * s.dt && s.cube_half_width >= 0.0) {
            return bad("scenario needs delta > 0, rho >= 0, horizon >= 2 dt".into());
        }
        if (s.dt - m.dt).abs() > 1e-12 {
            return bad(format!("scenario dt {} differs from model dt {}", s.dt, m.dt));
        }
        if self.data.eval_count == 0 {
            return bad("data.eval_count must be at least 1".into());
        }
        if self.eval.rho_over_delta.is_empty() || self.eval.rho_over_delta.iter().any(|r| !(*r >= 0.0)) {
            return bad("eval.rho_over_delta must be a nonempty list of nonnegative ratios".into());
        }
        if !(1..=6).contains(&self.eval.greedy_preset) {
            return bad(format!("eval.greedy_preset {} is outside 1..=6", self.eval.greedy_preset));
        }
        for b in [&self.eval.milp_budget, &self.data.label_budget] {
            if b.max_nodes == 0 || !(b.max_seconds > 0.0) {
                return bad("MILP budgets need positive node and time limits".into());
            }
        }
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let c = &self.casestudy;
        if c.waypoints < 2 || c.restarts == 0 || !(c.delta > 0.0) || !(c.horizon > 0.0) {
            return bad("casestudy needs waypoints >= 2, restarts >= 1, positive delta and horizon".into());
        }
        Ok(())
    }

    /// Ratios below one half, where the tubes cannot fit both vehicles.
    pub fn flagged_ratios(&self) -> Vec<f64> {
        self.eval.rho_over_delta.iter().copied().filter(|r| *r < 0.5).collect()
    }

    pub fn model(&self) -> LinearModel {
        LinearModel::from_params(&self.model)
    }
}

// ---------------------------------------------------------------- datasets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub seed: u64,
    pub dt: f64,
    pub delta: f64,
    pub rho: f64,
    pub traj_a: Vec<f64>,
    pub traj_b: Vec<f64>,
}

impl ScenarioRecord {
    pub fn from_scenario(s: &ConflictScenario) -> Self {
        Self {
            seed: s.seed,
            dt: s.traj_a.dt,
            delta: s.delta,
            rho: s.tube_a.radius,
            traj_a: s.traj_a.flatten(),
            traj_b: s.traj_b.flatten(),
        }
    }

    pub fn to_scenario(&self) -> Option<ConflictScenario> {
        let a = Trajectory::from_flat(&self.traj_a, self.dt)?;
        let b = Trajectory::from_flat(&self.traj_b, self.dt)?;
        if a.len() != b.len() {
            return None;
        }
        Some(ConflictScenario {
            tube_a: RobustnessTube::new(a.positions(), self.rho),
            tube_b: RobustnessTube::new(b.positions(), self.rho),
            traj_a: a,
            traj_b: b,
            delta: self.delta,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub seed: u64,
    /// Flattened vehicle-1-minus-vehicle-2 positions, three per step.
    pub z: Vec<f64>,
    pub decisions: DecisionSequence,
}

impl LabelRecord {
    pub fn example(&self) -> Example {
        Example {
            z: self.z.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect(),
            labels: self.decisions.0.clone(),
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), HarnessError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| HarnessError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_scenarios(path: &Path) -> Result<Vec<ConflictScenario>, HarnessError> {
    let recs: Vec<ScenarioRecord> = read_jsonl(path)?;
    recs.iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_scenario().ok_or_else(|| HarnessError::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message: "trajectory arrays are inconsistent".into(),
            })
        })
        .collect()
}

pub fn generate_scenarios(cfg: &HarnessConfig, first_seed: u64, count: usize) -> Result<Vec<ConflictScenario>, HarnessError> {
    let model = cfg.model();
    (0..count as u64)
        .map(|i| Ok(generate_conflict_pair(first_seed + i, &cfg.scenario, &model)?))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub scenarios: usize,
    pub labeled: usize,
    pub infeasible: usize,
    pub budget_exhausted: usize,
}

/// Centralized labels for every scenario the MILP solves.
pub fn label_scenarios(
    scenarios: &[ConflictScenario],
    model: &LinearModel,
    budget: &MilpBudget,
) -> (Vec<LabelRecord>, LabelSummary) {
    let mut summary = LabelSummary { scenarios: scenarios.len(), ..Default::default() };
    let mut out = Vec::new();
    for s in scenarios {
        let r = match solve_milp(s, model, budget) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("seed {}: {e}", s.seed);
                summary.infeasible += 1;
                continue;
            }
        };
        match (r.status, r.decisions) {
            (MilpStatus::Feasible, Some(d)) => {
                summary.labeled += 1;
                out.push(LabelRecord {
                    seed: s.seed,
                    z: s.differences().iter().flat_map(|v| [v.x, v.y, v.z]).collect(),
                    decisions: d,
                });
            }
            (MilpStatus::BudgetExhausted, _) => summary.budget_exhausted += 1,
            _ => summary.infeasible += 1,
        }
    }
    (out, summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDataReport {
    pub seed: u64,
    pub train: LabelSummary,
    pub eval_scenarios: usize,
    pub steps: usize,
    pub files: Vec<PathBuf>,
}

pub const TRAIN_SCENARIOS: &str = "train_scenarios.jsonl";
pub const TRAIN_LABELS: &str = "train_labels.jsonl";
pub const EVAL_SCENARIOS: &str = "eval_scenarios.jsonl";

/// Training scenarios with MILP labels, plus a disjoint evaluation set.
pub fn gen_data(cfg: &HarnessConfig, out_dir: &Path) -> Result<GenDataReport, HarnessError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let model = cfg.model();
    let train = generate_scenarios(cfg, cfg.seed, cfg.data.train_count)?;
    let eval = generate_scenarios(cfg, cfg.seed + cfg.data.eval_seed_offset, cfg.data.eval_count)?;
    let (labels, summary) = label_scenarios(&train, &model, &cfg.data.label_budget);
    let files = vec![out_dir.join(TRAIN_SCENARIOS), out_dir.join(TRAIN_LABELS), out_dir.join(EVAL_SCENARIOS)];
    let recs = |v: &[ConflictScenario]| v.iter().map(ScenarioRecord::from_scenario).collect::<Vec<_>>();
    write_jsonl(&files[0], &recs(&train))?;
    write_jsonl(&files[1], &labels)?;
    write_jsonl(&files[2], &recs(&eval))?;
    let report = GenDataReport {
        seed: cfg.seed,
        train: summary,
        eval_scenarios: eval.len(),
        steps: cfg.scenario.steps(),
        files,
    };
    let p = out_dir.join("gen_data.json");
    fs::write(&p, serde_json::to_string_pretty(&report)?).map_err(io_err(&p))?;
    Ok(report)
}

pub fn train_on_labels(labels: &[LabelRecord], cfg: &TrainConfig, delta: f64) -> Result<(Network, TrainReport), HarnessError> {
    let ex: Vec<Example> = labels.iter().map(LabelRecord::example).collect();
    Ok(lstm::train(&ex, cfg, delta)?)
}

// -------------------------------------------------------------- evaluation

pub fn build_policy(name: PolicyName, cfg: &HarnessConfig, net: Option<&Network>) -> Result<Policy, HarnessError> {
    Ok(match name {
        PolicyName::Random => Policy::Random { seed: cfg.eval.random_seed },
        PolicyName::Greedy => Policy::Greedy { preset: cfg.eval.greedy_preset },
        PolicyName::Milp => Policy::MilpOracle { budget: cfg.eval.milp_budget.clone() },
        PolicyName::Learned => match net {
            Some(n) => Policy::Learned(Box::new(n.clone())),
            None => match &cfg.eval.weights {
                Some(p) => Policy::Learned(Box::new(Network::load(p)?)),
                None => return Err(HarnessError::MissingWeights),
            },
        },
    })
}

/// Separation-rate row; everything here is deterministic for fixed seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub policy: PolicyName,
    pub rho_over_delta: f64,
    pub scenarios: usize,
    /// Scenarios the policy produced decisions for.
    pub evaluated: usize,
    pub resolved: usize,
    pub separation_rate: f64,
    pub done_uas1: usize,
    pub done_uas2: usize,
    /// Slack left in both stages but the pair still ended up separated.
    pub done_both_recheck: usize,
    pub fail: usize,
    /// Centralized program proved no solution exists.
    pub excluded_infeasible: usize,
    /// Centralized program ran out of budget; counted as unresolved.
    pub budget_exhausted: usize,
    /// Zero-slack outcomes that were not separated or left a tube.
    pub zero_slack_violations: usize,
    /// Second-stage nonzero slack at a step with well separated tubes that
    /// coincided with a separation violation.
    pub slack_step_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub policy: PolicyName,
    pub rho_over_delta: f64,
    pub events: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub delta: f64,
    pub rates: Vec<RateRow>,
    pub timings: Vec<TimingRow>,
    pub flagged_ratios: Vec<f64>,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn rate(&self, policy: PolicyName, ratio: f64) -> Option<&RateRow> {
        self.rates.iter().find(|r| r.policy == policy && (r.rho_over_delta - ratio).abs() < 1e-12)
    }

    pub fn timing(&self, policy: PolicyName) -> Option<(f64, usize)> {
        let rows: Vec<&TimingRow> = self.timings.iter().filter(|t| t.policy == policy).collect();
        let n: usize = rows.iter().map(|t| t.events).sum();
        if n == 0 {
            return None;
        }
        Some((rows.iter().map(|t| t.mean_ms * t.events as f64).sum::<f64>() / n as f64, n))
    }
}

/// Result of one policy on one scenario.
#[derive(Debug, Clone)]
pub struct EventResult {
    pub decisions: Option<DecisionSequence>,
    pub outcome: Option<L2fOutcome>,
    pub milp_status: Option<MilpStatus>,
    pub seconds: f64,
}

pub fn run_event(policy: &Policy, scenario: &ConflictScenario, model: &LinearModel, first: FirstMover) -> Result<EventResult, HarnessError> {
    let start = Instant::now();
    let (decisions, milp_status) = match policy {
        Policy::MilpOracle { budget } => {
            let r = solve_milp(scenario, model, budget).map_err(PolicyError::from)?;
            (r.decisions.clone(), Some(r.status))
        }
        p => (Some(p.resolve(scenario, model)?), None),
    };
    let outcome = match &decisions {
        Some(d) => Some(l2f_with(scenario, d, model, first)?),
        None => None,
    };
    Ok(EventResult { decisions, outcome, milp_status, seconds: start.elapsed().as_secs_f64() })
}

fn zero_slack_ok(s: &ConflictScenario, o: &L2fOutcome) -> bool {
    separation_satisfied(&o.traj_a, &o.traj_b, s.delta).unwrap_or(false)
        && s.tube_a.contains(&o.traj_a, TUBE_CHECK_TOL)
        && s.tube_b.contains(&o.traj_b, TUBE_CHECK_TOL)
}

/// Steps where the tubes alone guarantee separation must stay separated
/// even when the second stage left slack there.
fn slack_step_violations(s: &ConflictScenario, o: &L2fOutcome) -> usize {
    let Some(slacks) = &o.stage2_slacks else { return 0 };
    let far = s.delta + s.tube_a.radius + s.tube_b.radius;
    let sep = separation_profile(&o.traj_a, &o.traj_b).expect("equal lengths");
    slacks
        .iter()
        .enumerate()
        .filter(|&(k, &l)| {
            l > 1e-9 && (s.tube_a.centerline[k] - s.tube_b.centerline[k]).amax() >= far && sep[k] < s.delta
        })
        .count()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

pub struct EvalOutput {
    pub report: EvalReport,
    /// Per (policy, ratio) event logs.
    pub events: BTreeMap<(PolicyName, String), Vec<EventLogRow>>,
}

/// Run every policy on every scenario at every tube ratio.
pub fn evaluate(cfg: &HarnessConfig, scenarios: &[ConflictScenario], net: Option<&Network>) -> Result<EvalOutput, HarnessError> {
    let model = cfg.model();
    let mut rates = Vec::new();
    let mut timings = Vec::new();
    let mut events = BTreeMap::new();
    let policies: Vec<Policy> = cfg.eval.policies.iter().map(|&p| build_policy(p, cfg, net)).collect::<Result<_, _>>()?;
    for policy in &policies {
        for &ratio in &cfg.eval.rho_over_delta {
            let mut row = RateRow {
                policy: policy.name(),
                rho_over_delta: ratio,
                scenarios: scenarios.len(),
                evaluated: 0,
                resolved: 0,
                separation_rate: 0.0,
                done_uas1: 0,
                done_uas2: 0,
                done_both_recheck: 0,
                fail: 0,
                excluded_infeasible: 0,
                budget_exhausted: 0,
                zero_slack_violations: 0,
                slack_step_violations: 0,
            };
            let mut times = Vec::new();
            let mut log_rows = Vec::new();
            for base in scenarios {
                let s = base.with_rho(ratio * base.delta);
                let ev = run_event(policy, &s, &model, cfg.eval.first_mover)?;
                times.push(ev.seconds * 1e3);
                match ev.milp_status {
                    Some(MilpStatus::Infeasible) => {
                        row.excluded_infeasible += 1;
                        continue;
                    }
                    Some(MilpStatus::BudgetExhausted) => {
                        row.budget_exhausted += 1;
                        row.evaluated += 1;
                        continue;
                    }
                    _ => {}
                }
                let o = ev.outcome.expect("decisions were produced");
                row.evaluated += 1;
                match o.status {
                    L2fStatus::DoneUas1 => row.done_uas1 += 1,
                    L2fStatus::DoneUas2 => row.done_uas2 += 1,
                    L2fStatus::DoneBothRecheck => row.done_both_recheck += 1,
                    L2fStatus::Fail => row.fail += 1,
                }
                if matches!(o.status, L2fStatus::DoneUas1 | L2fStatus::DoneUas2) && !zero_slack_ok(&s, &o) {
                    row.zero_slack_violations += 1;
                }
                row.slack_step_violations += slack_step_violations(&s, &o);
                if separation_satisfied(&o.traj_a, &o.traj_b, s.delta).expect("equal lengths") {
                    row.resolved += 1;
                }
                log_rows.push(EventLogRow::new(&s, &o));
            }
            row.separation_rate = if row.evaluated == 0 { 0.0 } else { row.resolved as f64 / row.evaluated as f64 };
            let (mean_ms, std_ms) = mean_std(&times);
            timings.push(TimingRow { policy: policy.name(), rho_over_delta: ratio, events: times.len(), mean_ms, std_ms });
            log::info!("{} at {ratio}: {:.3} ({}/{})", policy.name().as_str(), row.separation_rate, row.resolved, row.evaluated);
            events.insert((policy.name(), format!("{ratio}")), log_rows);
            rates.push(row);
        }
    }
    let mut notes = vec!["deviation objective of the centralized program is a declared choice; only its separation rate is comparable".to_string()];
    let flagged = cfg.flagged_ratios();
    if !flagged.is_empty() {
        notes.push(format!("ratios {flagged:?} are below 0.5, where the tubes cannot fit both vehicles"));
    }
    Ok(EvalOutput {
        report: EvalReport { seed: cfg.seed, delta: cfg.scenario.delta, rates, timings, flagged_ratios: flagged, notes },
        events,
    })
}

/// Published rates for the two fixed policies at ratios 0.5, 0.95, 1.15.
pub const RANDOM_ANCHORS: [(f64, f64); 3] = [(0.5, 0.311), (0.95, 0.609), (1.15, 0.661)];
pub const GREEDY_ANCHORS: [(f64, f64); 3] = [(0.5, 0.529), (0.95, 0.836), (1.15, 0.994)];
pub const ANCHOR_TOL: f64 = 0.15;
pub const ORDER_MARGIN: f64 = 0.05;
pub const MONOTONE_SLACK: f64 = 0.02;

/// Every broken ordering, anchor or monotonicity threshold in a report.
/// Policies or ratios missing from the report are skipped.
pub fn gate_failures(report: &EvalReport) -> Vec<String> {
    use PolicyName::*;
    let mut out = Vec::new();
    let rate = |p, r| report.rate(p, r).map(|x| x.separation_rate);
    for row in report.rates.iter().filter(|x| x.evaluated == 0) {
        out.push(format!("{} at {} evaluated no scenario", row.policy.as_str(), row.rho_over_delta));
    }
    for &r in &[0.5, 0.95, 1.15] {
        if let Some(m) = rate(Milp, r) {
            if m < 1.0 {
                out.push(format!("milp rate {m:.3} below 1 at {r}"));
            }
            if let Some(l) = rate(Learned, r) {
                if m < l {
                    out.push(format!("milp {m:.3} below learned {l:.3} at {r}"));
                }
            }
        }
        if let (Some(l), Some(g)) = (rate(Learned, r), rate(Greedy, r)) {
            let need = if r > 1.0 { 0.0 } else { ORDER_MARGIN };
            if l - g < need {
                out.push(format!("learned {l:.3} not {need} above greedy {g:.3} at {r}"));
            }
        }
        if let (Some(g), Some(x)) = (rate(Greedy, r), rate(Random, r)) {
            if g - x < ORDER_MARGIN {
                out.push(format!("greedy {g:.3} not {ORDER_MARGIN} above random {x:.3} at {r}"));
            }
        }
    }
    for (p, anchors) in [(Random, RANDOM_ANCHORS), (Greedy, GREEDY_ANCHORS)] {
        for (r, a) in anchors {
            if let Some(x) = rate(p, r) {
                if (x - a).abs() > ANCHOR_TOL {
                    out.push(format!("{} rate {x:.3} at {r} is more than {ANCHOR_TOL} from {a}", p.as_str()));
                }
            }
        }
    }
    for p in PolicyName::ALL {
        let mut rows: Vec<&RateRow> = report.rates.iter().filter(|x| x.policy == p).collect();
        rows.sort_by(|a, b| a.rho_over_delta.total_cmp(&b.rho_over_delta));
        for w in rows.windows(2) {
            if w[1].separation_rate + MONOTONE_SLACK < w[0].separation_rate {
                out.push(format!(
                    "{} rate drops from {:.3} at {} to {:.3} at {}",
                    p.as_str(),
                    w[0].separation_rate,
                    w[0].rho_over_delta,
                    w[1].separation_rate,
                    w[1].rho_over_delta
                ));
            }
        }
    }
    out
}

pub fn write_rates_csv(path: &Path, rows: &[RateRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_eval_outputs(out_dir: &Path, out: &EvalOutput) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut files = vec![out_dir.join("eval_report.json"), out_dir.join("rates.csv"), out_dir.join("timings.csv")];
    fs::write(&files[0], serde_json::to_string_pretty(&out.report)?).map_err(io_err(&files[0]))?;
    write_rates_csv(&files[1], &out.report.rates)?;
    let mut w = csv::Writer::from_path(&files[2])?;
    for t in &out.report.timings {
        w.serialize(t)?;
    }
    w.flush().map_err(io_err(&files[2]))?;
    for ((p, ratio), rows) in &out.events {
        let path = out_dir.join(format!("events_{}_{}.csv", p.as_str(), ratio));
        crate::campc::write_event_log(&path, rows)?;
        files.push(path);
    }
    Ok(files)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub k: usize,
    pub t: f64,
    pub p1x: f64,
    pub p1y: f64,
    pub p1z: f64,
    pub p2x: f64,
    pub p2y: f64,
    pub p2z: f64,
    pub sep_inf: f64,
    pub tube1_lo_x: f64,
    pub tube1_lo_y: f64,
    pub tube1_lo_z: f64,
    pub tube1_hi_x: f64,
    pub tube1_hi_y: f64,
    pub tube1_hi_z: f64,
    pub tube2_lo_x: f64,
    pub tube2_lo_y: f64,
    pub tube2_lo_z: f64,
    pub tube2_hi_x: f64,
    pub tube2_hi_y: f64,
    pub tube2_hi_z: f64,
    pub orig_p1x: f64,
    pub orig_p1y: f64,
    pub orig_p1z: f64,
    pub orig_p2x: f64,
    pub orig_p2y: f64,
    pub orig_p2z: f64,
    pub orig_sep_inf: f64,
    pub decision: u8,
    pub status: String,
}

/// Before/after dump of one scenario for plotting.
pub fn simulate(scenario: &ConflictScenario, policy: &Policy, model: &LinearModel, first: FirstMover) -> Result<(L2fStatus, Vec<SimRow>), HarnessError> {
    let ev = run_event(policy, scenario, model, first)?;
    let Some(d) = ev.decisions else {
        return Err(PolicyError::OracleInfeasible(scenario.seed).into());
    };
    let o = ev.outcome.expect("decisions were produced");
    let after = separation_profile(&o.traj_a, &o.traj_b).expect("equal lengths");
    let before = separation_profile(&scenario.traj_a, &scenario.traj_b).expect("equal lengths");
    let rows = (0..o.traj_a.len())
        .map(|k| {
            let (p1, p2) = (o.traj_a.position(k), o.traj_b.position(k));
            let (q1, q2) = (scenario.traj_a.position(k), scenario.traj_b.position(k));
            let (l1, h1) = scenario.tube_a.bounds(k);
            let (l2, h2) = scenario.tube_b.bounds(k);
            SimRow {
                k,
                t: k as f64 * o.traj_a.dt,
                p1x: p1.x,
                p1y: p1.y,
                p1z: p1.z,
                p2x: p2.x,
                p2y: p2.y,
                p2z: p2.z,
                sep_inf: after[k],
                tube1_lo_x: l1.x,
                tube1_lo_y: l1.y,
                tube1_lo_z: l1.z,
                tube1_hi_x: h1.x,
                tube1_hi_y: h1.y,
                tube1_hi_z: h1.z,
                tube2_lo_x: l2.x,
                tube2_lo_y: l2.y,
                tube2_lo_z: l2.z,
                tube2_hi_x: h2.x,
                tube2_hi_y: h2.y,
                tube2_hi_z: h2.z,
                orig_p1x: q1.x,
                orig_p1y: q1.y,
                orig_p1z: q1.z,
                orig_p2x: q2.x,
                orig_p2y: q2.y,
                orig_p2z: q2.z,
                orig_sep_inf: before[k],
                decision: d.0[k],
                status: o.status.name().to_string(),
            }
        })
        .collect();
    Ok((o.status, rows))
}

pub fn write_sim_csv(path: &Path, rows: &[SimRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

// -------------------------------------------------------------- case study

/// Reach-avoid layout: four vehicles on one side of a wall, goals mirrored
/// across the centerline on the other side so their paths cross.
pub struct CaseLayout {
    pub starts: Vec<Vector3<f64>>,
    pub goals: Vec<BoxRegion>,
    pub wall: BoxRegion,
}

pub fn case_layout(cfg: &CaseStudyConfig, seed: u64) -> CaseLayout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wall = BoxRegion::new("wall", Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.1, 0.35, 1.0), Polarity::Unsafe);
    let lanes = [-0.9, -0.3, 0.3, 0.9];
    let j = cfg.start_jitter;
    let mut jit = || if j > 0.0 { rng.gen_range(-j..=j) } else { 0.0 };
    let (starts, goals) = if cfg.degenerate {
        let p = Vector3::new(-1.2, 0.0, 1.0);
        let g = BoxRegion::new("goal", Vector3::new(1.2, 0.0, 1.0), Vector3::repeat(0.2), Polarity::Goal);
        (vec![p; 4], vec![g; 4])
    } else {
        let starts = lanes.iter().map(|&y| Vector3::new(-1.2 + jit(), y + jit(), 1.0 + jit())).collect();
        let goals = lanes
            .iter()
            .map(|&y| BoxRegion::new("goal", Vector3::new(1.2, -y, 1.0), Vector3::repeat(0.2), Polarity::Goal))
            .collect();
        (starts, goals)
    };
    CaseLayout { starts, goals, wall }
}

pub fn vehicle_spec(vehicle: usize, goal: &BoxRegion, wall: &BoxRegion, horizon: f64) -> StlFormula {
    StlFormula::And(vec![
        StlFormula::eventually(0.0, horizon, StlFormula::in_box(vehicle, goal.clone())),
        StlFormula::always(0.0, horizon, StlFormula::not(StlFormula::in_box(vehicle, wall.clone()))),
    ])
}

/// Every vehicle's mission plus pairwise separation, over all trajectories.
pub fn mission_spec(layout: &CaseLayout, delta: f64, horizon: f64) -> StlFormula {
    let mut parts: Vec<StlFormula> = (0..layout.goals.len()).map(|j| vehicle_spec(j, &layout.goals[j], &layout.wall, horizon)).collect();
    for a in 0..layout.goals.len() {
        for b in a + 1..layout.goals.len() {
            parts.push(StlFormula::always(0.0, horizon, StlFormula::separation(a, b, delta)));
        }
    }
    StlFormula::And(parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRun {
    pub seed: u64,
    pub planned: bool,
    pub plan_seconds: Vec<f64>,
    pub robustness: Vec<f64>,
    pub conflicting_pairs: usize,
    pub l2f_invocations: usize,
    pub all_resolved: bool,
    pub mission_robustness: Option<f64>,
    pub sequential_seconds: f64,
    pub parallel_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub runs: Vec<CaseRun>,
    pub planned_runs: usize,
    pub resolved_runs: usize,
    pub mission_satisfied: usize,
    pub mission_rate: f64,
    pub mean_plan_seconds: f64,
    pub mean_sequential_seconds: f64,
    pub mean_parallel_seconds: f64,
    pub speedup: f64,
}

/// One case-study run: plan each vehicle alone, then resolve pairwise
/// conflicts with the two-stage protocol until none remain (bounded rounds).
pub fn case_run(cfg: &CaseStudyConfig, policy: &Policy, model: &LinearModel, seed: u64) -> Result<CaseRun, HarnessError> {
    let layout = case_layout(cfg, seed);
    let settings = PlannerSettings { restarts: cfg.restarts, iterations: cfg.iterations, ..Default::default() };
    let n = layout.starts.len();
    let mut plans = Vec::with_capacity(n);
    let mut plan_seconds = Vec::with_capacity(n);
    let mut rob = Vec::with_capacity(n);
    let mut planned = true;
    for v in 0..n {
        let f = vehicle_spec(0, &layout.goals[v], &layout.wall, cfg.horizon);
        let problem = PlanningProblem {
            formula: f.clone(),
            initial_state: VehicleState::at_rest(layout.starts[v]),
            waypoint_count: cfg.waypoints,
            horizon: cfg.horizon,
            model: model.clone(),
        };
        let t = Instant::now();
        let r = plan(&problem, &settings, seed.wrapping_mul(31).wrapping_add(v as u64));
        plan_seconds.push(t.elapsed().as_secs_f64());
        match r {
            Ok(r) => {
                // Work on the model-consistent version of the plan; its own
                // robustness sets the tube.
                let traj = model.conform(&r.trajectory);
                let rho = robustness(&f, &traj)?;
                if rho <= 0.0 {
                    planned = false;
                }
                rob.push(rho);
                plans.push(traj);
            }
            Err(e) => {
                log::debug!("seed {seed} vehicle {v}: {e}");
                planned = false;
                rob.push(f64::NAN);
                plans.push(Trajectory::constant(VehicleState::at_rest(layout.starts[v]), 1, model.dt));
            }
        }
    }
    let sequential_seconds: f64 = plan_seconds.iter().sum();
    let parallel_seconds = plan_seconds.iter().cloned().fold(0.0, f64::max);
    let mut run = CaseRun {
        seed,
        planned,
        plan_seconds,
        robustness: rob.clone(),
        conflicting_pairs: 0,
        l2f_invocations: 0,
        all_resolved: false,
        mission_robustness: None,
        sequential_seconds,
        parallel_seconds,
    };
    if !planned {
        return Ok(run);
    }
    let tubes: Vec<RobustnessTube> = plans.iter().zip(&rob).map(|(p, &r)| RobustnessTube::new(p.positions(), r)).collect();
    let mut current = plans.clone();
    let mut all_ok = true;
    for round in 0..3 {
        let mut any = false;
        for a in 0..n {
            for b in a + 1..n {
                let rep = detect(&current[a], &current[b], cfg.delta).expect("equal lengths");
                if !rep.has_conflict() {
                    continue;
                }
                any = true;
                if round == 0 {
                    run.conflicting_pairs += 1;
                }
                let s = ConflictScenario {
                    traj_a: current[a].clone(),
                    traj_b: current[b].clone(),
                    tube_a: tubes[a].clone(),
                    tube_b: tubes[b].clone(),
                    delta: cfg.delta,
                    seed,
                };
                run.l2f_invocations += 1;
                let ev = run_event(policy, &s, model, FirstMover::VehicleA)?;
                match ev.outcome {
                    Some(o) if o.status.resolved() => {
                        current[a] = o.traj_a;
                        current[b] = o.traj_b;
                    }
                    _ => all_ok = false,
                }
            }
        }
        if !any || !all_ok {
            break;
        }
    }
    let clear = (0..n).all(|a| (a + 1..n).all(|b| !detect(&current[a], &current[b], cfg.delta).expect("equal lengths").has_conflict()));
    run.all_resolved = all_ok && clear;
    let refs: Vec<&Trajectory> = current.iter().collect();
    run.mission_robustness = Some(robustness_joint(&mission_spec(&layout, cfg.delta, cfg.horizon), &refs)?);
    Ok(run)
}

pub fn casestudy(cfg: &HarnessConfig, policy: &Policy) -> Result<CaseReport, HarnessError> {
    let model = cfg.model();
    let mut runs = Vec::with_capacity(cfg.casestudy.runs);
    for r in 0..cfg.casestudy.runs as u64 {
        runs.push(case_run(&cfg.casestudy, policy, &model, cfg.seed + r)?);
    }
    let planned_runs = runs.iter().filter(|r| r.planned).count();
    let resolved: Vec<&CaseRun> = runs.iter().filter(|r| r.planned && r.all_resolved).collect();
    let mission_satisfied = resolved.iter().filter(|r| r.mission_robustness.is_some_and(|m| m > 0.0)).count();
    let mean = |f: &dyn Fn(&CaseRun) -> f64| if runs.is_empty() { 0.0 } else { runs.iter().map(f).sum::<f64>() / runs.len() as f64 };
    let mean_sequential_seconds = mean(&|r| r.sequential_seconds);
    let mean_parallel_seconds = mean(&|r| r.parallel_seconds);
    let mean_plan_seconds = mean(&|r| r.sequential_seconds / r.plan_seconds.len().max(1) as f64);
    Ok(CaseReport {
        planned_runs,
        resolved_runs: resolved.len(),
        mission_satisfied,
        mission_rate: if resolved.is_empty() { 0.0 } else { mission_satisfied as f64 / resolved.len() as f64 },
        mean_plan_seconds,
        mean_sequential_seconds,
        mean_parallel_seconds,
        speedup: if mean_parallel_seconds > 0.0 { mean_sequential_seconds / mean_parallel_seconds } else { 0.0 },
        runs,
    })
}
