//! Scenario loading, controllers and the train/evaluate drivers.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::{aws_scale_step, proscale_step, RandomPolicy, ThresholdConfig};
use crate::erl::{self, EsConfig, Evaluation, GenStats, TrainOutcome};
use crate::error::{Error, Result};
use crate::hgraph::build_graph;
use crate::model::{violation_degree, App, AppSpec, BudgetPolicy, VmCatalog};
use crate::nn::{init_params, Model, ModelConfig, ParamSet};
use crate::report::{percentiles, ActionBreakdown, RunReport, StepRecord};
use crate::sim::{EpisodeSummary, SimConfig, Simulation, StepMetrics, TransientConfig};
use crate::workload::{load_trace, split_at, split_train_test, Trace};

fn d_pm_cpu() -> u32 {
    64
}
fn d_pm_mem() -> u32 {
    3200
}
fn d_pm_count() -> usize {
    4
}
fn d_vm_type() -> String {
    "m5.4xlarge".into()
}
fn d_vm_count() -> usize {
    3
}
fn d_interval() -> f64 {
    crate::workload::TIME_UNIT_S
}
fn d_budget() -> f64 {
    200.0
}
fn d_rho() -> f64 {
    100.0
}
fn d_horizon() -> usize {
    crate::workload::TRAIN_UNITS
}
fn d_sma() -> usize {
    5
}

/// How a scenario's trace is divided between training and evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSplit {
    /// First day for training on traces of two days or more, else halves.
    #[default]
    Default,
    /// Train on units `..n`, evaluate on the rest.
    At(usize),
    /// Train and evaluate on the whole trace.
    Whole,
}

/// On-disk scenario description. Relative paths are resolved against the
/// directory of the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub app_file: PathBuf,
    pub trace_file: PathBuf,
    #[serde(default)]
    pub vm_catalog: Option<VmCatalog>,
    #[serde(default = "d_pm_cpu")]
    pub pm_cpu: u32,
    #[serde(default = "d_pm_mem")]
    pub pm_mem_gib: u32,
    #[serde(default = "d_pm_count")]
    pub pm_count: usize,
    #[serde(default = "d_vm_type")]
    pub initial_vm_type: String,
    #[serde(default = "d_vm_count")]
    pub initial_vm_count: usize,
    #[serde(default = "d_interval")]
    pub decision_interval_s: f64,
    #[serde(default)]
    pub transient: TransientConfig,
    #[serde(default = "d_budget")]
    pub budget_usd: f64,
    #[serde(default = "d_rho")]
    pub rho: f64,
    #[serde(default = "d_horizon")]
    pub horizon_steps: usize,
    #[serde(default)]
    pub split: TraceSplit,
    #[serde(default = "d_sma")]
    pub sma_window: usize,
    #[serde(default)]
    pub jitter_seed: Option<u64>,
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        if !(self.decision_interval_s > 0.0) {
            return Err(Error::Config(format!(
                "decision interval must be positive, got {}",
                self.decision_interval_s
            )));
        }
        let catalog = match &self.vm_catalog {
            Some(c) => VmCatalog::new(c.types().to_vec())?,
            None => VmCatalog::default(),
        };
        Ok(SimConfig {
            catalog,
            pm_cpu: self.pm_cpu,
            pm_mem_gib: self.pm_mem_gib,
            pm_count: self.pm_count,
            initial_vm_type: self.initial_vm_type.clone(),
            initial_vm_count: self.initial_vm_count,
            decision_interval_s: self.decision_interval_s,
            transient: self.transient,
            budget: BudgetPolicy::new(self.budget_usd, self.rho, self.horizon_steps)?,
            sma_window: self.sma_window,
            jitter_seed: self.jitter_seed,
            keep_workflows: false,
        })
    }
}

/// A loaded scenario: application, split trace and simulator settings.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub app: Arc<App>,
    pub train: Trace,
    pub test: Trace,
    pub sim: SimConfig,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let cfg = ScenarioConfig::load(path)?;
        Self::from_config(&cfg, path.parent().unwrap_or(Path::new(".")))
    }

    /// Build from a parsed configuration; relative paths are taken from
    /// `base`.
    pub fn from_config(cfg: &ScenarioConfig, base: &Path) -> Result<Self> {
        let app = App::new(AppSpec::load(base.join(&cfg.app_file))?)?;
        let trace = load_trace(base.join(&cfg.trace_file))?;
        Self::new(cfg.name.clone(), app, &trace, cfg.split, cfg.sim_config()?)
    }

    pub fn new(name: String, app: App, trace: &Trace, split: TraceSplit, sim: SimConfig) -> Result<Self> {
        let (train, test) = match split {
            TraceSplit::Default => split_train_test(trace)?,
            TraceSplit::At(n) => split_at(trace, n)?,
            TraceSplit::Whole => (trace.clone(), trace.clone()),
        };
        // Fail on deployment problems before any simulation runs.
        crate::sim::init_scenario(&app, &sim)?;
        Ok(Self {
            name,
            app: Arc::new(app),
            train,
            test,
            sim,
        })
    }

    pub fn budget(&self) -> &BudgetPolicy {
        &self.sim.budget
    }

    pub fn simulation(&self, trace: &Trace) -> Result<Simulation> {
        Simulation::new(self.app.clone(), trace.clone(), self.sim.clone())
    }
}

/// Something that drives one decision step.
pub trait Controller {
    fn step(&mut self, sim: &mut Simulation) -> Result<StepMetrics>;
}

pub struct LearnedController {
    model: Model,
}

impl LearnedController {
    pub fn new(params: &ParamSet) -> Result<Self> {
        Ok(Self {
            model: Model::new(params)?,
        })
    }
}

impl Controller for LearnedController {
    fn step(&mut self, sim: &mut Simulation) -> Result<StepMetrics> {
        let g = build_graph(sim.state(), sim.app(), self.model.graph_options())?;
        let action = self.model.act(&g)?;
        Ok(sim.env_step(action))
    }
}

pub struct NoopController;

impl Controller for NoopController {
    fn step(&mut self, sim: &mut Simulation) -> Result<StepMetrics> {
        Ok(sim.finish_step(Vec::new(), None, false))
    }
}

pub struct AwsController(pub ThresholdConfig);

impl Controller for AwsController {
    fn step(&mut self, sim: &mut Simulation) -> Result<StepMetrics> {
        let ops = aws_scale_step(sim, &self.0);
        Ok(sim.finish_step(ops, None, false))
    }
}

pub struct ProScaleController;

impl Controller for ProScaleController {
    fn step(&mut self, sim: &mut Simulation) -> Result<StepMetrics> {
        let predictions = sim.state().predicted.clone();
        let ops = proscale_step(sim, &predictions);
        Ok(sim.finish_step(ops, None, false))
    }
}

pub struct RandomController(pub RandomPolicy);

impl Controller for RandomController {
    fn step(&mut self, sim: &mut Simulation) -> Result<StepMetrics> {
        let action = crate::baselines::random_policy_step(sim, &mut self.0);
        Ok(sim.env_step(action))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Learned,
    Aws,
    ProScale,
    Random,
    Noop,
}

impl PolicyKind {
    pub const ALL: [Self; 5] = [Self::Learned, Self::Aws, Self::ProScale, Self::Random, Self::Noop];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Learned => "hgraphscale",
            Self::Aws => "aws",
            Self::ProScale => "proscale",
            Self::Random => "random",
            Self::Noop => "noop",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))
    }
}

/// A policy ready to run.
#[derive(Debug, Clone)]
pub enum PolicySpec {
    Learned(ParamSet),
    Aws(ThresholdConfig),
    ProScale,
    Random,
    Noop,
}

impl PolicySpec {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Self::Learned(_) => PolicyKind::Learned,
            Self::Aws(_) => PolicyKind::Aws,
            Self::ProScale => PolicyKind::ProScale,
            Self::Random => PolicyKind::Random,
            Self::Noop => PolicyKind::Noop,
        }
    }

    /// Label of the model variant; "full" unless the learned policy runs
    /// with an ablation.
    pub fn variant(&self) -> String {
        match self {
            Self::Learned(p) => {
                let mut v = Vec::new();
                if p.config.ablation != crate::nn::LayerAblation::None {
                    v.push(format!("no-{}", p.config.ablation));
                }
                if p.config.ablate_zeta {
                    v.push("no-zeta".to_string());
                }
                if v.is_empty() {
                    "full".into()
                } else {
                    v.join(",")
                }
            }
            _ => "full".into(),
        }
    }

    pub fn controller(&self, seed: u64) -> Result<Box<dyn Controller>> {
        Ok(match self {
            Self::Learned(p) => Box::new(LearnedController::new(p)?),
            Self::Aws(cfg) => Box::new(AwsController(*cfg)),
            Self::ProScale => Box::new(ProScaleController),
            Self::Random => Box::new(RandomController(RandomPolicy::new(
                seed,
                crate::scaling::DEFAULT_SCALE_BOUND,
            ))),
            Self::Noop => Box::new(NoopController),
        })
    }
}

/// Metric stream and summary of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRun {
    pub steps: Vec<StepMetrics>,
    pub summary: EpisodeSummary,
}

/// Drive `controller` over `trace` for the scenario's horizon.
pub fn run_episode(scenario: &Scenario, trace: &Trace, controller: &mut dyn Controller) -> Result<EpisodeRun> {
    let mut sim = scenario.simulation(trace)?;
    let mut steps = Vec::with_capacity(sim.horizon());
    while !sim.is_done() {
        steps.push(controller.step(&mut sim)?);
    }
    Ok(EpisodeRun {
        steps,
        summary: sim.finish_episode(),
    })
}

/// Assemble a report from an episode.
pub fn build_report(
    scenario: &Scenario,
    spec: &PolicySpec,
    seed: u64,
    run: &EpisodeRun,
    curve: Vec<GenStats>,
) -> RunReport {
    let s = &run.summary;
    let budget = scenario.budget();
    let counters = run.steps.last().map(|m| m.counters).unwrap_or_default();
    RunReport {
        scenario: scenario.name.clone(),
        policy: spec.kind().to_string(),
        seed,
        variant: spec.variant(),
        transient: scenario.sim.transient,
        steps: s.steps,
        admitted: s.admitted,
        completed: s.responses_ms.len() as u64,
        rejected: s.rejected,
        art_ms: s.art_ms,
        percentiles: percentiles(&s.responses_ms),
        cost_usd: s.cost_usd,
        budget_usd: budget.budget_usd,
        rho: budget.rho,
        violation_pct: violation_degree(s.cost_usd, budget.budget_usd),
        objective: s.objective(budget),
        breakdown: ActionBreakdown {
            vertical: counters.vertical,
            horizontal: counters.horizontal,
            noop: counters.noop,
        },
        timeline: run.steps.iter().map(StepRecord::from).collect(),
        curve,
    }
}

/// Replay the scenario's evaluation split under `spec`.
pub fn run_experiment(scenario: &Scenario, spec: &PolicySpec, seed: u64) -> Result<RunReport> {
    let mut controller = spec.controller(seed)?;
    let run = run_episode(scenario, &scenario.test, controller.as_mut())?;
    Ok(build_report(scenario, spec, seed, &run, Vec::new()))
}

/// Score parameters by one episode on `trace`; failures score `-inf`.
pub fn fitness(scenario: &Scenario, trace: &Trace, params: &ParamSet) -> Evaluation {
    let run = LearnedController::new(params).and_then(|mut c| run_episode(scenario, trace, &mut c));
    match run {
        Ok(run) => Evaluation {
            fitness: run.summary.objective(scenario.budget()),
            art_ms: run.summary.art_ms,
            cost_usd: run.summary.cost_usd,
        },
        Err(e) => {
            log::warn!("fitness evaluation failed: {e}");
            Evaluation::failed()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    /// Best parameters found.
    pub params: ParamSet,
    pub outcome: TrainOutcome,
}

/// Train the learned policy on the scenario's training split, starting from
/// parameters initialised with the ES seed.
pub fn train(scenario: &Scenario, model: &ModelConfig, es: &EsConfig) -> Result<Trained> {
    let init = init_params(model, es.seed);
    let outcome = erl::train(es, init.values().to_vec(), |theta| {
        match init.with_values(theta.to_vec()) {
            Ok(p) => fitness(scenario, &scenario.train, &p),
            Err(_) => Evaluation::failed(),
        }
    })?;
    Ok(Trained {
        params: init.with_values(outcome.best_theta.clone())?,
        outcome,
    })
}
