//! Discrete-event simulation of a microservice application on containers,
//! VMs and PMs, stepped once per decision interval.
//!
//! Each request instantiates the application DAG. A task is dispatched to a
//! replica of its microservice by capacity-weighted round-robin as soon as
//! all its predecessors have finished, waits in that container's FIFO queue
//! and runs for `et / vcpu`. A request's response time is measured from its
//! arrival to the finish of its last sink task.

mod dispatch;
mod state;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use dispatch::{cwrr_weights, Cwrr};
pub use state::{CloudState, Container, ContainerId, FeatureScales, Pm, PmId, Vm, VmId};

use crate::error::{Error, Result};
use crate::model::{average_response_time, App, BudgetPolicy, VmCatalog, VmType};
use crate::scaling::{self, ActionCounters, ExecutedOps, ScalingAction, StepKind};
use crate::workload::{self, sma_predict, Trace, WorkloadHistory};
use state::{QueuedTask, RunningTask};

/// Latency between issuing a scaling operation and the capacity change
/// taking effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransientConfig {
    /// Seconds before a new container serves tasks.
    pub h_delay_s: f64,
    /// Seconds before a resized container runs new tasks at its new size.
    pub v_delay_s: f64,
}

impl TransientConfig {
    pub const NORMAL: Self = Self {
        h_delay_s: 30.0,
        v_delay_s: 1.0,
    };
    pub const WORST_CASE: Self = Self {
        h_delay_s: 180.0,
        v_delay_s: 10.0,
    };
    pub const NONE: Self = Self {
        h_delay_s: 0.0,
        v_delay_s: 0.0,
    };
}

impl Default for TransientConfig {
    fn default() -> Self {
        Self::NORMAL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub catalog: VmCatalog,
    pub pm_cpu: u32,
    pub pm_mem_gib: u32,
    pub pm_count: usize,
    pub initial_vm_type: String,
    pub initial_vm_count: usize,
    pub decision_interval_s: f64,
    pub transient: TransientConfig,
    pub budget: BudgetPolicy,
    pub sma_window: usize,
    pub jitter_seed: Option<u64>,
    /// Keep per-task records of completed requests.
    pub keep_workflows: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            catalog: VmCatalog::default(),
            pm_cpu: 64,
            pm_mem_gib: 3200,
            pm_count: 4,
            initial_vm_type: "m5.4xlarge".into(),
            initial_vm_count: 3,
            decision_interval_s: workload::TIME_UNIT_S,
            transient: TransientConfig::NORMAL,
            budget: BudgetPolicy {
                budget_usd: 200.0,
                rho: 100.0,
                horizon_steps: 480,
            },
            sma_window: 5,
            jitter_seed: None,
            keep_workflows: false,
        }
    }
}

/// Per-task timing of a completed request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub container: ContainerId,
    /// Finish time of the last predecessor (or the arrival for entry tasks).
    pub ready: f64,
    pub start: f64,
    pub exec_ms: f64,
    pub finish: f64,
}

impl TaskRecord {
    /// Time spent queued after becoming eligible, seconds.
    pub fn wait(&self) -> f64 {
        self.start - self.ready
    }
}

/// A completed request with its per-task records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowInstance {
    pub req: u64,
    pub arrival: f64,
    pub tasks: Vec<TaskRecord>,
    pub response_ms: f64,
}

struct Flow {
    arrival: f64,
    waiting: Vec<u16>,
    sinks_left: usize,
    remaining_ms: f64,
    records: Option<Vec<Option<TaskRecord>>>,
}

/// What happened during one decision step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub clock: f64,
    pub admitted: u64,
    pub completed: u64,
    pub rejected: u64,
    pub admitted_total: u64,
    pub completed_total: u64,
    pub rejected_total: u64,
    pub in_flight: u64,
    pub step_art_ms: Option<f64>,
    pub cumulative_cost: f64,
    pub action: Option<ScalingAction>,
    pub kind: StepKind,
    pub invalid_action: bool,
    pub placement_failures: u32,
    pub counters: ActionCounters,
    pub replicas: Vec<u32>,
}

/// Result of a full episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub steps: usize,
    /// Response times in milliseconds, in completion order.
    pub responses_ms: Vec<f64>,
    pub art_ms: Option<f64>,
    pub cost_usd: f64,
    pub admitted: u64,
    pub rejected: u64,
}

impl EpisodeSummary {
    /// Objective value; a run without completed requests contributes no
    /// response-time term.
    pub fn objective(&self, budget: &BudgetPolicy) -> f64 {
        crate::model::objective(self.art_ms.unwrap_or(0.0), self.cost_usd, budget)
    }
}

#[derive(Debug, Clone, Copy)]
enum Event {
    VcpuEffective { cid: ContainerId, vcpu: u32 },
    ContainerReady { cid: ContainerId },
    TaskFinish { cid: ContainerId },
    Arrival,
}

impl Event {
    fn rank(&self) -> u8 {
        match self {
            Event::VcpuEffective { .. } => 0,
            Event::ContainerReady { .. } => 1,
            Event::TaskFinish { .. } => 2,
            Event::Arrival => 3,
        }
    }
}

struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl Scheduled {
    fn key(&self) -> (f64, u8, u64) {
        (self.time, self.event.rank(), self.seq)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    }
}

/// Build the initial deployment: one 1-vCPU container per microservice,
/// distributed round-robin over the initial VMs, which are placed first-fit
/// on the PM pool.
pub fn init_scenario(app: &App, cfg: &SimConfig) -> Result<CloudState> {
    if cfg.pm_count == 0 {
        return Err(Error::Config("PM pool is empty".into()));
    }
    if cfg.initial_vm_count == 0 {
        return Err(Error::Config("at least one initial VM is required".into()));
    }
    if !(cfg.decision_interval_s > 0.0) {
        return Err(Error::Config("decision interval must be positive".into()));
    }
    if cfg.transient.h_delay_s < 0.0 || cfg.transient.v_delay_s < 0.0 {
        return Err(Error::Config("transient delays must be non-negative".into()));
    }
    let vm_type = cfg
        .catalog
        .get(&cfg.initial_vm_type)
        .ok_or_else(|| Error::Config(format!("unknown VM type {}", cfg.initial_vm_type)))?
        .clone();

    let per_vm = app.len().div_ceil(cfg.initial_vm_count);
    if per_vm as u32 > vm_type.vcpu {
        return Err(Error::Config(format!(
            "{} initial containers do not fit on {} x {} ({} vCPUs each)",
            app.len(),
            cfg.initial_vm_count,
            vm_type.name,
            vm_type.vcpu
        )));
    }

    let pms = (0..cfg.pm_count)
        .map(|i| Pm {
            id: PmId(i as u32),
            cpu: cfg.pm_cpu,
            mem_gib: cfg.pm_mem_gib,
            used_vcpu: 0,
            used_mem_gib: 0,
            utilization: 0.0,
        })
        .collect();
    let mut state = CloudState {
        clock: 0.0,
        pms,
        vms: Default::default(),
        retired_vms: Vec::new(),
        containers: Default::default(),
        replicas: vec![Vec::new(); app.len()],
        next_container: 0,
        next_vm: 0,
        catalog: cfg.catalog.clone(),
        predicted: vec![0.0; app.len()],
        scales: FeatureScales {
            capacity: f64::from(cfg.pm_cpu),
            price: cfg.catalog.max_price(),
            budget: cfg.budget.budget_usd,
            art_ms: 1.0,
            pending: 1.0,
            predicted: 1.0,
            degree: 1.0,
        },
    };

    let mut vm_ids = Vec::with_capacity(cfg.initial_vm_count);
    for _ in 0..cfg.initial_vm_count {
        let pm = state
            .pms
            .iter()
            .find(|p| p.fits(&vm_type))
            .map(|p| p.id)
            .ok_or_else(|| Error::Config("initial VMs exceed PM capacity".into()))?;
        vm_ids.push(rent_vm(&mut state, &vm_type, pm));
    }
    for ms in 0..app.len() {
        let vm = vm_ids[ms % vm_ids.len()];
        spawn_container(&mut state, ms, 1, vm, 0.0);
    }
    for vm in state.vms.values_mut() {
        if vm.used_vcpu == 0 {
            vm.empty_since = Some(0.0);
        }
    }
    let degree = (0..app.len())
        .map(|ms| state.container_degree(app, ms))
        .max()
        .unwrap_or(0);
    state.scales.degree = (degree as f64).max(1.0);
    Ok(state)
}

pub(crate) fn rent_vm(state: &mut CloudState, t: &VmType, pm: PmId) -> VmId {
    let id = VmId(state.next_vm);
    state.next_vm += 1;
    let host = &mut state.pms[pm.0 as usize];
    host.used_vcpu += t.vcpu;
    host.used_mem_gib += t.mem_gib;
    state.vms.insert(
        id,
        Vm {
            id,
            type_name: t.name.clone(),
            vcpu: t.vcpu,
            mem_gib: t.mem_gib,
            price: t.usd_per_hour,
            pm,
            rented_at: state.clock,
            released_at: None,
            empty_since: Some(state.clock),
            used_vcpu: 0,
            utilization: 0.0,
            art_ms: 0.0,
        },
    );
    id
}

fn spawn_container(state: &mut CloudState, ms: usize, vcpu: u32, vm: VmId, ready_at: f64) -> ContainerId {
    let id = ContainerId(state.next_container);
    state.next_container += 1;
    let host = state.vms.get_mut(&vm).expect("host VM exists");
    host.used_vcpu += vcpu;
    host.empty_since = None;
    state
        .containers
        .insert(id, Container::new(id, ms, vcpu, vm, state.clock, ready_at));
    state.replicas[ms].push(id);
    id
}

/// A running simulation over one trace.
pub struct Simulation {
    app: Arc<App>,
    cfg: SimConfig,
    trace: Trace,
    state: CloudState,
    events: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
    flows: HashMap<u64, Flow>,
    next_req: u64,
    dispatchers: Vec<Cwrr<ContainerId>>,
    history: Vec<WorkloadHistory>,
    window_dispatched: Vec<u64>,
    window_start: f64,
    step: usize,
    responses_ms: Vec<f64>,
    workflows: Vec<WorkflowInstance>,
    admitted: u64,
    completed: u64,
    rejected: u64,
    counters: ActionCounters,
    summary: Option<EpisodeSummary>,
    total_et_ms: f64,
}

impl Simulation {
    pub fn new(app: Arc<App>, trace: Trace, cfg: SimConfig) -> Result<Self> {
        let state = init_scenario(&app, &cfg)?;
        let n = app.len();
        let history = (0..n)
            .map(|_| WorkloadHistory::new(cfg.sma_window))
            .collect::<Result<Vec<_>>>()?;
        let total_et_ms = (0..n).map(|i| app.et_ms(i)).sum();
        Ok(Self {
            app,
            trace,
            state,
            events: BinaryHeap::new(),
            seq: 0,
            flows: HashMap::new(),
            next_req: 0,
            dispatchers: vec![Cwrr::new(); n],
            history,
            window_dispatched: vec![0; n],
            window_start: 0.0,
            step: 0,
            responses_ms: Vec::new(),
            workflows: Vec::new(),
            admitted: 0,
            completed: 0,
            rejected: 0,
            counters: ActionCounters::default(),
            summary: None,
            total_et_ms,
            cfg,
        })
    }

    pub fn app(&self) -> &App {
        &self.app
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn state(&self) -> &CloudState {
        &self.state
    }

    /// Admit extra requests at the given times, on top of the trace.
    pub fn inject_arrivals(&mut self, times: &[f64]) {
        for &t in times {
            self.schedule(t.max(self.state.clock), Event::Arrival);
        }
    }

    pub fn clock(&self) -> f64 {
        self.state.clock
    }

    /// Index of the next decision step.
    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Number of decision steps in the episode.
    pub fn horizon(&self) -> usize {
        self.trace.len().min(self.cfg.budget.horizon_steps.max(1))
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.horizon()
    }

    pub fn responses_ms(&self) -> &[f64] {
        &self.responses_ms
    }

    pub fn workflows(&self) -> &[WorkflowInstance] {
        &self.workflows
    }

    pub fn in_flight(&self) -> u64 {
        self.flows.len() as u64
    }

    pub fn admitted(&self) -> u64 {
        self.admitted
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Tasks queued or running over all containers.
    pub fn queued_tasks(&self) -> usize {
        self.state.containers.values().map(Container::backlog_tasks).sum()
    }

    /// Work still owed to in-flight requests, in milliseconds at one vCPU:
    /// every unfinished task in full, less the progress of running ones.
    pub fn queued_work_ms(&self) -> f64 {
        let now = self.state.clock;
        let progress: f64 = self
            .state
            .containers
            .values()
            .filter_map(|c| c.running.map(|r| (c.ms, r)))
            .filter(|(_, r)| self.flows.contains_key(&r.req))
            .map(|(ms, r)| ((now - r.start) * 1000.0 / r.exec_ms).clamp(0.0, 1.0) * self.app.et_ms(ms))
            .sum();
        self.flows.values().map(|f| f.remaining_ms).sum::<f64>() - progress
    }

    /// SMA prediction for one container: its microservice's prediction
    /// apportioned by dispatch weight.
    pub fn predicted_for(&self, cid: ContainerId) -> f64 {
        predicted_for(&self.state, cid)
    }

    fn schedule(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.events.push(Reverse(Scheduled {
            time,
            seq: self.seq,
            event,
        }));
    }

    /// Apply one scaling action, then run the decision interval.
    pub fn env_step(&mut self, action: ScalingAction) -> StepMetrics {
        let ops = scaling::execute_action(self, action);
        let invalid = ops.is_none();
        self.finish_step(ops.into_iter().collect(), Some(action), invalid)
    }

    /// Run the decision interval after `ops` have been applied: admit the
    /// step's arrivals, advance to the end of the interval and close the
    /// measurement window.
    pub fn finish_step(
        &mut self,
        ops: Vec<ExecutedOps>,
        action: Option<ScalingAction>,
        invalid_action: bool,
    ) -> StepMetrics {
        let step = self.step;
        let interval = self.cfg.decision_interval_s;
        let t1 = self.window_start + interval;
        let before = (self.admitted, self.completed, self.rejected);
        let done_before = self.responses_ms.len();

        if step < self.horizon() {
            let count = self.trace.counts()[step];
            for t in workload::arrivals_in_step(count, step, interval, self.cfg.jitter_seed) {
                self.schedule(t, Event::Arrival);
            }
        }
        self.advance(t1);
        self.close_window(t1);
        scaling::release_idle_vms(self);

        let kind = StepKind::classify(&ops);
        self.counters.record(kind);
        let placement_failures = ops.iter().map(|o| o.placement_failures).sum();
        self.step += 1;

        StepMetrics {
            step,
            clock: self.state.clock,
            admitted: self.admitted - before.0,
            completed: self.completed - before.1,
            rejected: self.rejected - before.2,
            admitted_total: self.admitted,
            completed_total: self.completed,
            rejected_total: self.rejected,
            in_flight: self.in_flight(),
            step_art_ms: average_response_time(&self.responses_ms[done_before..]),
            cumulative_cost: self.state.total_cost(self.state.clock),
            action,
            kind,
            invalid_action,
            placement_failures,
            counters: self.counters,
            replicas: self.state.replica_counts(),
        }
    }

    /// Process every event up to and including `until`; returns the response
    /// times completed meanwhile.
    pub fn advance(&mut self, until: f64) -> Vec<f64> {
        debug_assert!(until >= self.state.clock);
        let first = self.responses_ms.len();
        while let Some(Reverse(top)) = self.events.peek() {
            if top.time > until {
                break;
            }
            let Reverse(ev) = self.events.pop().expect("peeked");
            self.state.clock = ev.time;
            self.handle(ev.event);
        }
        self.state.clock = until;
        self.responses_ms[first..].to_vec()
    }

    /// Stop the cost clock at the end of the horizon, then serve every
    /// admitted request to completion without new arrivals.
    pub fn finish_episode(&mut self) -> EpisodeSummary {
        if let Some(s) = &self.summary {
            return s.clone();
        }
        let cost = self.state.total_cost(self.state.clock);
        while let Some(Reverse(ev)) = self.events.pop() {
            self.state.clock = self.state.clock.max(ev.time);
            self.handle(ev.event);
        }
        let summary = EpisodeSummary {
            steps: self.step,
            art_ms: average_response_time(&self.responses_ms),
            responses_ms: self.responses_ms.clone(),
            cost_usd: cost,
            admitted: self.admitted,
            rejected: self.rejected,
        };
        self.summary = Some(summary.clone());
        summary
    }

    fn handle(&mut self, event: Event) {
        let now = self.state.clock;
        match event {
            Event::Arrival => {
                let req = self.next_req;
                self.next_req += 1;
                self.admitted += 1;
                let n = self.app.len();
                let waiting = (0..n).map(|i| self.app.preds(i).len() as u16).collect();
                self.flows.insert(
                    req,
                    Flow {
                        arrival: now,
                        waiting,
                        sinks_left: self.app.sinks().count(),
                        remaining_ms: self.total_et_ms,
                        records: self.cfg.keep_workflows.then(|| vec![None; n]),
                    },
                );
                let sources: Vec<usize> = self.app.sources().collect();
                for ms in sources {
                    self.dispatch(req, ms, now, true);
                }
            }
            Event::TaskFinish { cid } => self.on_finish(cid, now),
            Event::ContainerReady { cid } => self.try_start(cid),
            Event::VcpuEffective { cid, vcpu } => {
                if let Some(c) = self.state.containers.get_mut(&cid) {
                    c.effective_vcpu = vcpu;
                }
            }
        }
    }

    fn dispatch(&mut self, req: u64, ms: usize, ready: f64, fresh: bool) {
        if !self.flows.contains_key(&req) {
            return;
        }
        if fresh {
            self.window_dispatched[ms] += 1;
        }
        let now = self.state.clock;
        let mut members: Vec<(ContainerId, u32)> = self.state.replicas[ms]
            .iter()
            .map(|id| &self.state.containers[id])
            .filter(|c| c.is_ready(now))
            .map(|c| (c.id, c.vcpu))
            .collect();
        if members.is_empty() {
            members = self.state.replicas[ms]
                .iter()
                .map(|id| (*id, self.state.containers[id].vcpu))
                .collect();
        }
        let Some(cid) = self.dispatchers[ms].pick(&members) else {
            log::warn!("no container for microservice {ms}; rejecting request {req}");
            self.flows.remove(&req);
            self.rejected += 1;
            return;
        };
        let c = self.state.containers.get_mut(&cid).expect("replica exists");
        c.queue.push_back(QueuedTask { req, ready });
        self.try_start(cid);
    }

    fn try_start(&mut self, cid: ContainerId) {
        let now = self.state.clock;
        let Some(c) = self.state.containers.get_mut(&cid) else {
            return;
        };
        if c.running.is_some() || !c.is_ready(now) {
            return;
        }
        let Some(task) = c.queue.pop_front() else {
            return;
        };
        let exec_ms = self.app.et_ms(c.ms) / f64::from(c.effective_vcpu);
        c.running = Some(RunningTask {
            req: task.req,
            ready: task.ready,
            start: now,
            exec_ms,
        });
        self.schedule(now + exec_ms / 1000.0, Event::TaskFinish { cid });
    }

    fn on_finish(&mut self, cid: ContainerId, now: f64) {
        let window_start = self.window_start;
        let c = self.state.containers.get_mut(&cid).expect("finishing container exists");
        let run = c.running.take().expect("container was running");
        let ms = c.ms;
        c.busy_window_s += now - run.start.max(window_start);
        c.served_window += 1;
        c.sojourn_window_ms += (now - run.ready) * 1000.0;
        let draining = c.draining;

        if let Some(flow) = self.flows.get_mut(&run.req) {
            flow.remaining_ms -= self.app.et_ms(ms);
            if let Some(records) = flow.records.as_mut() {
                records[ms] = Some(TaskRecord {
                    container: cid,
                    ready: run.ready,
                    start: run.start,
                    exec_ms: run.exec_ms,
                    finish: now,
                });
            }
            let mut ready_succs = Vec::new();
            for &s in self.app.succs(ms) {
                flow.waiting[s] -= 1;
                if flow.waiting[s] == 0 {
                    ready_succs.push(s);
                }
            }
            if self.app.succs(ms).is_empty() {
                flow.sinks_left -= 1;
            }
            if flow.sinks_left == 0 {
                let flow = self.flows.remove(&run.req).expect("flow present");
                let rt = (now - flow.arrival) * 1000.0;
                self.responses_ms.push(rt);
                self.completed += 1;
                if let Some(records) = flow.records {
                    self.workflows.push(WorkflowInstance {
                        req: run.req,
                        arrival: flow.arrival,
                        tasks: records.into_iter().map(|r| r.expect("all tasks ran")).collect(),
                        response_ms: rt,
                    });
                }
            } else {
                for s in ready_succs {
                    self.dispatch(run.req, s, now, true);
                }
            }
        }

        if draining {
            self.drop_container(cid);
        } else {
            self.try_start(cid);
        }
    }

    pub(crate) fn resize_container(&mut self, cid: ContainerId, vcpu: u32) {
        assert!(vcpu >= 1);
        let now = self.state.clock;
        let delay = self.cfg.transient.v_delay_s;
        let c = self.state.containers.get_mut(&cid).expect("resized container exists");
        let old = c.vcpu;
        c.vcpu = vcpu;
        let vm = c.vm;
        if delay == 0.0 {
            c.effective_vcpu = vcpu;
        }
        let host = self.state.vms.get_mut(&vm).expect("host exists");
        host.used_vcpu = host.used_vcpu - old + vcpu;
        debug_assert!(host.used_vcpu <= host.vcpu);
        if delay > 0.0 {
            self.schedule(now + delay, Event::VcpuEffective { cid, vcpu });
        }
    }

    pub(crate) fn create_container(&mut self, ms: usize, vcpu: u32, vm: VmId) -> ContainerId {
        let now = self.state.clock;
        let delay = self.cfg.transient.h_delay_s;
        let cid = spawn_container(&mut self.state, ms, vcpu, vm, now + delay);
        if delay > 0.0 {
            self.schedule(now + delay, Event::ContainerReady { cid });
        }
        cid
    }

    /// Remove a container from service. Its queued tasks are re-dispatched
    /// to the remaining replicas; a running task is allowed to finish before
    /// the container's vCPUs are released.
    pub(crate) fn delete_container(&mut self, cid: ContainerId) {
        let c = self.state.containers.get_mut(&cid).expect("deleted container exists");
        if c.draining {
            return;
        }
        c.draining = true;
        let ms = c.ms;
        let queued: Vec<QueuedTask> = c.queue.drain(..).collect();
        let idle = c.running.is_none();
        self.state.replicas[ms].retain(|&id| id != cid);
        if idle {
            self.drop_container(cid);
        }
        for q in queued {
            self.dispatch(q.req, ms, q.ready, false);
        }
    }

    fn drop_container(&mut self, cid: ContainerId) {
        let now = self.state.clock;
        let c = self.state.containers.remove(&cid).expect("container exists");
        let host = self.state.vms.get_mut(&c.vm).expect("host exists");
        host.used_vcpu -= c.vcpu;
        if host.used_vcpu == 0 && !self.state.containers.values().any(|o| o.vm == c.vm) {
            host.empty_since = Some(now);
        }
    }

    pub(crate) fn rent(&mut self, t: &VmType, pm: PmId) -> VmId {
        rent_vm(&mut self.state, t, pm)
    }

    pub(crate) fn release_vm(&mut self, vm: VmId) {
        let now = self.state.clock;
        let mut v = self.state.vms.remove(&vm).expect("released VM exists");
        debug_assert_eq!(v.used_vcpu, 0);
        let host = &mut self.state.pms[v.pm.0 as usize];
        host.used_vcpu -= v.vcpu;
        host.used_mem_gib -= v.mem_gib;
        v.released_at = Some(now);
        self.state.retired_vms.push(v);
    }

    fn close_window(&mut self, t1: f64) {
        let ws = self.window_start;
        let len = t1 - ws;
        let app = Arc::clone(&self.app);
        let state = &mut self.state;

        let mut vm_acc: HashMap<VmId, (f64, f64, u64)> = HashMap::new();
        for c in state.containers.values_mut() {
            if let Some(r) = c.running {
                c.busy_window_s += t1 - r.start.max(ws);
            }
            c.utilization = (c.busy_window_s / len).clamp(0.0, 1.0);
            c.utilization_valid = c.ready_at <= ws && !c.draining;
            c.art_ms = if c.served_window > 0 {
                c.sojourn_window_ms / c.served_window as f64
            } else {
                0.0
            };
            c.served_last_window = c.served_window;
            let acc = vm_acc.entry(c.vm).or_default();
            acc.0 += c.utilization * f64::from(c.vcpu);
            acc.1 += c.sojourn_window_ms;
            acc.2 += c.served_window;
            c.busy_window_s = 0.0;
            c.served_window = 0;
            c.sojourn_window_ms = 0.0;
        }
        let mut pm_busy = vec![0.0; state.pms.len()];
        for vm in state.vms.values_mut() {
            let (busy, sojourn, served) = vm_acc.get(&vm.id).copied().unwrap_or_default();
            vm.utilization = (busy / f64::from(vm.vcpu)).clamp(0.0, 1.0);
            vm.art_ms = if served > 0 { sojourn / served as f64 } else { 0.0 };
            pm_busy[vm.pm.0 as usize] += vm.utilization * f64::from(vm.vcpu);
        }
        for (pm, busy) in state.pms.iter_mut().zip(pm_busy) {
            pm.utilization = (busy / f64::from(pm.cpu)).clamp(0.0, 1.0);
        }

        for (ms, h) in self.history.iter_mut().enumerate() {
            h.push(self.window_dispatched[ms] as f64);
            state.predicted[ms] = sma_predict(h).unwrap_or(0.0);
        }
        self.window_dispatched.iter_mut().for_each(|c| *c = 0);

        let scales = &mut state.scales;
        for c in state.containers.values() {
            scales.art_ms = scales.art_ms.max(c.art_ms);
            scales.pending = scales.pending.max(c.queue.len() as f64);
        }
        for vm in state.vms.values() {
            scales.art_ms = scales.art_ms.max(vm.art_ms);
        }
        let ids: Vec<ContainerId> = state.container_list();
        for cid in ids {
            let p = predicted_for(state, cid);
            state.scales.predicted = state.scales.predicted.max(p);
        }
        for ms in 0..app.len() {
            let d = state.container_degree(&app, ms) as f64;
            state.scales.degree = state.scales.degree.max(d);
        }

        self.window_start = t1;
    }
}

pub(crate) fn predicted_for(state: &CloudState, cid: ContainerId) -> f64 {
    let Some(c) = state.containers.get(&cid) else {
        return 0.0;
    };
    let reps = &state.replicas[c.ms];
    let total: u32 = reps.iter().map(|id| state.containers[id].vcpu).sum();
    if total == 0 || c.draining {
        return 0.0;
    }
    state.predicted[c.ms] * f64::from(c.vcpu) / f64::from(total)
}
