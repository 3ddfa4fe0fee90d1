use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{formulas, App, RentalSpan, VmCatalog, VmType};

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(ContainerId, "con");
id_type!(VmId, "vm");
id_type!(PmId, "pm");

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct QueuedTask {
    pub req: u64,
    /// Time the task became eligible, i.e. the finish time of its last
    /// predecessor (or the request arrival).
    pub ready: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RunningTask {
    pub req: u64,
    pub ready: f64,
    pub start: f64,
    pub exec_ms: f64,
}

/// A container instance of one microservice.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub id: ContainerId,
    pub ms: usize,
    /// vCPUs reserved on the host VM.
    pub vcpu: u32,
    /// vCPUs governing the execution time of tasks that start now. Lags
    /// `vcpu` by the vertical scaling delay.
    pub effective_vcpu: u32,
    pub vm: VmId,
    pub created_at: f64,
    /// Time from which the container may execute tasks.
    pub ready_at: f64,
    /// Deleted but still finishing its running task.
    pub draining: bool,
    pub(crate) queue: VecDeque<QueuedTask>,
    pub(crate) running: Option<RunningTask>,
    pub(crate) busy_window_s: f64,
    pub(crate) served_window: u64,
    pub(crate) sojourn_window_ms: f64,
    /// Busy fraction over the last closed decision window.
    pub utilization: f64,
    /// False when the container was not serving for the whole last window.
    pub utilization_valid: bool,
    /// Mean task sojourn (ready to finish) over the last window, 0 if none.
    pub art_ms: f64,
    pub served_last_window: u64,
}

impl Container {
    pub(crate) fn new(id: ContainerId, ms: usize, vcpu: u32, vm: VmId, now: f64, ready_at: f64) -> Self {
        Self {
            id,
            ms,
            vcpu,
            effective_vcpu: vcpu,
            vm,
            created_at: now,
            ready_at,
            draining: false,
            queue: VecDeque::new(),
            running: None,
            busy_window_s: 0.0,
            served_window: 0,
            sojourn_window_ms: 0.0,
            utilization: 0.0,
            utilization_valid: false,
            art_ms: 0.0,
            served_last_window: 0,
        }
    }

    /// Tasks waiting in the FIFO queue.
    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn is_busy(&self) -> bool {
        self.running.is_some()
    }

    pub fn is_ready(&self, now: f64) -> bool {
        self.ready_at <= now
    }

    /// Queued tasks plus the running one.
    pub fn backlog_tasks(&self) -> usize {
        self.queue.len() + usize::from(self.running.is_some())
    }
}

/// A rented VM.
#[derive(Debug, Clone, PartialEq)]
pub struct Vm {
    pub id: VmId,
    pub type_name: String,
    pub vcpu: u32,
    pub mem_gib: u32,
    pub price: f64,
    pub pm: PmId,
    /// Start of the rental window.
    pub rented_at: f64,
    /// End of the rental window once released.
    pub released_at: Option<f64>,
    /// Set while the VM hosts no container.
    pub empty_since: Option<f64>,
    pub(crate) used_vcpu: u32,
    pub utilization: f64,
    pub art_ms: f64,
}

impl Vm {
    pub fn used_vcpu(&self) -> u32 {
        self.used_vcpu
    }

    pub fn remaining_vcpu(&self) -> u32 {
        self.vcpu - self.used_vcpu
    }

    /// Rental accrued up to `now`.
    pub fn rental(&self, now: f64) -> f64 {
        let end = self.released_at.unwrap_or(now).min(now).max(self.rented_at);
        formulas::vm_cost(self.price, self.rented_at, end).unwrap_or(0.0)
    }

    pub fn span(&self, now: f64) -> RentalSpan {
        RentalSpan {
            price: self.price,
            start: self.rented_at,
            end: self.released_at.unwrap_or(now),
        }
    }
}

/// A physical machine of the data-centre pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Pm {
    pub id: PmId,
    pub cpu: u32,
    pub mem_gib: u32,
    pub(crate) used_vcpu: u32,
    pub(crate) used_mem_gib: u32,
    pub utilization: f64,
}

impl Pm {
    pub fn used_vcpu(&self) -> u32 {
        self.used_vcpu
    }

    pub fn remaining_vcpu(&self) -> u32 {
        self.cpu - self.used_vcpu
    }

    pub fn fits(&self, t: &VmType) -> bool {
        self.used_vcpu + t.vcpu <= self.cpu && self.used_mem_gib + t.mem_gib <= self.mem_gib
    }
}

/// Normalisation constants for graph features. Running maxima never drop
/// below 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScales {
    pub capacity: f64,
    pub price: f64,
    pub budget: f64,
    pub art_ms: f64,
    pub pending: f64,
    pub predicted: f64,
    pub degree: f64,
}

/// Snapshot-able state of the simulated cloud.
#[derive(Debug, Clone)]
pub struct CloudState {
    pub clock: f64,
    pub(crate) pms: Vec<Pm>,
    pub(crate) vms: BTreeMap<VmId, Vm>,
    pub(crate) retired_vms: Vec<Vm>,
    pub(crate) containers: BTreeMap<ContainerId, Container>,
    /// Live, non-draining containers per microservice, ascending id.
    pub(crate) replicas: Vec<Vec<ContainerId>>,
    pub(crate) next_container: u32,
    pub(crate) next_vm: u32,
    pub(crate) catalog: VmCatalog,
    /// Per-microservice SMA prediction of tasks per decision interval.
    pub predicted: Vec<f64>,
    pub scales: FeatureScales,
}

impl CloudState {
    pub fn pms(&self) -> &[Pm] {
        &self.pms
    }

    pub fn pm(&self, id: PmId) -> &Pm {
        &self.pms[id.0 as usize]
    }

    /// Live (not yet released) VMs in id order.
    pub fn vms(&self) -> impl Iterator<Item = &Vm> {
        self.vms.values()
    }

    pub fn vm(&self, id: VmId) -> Option<&Vm> {
        self.vms.get(&id)
    }

    pub fn retired_vms(&self) -> &[Vm] {
        &self.retired_vms
    }

    pub fn catalog(&self) -> &VmCatalog {
        &self.catalog
    }

    pub fn container(&self, id: ContainerId) -> Option<&Container> {
        self.containers.get(&id)
    }

    /// All hosted containers, including draining ones.
    pub fn all_containers(&self) -> impl Iterator<Item = &Container> {
        self.containers.values()
    }

    /// The container list addressed by a scaling action's index: live,
    /// non-draining containers in ascending id order.
    pub fn container_list(&self) -> Vec<ContainerId> {
        self.containers.values().filter(|c| !c.draining).map(|c| c.id).collect()
    }

    pub fn replicas(&self, ms: usize) -> &[ContainerId] {
        &self.replicas[ms]
    }

    pub fn replica_counts(&self) -> Vec<u32> {
        self.replicas.iter().map(|r| r.len() as u32).collect()
    }

    pub fn containers_on(&self, vm: VmId) -> impl Iterator<Item = &Container> {
        self.containers.values().filter(move |c| c.vm == vm)
    }

    pub fn vms_on(&self, pm: PmId) -> impl Iterator<Item = &Vm> {
        self.vms.values().filter(move |v| v.pm == pm)
    }

    /// Total rental cost of every VM ever rented, up to `now`.
    pub fn total_cost(&self, now: f64) -> f64 {
        formulas::total_cost(
            self.vms.values().chain(self.retired_vms.iter()).map(|v| v.span(now)),
            now,
        )
    }

    /// Number of container-layer neighbours of a replica of `ms`: every
    /// replica of every adjacent microservice.
    pub fn container_degree(&self, app: &App, ms: usize) -> usize {
        app.preds(ms)
            .iter()
            .chain(app.succs(ms))
            .map(|&m| self.replicas[m].len())
            .sum()
    }

    /// Verify deployment and capacity invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut vm_used: BTreeMap<VmId, u32> = BTreeMap::new();
        for c in self.containers.values() {
            if c.vcpu == 0 {
                return Err(format!("{} has no vCPU", c.id));
            }
            if !self.vms.contains_key(&c.vm) {
                return Err(format!("{} hosted on missing {}", c.id, c.vm));
            }
            if c.running.is_none() && c.draining {
                return Err(format!("{} drained but not removed", c.id));
            }
            *vm_used.entry(c.vm).or_default() += c.vcpu;
        }
        let mut pm_used = vec![(0u32, 0u32); self.pms.len()];
        for vm in self.vms.values() {
            let used = vm_used.get(&vm.id).copied().unwrap_or(0);
            if used != vm.used_vcpu {
                return Err(format!("{} bookkeeping {} != {}", vm.id, vm.used_vcpu, used));
            }
            if used > vm.vcpu {
                return Err(format!("{} over capacity: {used} > {}", vm.id, vm.vcpu));
            }
            let Some(slot) = pm_used.get_mut(vm.pm.0 as usize) else {
                return Err(format!("{} hosted on missing {}", vm.id, vm.pm));
            };
            slot.0 += vm.vcpu;
            slot.1 += vm.mem_gib;
        }
        for (pm, (cpu, mem)) in self.pms.iter().zip(pm_used) {
            if cpu != pm.used_vcpu || mem != pm.used_mem_gib {
                return Err(format!("{} bookkeeping mismatch", pm.id));
            }
            if cpu > pm.cpu || mem > pm.mem_gib {
                return Err(format!("{} over capacity", pm.id));
            }
        }
        for (ms, reps) in self.replicas.iter().enumerate() {
            for id in reps {
                match self.containers.get(id) {
                    Some(c) if c.ms == ms && !c.draining => {}
                    _ => return Err(format!("replica list of ms {ms} names stale {id}")),
                }
            }
        }
        Ok(())
    }
}
