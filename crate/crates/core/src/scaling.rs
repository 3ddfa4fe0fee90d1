//! Scaling action executor, Best-Fit container placement and VM release.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ContainerId, PmId, Simulation, VmId};

/// Default bound `m` of the scale candidates `-m..=m`.
pub const DEFAULT_SCALE_BOUND: i32 = 4;

/// A scaling decision: the container at position `ind` of the current
/// container list gains (or loses) `scale` vCPUs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingAction {
    pub ind: usize,
    pub scale: i32,
}

impl ScalingAction {
    pub const fn noop() -> Self {
        Self { ind: 0, scale: 0 }
    }
}

/// Interpretation of a scaling action before it touches the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plan {
    NoOp,
    /// Change the target's vCPUs in place.
    Resize(i32),
    /// Grow the target by `vertical` vCPUs and start a new replica with
    /// `create` vCPUs.
    Grow {
        vertical: u32,
        create: u32,
    },
    Delete,
}

/// Branch selection of the executor. `max_vcpu` is the free capacity of the
/// target's host VM, `con_vcpu` the target's allocation.
///
/// When the host has exactly `scale` vCPUs free the horizontal part would
/// receive zero vCPUs, so the action reduces to a pure resize.
pub fn plan_action(scale: i32, max_vcpu: u32, con_vcpu: u32) -> Plan {
    match scale.signum() {
        0 => Plan::NoOp,
        1 => {
            let s = scale.unsigned_abs();
            if max_vcpu > s {
                Plan::Resize(scale)
            } else if max_vcpu == s {
                Plan::Resize(max_vcpu as i32)
            } else {
                Plan::Grow {
                    vertical: max_vcpu,
                    create: s - max_vcpu,
                }
            }
        }
        _ => {
            if con_vcpu > scale.unsigned_abs() {
                Plan::Resize(scale)
            } else {
                Plan::Delete
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    Vertical,
    Horizontal,
    Mixed,
    Delete,
    NoOp,
}

/// What the executor actually did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedOps {
    pub kind: OpKind,
    pub target: Option<ContainerId>,
    pub vcpu_delta: i32,
    pub created: Vec<ContainerId>,
    pub deleted: Vec<ContainerId>,
    pub rented_vm: Option<VmId>,
    pub placement_failures: u32,
    pub notes: Vec<String>,
}

impl ExecutedOps {
    fn new(target: Option<ContainerId>) -> Self {
        Self {
            kind: OpKind::NoOp,
            target,
            vcpu_delta: 0,
            created: Vec::new(),
            deleted: Vec::new(),
            rented_vm: None,
            placement_failures: 0,
            notes: Vec::new(),
        }
    }

    fn settle(mut self) -> Self {
        let horizontal = !self.created.is_empty();
        self.kind = match (self.vcpu_delta != 0, horizontal, !self.deleted.is_empty()) {
            (_, _, true) => OpKind::Delete,
            (true, true, false) => OpKind::Mixed,
            (false, true, false) => OpKind::Horizontal,
            (true, false, false) => OpKind::Vertical,
            (false, false, false) => OpKind::NoOp,
        };
        self
    }

    pub fn is_noop(&self) -> bool {
        self.kind == OpKind::NoOp
    }
}

/// Per-step classification used for the action breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Vertical,
    Horizontal,
    NoOp,
}

impl StepKind {
    /// A step is horizontal if any replica was created or deleted, vertical
    /// if only allocations changed, and a no-op otherwise.
    pub fn classify(ops: &[ExecutedOps]) -> Self {
        if ops
            .iter()
            .any(|o| matches!(o.kind, OpKind::Horizontal | OpKind::Mixed | OpKind::Delete))
        {
            StepKind::Horizontal
        } else if ops.iter().any(|o| o.kind == OpKind::Vertical) {
            StepKind::Vertical
        } else {
            StepKind::NoOp
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Vertical => "vertical",
            StepKind::Horizontal => "horizontal",
            StepKind::NoOp => "no-op",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCounters {
    pub vertical: u64,
    pub horizontal: u64,
    pub noop: u64,
}

impl ActionCounters {
    pub fn record(&mut self, kind: StepKind) {
        match kind {
            StepKind::Vertical => self.vertical += 1,
            StepKind::Horizontal => self.horizontal += 1,
            StepKind::NoOp => self.noop += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.vertical + self.horizontal + self.noop
    }
}

/// Apply `action` to the simulation. Returns `None` when `ind` does not
/// address a live container.
pub fn execute_action(sim: &mut Simulation, action: ScalingAction) -> Option<ExecutedOps> {
    let list = sim.state().container_list();
    let Some(&cid) = list.get(action.ind) else {
        log::debug!(
            "step {}: index {} out of range for {} containers, ignoring action",
            sim.step_index(),
            action.ind,
            list.len()
        );
        return None;
    };
    Some(apply_scale(sim, cid, action.scale))
}

/// Scale one container by `scale` vCPUs.
pub fn apply_scale(sim: &mut Simulation, cid: ContainerId, scale: i32) -> ExecutedOps {
    let mut ops = ExecutedOps::new(Some(cid));
    let state = sim.state();
    let c = state.container(cid).expect("target container exists");
    let (ms, vcpu, vm) = (c.ms, c.vcpu, c.vm);
    let max_vcpu = state.vm(vm).expect("host exists").remaining_vcpu();

    match plan_action(scale, max_vcpu, vcpu) {
        Plan::NoOp => {}
        Plan::Resize(delta) => {
            sim.resize_container(cid, (vcpu as i32 + delta) as u32);
            ops.vcpu_delta = delta;
        }
        Plan::Grow { vertical, create } => {
            if vertical > 0 {
                sim.resize_container(cid, vcpu + vertical);
                ops.vcpu_delta = vertical as i32;
            }
            match place_container(sim, ms, create) {
                Ok((new, rented)) => {
                    ops.created.push(new);
                    ops.rented_vm = rented;
                }
                Err(e) => {
                    log::debug!("step {}: {e}; keeping the vertical part only", sim.step_index());
                    ops.placement_failures += 1;
                    ops.notes.push(e.to_string());
                }
            }
        }
        Plan::Delete => {
            if sim.state().replicas(ms).len() > 1 {
                sim.delete_container(cid);
                ops.deleted.push(cid);
            } else {
                ops.notes
                    .push(format!("{cid} is the last replica; shrinking to 1 vCPU"));
                log::debug!("step {}: refusing to delete last replica {cid}", sim.step_index());
                if vcpu > 1 {
                    sim.resize_container(cid, 1);
                    ops.vcpu_delta = 1 - vcpu as i32;
                }
            }
        }
    }
    ops.settle()
}

/// Start a replica of microservice `ms` with `vcpu` vCPUs.
pub fn add_replica(sim: &mut Simulation, ms: usize, vcpu: u32) -> ExecutedOps {
    let mut ops = ExecutedOps::new(None);
    match place_container(sim, ms, vcpu) {
        Ok((new, rented)) => {
            ops.created.push(new);
            ops.rented_vm = rented;
        }
        Err(e) => {
            log::debug!("step {}: {e}", sim.step_index());
            ops.placement_failures += 1;
            ops.notes.push(e.to_string());
        }
    }
    ops.settle()
}

/// Delete a replica unless it is the last of its microservice.
pub fn remove_replica(sim: &mut Simulation, cid: ContainerId) -> Option<ExecutedOps> {
    let ms = sim.state().container(cid)?.ms;
    if sim.state().replicas(ms).len() <= 1 {
        return None;
    }
    sim.delete_container(cid);
    let mut ops = ExecutedOps::new(Some(cid));
    ops.deleted.push(cid);
    Some(ops.settle())
}

/// Existing VM with the least remaining capacity that still fits `demand`;
/// ties go to the lowest id.
pub fn best_fit_vm(sim: &Simulation, demand: u32) -> Option<VmId> {
    let vms: Vec<_> = sim.state().vms().map(|v| (v.id, v.remaining_vcpu())).collect();
    let remaining: Vec<u32> = vms.iter().map(|v| v.1).collect();
    best_fit(&remaining, demand).map(|i| vms[i].0)
}

/// Position of the smallest capacity in `remaining` that is at least
/// `demand`, first position on ties.
pub fn best_fit(remaining: &[u32], demand: u32) -> Option<usize> {
    remaining
        .iter()
        .enumerate()
        .filter(|(_, &r)| r >= demand)
        .min_by_key(|(i, &r)| (r, *i))
        .map(|(i, _)| i)
}

/// Host a new container of `demand` vCPUs. Falls back to renting the
/// cheapest catalog type that has the capacity and fits on some PM; that VM
/// goes to the PM with the least remaining capacity.
pub fn place_container(sim: &mut Simulation, ms: usize, demand: u32) -> Result<(ContainerId, Option<VmId>)> {
    if demand == 0 {
        return Err(Error::Domain("container demand must be at least 1 vCPU".into()));
    }
    if let Some(vm) = best_fit_vm(sim, demand) {
        return Ok((sim.create_container(ms, demand, vm), None));
    }
    let state = sim.state();
    let pms = state.pms();
    let vm_type = state
        .catalog()
        .cheapest_fitting(demand, |t| pms.iter().any(|p| p.fits(t)))
        .ok_or(Error::Placement { demand })?
        .clone();
    let pm: PmId = pms
        .iter()
        .filter(|p| p.fits(&vm_type))
        .min_by_key(|p| (p.remaining_vcpu(), p.id))
        .map(|p| p.id)
        .expect("a PM fits the chosen type");
    let vm = sim.rent(&vm_type, pm);
    log::debug!("rented {} ({}) on {pm} for {demand} vCPUs", vm, vm_type.name);
    Ok((sim.create_container(ms, demand, vm), Some(vm)))
}

/// Release every VM that has hosted no container for at least one decision
/// interval.
pub fn release_idle_vms(sim: &mut Simulation) -> Vec<VmId> {
    let now = sim.clock();
    let interval = sim.config().decision_interval_s;
    let idle: Vec<VmId> = sim
        .state()
        .vms()
        .filter(|v| v.used_vcpu() == 0)
        .filter(|v| v.empty_since.is_some_and(|t| now - t >= interval - 1e-9))
        .map(|v| v.id)
        .collect();
    for &vm in &idle {
        sim.release_vm(vm);
    }
    idle
}
