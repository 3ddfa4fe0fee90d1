//! Heuristic autoscalers: a utilization-threshold rule, SMA-driven
//! capacity planning and a uniform random policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::{add_replica, remove_replica, ExecutedOps, ScalingAction};
use crate::sim::{ContainerId, Simulation};

/// Utilization thresholds of the threshold autoscaler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub upper: f64,
    pub lower: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self { upper: 0.8, lower: 0.6 }
    }
}

impl ThresholdConfig {
    pub fn new(upper: f64, lower: f64) -> Result<Self> {
        if !(0.0 < lower && lower < upper && upper <= 1.0) {
            return Err(Error::Config(format!(
                "thresholds need 0 < lower < upper <= 1, got {lower} and {upper}"
            )));
        }
        Ok(Self { upper, lower })
    }
}

/// One pass of the threshold rule over every container. A container above
/// `upper` gets a replica of the same size; one below `lower` is removed
/// unless it is the last replica. Containers without a full measurement
/// window are left alone.
pub fn aws_scale_step(sim: &mut Simulation, cfg: &ThresholdConfig) -> Vec<ExecutedOps> {
    let snapshot: Vec<(ContainerId, usize, u32, f64)> = sim
        .state()
        .all_containers()
        .filter(|c| !c.draining && c.utilization_valid)
        .map(|c| (c.id, c.ms, c.vcpu, c.utilization))
        .collect();
    let mut ops = Vec::new();
    for (cid, ms, vcpu, util) in snapshot {
        if util > cfg.upper {
            let mut op = add_replica(sim, ms, vcpu);
            op.target = Some(cid);
            ops.push(op);
        } else if util < cfg.lower {
            match remove_replica(sim, cid) {
                Some(op) => ops.push(op),
                None => log::debug!("step {}: {cid} is the last replica, kept", sim.step_index()),
            }
        }
    }
    ops
}

/// Tasks one container of `vcpu` vCPUs can finish per decision interval.
pub fn replica_rate(sim: &Simulation, ms: usize, vcpu: u32) -> f64 {
    sim.config().decision_interval_s * 1000.0 * f64::from(vcpu) / sim.app().et_ms(ms)
}

/// Aggregate service rate of a microservice's live replicas, tasks per
/// interval.
pub fn service_rate(sim: &Simulation, ms: usize) -> f64 {
    let state = sim.state();
    state
        .replicas(ms)
        .iter()
        .filter_map(|&cid| state.container(cid))
        .map(|c| replica_rate(sim, ms, c.vcpu))
        .sum()
}

/// Size every microservice to its predicted load. Replicas copying the
/// newest replica's size are added while the service rate is below the
/// prediction; the newest replica is removed while the rest would still
/// exceed it.
pub fn proscale_step(sim: &mut Simulation, predictions: &[f64]) -> Vec<ExecutedOps> {
    let mut ops = Vec::new();
    for (ms, &pred) in predictions.iter().enumerate().take(sim.app().len()) {
        while service_rate(sim, ms) < pred {
            let newest = *sim
                .state()
                .replicas(ms)
                .last()
                .expect("every microservice keeps a replica");
            let vcpu = sim.state().container(newest).expect("live").vcpu;
            let op = add_replica(sim, ms, vcpu);
            let failed = op.placement_failures > 0;
            ops.push(op);
            if failed {
                break;
            }
        }
        loop {
            let reps = sim.state().replicas(ms);
            if reps.len() <= 1 {
                break;
            }
            let newest = *reps.last().expect("non-empty");
            let cap = replica_rate(sim, ms, sim.state().container(newest).expect("live").vcpu);
            if service_rate(sim, ms) - cap <= pred {
                break;
            }
            ops.extend(remove_replica(sim, newest));
        }
    }
    ops
}

/// Uniformly random actions from a seeded generator.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    bound: i32,
}

impl RandomPolicy {
    pub fn new(seed: u64, bound: i32) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            bound: bound.max(0),
        }
    }

    /// Next action over `containers` containers.
    pub fn next_action(&mut self, containers: usize) -> ScalingAction {
        ScalingAction {
            ind: self.rng.random_range(0..containers.max(1)),
            scale: self.rng.random_range(-self.bound..=self.bound),
        }
    }
}

/// Random action for the current state of `sim`.
pub fn random_policy_step(sim: &Simulation, policy: &mut RandomPolicy) -> ScalingAction {
    policy.next_action(sim.state().container_list().len())
}
