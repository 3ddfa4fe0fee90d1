//! Three-layer graph view of the cloud: PMs, VMs and containers, with
//! interaction edges inside each layer and deployment edges between layers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::App;
use crate::sim::{CloudState, ContainerId, PmId, VmId};

pub const PM_FEATURES: usize = 2;
pub const VM_FEATURES: usize = 5;
pub const CON_FEATURES: usize = 6;

/// Column of the host-VM remaining capacity in the container features.
pub const ZETA_COLUMN: usize = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphOptions {
    /// Zero the host-VM remaining capacity column.
    pub ablate_zeta: bool,
}

/// Graph snapshot with normalised node features. Node rows follow the order
/// of the id vectors; containers are in container-list order, so row `i` is
/// the container addressed by action index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct HierGraph {
    pub pm_ids: Vec<PmId>,
    pub vm_ids: Vec<VmId>,
    pub con_ids: Vec<ContainerId>,
    /// Host PM row of each VM.
    pub vm_host: Vec<usize>,
    /// Host VM row of each container.
    pub con_host: Vec<usize>,
    /// Undirected, stored as `(low, high)`.
    pub pm_edges: Vec<(usize, usize)>,
    /// Undirected, stored as `(low, high)`.
    pub vm_edges: Vec<(usize, usize)>,
    /// Directed, following the application's dependency edges.
    pub con_edges: Vec<(usize, usize)>,
    pub h_pm: Array2<f64>,
    pub h_vm: Array2<f64>,
    pub h_con: Array2<f64>,
}

impl HierGraph {
    /// Attention neighbourhoods of the PM layer, self included.
    pub fn pm_neighbors(&self) -> Vec<Vec<usize>> {
        neighborhoods(self.pm_ids.len(), &self.pm_edges)
    }

    pub fn vm_neighbors(&self) -> Vec<Vec<usize>> {
        neighborhoods(self.vm_ids.len(), &self.vm_edges)
    }

    /// Container neighbourhoods ignore edge direction.
    pub fn con_neighbors(&self) -> Vec<Vec<usize>> {
        neighborhoods(self.con_ids.len(), &self.con_edges)
    }

    /// Deployment edges PM -> VM as row pairs.
    pub fn dep_vm_edges(&self) -> Vec<(usize, usize)> {
        self.vm_host.iter().enumerate().map(|(v, &p)| (p, v)).collect()
    }

    /// Deployment edges VM -> container as row pairs.
    pub fn dep_con_edges(&self) -> Vec<(usize, usize)> {
        self.con_host.iter().enumerate().map(|(c, &v)| (v, c)).collect()
    }

    /// The same graph with nodes reordered: row `i` of the result is row
    /// `perm[i]` of `self`, per layer.
    pub fn relabel(&self, pm_perm: &[usize], vm_perm: &[usize], con_perm: &[usize]) -> Result<Self> {
        fn inverse(perm: &[usize]) -> Result<Vec<usize>> {
            let mut inv = vec![usize::MAX; perm.len()];
            for (new, &old) in perm.iter().enumerate() {
                if old >= perm.len() || inv[old] != usize::MAX {
                    return Err(Error::Graph("relabelling is not a permutation".into()));
                }
                inv[old] = new;
            }
            Ok(inv)
        }
        if pm_perm.len() != self.pm_ids.len()
            || vm_perm.len() != self.vm_ids.len()
            || con_perm.len() != self.con_ids.len()
        {
            return Err(Error::Graph("relabelling has the wrong length".into()));
        }
        let (pi, vi, ci) = (inverse(pm_perm)?, inverse(vm_perm)?, inverse(con_perm)?);
        let undirected = |edges: &[(usize, usize)], inv: &[usize]| {
            let mut e: Vec<_> = edges
                .iter()
                .map(|&(a, b)| (inv[a].min(inv[b]), inv[a].max(inv[b])))
                .collect();
            e.sort_unstable();
            e
        };
        let mut con_edges: Vec<_> = self.con_edges.iter().map(|&(a, b)| (ci[a], ci[b])).collect();
        con_edges.sort_unstable();
        Ok(Self {
            pm_ids: pm_perm.iter().map(|&o| self.pm_ids[o]).collect(),
            vm_ids: vm_perm.iter().map(|&o| self.vm_ids[o]).collect(),
            con_ids: con_perm.iter().map(|&o| self.con_ids[o]).collect(),
            vm_host: vm_perm.iter().map(|&o| pi[self.vm_host[o]]).collect(),
            con_host: con_perm.iter().map(|&o| vi[self.con_host[o]]).collect(),
            pm_edges: undirected(&self.pm_edges, &pi),
            vm_edges: undirected(&self.vm_edges, &vi),
            con_edges,
            h_pm: self.h_pm.select(ndarray::Axis(0), pm_perm),
            h_vm: self.h_vm.select(ndarray::Axis(0), vm_perm),
            h_con: self.h_con.select(ndarray::Axis(0), con_perm),
        })
    }

    /// Plain-text dump: one line per node with its features, then one line
    /// per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let rows = |out: &mut String, ids: Vec<String>, h: &Array2<f64>| {
            for (id, row) in ids.iter().zip(h.rows()) {
                let feats: Vec<String> = row.iter().map(|x| format!("{x:.4}")).collect();
                let _ = writeln!(out, "node {id} {}", feats.join(" "));
            }
        };
        rows(
            &mut out,
            self.pm_ids.iter().map(|i| i.to_string()).collect(),
            &self.h_pm,
        );
        rows(
            &mut out,
            self.vm_ids.iter().map(|i| i.to_string()).collect(),
            &self.h_vm,
        );
        rows(
            &mut out,
            self.con_ids.iter().map(|i| i.to_string()).collect(),
            &self.h_con,
        );
        for &(a, b) in &self.pm_edges {
            let _ = writeln!(out, "pm {} -- {}", self.pm_ids[a], self.pm_ids[b]);
        }
        for &(a, b) in &self.vm_edges {
            let _ = writeln!(out, "vm {} -- {}", self.vm_ids[a], self.vm_ids[b]);
        }
        for &(a, b) in &self.con_edges {
            let _ = writeln!(out, "con {} -> {}", self.con_ids[a], self.con_ids[b]);
        }
        for (p, v) in self.dep_vm_edges() {
            let _ = writeln!(out, "dep {} -> {}", self.pm_ids[p], self.vm_ids[v]);
        }
        for (v, c) in self.dep_con_edges() {
            let _ = writeln!(out, "dep {} -> {}", self.vm_ids[v], self.con_ids[c]);
        }
        out
    }
}

fn neighborhoods(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut sets: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
    for &(a, b) in edges {
        sets[a].insert(b);
        sets[b].insert(a);
    }
    sets.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Lift container interactions to the machine level: two machines interact
/// when a container edge joins containers hosted on each of them.
pub fn spanning_edges(edges: &[(usize, usize)], host: &[usize]) -> Vec<(usize, usize)> {
    let set: BTreeSet<(usize, usize)> = edges
        .iter()
        .map(|&(a, b)| (host[a], host[b]))
        .filter(|(u, v)| u != v)
        .map(|(u, v)| (u.min(v), u.max(v)))
        .collect();
    set.into_iter().collect()
}

fn unit(x: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        (x / scale).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Build the graph for the current state. Draining containers are not part
/// of the graph; every PM of the pool and every live VM is.
pub fn build_graph(state: &CloudState, app: &App, opts: GraphOptions) -> Result<HierGraph> {
    let now = state.clock;
    let sc = &state.scales;

    let pm_ids: Vec<PmId> = state.pms().iter().map(|p| p.id).collect();
    let pm_row: BTreeMap<PmId, usize> = pm_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let vms: Vec<_> = state.vms().collect();
    let vm_ids: Vec<VmId> = vms.iter().map(|v| v.id).collect();
    let vm_row: BTreeMap<VmId, usize> = vm_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let con_ids = state.container_list();

    let vm_host = vms
        .iter()
        .map(|v| {
            pm_row
                .get(&v.pm)
                .copied()
                .ok_or_else(|| Error::Graph(format!("{} hosted on unknown {}", v.id, v.pm)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut con_host = Vec::with_capacity(con_ids.len());
    let mut by_ms: Vec<Vec<usize>> = vec![Vec::new(); app.len()];
    let mut h_con = Array2::zeros((con_ids.len(), CON_FEATURES));
    for (row, &cid) in con_ids.iter().enumerate() {
        let c = state
            .container(cid)
            .ok_or_else(|| Error::Graph(format!("{cid} missing from state")))?;
        let &vrow = vm_row
            .get(&c.vm)
            .ok_or_else(|| Error::Graph(format!("{cid} hosted on unknown {}", c.vm)))?;
        if c.ms >= app.len() {
            return Err(Error::Graph(format!("{cid} runs unknown microservice {}", c.ms)));
        }
        con_host.push(vrow);
        by_ms[c.ms].push(row);

        let zeta = if opts.ablate_zeta {
            0.0
        } else {
            unit(f64::from(vms[vrow].remaining_vcpu()), sc.capacity)
        };
        let feats = [
            unit(f64::from(c.vcpu), sc.capacity),
            zeta,
            unit(state.container_degree(app, c.ms) as f64, sc.degree),
            unit(c.pending() as f64, sc.pending),
            unit(c.art_ms, sc.art_ms),
            unit(crate::sim::predicted_for(state, cid), sc.predicted),
        ];
        h_con.row_mut(row).assign(&ndarray::arr1(&feats));
    }

    let mut con_edges = Vec::new();
    for &(i, j) in app.edges() {
        for &a in &by_ms[i] {
            for &b in &by_ms[j] {
                con_edges.push((a, b));
            }
        }
    }
    con_edges.sort_unstable();
    let vm_edges = spanning_edges(&con_edges, &con_host);
    let pm_edges = spanning_edges(&vm_edges, &vm_host);

    let mut h_vm = Array2::zeros((vms.len(), VM_FEATURES));
    for (row, v) in vms.iter().enumerate() {
        let feats = [
            v.utilization.clamp(0.0, 1.0),
            unit(f64::from(v.vcpu), sc.capacity),
            unit(v.price, sc.price),
            unit(v.rental(now), sc.budget),
            unit(v.art_ms, sc.art_ms),
        ];
        h_vm.row_mut(row).assign(&ndarray::arr1(&feats));
    }
    let mut h_pm = Array2::zeros((pm_ids.len(), PM_FEATURES));
    for (row, p) in state.pms().iter().enumerate() {
        h_pm[[row, 0]] = p.utilization.clamp(0.0, 1.0);
        h_pm[[row, 1]] = unit(f64::from(p.cpu), sc.capacity);
    }

    Ok(HierGraph {
        pm_ids,
        vm_ids,
        con_ids,
        vm_host,
        con_host,
        pm_edges,
        vm_edges,
        con_edges,
        h_pm,
        h_vm,
        h_con,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::AppSpec;
    use crate::scaling::place_container;
    use crate::sim::{SimConfig, Simulation, TransientConfig};
    use crate::workload::Trace;

    fn sim(et: &[f64], vm_count: usize) -> Simulation {
        let app = Arc::new(AppSpec::chain("c", et).validate().unwrap());
        let cfg = SimConfig {
            initial_vm_count: vm_count,
            transient: TransientConfig::NONE,
            ..SimConfig::default()
        };
        Simulation::new(app, Trace::new("t", vec![0; 3]).unwrap(), cfg).unwrap()
    }

    fn graph(s: &Simulation) -> HierGraph {
        build_graph(s.state(), s.app(), GraphOptions::default()).unwrap()
    }

    #[test]
    fn colocated_pair_has_no_machine_edges() {
        let s = sim(&[10.0, 10.0], 1);
        let g = graph(&s);
        assert_eq!(g.con_edges.len(), 1);
        assert!(g.vm_edges.is_empty());
        assert!(g.pm_edges.is_empty());
    }

    #[test]
    fn split_pair_spans_machines() {
        let mut cfg = SimConfig {
            initial_vm_type: "m5.12xlarge".into(),
            initial_vm_count: 2,
            ..SimConfig::default()
        };
        cfg.pm_count = 2;
        let app = Arc::new(AppSpec::chain("c", &[10.0, 10.0]).validate().unwrap());
        let s = Simulation::new(app, Trace::new("t", vec![0]).unwrap(), cfg).unwrap();
        let g = graph(&s);
        assert_eq!(g.vm_host, vec![0, 1]);
        assert_eq!((g.con_edges.len(), g.vm_edges.len(), g.pm_edges.len()), (1, 1, 1));
    }

    #[test]
    fn spanning_rule_matches_enumeration() {
        // Containers 0..5 on VMs [0,0,1,2,2], VMs on PMs [0,1,1].
        let con_edges = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)];
        let con_host = [0, 0, 1, 2, 2];
        let vm_edges = spanning_edges(&con_edges, &con_host);
        assert_eq!(vm_edges, vec![(0, 1), (0, 2), (1, 2)]);
        let pm_edges = spanning_edges(&vm_edges, &[0, 1, 1]);
        assert_eq!(pm_edges, vec![(0, 1)]);
    }

    #[test]
    fn three_vm_five_container_instance() {
        let s = sim(&[10.0; 5], 3);
        let g = graph(&s);
        assert_eq!(g.dep_vm_edges().len(), 3);
        assert_eq!(g.dep_con_edges().len(), 5);
        assert_eq!(g.con_host, vec![0, 1, 2, 0, 1]);
        assert_eq!(g.h_pm.nrows(), 4);
    }

    #[test]
    fn features_are_normalised() {
        let mut s = sim(&[10.0, 20.0, 30.0], 3);
        place_container(&mut s, 1, 2).unwrap();
        let g = graph(&s);
        for h in [&g.h_pm, &g.h_vm, &g.h_con] {
            assert!(h.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)));
        }
        // Idle fresh PM: zero utilisation, full capacity.
        assert_eq!(g.h_pm.row(3).to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn zeta_is_host_remaining_capacity() {
        let mut s = sim(&[10.0], 1);
        // Host m5.4xlarge: container 0 (1 vCPU) + 2 + 7 = 10 used.
        let (c2, _) = place_container(&mut s, 0, 2).unwrap();
        place_container(&mut s, 0, 7).unwrap();
        let g = graph(&s);
        let row = g.con_ids.iter().position(|&c| c == c2).unwrap();
        assert_eq!(g.h_con[[row, ZETA_COLUMN]] * 64.0, 6.0);
        let off = build_graph(s.state(), s.app(), GraphOptions { ablate_zeta: true }).unwrap();
        assert!(off.h_con.column(ZETA_COLUMN).iter().all(|&z| z == 0.0));

        place_container(&mut s, 0, 6).unwrap();
        let full = graph(&s);
        assert_eq!(full.h_con[[row, ZETA_COLUMN]], 0.0);
    }

    #[test]
    fn rebuild_is_identical() {
        let s = sim(&[10.0, 20.0, 30.0, 40.0], 2);
        assert_eq!(graph(&s), graph(&s));
        let dump = graph(&s).to_edge_list();
        assert!(dump.contains("con con0 -> con1"));
        assert!(dump.contains("dep vm0 -> con0"));
    }

    #[test]
    fn container_edges_lift_app_edges() {
        let mut s = sim(&[10.0, 20.0, 30.0], 3);
        place_container(&mut s, 1, 1).unwrap();
        let g = graph(&s);
        // ms1 has two replicas: 0->1, 0->1', 1->2, 1'->2.
        assert_eq!(g.con_edges.len(), 4);
        let nb = g.con_neighbors();
        assert!(nb.iter().enumerate().all(|(i, n)| n.contains(&i)));
    }
}
