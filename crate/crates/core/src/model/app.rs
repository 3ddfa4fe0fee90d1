use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One microservice of an application, with its execution time on one vCPU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroserviceSpec {
    pub id: u32,
    pub et_ms: f64,
}

/// On-disk description of a microservice application.
///
/// Edges are ordered pairs of microservice ids. The dummy start and end
/// anchors are implied: every microservice without predecessors follows the
/// start anchor and every microservice without successors precedes the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppSpec {
    pub name: String,
    pub microservices: Vec<MicroserviceSpec>,
    pub edges: Vec<[u32; 2]>,
}

impl AppSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(self) -> Result<App> {
        App::new(self)
    }

    /// A linear chain `0 -> 1 -> ... -> n-1`.
    pub fn chain(name: &str, et_ms: &[f64]) -> Self {
        let microservices = et_ms
            .iter()
            .enumerate()
            .map(|(i, &et)| MicroserviceSpec {
                id: i as u32,
                et_ms: et,
            })
            .collect::<Vec<_>>();
        let edges = (1..et_ms.len() as u32).map(|i| [i - 1, i]).collect();
        Self {
            name: name.to_string(),
            microservices,
            edges,
        }
    }

    /// Seeded layered DAG with `n` microservices. Execution times are drawn
    /// uniformly from `et_range` milliseconds and rounded to 0.1 ms.
    pub fn synthetic(name: &str, n: usize, et_range: (f64, f64), seed: u64) -> Self {
        assert!(n >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let microservices = (0..n as u32)
            .map(|id| MicroserviceSpec {
                id,
                et_ms: (rng.random_range(et_range.0..=et_range.1) * 10.0).round() / 10.0,
            })
            .collect::<Vec<_>>();

        // Layers of width 1..=3, entry and exit layers of width 1.
        let mut layers: Vec<Vec<u32>> = vec![vec![0]];
        let mut next = 1u32;
        while (next as usize) < n {
            let remaining = n - next as usize;
            let width = if remaining == 1 {
                1
            } else {
                rng.random_range(1..=3usize).min(remaining - 1)
            };
            layers.push((next..next + width as u32).collect());
            next += width as u32;
        }
        let mut edges = BTreeSet::new();
        for w in layers.windows(2) {
            let (up, down) = (&w[0], &w[1]);
            for &d in down {
                let u = up[rng.random_range(0..up.len())];
                edges.insert([u, d]);
            }
            for &u in up {
                if !edges.iter().any(|e| e[0] == u) {
                    let d = down[rng.random_range(0..down.len())];
                    edges.insert([u, d]);
                }
            }
        }
        Self {
            name: name.to_string(),
            microservices,
            edges: edges.into_iter().collect(),
        }
    }
}

/// Validated application DAG with index-based adjacency.
///
/// Microservices are addressed by their position in `spec.microservices`.
#[derive(Debug, Clone, PartialEq)]
pub struct App {
    spec: AppSpec,
    et_ms: Vec<f64>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    topo: Vec<usize>,
}

impl App {
    pub fn new(spec: AppSpec) -> Result<Self> {
        let n = spec.microservices.len();
        if n == 0 {
            return Err(Error::InvalidApp("no microservices".into()));
        }
        let mut index = BTreeMap::new();
        for (i, ms) in spec.microservices.iter().enumerate() {
            if !(ms.et_ms.is_finite() && ms.et_ms > 0.0) {
                return Err(Error::InvalidApp(format!(
                    "microservice {} has non-positive et_ms {}",
                    ms.id, ms.et_ms
                )));
            }
            if index.insert(ms.id, i).is_some() {
                return Err(Error::InvalidApp(format!("duplicate microservice id {}", ms.id)));
            }
        }

        let mut edge_set = BTreeSet::new();
        for &[a, b] in &spec.edges {
            let (Some(&i), Some(&j)) = (index.get(&a), index.get(&b)) else {
                return Err(Error::InvalidApp(format!("edge [{a}, {b}] names unknown id")));
            };
            if i == j {
                return Err(Error::InvalidApp(format!("self-loop on {a}")));
            }
            if !edge_set.insert((i, j)) {
                return Err(Error::InvalidApp(format!("duplicate edge [{a}, {b}]")));
            }
        }

        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for &(i, j) in &edge_set {
            succs[i].push(j);
            preds[j].push(i);
        }

        // Kahn's algorithm; lowest index first keeps the order deterministic.
        let mut indeg: Vec<usize> = preds.iter().map(Vec::len).collect();
        let mut ready: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(i) = ready.pop_front() {
            topo.push(i);
            for &j in &succs[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push_back(j);
                }
            }
        }
        if topo.len() != n {
            return Err(Error::InvalidApp("dependency graph has a cycle".into()));
        }

        let et_ms = spec.microservices.iter().map(|m| m.et_ms).collect();
        Ok(Self {
            spec,
            et_ms,
            preds,
            succs,
            edges: edge_set.into_iter().collect(),
            topo,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        AppSpec::load(path)?.validate()
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn spec(&self) -> &AppSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.et_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.et_ms.is_empty()
    }

    pub fn et_ms(&self, ms: usize) -> f64 {
        self.et_ms[ms]
    }

    pub fn preds(&self, ms: usize) -> &[usize] {
        &self.preds[ms]
    }

    pub fn succs(&self, ms: usize) -> &[usize] {
        &self.succs[ms]
    }

    /// Dependency edges as `(from, to)` index pairs, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.binary_search(&(from, to)).is_ok()
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    /// Microservices fed directly by the start anchor.
    pub fn sources(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.preds[i].is_empty())
    }

    /// Microservices feeding the end anchor.
    pub fn sinks(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.succs[i].is_empty())
    }

    /// Longest start-to-end path in milliseconds with every microservice on
    /// `vcpus` vCPUs. Lower bound on any request's response time.
    pub fn critical_path_ms(&self, vcpus: impl Fn(usize) -> u32) -> f64 {
        let mut finish = vec![0.0f64; self.len()];
        for &i in &self.topo {
            let ready = self.preds[i].iter().map(|&p| finish[p]).fold(0.0, f64::max);
            finish[i] = ready + self.et_ms[i] / f64::from(vcpus(i));
        }
        finish.into_iter().fold(0.0, f64::max)
    }
}
