//! Forward-only networks of the learned autoscaler: the hierarchical graph
//! attention encoder and the two-head scaling policy, both driven by one
//! flat parameter vector.

mod chgnn;
mod layers;
mod params;
mod policy;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use chgnn::{Chgnn, Embeddings};
pub use layers::{attention_coefficients, gat_layer_forward, leaky_relu, sigmoid, Dense, FeedForward, GatLayer};
pub use params::{LayerShape, ParamSet};
pub use policy::{scale_candidates, select_container, select_scale, Policy};

use crate::error::{Error, Result};
use crate::hgraph::{GraphOptions, HierGraph, CON_FEATURES, PM_FEATURES, VM_FEATURES};
use crate::scaling::{ScalingAction, DEFAULT_SCALE_BOUND};

/// Which machine layers of the graph encoder are removed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerAblation {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "pm")]
    Pm,
    #[serde(rename = "pm+vm")]
    PmVm,
}

impl FromStr for LayerAblation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "pm" => Ok(Self::Pm),
            "pm+vm" => Ok(Self::PmVm),
            other => Err(Error::Config(format!("unknown layer ablation {other:?}"))),
        }
    }
}

impl fmt::Display for LayerAblation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Pm => "pm",
            Self::PmVm => "pm+vm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub emb_dim: usize,
    pub hidden: usize,
    pub scale_bound: i32,
    pub ablation: LayerAblation,
    /// Feed the encoder graphs with the host-capacity column zeroed.
    #[serde(default)]
    pub ablate_zeta: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            emb_dim: 64,
            hidden: 64,
            scale_bound: DEFAULT_SCALE_BOUND,
            ablation: LayerAblation::None,
            ablate_zeta: false,
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Weight,
    Attention,
    Bias,
}

fn entries(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Kind)> {
    let (d, hid) = (cfg.emb_dim, cfg.hidden);
    let mut out = Vec::new();
    let gat = |out: &mut Vec<_>, name: &str, fin: usize, fout: usize| {
        out.push((format!("{name}.w"), vec![fout, fin], Kind::Weight));
        out.push((format!("{name}.a"), vec![2 * fout], Kind::Attention));
    };
    let dense = |out: &mut Vec<(String, Vec<usize>, Kind)>, name: &str, fin: usize, fout: usize| {
        out.push((format!("{name}.w"), vec![fout, fin], Kind::Weight));
        out.push((format!("{name}.b"), vec![fout], Kind::Bias));
    };
    let vm_in = match cfg.ablation {
        LayerAblation::None => {
            gat(&mut out, "gat_p", PM_FEATURES, d);
            VM_FEATURES + d
        }
        _ => VM_FEATURES,
    };
    let con_in = match cfg.ablation {
        LayerAblation::PmVm => CON_FEATURES,
        _ => {
            gat(&mut out, "gat_v", vm_in, d);
            dense(&mut out, "ff_v.0", d, hid);
            dense(&mut out, "ff_v.1", hid, d);
            CON_FEATURES + d
        }
    };
    gat(&mut out, "gat_c1", con_in, d);
    gat(&mut out, "gat_c2", d, d);
    dense(&mut out, "ff_c.0", d, hid);
    dense(&mut out, "ff_c.1", hid, d);
    dense(&mut out, "phi.0", d, hid);
    dense(&mut out, "phi.1", hid, 1);
    dense(&mut out, "omega_ff", d, hid);
    dense(&mut out, "omega.0", hid + 1, hid);
    dense(&mut out, "omega.1", hid, 1);
    out
}

/// Parameter manifest of a model configuration, in storage order.
pub fn layout(cfg: &ModelConfig) -> Vec<LayerShape> {
    entries(cfg)
        .into_iter()
        .map(|(name, shape, _)| LayerShape { name, shape })
        .collect()
}

/// Seeded initial parameters: weights uniform in ±sqrt(1/fan_in), attention
/// vectors uniform in ±sqrt(1/len), biases zero.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::new();
    for (_, shape, kind) in entries(cfg) {
        let n: usize = shape.iter().product();
        let bound = match kind {
            Kind::Weight => (1.0 / shape[1] as f64).sqrt(),
            Kind::Attention => (1.0 / shape[0] as f64).sqrt(),
            Kind::Bias => 0.0,
        };
        for _ in 0..n {
            values.push(if bound > 0.0 {
                rng.random_range(-bound..bound)
            } else {
                0.0
            });
        }
    }
    ParamSet::new(*cfg, seed, layout(cfg), values).expect("layout and values agree")
}

struct Reader<'a> {
    layout: std::slice::Iter<'a, LayerShape>,
    values: &'a [f64],
}

impl Reader<'_> {
    fn next(&mut self, name: &str) -> Result<(&LayerShape, &[f64])> {
        let shape = self
            .layout
            .next()
            .ok_or_else(|| Error::Params(format!("manifest ends before {name}")))?;
        if shape.name != name {
            return Err(Error::Params(format!("expected {name}, found {}", shape.name)));
        }
        let (head, rest) = self.values.split_at(shape.len());
        self.values = rest;
        Ok((shape, head))
    }

    fn matrix(&mut self, name: &str) -> Result<Array2<f64>> {
        let (shape, v) = self.next(name)?;
        Array2::from_shape_vec((shape.shape[0], shape.shape[1]), v.to_vec())
            .map_err(|e| Error::Params(format!("{name}: {e}")))
    }

    fn vector(&mut self, name: &str) -> Result<Array1<f64>> {
        Ok(Array1::from(self.next(name)?.1.to_vec()))
    }

    fn gat(&mut self, name: &str) -> Result<GatLayer> {
        Ok(GatLayer {
            w: self.matrix(&format!("{name}.w"))?,
            a: self.vector(&format!("{name}.a"))?,
        })
    }

    fn dense(&mut self, name: &str) -> Result<Dense> {
        Ok(Dense {
            w: self.matrix(&format!("{name}.w"))?,
            b: self.vector(&format!("{name}.b"))?,
        })
    }

    fn ff(&mut self, name: &str) -> Result<FeedForward> {
        Ok(FeedForward {
            hidden: self.dense(&format!("{name}.0"))?,
            out: self.dense(&format!("{name}.1"))?,
        })
    }
}

/// Encoder plus policy, ready for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub chgnn: Chgnn,
    pub policy: Policy,
}

impl Model {
    pub fn new(params: &ParamSet) -> Result<Self> {
        let cfg = params.config;
        if params.layout() != layout(&cfg) {
            return Err(Error::Params("manifest does not match the model configuration".into()));
        }
        if let Some(i) = params.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::Params(format!("non-finite parameter at index {i}")));
        }
        let mut r = Reader {
            layout: params.layout().iter(),
            values: params.values(),
        };
        let gat_p = match cfg.ablation {
            LayerAblation::None => Some(r.gat("gat_p")?),
            _ => None,
        };
        let gat_v = match cfg.ablation {
            LayerAblation::PmVm => None,
            _ => Some((r.gat("gat_v")?, r.ff("ff_v")?)),
        };
        let chgnn = Chgnn {
            gat_p,
            gat_v,
            gat_c: [r.gat("gat_c1")?, r.gat("gat_c2")?],
            ff_c: r.ff("ff_c")?,
        };
        let policy = Policy {
            phi: [r.dense("phi.0")?, r.dense("phi.1")?],
            omega_ff: r.dense("omega_ff")?,
            omega: [r.dense("omega.0")?, r.dense("omega.1")?],
            candidates: scale_candidates(cfg.scale_bound),
            bound: cfg.scale_bound,
        };
        debug_assert!(r.values.is_empty());
        Ok(Self {
            config: cfg,
            chgnn,
            policy,
        })
    }

    /// Flatten back into storage order.
    pub fn to_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let gat = |out: &mut Vec<f64>, l: &GatLayer| {
            out.extend(l.w.iter());
            out.extend(l.a.iter());
        };
        let dense = |out: &mut Vec<f64>, l: &Dense| {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        };
        if let Some(l) = &self.chgnn.gat_p {
            gat(&mut out, l);
        }
        if let Some((l, ff)) = &self.chgnn.gat_v {
            gat(&mut out, l);
            dense(&mut out, &ff.hidden);
            dense(&mut out, &ff.out);
        }
        gat(&mut out, &self.chgnn.gat_c[0]);
        gat(&mut out, &self.chgnn.gat_c[1]);
        dense(&mut out, &self.chgnn.ff_c.hidden);
        dense(&mut out, &self.chgnn.ff_c.out);
        for l in self
            .policy
            .phi
            .iter()
            .chain([&self.policy.omega_ff])
            .chain(&self.policy.omega)
        {
            dense(&mut out, l);
        }
        out
    }

    pub fn embed(&self, g: &HierGraph) -> Result<Array2<f64>> {
        self.chgnn.forward(g)
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            ablate_zeta: self.config.ablate_zeta,
        }
    }

    pub fn act(&self, g: &HierGraph) -> Result<ScalingAction> {
        let emb = self.embed(g)?;
        self.policy.act(&emb)
    }
}

/// Container embeddings of `g` under `model`.
pub fn chgnn_forward(g: &HierGraph, model: &Model) -> Result<Array2<f64>> {
    model.embed(g)
}

#[cfg(test)]
mod tests;
