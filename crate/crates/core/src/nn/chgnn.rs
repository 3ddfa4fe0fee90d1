use ndarray::{concatenate, Array2, Axis};

use super::layers::{FeedForward, GatLayer};
use crate::error::Result;
use crate::hgraph::HierGraph;

/// Hierarchical graph attention network. Machine layers are optional so that
/// the PM layer, or both machine layers, can be ablated.
#[derive(Debug, Clone, PartialEq)]
pub struct Chgnn {
    pub gat_p: Option<GatLayer>,
    pub gat_v: Option<(GatLayer, FeedForward)>,
    pub gat_c: [GatLayer; 2],
    pub ff_c: FeedForward,
}

/// Embeddings of every layer; absent layers are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub pm: Option<Array2<f64>>,
    pub vm: Option<Array2<f64>>,
    pub con: Array2<f64>,
}

impl Chgnn {
    /// Bottom-up pass: each layer's input is its raw features concatenated
    /// with the embedding of the host one layer below.
    pub fn forward_all(&self, g: &HierGraph) -> Result<Embeddings> {
        let pm = match &self.gat_p {
            Some(gat) => Some(gat.forward(g.h_pm.view(), &g.pm_neighbors())?),
            None => None,
        };
        let vm = match &self.gat_v {
            Some((gat, ff)) => {
                let input = with_host(&g.h_vm, pm.as_ref(), &g.vm_host);
                let h = gat.forward(input.view(), &g.vm_neighbors())?;
                Some(ff.forward(h.view())?)
            }
            None => None,
        };
        let input = with_host(&g.h_con, vm.as_ref(), &g.con_host);
        let nb = g.con_neighbors();
        let h = self.gat_c[0].forward(input.view(), &nb)?;
        let h = self.gat_c[1].forward(h.view(), &nb)?;
        let con = self.ff_c.forward(h.view())?;
        Ok(Embeddings { pm, vm, con })
    }

    /// Container embeddings, one row per container of the graph.
    pub fn forward(&self, g: &HierGraph) -> Result<Array2<f64>> {
        Ok(self.forward_all(g)?.con)
    }
}

fn with_host(raw: &Array2<f64>, host_emb: Option<&Array2<f64>>, host: &[usize]) -> Array2<f64> {
    match host_emb {
        Some(e) => {
            let gathered = e.select(Axis(0), host);
            concatenate(Axis(1), &[raw.view(), gathered.view()]).expect("row counts agree")
        }
        None => raw.clone(),
    }
}
