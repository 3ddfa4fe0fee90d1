use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fully connected layer `y = W x + b` with `W` of shape (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    /// Row-wise affine map of a batch (N, in) -> (N, out).
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "dense layer expects {} inputs, got {}",
                self.in_dim(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.w.t()) + &self.b)
    }

    pub fn forward_tanh(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x)?.mapv_into(f64::tanh))
    }

    pub fn forward_one(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.w.dot(&x) + &self.b
    }
}

/// Two tanh layers applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub hidden: Dense,
    pub out: Dense,
}

impl FeedForward {
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let h = self.hidden.forward_tanh(x)?;
        self.out.forward_tanh(h.view())
    }
}

/// Single-head graph attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    /// Shape (F', F).
    pub w: Array2<f64>,
    /// Length 2F'; the first half scores the centre node, the second the
    /// neighbour.
    pub a: Array1<f64>,
}

impl GatLayer {
    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    fn check(&self, h: ArrayView2<f64>, neighbors: &[Vec<usize>]) -> Result<()> {
        if self.a.len() != 2 * self.out_dim() {
            return Err(Error::Dimension(format!(
                "attention vector has {} entries for width {}",
                self.a.len(),
                self.out_dim()
            )));
        }
        if h.ncols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "GAT layer expects {} features, got {}",
                self.in_dim(),
                h.ncols()
            )));
        }
        if neighbors.len() != h.nrows() {
            return Err(Error::Dimension(format!(
                "{} neighbourhoods for {} nodes",
                neighbors.len(),
                h.nrows()
            )));
        }
        for (i, nb) in neighbors.iter().enumerate() {
            if nb.is_empty() {
                return Err(Error::Graph(format!("node {i} has an empty neighbourhood")));
            }
            if let Some(&j) = nb.iter().find(|&&j| j >= h.nrows()) {
                return Err(Error::Graph(format!("node {i} names missing neighbour {j}")));
            }
        }
        Ok(())
    }

    fn transformed(&self, h: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let f = self.out_dim();
        let wh = h.dot(&self.w.t());
        let src = wh.dot(&self.a.slice(ndarray::s![..f]));
        let dst = wh.dot(&self.a.slice(ndarray::s![f..]));
        (wh, src, dst)
    }

    fn alpha(src: &Array1<f64>, dst: &Array1<f64>, i: usize, nb: &[usize]) -> Vec<f64> {
        let e: Vec<f64> = nb.iter().map(|&j| leaky_relu(src[i] + dst[j])).collect();
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = e.iter().map(|x| (x - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        exp.into_iter().map(|x| x / sum).collect()
    }

    /// Attention weights of node `i` over `neighbors[i]`, in that order.
    pub fn attention(&self, h: ArrayView2<f64>, neighbors: &[Vec<usize>], i: usize) -> Result<Vec<f64>> {
        self.check(h, neighbors)?;
        if i >= h.nrows() {
            return Err(Error::Dimension(format!("node {i} out of range")));
        }
        let (_, src, dst) = self.transformed(h);
        Ok(Self::alpha(&src, &dst, i, &neighbors[i]))
    }

    /// Attention-weighted aggregation of transformed neighbours followed by
    /// the logistic sigmoid.
    pub fn forward(&self, h: ArrayView2<f64>, neighbors: &[Vec<usize>]) -> Result<Array2<f64>> {
        self.check(h, neighbors)?;
        let (wh, src, dst) = self.transformed(h);
        let mut out = Array2::zeros((h.nrows(), self.out_dim()));
        for (i, nb) in neighbors.iter().enumerate() {
            let alpha = Self::alpha(&src, &dst, i, nb);
            let mut row = out.row_mut(i);
            for (&j, &a) in nb.iter().zip(&alpha) {
                row.scaled_add(a, &wh.index_axis(Axis(0), j));
            }
            row.mapv_inplace(sigmoid);
        }
        Ok(out)
    }
}

/// Attention weights of node `i` (see [`GatLayer::attention`]).
pub fn attention_coefficients(
    layer: &GatLayer,
    h: ArrayView2<f64>,
    neighbors: &[Vec<usize>],
    i: usize,
) -> Result<Vec<f64>> {
    layer.attention(h, neighbors, i)
}

pub fn gat_layer_forward(layer: &GatLayer, h: ArrayView2<f64>, neighbors: &[Vec<usize>]) -> Result<Array2<f64>> {
    layer.forward(h, neighbors)
}
