use ndarray::{Array1, Array2, ArrayView1};

use super::layers::Dense;
use crate::error::{Error, Result};
use crate::scaling::ScalingAction;

/// Scale candidates `-m..=m`, increasing.
pub fn scale_candidates(m: i32) -> Vec<i32> {
    (-m..=m).collect()
}

fn beats(x: f64, best: f64) -> bool {
    x > best || (best.is_nan() && !x.is_nan())
}

/// Index of the largest priority; the lowest index wins ties.
pub fn select_container(priorities: &[f64]) -> Result<usize> {
    if priorities.is_empty() {
        return Err(Error::Empty("no containers to select from".into()));
    }
    let mut best = 0;
    for (i, &p) in priorities.iter().enumerate().skip(1) {
        if beats(p, priorities[best]) {
            best = i;
        }
    }
    Ok(best)
}

/// Candidate with the largest priority. Ties go to the candidate nearest
/// zero, then to the negative one.
pub fn select_scale(priorities: &[f64], candidates: &[i32]) -> Result<i32> {
    if priorities.len() != candidates.len() || candidates.is_empty() {
        return Err(Error::Dimension(format!(
            "{} priorities for {} scale candidates",
            priorities.len(),
            candidates.len()
        )));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&j| (candidates[j].abs(), candidates[j]));
    let mut best = order[0];
    for &j in &order[1..] {
        if beats(priorities[j], priorities[best]) {
            best = j;
        }
    }
    Ok(candidates[best])
}

/// Instance selector and scale selector heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub phi: [Dense; 2],
    pub omega_ff: Dense,
    pub omega: [Dense; 2],
    pub candidates: Vec<i32>,
    pub bound: i32,
}

impl Policy {
    /// One priority per container embedding row.
    pub fn priorities(&self, emb: &Array2<f64>) -> Result<Vec<f64>> {
        let h = self.phi[0].forward_tanh(emb.view())?;
        Ok(self.phi[1].forward(h.view())?.column(0).to_vec())
    }

    /// One priority per scale candidate for the chosen container.
    pub fn scale_priorities(&self, emb_row: ArrayView1<f64>) -> Result<Vec<f64>> {
        if emb_row.len() != self.omega_ff.in_dim() {
            return Err(Error::Dimension(format!(
                "embedding width {} but scale head expects {}",
                emb_row.len(),
                self.omega_ff.in_dim()
            )));
        }
        let f = self.omega_ff.forward_one(emb_row).mapv_into(f64::tanh);
        let m = f64::from(self.bound.max(1));
        let k = f.len();
        let mut input = Array2::zeros((self.candidates.len(), k + 1));
        for (r, &s) in self.candidates.iter().enumerate() {
            input.row_mut(r).slice_mut(ndarray::s![..k]).assign(&f);
            input[[r, k]] = f64::from(s) / m;
        }
        let h = self.omega[0].forward_tanh(input.view())?;
        Ok(self.omega[1].forward(h.view())?.column(0).to_vec())
    }

    pub fn act(&self, emb: &Array2<f64>) -> Result<ScalingAction> {
        let ind = select_container(&self.priorities(emb)?)?;
        let row: Array1<f64> = emb.row(ind).to_owned();
        let scale = select_scale(&self.scale_priorities(row.view())?, &self.candidates)?;
        Ok(ScalingAction { ind, scale })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_selection() {
        assert_eq!(select_container(&[0.3]).unwrap(), 0);
        assert_eq!(select_container(&[0.1, 0.9, 0.3]).unwrap(), 1);
        assert_eq!(select_container(&[0.5, 0.5]).unwrap(), 0);
        assert_eq!(select_container(&[f64::NAN, 0.2]).unwrap(), 1);
        assert!(select_container(&[]).is_err());
    }

    #[test]
    fn scale_selection() {
        let c = scale_candidates(4);
        assert_eq!(c, vec![-4, -3, -2, -1, 0, 1, 2, 3, 4]);
        assert_eq!(select_scale(&[1.0], &[0]).unwrap(), 0);
        let mut p = vec![0.0; 9];
        p[6] = 1.0;
        assert_eq!(select_scale(&p, &c).unwrap(), 2);
        assert_eq!(select_scale(&[0.7; 9], &c).unwrap(), 0);
        // Tie between +3 and -3: the negative one.
        let mut p = vec![0.0; 9];
        p[1] = 1.0;
        p[7] = 1.0;
        assert_eq!(select_scale(&p, &c).unwrap(), -3);
        assert!(select_scale(&[1.0, 2.0], &c).is_err());
    }
}
