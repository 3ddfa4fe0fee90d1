//! Capacity-based weighted round-robin request dispatch.

use crate::error::{Error, Result};

/// Normalised dispatch weights: each container's share of the total vCPUs
/// allocated to its microservice.
pub fn cwrr_weights(vcpus: &[u32]) -> Result<Vec<f64>> {
    if vcpus.is_empty() {
        return Err(Error::Empty("no containers to weight".into()));
    }
    let total: u64 = vcpus.iter().map(|&v| u64::from(v)).sum();
    if total == 0 {
        return Err(Error::Domain("containers hold no vCPU".into()));
    }
    Ok(vcpus.iter().map(|&v| f64::from(v) / total as f64).collect())
}

/// Deterministic smooth weighted round-robin over integer weights.
///
/// Each pick adds every member's weight to its running credit, selects the
/// member with the largest credit (lowest position on ties) and charges it
/// the total weight. Credits reset whenever the member set or a weight
/// changes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cwrr<K> {
    members: Vec<(K, u32)>,
    credit: Vec<i64>,
}

impl<K: Copy + PartialEq> Cwrr<K> {
    pub fn new() -> Self {
        Self {
            members: Vec::new(),
            credit: Vec::new(),
        }
    }

    pub fn pick(&mut self, members: &[(K, u32)]) -> Option<K> {
        if members.is_empty() {
            return None;
        }
        if self.members != members {
            self.members = members.to_vec();
            self.credit = vec![0; members.len()];
        }
        let total: i64 = members.iter().map(|&(_, w)| i64::from(w)).sum();
        let mut best = 0;
        for (i, &(_, w)) in members.iter().enumerate() {
            self.credit[i] += i64::from(w);
            if self.credit[i] > self.credit[best] {
                best = i;
            }
        }
        self.credit[best] -= total;
        Some(members[best].0)
    }
}
