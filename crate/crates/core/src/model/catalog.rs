use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rentable VM type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmType {
    pub name: String,
    pub vcpu: u32,
    pub mem_gib: u32,
    pub usd_per_hour: f64,
}

impl VmType {
    pub fn new(name: &str, vcpu: u32, mem_gib: u32, usd_per_hour: f64) -> Self {
        Self {
            name: name.to_string(),
            vcpu,
            mem_gib,
            usd_per_hour,
        }
    }
}

/// The set of VM types a scenario may rent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VmCatalog {
    types: Vec<VmType>,
}

impl Default for VmCatalog {
    /// The five general-purpose EC2 types used in the experiments.
    fn default() -> Self {
        Self {
            types: vec![
                VmType::new("m5.xlarge", 4, 16, 0.192),
                VmType::new("m5.2xlarge", 8, 32, 0.384),
                VmType::new("m5.4xlarge", 16, 64, 0.768),
                VmType::new("m5.8xlarge", 32, 128, 1.536),
                VmType::new("m5.12xlarge", 48, 192, 2.304),
            ],
        }
    }
}

impl VmCatalog {
    pub fn new(types: Vec<VmType>) -> Result<Self> {
        if types.is_empty() {
            return Err(Error::Config("VM catalog is empty".into()));
        }
        for t in &types {
            if t.vcpu == 0 || !(t.usd_per_hour > 0.0) {
                return Err(Error::Config(format!(
                    "VM type {} has invalid capacity or price",
                    t.name
                )));
            }
        }
        Ok(Self { types })
    }

    pub fn types(&self) -> &[VmType] {
        &self.types
    }

    pub fn get(&self, name: &str) -> Option<&VmType> {
        self.types.iter().find(|t| t.name == name)
    }

    /// Cheapest type with at least `vcpu` vCPUs among those accepted by `fits`.
    pub fn cheapest_fitting(&self, vcpu: u32, mut fits: impl FnMut(&VmType) -> bool) -> Option<&VmType> {
        self.types
            .iter()
            .filter(|t| t.vcpu >= vcpu && fits(t))
            .min_by(|a, b| a.usd_per_hour.total_cmp(&b.usd_per_hour).then(a.vcpu.cmp(&b.vcpu)))
    }

    pub fn max_price(&self) -> f64 {
        self.types.iter().map(|t| t.usd_per_hour).fold(0.0, f64::max)
    }
}

/// Rental budget over an evaluation horizon and the penalty applied when it
/// is exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPolicy {
    pub budget_usd: f64,
    pub rho: f64,
    pub horizon_steps: usize,
}

impl BudgetPolicy {
    pub fn new(budget_usd: f64, rho: f64, horizon_steps: usize) -> Result<Self> {
        if !(budget_usd > 0.0) {
            return Err(Error::Config(format!("budget must be positive, got {budget_usd}")));
        }
        if !(rho >= 0.0) {
            return Err(Error::Config(format!("penalty must be non-negative, got {rho}")));
        }
        Ok(Self {
            budget_usd,
            rho,
            horizon_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheapest_fitting_type() {
        let cat = VmCatalog::default();
        assert_eq!(cat.cheapest_fitting(6, |_| true).unwrap().name, "m5.2xlarge");
        assert_eq!(cat.cheapest_fitting(1, |_| true).unwrap().name, "m5.xlarge");
        assert_eq!(cat.cheapest_fitting(17, |t| t.vcpu <= 40).unwrap().name, "m5.8xlarge");
        assert!(cat.cheapest_fitting(49, |_| true).is_none());
    }

    #[test]
    fn budget_validation() {
        assert!(BudgetPolicy::new(0.0, 1.0, 1).is_err());
        assert!(BudgetPolicy::new(1.0, -1.0, 1).is_err());
        assert!(BudgetPolicy::new(200.0, 100.0, 480).is_ok());
    }
}
