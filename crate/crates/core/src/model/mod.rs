//! Application, catalog and cost model of the container-based cloud.

mod app;
mod catalog;
pub mod formulas;

pub use app::{App, AppSpec, MicroserviceSpec};
pub use catalog::{BudgetPolicy, VmCatalog, VmType};
pub use formulas::{
    average_response_time, execution_time, objective, total_cost, violation_degree, vm_cost, RentalSpan,
};
