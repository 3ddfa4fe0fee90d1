//! Simulator and learned autoscaler for microservice applications running
//! in a container-based cloud.
//!
//! The simulator replays request traces through an application DAG deployed
//! on containers, VMs and PMs. Autoscalers act once per decision interval
//! with a single `⟨index, scale⟩` action; the learned autoscaler encodes the
//! cloud as a three-layer graph, embeds containers with graph attention and
//! is trained with evolution strategies.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod erl;
pub mod error;
pub mod experiment;
pub mod hgraph;
pub mod model;
pub mod nn;
pub mod report;
pub mod scaling;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
