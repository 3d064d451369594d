//! Tsetlin Machine training, pruning and gate-level compilation for 8x8
//! digit images, with a cycle-accurate netlist simulator and an analytic
//! area/power model.
//!
//! The flow is `dataset` -> `train` -> `prune` -> `hwgen` -> `sim`, with
//! `ppa` consuming gate counts.

pub mod dataset;
pub mod error;
pub mod hwgen;
pub mod model;
pub mod ppa;
pub mod prune;
pub mod sim;
pub mod train;

#[cfg(test)]
mod tests;

pub use dataset::{BoolSample, Dataset, Literals, RawSample};
pub use error::{Error, Result};
pub use hwgen::{build_netlist, emit_hdl, gate_count, netlist_stats, GateWeights, Netlist, NetlistStats};
pub use model::{ClassSums, Clause, Mode, Polarity, TmModel};
pub use ppa::{CalibrationTable, ModelTag, PpaConfig, PpaPoint};
pub use prune::{count_included, infer_pruned, prune, PrunedModel};
pub use sim::{check_equivalence, simulate, EquivalenceReport, Stimulus, Trace};
pub use train::{generate_ensemble, EnsembleReport, TrainConfig};
