//! Fixtures shared by the criterion benchmarks under `benches/`.

use std::path::PathBuf;

use flextm_core::train::train;
use flextm_core::{prune, Dataset, PrunedModel, TmModel, TrainConfig};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn dataset() -> Dataset {
    let dir = data_dir();
    Dataset::load(dir.join("optdigits.tra"), dir.join("optdigits.tes"), 8).expect("optdigits under data/")
}

/// A model trained for a few epochs: enough structure for realistic
/// clause and netlist sizes without a long setup.
pub fn quick_model(config: &TrainConfig, epochs: u32, data: &Dataset) -> (TmModel, PrunedModel) {
    let mut config = config.clone();
    config.epochs = epochs;
    let model = train(&config, data).expect("training");
    let pruned = prune(&model);
    (model, pruned)
}
