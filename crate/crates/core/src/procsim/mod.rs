//! Gaussian-process simulation, label generation and dataset I/O.

mod dataset;
mod generators;

pub use dataset::{load_csv, parse_csv, save_csv, to_csv_string, write_atomic, FunctionalDataset};
pub use generators::{
    default_grid, gen_labels, loeve_predictor, make_dataset, make_dataset_on_grid, sample_gp,
    DatasetGeneratorSpec, GeneratorId, GpSampler, LoeveFunctional, SlopeSpec, DEFAULT_GRID_SIZE,
};
