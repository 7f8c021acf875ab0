//! Orchestration: the collect → fit → train → generate → evaluate
//! pipeline, multi-seed experiment tables, the representation ablation and
//! the noise-similarity heatmap.

mod experiment;
mod heatmap;
mod pipeline;

pub use experiment::{
    ablate_crl, assemble_table, cell_dir, collect_dataset, dataset_dir, eum_curve, heatmap_experiment, run_experiment, CellFailure, Comparison,
    EumPoint, ExperimentConfig, ExternalRow, HeatmapSummary, Method, ResultRow, ResultsTable,
};
pub use heatmap::{noise_similarity_heatmap, noise_vectors, reshape_data, Heatmap};
pub use pipeline::{collect, evaluate_front, generate, prepare, train_models, train_models_checkpoints, PipelineConfig, TrainedModels};
