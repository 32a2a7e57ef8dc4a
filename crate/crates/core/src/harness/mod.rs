//! Experiment configuration, the Monte Carlo trial driver and result
//! emission.

pub mod config;
pub mod emit;
pub mod run;

pub use config::{
    DecoderChoice, ExperimentConfig, IstSettings, NetworkParams, QncParams, QuantizerParams, Scheme, SourceParams,
};
pub use emit::{emit, read_csv, read_jsonl, to_csv_string, write_csv, write_jsonl, Format, SummaryRow, COLUMNS};
pub use run::{estimate_distortion, run_trials, trial_network, trial_seed, DistortionEstimate, ExperimentRecord};
