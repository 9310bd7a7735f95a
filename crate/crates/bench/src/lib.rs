//! Experiment harness for the `lmdp` library: seeded instance generation,
//! repetition fan-out with per-repetition result files, and plot tables.

pub mod config;
pub mod experiment;
pub mod generate;
pub mod plot;

pub use config::{Algorithm, ExperimentConfig, GeneratorSpec, InstanceSource};
pub use experiment::{run_experiment, RunOptions, Summary};
pub use generate::{gen_class, gen_instance};
pub use plot::{emit_plot_data, plot_tables, PlotTables};
