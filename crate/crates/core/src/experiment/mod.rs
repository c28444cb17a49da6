//! Experiment specification, the run pipeline and result reports.

mod report;
mod runner;
mod spec;

pub use report::{cmd_report, collect_runs, plot_tsv, summarize, table_csv, write_outputs, Collected, Summary, SummaryRow};
pub use runner::{cmd_run, execute, prepare, prepare_with_vocab, run_seed, PrepInfo, Prepared, RunFile};
pub use spec::{
    DataSource, DataSpec, EmbeddingSource, ExperimentSpec, KeyInfo, Mitigation, SynthPreset, KEYS, OUTPUT_ROOT_ENV,
};
