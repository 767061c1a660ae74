//! Scripted reproductions of the analysis experiments, each emitting
//! deterministic metric streams.

mod metrics;
mod posthoc;
mod quadratic;
mod schedule_viz;
mod training;

pub use metrics::{
    alpha_rows_to_csv, rows_to_csv, subspace_rows_to_csv, write_rows_csv, AlphaRow, MetricRow,
    SubspaceRow, ALPHA_CSV_HEADER, CSV_HEADER, SUBSPACE_CSV_HEADER,
};
pub use posthoc::{decay_probe, ewa_params, ewa_trace};
pub use quadratic::{run_quadratic, QuadMode, QuadTrajectory};
pub use schedule_viz::{schedule_to_csv, schedule_viz, SchedulePlot};
pub use training::{
    configure_threads, run_many, run_subspace_scaling, run_training, ProbeSet, RunPaths, RunSpec, ScalingSpec,
    TrainOutcome,
};
