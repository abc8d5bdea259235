//! Experiment configuration, measurement planning, resumable runs and
//! reports.

mod config;
mod plan;
mod report;
mod run;

pub use config::{
    ExperimentConfig, ExperimentMode, PolarSpec, PotentialParams, SceneSource, SourceParams, StabilityParams, ValidateParams,
    VarianceParams, CONFIG_VERSION,
};
pub use plan::{plan_measurements, MeasurementPlan, PLAN_FORMAT, PLAN_VERSION};
pub use report::{emit_report, Diagnostics, EigenResidualRow, ValidationRow, REPORT_FILES};
pub use run::{
    file_digest, recover_dataset, run_pipeline, synthesize_plan, RunManifest, StageRecord, StageStatus, DATASET_FILE, DIAGNOSTICS_FILE, MANIFEST_FILE, PLAN_FILE,
    REPORT_DIR,
};
