//! Scenario files, trajectory CSV, SVG plots and the command drivers
//! behind the `hkdelay` binary.

mod commands;
mod csv;
mod plot;
mod scenario;

pub use commands::{
    apply_sweep, cmd_plot, cmd_run, cmd_sweep, cmd_verify, render_report, resolve_tolerance, sweep_summary_csv,
    verify_scenario, CommandOutcome, ExitStatus, SweepParam, SweepRow, VerifyRun, TOLERANCE_ENV,
};
pub use csv::{parse_csv, write_csv, CsvError, TrajectoryTable};
pub use plot::render_svg;
pub use scenario::{
    DelaySpec, HistoriesSpec, HistorySpec, KernelSpec, KernelsSpec, LeaderDelaySpec, LoadedScenario, MaskSpec,
    PairKernel, ScenarioError, ScenarioFile, ToleranceSpec, UniformBox, VariantSpec,
};
