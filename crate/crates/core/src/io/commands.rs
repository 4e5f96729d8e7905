use std::fmt::Write as _;
use std::path::Path;

use crate::analysis::{
    consensus_constants, default_tolerance, empirical_decay_rate, verify_all, CheckStatus, DecayCertificate,
    VerifierReport,
};
use crate::integrator::{integrate, Trajectory};
use crate::model::ModelVariant;

use super::csv::{parse_csv, write_csv, TrajectoryTable};
use super::plot::render_svg;
use super::scenario::{DelaySpec, HistoriesSpec, LeaderDelaySpec, LoadedScenario, MaskSpec, ScenarioFile, VariantSpec};

/// Overrides the default verification tolerance `max(10 h^2, 1e-9)`.
/// A scenario's own `tolerance.base` still takes precedence.
pub const TOLERANCE_ENV: &str = "HKDELAY_TOL";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    InputError = 2,
    NumericFailure = 3,
    VerificationFailure = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommandOutcome {
    pub status: ExitStatus,
    pub message: String,
}

impl CommandOutcome {
    fn new(status: ExitStatus, message: impl Into<String>) -> Self {
        CommandOutcome {
            status,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Self::new(ExitStatus::InputError, message)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CommandOutcome> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CommandOutcome::input(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CommandOutcome::input(format!("cannot write {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<(ScenarioFile, LoadedScenario), CommandOutcome> {
    let file = ScenarioFile::read(path).map_err(|e| CommandOutcome::input(format!("scenario error: {e}")))?;
    let loaded = file.load().map_err(|e| CommandOutcome::input(format!("scenario error: {e}")))?;
    Ok((file, loaded))
}

/// Tolerance and where it came from: the scenario file, the environment or the default.
pub fn resolve_tolerance(file_override: Option<f64>, step_h: f64) -> Result<(f64, &'static str), String> {
    if let Some(t) = file_override {
        return Ok((t, "scenario"));
    }
    match std::env::var(TOLERANCE_ENV) {
        Ok(raw) => match raw.trim().parse::<f64>() {
            Ok(t) if t.is_finite() && t > 0.0 => Ok((t, "environment")),
            _ => Err(format!("{TOLERANCE_ENV}={raw:?} is not a positive number")),
        },
        Err(_) => Ok((default_tolerance(step_h), "default")),
    }
}

fn simulate(loaded: &LoadedScenario) -> Result<Trajectory, CommandOutcome> {
    integrate(&loaded.config)
        .map_err(|e| CommandOutcome::new(ExitStatus::NumericFailure, format!("integration failed: {e}")))
}

pub fn cmd_run(scenario_path: &Path, out_path: &Path) -> CommandOutcome {
    let run = || -> Result<CommandOutcome, CommandOutcome> {
        let (_, loaded) = load(scenario_path)?;
        let traj = simulate(&loaded)?;
        write_file(out_path, &write_csv(&TrajectoryTable::from_trajectory(&traj)))?;
        Ok(CommandOutcome::new(
            ExitStatus::Ok,
            format!(
                "wrote {} stamps for {} entities to {}",
                traj.buffer.len(),
                traj.buffer.entity_count(),
                out_path.display()
            ),
        ))
    };
    run().unwrap_or_else(|e| e)
}

/// Everything `verify` computes for one scenario.
#[derive(Clone, Debug)]
pub struct VerifyRun {
    pub certificate: DecayCertificate,
    pub reports: Vec<VerifierReport>,
    pub tolerance: f64,
    pub tolerance_source: &'static str,
    pub empirical_rate: Option<f64>,
    pub final_diameter: f64,
    pub arrival_time: Option<f64>,
}

impl VerifyRun {
    /// All checks that apply passed.
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.status != CheckStatus::Fail)
    }

    pub fn pass_count(&self) -> usize {
        self.reports.iter().filter(|r| r.passed()).count()
    }

    pub fn applicable_count(&self) -> usize {
        self.reports.iter().filter(|r| r.status != CheckStatus::Inapplicable).count()
    }
}

pub fn verify_scenario(loaded: &LoadedScenario) -> Result<VerifyRun, CommandOutcome> {
    let (tolerance, tolerance_source) =
        resolve_tolerance(loaded.tolerance, loaded.config.step_h).map_err(CommandOutcome::input)?;
    let certificate = consensus_constants(&loaded.config)
        .map_err(|e| CommandOutcome::new(ExitStatus::NumericFailure, format!("certificate: {e}")))?;
    let traj = simulate(loaded)?;
    let reports = verify_all(&traj, &certificate, tolerance);
    let last = traj.buffer.len() - 1;
    Ok(VerifyRun {
        final_diameter: crate::analysis::diameter(&traj, traj.buffer.time(last)).unwrap_or(f64::NAN),
        empirical_rate: empirical_decay_rate(&traj),
        arrival_time: traj.arrival_time(),
        certificate,
        reports,
        tolerance,
        tolerance_source,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.6e}"))
}

pub fn render_report(source: &str, loaded: &LoadedScenario, run: &VerifyRun) -> String {
    let cfg = &loaded.config;
    let c = &run.certificate;
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {source}");
    let _ = writeln!(
        out,
        "variant: {}  N={}  d={}  leaders={}",
        cfg.variant.name(),
        cfg.n,
        cfg.d,
        cfg.leader_count()
    );
    let _ = writeln!(
        out,
        "step_h={:e}  horizon_T={}  tau_max={}",
        cfg.step_h,
        cfg.horizon_t,
        cfg.tau_max()
    );
    let _ = writeln!(out, "tolerance: {:.3e} ({})", run.tolerance, run.tolerance_source);
    let _ = writeln!(out, "certificate:");
    let _ = writeln!(out, "  K        = {:.12e}", c.k_sup);
    let _ = writeln!(out, "  psi0     = {:.12e}", c.psi0);
    let _ = writeln!(out, "  bound    = {:.12e}", c.state_bound);
    let _ = writeln!(out, "  D0       = {:.12e}", c.d0);
    let _ = writeln!(out, "  C        = {:.12e}  (1-C  = {:.12e})", c.c, c.contraction_gap);
    let _ = writeln!(out, "  C~       = {:.12e}  (1-C~ = {:.12e})", c.c_tilde, c.c_tilde_gap);
    let _ = writeln!(out, "  gamma    = {:.12e}", c.gamma);
    for note in &c.notes {
        let _ = writeln!(out, "  note: {note}");
    }
    let _ = writeln!(out, "empirical_rate: {}", opt(run.empirical_rate));
    let _ = writeln!(out, "final_diameter: {:.6e}", run.final_diameter);
    if let ModelVariant::SingleLeaderControlled { .. } = cfg.variant {
        let _ = writeln!(out, "arrival_time: {}", opt(run.arrival_time));
    }
    let _ = writeln!(out, "checks:");
    for r in &run.reports {
        let _ = writeln!(out, "  {}", r.summary_line());
    }
    let _ = writeln!(
        out,
        "overall: {} ({}/{} applicable checks passed)",
        if run.passed() { "PASS" } else { "FAIL" },
        run.pass_count(),
        run.applicable_count()
    );
    out
}

pub fn cmd_verify(scenario_path: &Path, out_report_path: &Path) -> CommandOutcome {
    let run = || -> Result<CommandOutcome, CommandOutcome> {
        let (_, loaded) = load(scenario_path)?;
        let result = verify_scenario(&loaded)?;
        let report = render_report(&scenario_path.display().to_string(), &loaded, &result);
        write_file(out_report_path, &report)?;
        let failing: Vec<String> = result
            .reports
            .iter()
            .filter(|r| r.status == CheckStatus::Fail)
            .map(|r| format!("{} at {}", r.name, r.location))
            .collect();
        Ok(if failing.is_empty() {
            CommandOutcome::new(ExitStatus::Ok, format!("all checks passed; report in {}", out_report_path.display()))
        } else {
            CommandOutcome::new(
                ExitStatus::VerificationFailure,
                format!("failed: {}; report in {}", failing.join(", "), out_report_path.display()),
            )
        })
    };
    run().unwrap_or_else(|e| e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Tau,
    N,
    M,
}

impl std::str::FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tau" => Ok(SweepParam::Tau),
            "N" => Ok(SweepParam::N),
            "M" => Ok(SweepParam::M),
            other => Err(format!("unknown sweep parameter \"{other}\" (expected tau, N or M)")),
        }
    }
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Tau => "tau",
            SweepParam::N => "N",
            SweepParam::M => "M",
        }
    }
}

/// Scenario with the swept parameter replaced.
pub fn apply_sweep(file: &ScenarioFile, param: SweepParam, value: f64) -> Result<ScenarioFile, String> {
    let mut f = file.clone();
    match param {
        SweepParam::Tau => {
            if !(value.is_finite() && value >= 0.0) {
                return Err(format!("tau value {value} must be finite and nonnegative"));
            }
            f.delays = DelaySpec::Scalar(value);
            if f.leader_delays.is_some() {
                f.leader_delays = Some(LeaderDelaySpec::Scalar(value));
            }
        }
        SweepParam::N => {
            if value.fract() != 0.0 || value < 2.0 {
                return Err(format!("N value {value} must be an integer >= 2"));
            }
            if !matches!(f.histories, HistoriesSpec::Random { .. }) {
                return Err("sweeping N needs random_constant follower histories".into());
            }
            if !matches!(&f.chi, MaskSpec::Named(_)) || !matches!(f.delays, DelaySpec::Scalar(_)) {
                return Err("sweeping N needs chi = \"complete\" and a scalar delay".into());
            }
            if let Some(LeaderDelaySpec::List(_)) = f.leader_delays {
                if matches!(f.variant, VariantSpec::SingleLeaderControlled { .. }) {
                    return Err("sweeping N needs a scalar leader_delays".into());
                }
            }
            f.n = value as usize;
        }
        SweepParam::M => match &mut f.variant {
            VariantSpec::SingleLeaderControlled { max_speed, .. } => *max_speed = value,
            _ => return Err("M applies to the single_leader_controlled system only".into()),
        },
    }
    Ok(f)
}

/// One row of the sweep summary.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub gamma_certified: Option<f64>,
    pub gamma_empirical: Option<f64>,
    pub pass_count: usize,
    pub check_count: usize,
    pub arrival_time: Option<f64>,
    pub status: String,
}

fn sweep_one(file: &ScenarioFile, source: &str, param: SweepParam, value: f64, out_dir: &Path) -> SweepRow {
    let mut row = SweepRow {
        value,
        gamma_certified: None,
        gamma_empirical: None,
        pass_count: 0,
        check_count: 0,
        arrival_time: None,
        status: String::new(),
    };
    let attempt = || -> Result<VerifyRun, CommandOutcome> {
        let f = apply_sweep(file, param, value).map_err(CommandOutcome::input)?;
        let loaded = f.load().map_err(|e| CommandOutcome::input(format!("scenario error: {e}")))?;
        let run = verify_scenario(&loaded)?;
        let label = format!("{source} [{}={value}]", param.name());
        write_file(
            &out_dir.join(format!("report_{}_{value}.txt", param.name())),
            &render_report(&label, &loaded, &run),
        )?;
        Ok(run)
    };
    match attempt() {
        Ok(run) => {
            row.gamma_certified = Some(run.certificate.gamma);
            row.gamma_empirical = run.empirical_rate;
            row.pass_count = run.pass_count();
            row.check_count = run.applicable_count();
            row.arrival_time = run.arrival_time;
            row.status = if run.passed() { "pass".into() } else { "fail".into() };
        }
        Err(e) => row.status = format!("error: {}", e.message.replace([',', '\n'], ";")),
    }
    row
}

pub fn sweep_summary_csv(rows: &[SweepRow]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.16e}"));
    let mut out = String::from("value,gamma_certified,gamma_empirical,pass_count,check_count,arrival_time,status\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.value,
            cell(r.gamma_certified),
            cell(r.gamma_empirical),
            r.pass_count,
            r.check_count,
            cell(r.arrival_time),
            r.status
        );
    }
    out
}

/// Runs `verify` for each value (independent runs, in parallel) and writes
/// per-value reports plus `summary.csv`. A failing run is recorded, not fatal.
pub fn cmd_sweep(scenario_path: &Path, param: SweepParam, values: &[f64], out_dir: &Path) -> (CommandOutcome, Vec<SweepRow>) {
    if values.is_empty() {
        return (CommandOutcome::input("sweep needs at least one value"), Vec::new());
    }
    let file = match ScenarioFile::read(scenario_path) {
        Ok(f) => f,
        Err(e) => return (CommandOutcome::input(format!("scenario error: {e}")), Vec::new()),
    };
    if let Err(e) = apply_sweep(&file, param, values[0]) {
        return (CommandOutcome::input(e), Vec::new());
    }
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        return (
            CommandOutcome::input(format!("cannot create {}: {e}", out_dir.display())),
            Vec::new(),
        );
    }
    let source = scenario_path.display().to_string();
    let rows: Vec<SweepRow> = std::thread::scope(|scope| {
        let handles: Vec<_> = values
            .iter()
            .map(|&v| {
                let (file, source) = (&file, &source);
                scope.spawn(move || sweep_one(file, source, param, v, out_dir))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let summary = out_dir.join("summary.csv");
    if let Err(e) = write_file(&summary, &sweep_summary_csv(&rows)) {
        return (e, rows);
    }
    let ok = rows.iter().filter(|r| r.status == "pass").count();
    (
        CommandOutcome::new(
            ExitStatus::Ok,
            format!("{ok}/{} runs passed; summary in {}", rows.len(), summary.display()),
        ),
        rows,
    )
}

pub fn cmd_plot(trajectory_path: &Path, out_svg_path: &Path) -> CommandOutcome {
    let run = || -> Result<CommandOutcome, CommandOutcome> {
        let text = std::fs::read_to_string(trajectory_path)
            .map_err(|e| CommandOutcome::input(format!("cannot read {}: {e}", trajectory_path.display())))?;
        let table = parse_csv(&text)
            .map_err(|e| CommandOutcome::input(format!("{}: {e}", trajectory_path.display())))?;
        write_file(out_svg_path, &render_svg(&table))?;
        Ok(CommandOutcome::new(ExitStatus::Ok, format!("wrote {}", out_svg_path.display())))
    };
    run().unwrap_or_else(|e| e)
}
