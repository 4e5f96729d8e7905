use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::AnalysisError;
use crate::integrator::{HistoryBuffer, Trajectory};
use crate::model::{distance, norm, ModelVariant};

use super::certificate::{target_radius, DecayCertificate};
use super::ci::{check_ci, interaction_graph, CiReport};
use super::{diameter_at_time, interval_diameters_from, point_set_diameter, stamp_diameter, state_at, window_points};

const HULL_DIRECTIONS: usize = 100;
const HULL_SEED: u64 = 0x4b5f_d1a7;

/// `max(10 h^2, 1e-9)`: discretization slack accepted by every inequality check.
pub fn default_tolerance(step_h: f64) -> f64 {
    (10.0 * step_h * step_h).max(1e-9)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The estimate does not apply (missing assumption or degenerate delay).
    Inapplicable,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Inapplicable => "INAPPLICABLE",
        })
    }
}

/// Outcome of one check. `worst_margin` is `bound - measured` at the
/// tightest point; the check fails iff `-worst_margin > tolerance`.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifierReport {
    pub name: String,
    pub status: CheckStatus,
    pub worst_margin: f64,
    pub location: String,
    pub tolerance: f64,
    pub note: String,
}

impl VerifierReport {
    fn from_margin(name: &str, margin: f64, location: String, tolerance: f64, note: impl Into<String>) -> Self {
        let status = if margin >= -tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        VerifierReport {
            name: name.into(),
            status,
            worst_margin: margin,
            location,
            tolerance,
            note: note.into(),
        }
    }

    fn inapplicable(name: &str, tolerance: f64, note: impl Into<String>) -> Self {
        VerifierReport {
            name: name.into(),
            status: CheckStatus::Inapplicable,
            worst_margin: f64::NAN,
            location: "-".into(),
            tolerance,
            note: note.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    /// `name STATUS margin tolerance location note` on one line.
    pub fn summary_line(&self) -> String {
        let margin = if self.worst_margin.is_nan() {
            "n/a".to_string()
        } else {
            format!("{:+.6e}", self.worst_margin)
        };
        let mut line = format!(
            "{:<22} {:<12} margin={:<14} tol={:.3e} at={}",
            self.name, self.status, margin, self.tolerance, self.location
        );
        if !self.note.is_empty() {
            line.push_str(" | ");
            line.push_str(&self.note);
        }
        line
    }
}

/// Tracks the smallest margin seen and where it occurred.
struct Worst {
    margin: f64,
    location: String,
}

impl Worst {
    fn new() -> Self {
        Worst {
            margin: f64::INFINITY,
            location: "-".into(),
        }
    }

    fn update(&mut self, margin: f64, location: impl FnOnce() -> String) {
        if margin < self.margin {
            self.margin = margin;
            self.location = location();
        }
    }
}

/// Common-influencer status for the variants whose estimate needs it.
fn ci_status(trajectory: &Trajectory) -> Option<CiReport> {
    let (mask, delays) = interaction_graph(&trajectory.scenario)?;
    check_ci(&mask, &delays).ok()
}

fn ci_gate(trajectory: &Trajectory, name: &str, tol: f64) -> Option<VerifierReport> {
    match ci_status(trajectory) {
        Some(r) if !r.holds => Some(VerifierReport::inapplicable(
            name,
            tol,
            format!(
                "certificate inapplicable: common influencer fails at {:?}",
                r.failing_pair.unwrap_or((0, 0))
            ),
        )),
        _ => None,
    }
}

/// Start of the analysed system: `0`, or for the controlled leader the
/// arrival time plus `tau` (from then on followers only see the parked leader).
fn analysis_origin(trajectory: &Trajectory) -> Result<f64, String> {
    match trajectory.scenario.variant {
        ModelVariant::SingleLeaderControlled { .. } => match trajectory.arrival_time() {
            Some(t) if t + trajectory.tau() <= trajectory.final_time() + 1e-9 => Ok(t + trajectory.tau()),
            Some(t) => Err(format!("leader arrives at {t} too close to the horizon")),
            None => Err("leader never reached the target".into()),
        },
        _ => Ok(0.0),
    }
}

const TAU_ZERO: &str = "tau = 0: estimate built on delay intervals does not apply";

/// `d(t) <= D0 exp(-gamma (t - 2 tau))` at every grid time in scope.
///
/// For the controlled leader the system is restarted after arrival and
/// `D0` is the interval diameter of the first post-arrival window.
pub fn verify_decay_envelope(trajectory: &Trajectory, cert: &DecayCertificate, tol: f64) -> VerifierReport {
    const NAME: &str = "decay_envelope";
    if let Some(r) = ci_gate(trajectory, NAME, tol) {
        return r;
    }
    if cert.tau <= 0.0 {
        return VerifierReport::inapplicable(NAME, tol, TAU_ZERO);
    }
    let buffer = &trajectory.buffer;
    let (d0, shift, first_time, note) = match &trajectory.scenario.variant {
        ModelVariant::SingleLeaderControlled { .. } => {
            let origin = match analysis_origin(trajectory) {
                Ok(o) => o,
                Err(e) => return VerifierReport::from_margin(NAME, f64::NEG_INFINITY, "-".into(), tol, e),
            };
            let arrival = origin - cert.tau;
            let d0 = match window_points(buffer, arrival, origin) {
                Ok(p) => point_set_diameter(&p, buffer.dim()),
                Err(e) => return VerifierReport::from_margin(NAME, f64::NEG_INFINITY, "-".into(), tol, e.to_string()),
            };
            (d0, origin, arrival, format!("restarted at arrival t0={arrival:.6}, D0'={d0:.6e}"))
        }
        _ => (cert.d0, 0.0, 0.0, format!("D0={:.6e} gamma={:.6e}", cert.d0, cert.gamma)),
    };
    let mut worst = Worst::new();
    for s in trajectory.forward_stamps() {
        let t = buffer.time(s);
        if t < first_time - 1e-9 * trajectory.step_h() {
            continue;
        }
        let bound = cert.envelope(d0, t - shift);
        let margin = bound - stamp_diameter(buffer, s);
        worst.update(margin, || format!("t={t:.6}"));
    }
    VerifierReport::from_margin(NAME, worst.margin, worst.location, tol, note)
}

/// `D_{n+1} <= e^{-K tau} d(n tau) + (1 - e^{-K tau}) D_n`.
pub fn verify_interval_recursion(trajectory: &Trajectory, cert: &DecayCertificate, tol: f64) -> VerifierReport {
    const NAME: &str = "interval_recursion";
    if cert.tau <= 0.0 {
        return VerifierReport::inapplicable(NAME, tol, TAU_ZERO);
    }
    let result = (|| -> Result<Worst, AnalysisError> {
        let origin = analysis_origin(trajectory).unwrap_or(0.0);
        let dn = interval_diameters_from(trajectory, origin)?;
        let decay = (-cert.k_sup * cert.tau).exp();
        let mut worst = Worst::new();
        for n in 0..dn.values.len().saturating_sub(1) {
            let d_at = diameter_at_time(&trajectory.buffer, dn.window_end(n))?;
            let rhs = decay * d_at + (1.0 - decay) * dn.values[n];
            worst.update(rhs - dn.values[n + 1], || format!("n={n}"));
        }
        Ok(worst)
    })();
    finish(NAME, result, trajectory, tol)
}

/// `D_{n+1} <= D_n`.
pub fn verify_interval_monotonicity(trajectory: &Trajectory, tol: f64) -> VerifierReport {
    const NAME: &str = "interval_monotone";
    if trajectory.tau() <= 0.0 {
        return VerifierReport::inapplicable(NAME, tol, TAU_ZERO);
    }
    let result = (|| -> Result<Worst, AnalysisError> {
        let origin = analysis_origin(trajectory).unwrap_or(0.0);
        let dn = interval_diameters_from(trajectory, origin)?;
        let mut worst = Worst::new();
        for (n, pair) in dn.values.windows(2).enumerate() {
            worst.update(pair[0] - pair[1], || format!("n={n}"));
        }
        Ok(worst)
    })();
    finish(NAME, result, trajectory, tol)
}

/// `d(n tau) <= C D_{n-2}` for `n >= 2`.
pub fn verify_contraction(trajectory: &Trajectory, cert: &DecayCertificate, tol: f64) -> VerifierReport {
    const NAME: &str = "contraction";
    if let Some(r) = ci_gate(trajectory, NAME, tol) {
        return r;
    }
    if cert.tau <= 0.0 {
        return VerifierReport::inapplicable(NAME, tol, TAU_ZERO);
    }
    let result = (|| -> Result<Worst, AnalysisError> {
        let origin = analysis_origin(trajectory).unwrap_or(0.0);
        let dn = interval_diameters_from(trajectory, origin)?;
        let mut worst = Worst::new();
        for n in 2..dn.values.len() {
            let d_at = diameter_at_time(&trajectory.buffer, dn.window_end(n))?;
            worst.update(cert.contract(dn.values[n - 2]) - d_at, || format!("n={n}"));
        }
        Ok(worst)
    })();
    finish(NAME, result, trajectory, tol)
}

fn finish(name: &str, result: Result<Worst, AnalysisError>, trajectory: &Trajectory, tol: f64) -> VerifierReport {
    let note = match analysis_origin(trajectory) {
        Ok(o) if o > 0.0 => format!("windows from origin {o:.6}"),
        Ok(_) => String::new(),
        Err(e) => e,
    };
    match result {
        Ok(w) if w.margin.is_infinite() => VerifierReport::from_margin(name, 0.0, "-".into(), tol, "too few windows"),
        Ok(w) => VerifierReport::from_margin(name, w.margin, w.location, tol, note),
        Err(e) => VerifierReport::from_margin(name, f64::NEG_INFINITY, "-".into(), tol, e.to_string()),
    }
}

/// The `d` coordinate axes followed by seeded random unit directions.
fn hull_directions(d: usize) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .map(|k| (0..d).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(HULL_SEED);
    while dirs.len() < d + HULL_DIRECTIONS {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let len = norm(&v);
        if len > 1e-3 {
            dirs.push(v.into_iter().map(|x| x / len).collect());
        }
    }
    dirs
}

fn projection_extremes(buffer: &HistoryBuffer, dir: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = buffer.dim();
    let mut hi = Vec::with_capacity(buffer.len());
    let mut lo = Vec::with_capacity(buffer.len());
    for s in 0..buffer.len() {
        let (mut mx, mut mn) = (f64::NEG_INFINITY, f64::INFINITY);
        for p in buffer.state_slice(s).chunks_exact(d) {
            let proj: f64 = p.iter().zip(dir).map(|(a, b)| a * b).sum();
            mx = mx.max(proj);
            mn = mn.min(proj);
        }
        hi.push(mx);
        lo.push(mn);
    }
    (hi, lo)
}

/// Directional hull containment at `T in {origin, origin + tau, ...}` and
/// the a-priori norm bound for every `t >= 0`.
pub fn verify_hull_and_bound(trajectory: &Trajectory, tol: f64) -> VerifierReport {
    const NAME: &str = "hull_and_bound";
    let buffer = &trajectory.buffer;
    let scenario = &trajectory.scenario;
    let bound = super::certificate::state_bound(scenario);
    let mut worst = Worst::new();
    for s in trajectory.forward_stamps() {
        let largest = buffer
            .state_slice(s)
            .chunks_exact(buffer.dim())
            .map(norm)
            .fold(0.0, f64::max);
        worst.update(bound - largest, || format!("norm bound t={:.6}", buffer.time(s)));
    }

    let tau = trajectory.tau();
    let mut note = format!("bound={bound:.6e}");
    let origin = match analysis_origin(trajectory) {
        Ok(o) => Some(o),
        Err(e) => {
            note.push_str(&format!("; hull skipped: {e}"));
            None
        }
    };
    match origin {
        Some(_) if tau <= 0.0 => note.push_str("; hull skipped: tau = 0"),
        Some(origin) => {
            let slack = 1e-9 * trajectory.step_h();
            let end = trajectory.final_time() + slack;
            let times = buffer.times();
            let mut dir_count = 0;
            for dir in hull_directions(buffer.dim()) {
                dir_count += 1;
                let (hi, lo) = projection_extremes(buffer, &dir);
                let mut suffix_hi = hi.clone();
                let mut suffix_lo = lo.clone();
                for s in (0..buffer.len().saturating_sub(1)).rev() {
                    suffix_hi[s] = suffix_hi[s].max(suffix_hi[s + 1]);
                    suffix_lo[s] = suffix_lo[s].min(suffix_lo[s + 1]);
                }
                let mut n = 0usize;
                loop {
                    let t_end = origin + n as f64 * tau;
                    if t_end > end {
                        break;
                    }
                    let a = t_end - tau;
                    let first = times.partition_point(|&t| t < a - slack);
                    let last = times.partition_point(|&t| t <= t_end + slack);
                    let mut win_hi = hi[first..last].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut win_lo = lo[first..last].iter().copied().fold(f64::INFINITY, f64::min);
                    for edge in [a, t_end] {
                        if buffer.stamp_of(edge).is_none() {
                            if let Ok(points) = state_at(buffer, edge) {
                                for p in points.chunks_exact(buffer.dim()) {
                                    let proj: f64 = p.iter().zip(&dir).map(|(x, y)| x * y).sum();
                                    win_hi = win_hi.max(proj);
                                    win_lo = win_lo.min(proj);
                                }
                            }
                        }
                    }
                    if first < buffer.len() {
                        let margin = (win_hi - suffix_hi[first]).min(suffix_lo[first] - win_lo);
                        worst.update(margin, || format!("hull T={t_end:.6} dir#{}", dir_count - 1));
                    }
                    n += 1;
                }
            }
            note.push_str(&format!("; {dir_count} directions"));
        }
        None => {}
    }
    VerifierReport::from_margin(NAME, worst.margin, worst.location, tol, note)
}

/// Controlled leader: followers stay within `R` of the target, the leader
/// arrives within one step of `|y0 - target| / M` and stays parked.
pub fn verify_r_containment(trajectory: &Trajectory, tol: f64) -> VerifierReport {
    const NAME: &str = "r_containment";
    let scenario = &trajectory.scenario;
    let ModelVariant::SingleLeaderControlled { target, max_speed } = &scenario.variant else {
        return VerifierReport::inapplicable(NAME, tol, "controlled-leader variant only");
    };
    let buffer = &trajectory.buffer;
    let h = trajectory.step_h();
    let r = target_radius(scenario, &target.0);
    let mut worst = Worst::new();
    for s in trajectory.forward_stamps() {
        for i in 0..scenario.n {
            let dist = distance(buffer.entity_at(s, i), &target.0);
            worst.update(r - dist, || format!("t={:.6} follower {i}", buffer.time(s)));
        }
    }
    let start = scenario.leader_histories[0].value_at(0.0);
    let expected = distance(&start.0, &target.0) / max_speed;
    let note = match trajectory.arrival_time() {
        None => {
            worst.update(f64::NEG_INFINITY, || "leader never arrived".into());
            format!("R={r:.6}; expected arrival {expected:.6}, none measured")
        }
        Some(arrival) => {
            worst.update(h - (arrival - expected).abs(), || format!("arrival t={arrival:.6}"));
            for s in trajectory.forward_stamps() {
                if buffer.time(s) >= arrival {
                    let off = distance(buffer.entity_at(s, scenario.n), &target.0);
                    worst.update(-off, || format!("leader left target at t={:.6}", buffer.time(s)));
                }
            }
            format!("R={r:.6}; arrival {arrival:.6} vs expected {expected:.6}")
        }
    };
    VerifierReport::from_margin(NAME, worst.margin, worst.location, tol, note)
}

/// Common-influencer check as a report line.
fn ci_report(trajectory: &Trajectory) -> Option<VerifierReport> {
    let r = ci_status(trajectory)?;
    Some(if r.holds {
        VerifierReport::from_margin(
            "common_influencer",
            0.0,
            "-".into(),
            0.0,
            format!("{} pairs witnessed", r.witnesses.len()),
        )
    } else {
        let (i, j) = r.failing_pair.unwrap_or((0, 0));
        VerifierReport::from_margin(
            "common_influencer",
            -1.0,
            format!("pair ({i},{j})"),
            0.0,
            r.reason.unwrap_or_default(),
        )
    })
}

/// Every check applicable to the trajectory's variant, in a fixed order.
pub fn verify_all(trajectory: &Trajectory, cert: &DecayCertificate, tol: f64) -> Vec<VerifierReport> {
    let mut reports = Vec::new();
    reports.extend(ci_report(trajectory));
    reports.push(verify_hull_and_bound(trajectory, tol));
    reports.push(verify_interval_monotonicity(trajectory, tol));
    reports.push(verify_interval_recursion(trajectory, cert, tol));
    reports.push(verify_contraction(trajectory, cert, tol));
    reports.push(verify_decay_envelope(trajectory, cert, tol));
    if matches!(trajectory.scenario.variant, ModelVariant::SingleLeaderControlled { .. }) {
        reports.push(verify_r_containment(trajectory, tol));
    }
    reports
}

/// Least-squares decay rate of `d(t)` sampled every `tau` (every unit of
/// time when `tau = 0`), ignoring samples at the round-off floor.
pub fn empirical_decay_rate(trajectory: &Trajectory) -> Option<f64> {
    let spacing = if trajectory.tau() > 0.0 { trajectory.tau() } else { 1.0 };
    let d0 = stamp_diameter(&trajectory.buffer, trajectory.buffer.zero_stamp());
    let floor = 1e-12 * d0.max(1e-300);
    let mut pts = Vec::new();
    let mut t = 0.0;
    while t <= trajectory.final_time() + 1e-9 {
        if let Ok(d) = diameter_at_time(&trajectory.buffer, t) {
            if d > floor {
                pts.push((t, d.ln()));
            }
        }
        t += spacing;
    }
    if pts.len() < 2 {
        return None;
    }
    let count = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / count;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / count;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_y)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::consensus_constants;
    use crate::integrator::integrate;
    use crate::model::*;

    fn general(xs: &[f64], tau: f64, horizon: f64) -> ScenarioConfig {
        let n = xs.len();
        ScenarioConfig {
            variant: ModelVariant::General,
            n,
            d: 1,
            chi: AdjacencyMask::complete(n),
            delays: DelayMatrix::uniform(n, tau).unwrap(),
            leader_delays: vec![],
            kernels: Kernels::all_shared(InfluenceKernel::constant(1.0).unwrap()),
            histories: xs.iter().map(|&x| History::Constant(OpinionVec(vec![x]))).collect(),
            leader_histories: vec![],
            step_h: 0.01,
            horizon_t: horizon,
        }
    }

    #[test]
    fn tolerance_floor() {
        assert_eq!(default_tolerance(0.01), 10.0 * 0.01 * 0.01);
        assert_eq!(default_tolerance(1e-6), 1e-9);
    }

    #[test]
    fn all_checks_pass_on_a_simple_consensus_run() {
        let s = general(&[0.0, 1.0, 3.0, 4.0], 1.0, 40.0);
        let traj = integrate(&s).unwrap();
        let cert = consensus_constants(&s).unwrap();
        let reports = verify_all(&traj, &cert, default_tolerance(0.01));
        assert_eq!(reports.len(), 6);
        for r in &reports {
            assert_eq!(r.status, CheckStatus::Pass, "{}", r.summary_line());
        }
    }

    #[test]
    fn envelope_rejects_an_overstated_rate() {
        let s = general(&[0.0, 1.0, 3.0, 4.0], 1.0, 40.0);
        let traj = integrate(&s).unwrap();
        let mut cert = consensus_constants(&s).unwrap();
        cert.gamma = 2.0 * empirical_decay_rate(&traj).unwrap();
        let r = verify_decay_envelope(&traj, &cert, default_tolerance(0.01));
        assert_eq!(r.status, CheckStatus::Fail);
        assert!(r.worst_margin < -r.tolerance);
    }

    #[test]
    fn contraction_rejects_an_overstated_constant() {
        let s = general(&[0.0, 1.0, 3.0, 4.0], 1.0, 40.0);
        let traj = integrate(&s).unwrap();
        let mut cert = consensus_constants(&s).unwrap();
        cert.contraction_gap = 1.0;
        assert_eq!(verify_contraction(&traj, &cert, 1e-12).status, CheckStatus::Fail);
    }

    #[test]
    fn missing_common_influencer_makes_envelope_inapplicable() {
        let mut s = general(&[0.0, 1.0, 3.0], 1.0, 5.0);
        s.chi = AdjacencyMask::from_fn(3, |i, j| j == 0 && i != 0);
        let traj = integrate(&s).unwrap();
        let cert = consensus_constants(&s).unwrap();
        let r = verify_decay_envelope(&traj, &cert, 1e-3);
        assert_eq!(r.status, CheckStatus::Inapplicable);
        assert!(r.note.contains("(0, 1)"));
        let all = verify_all(&traj, &cert, 1e-3);
        assert_eq!(all[0].name, "common_influencer");
        assert_eq!(all[0].status, CheckStatus::Fail);
    }

    #[test]
    fn zero_delay_rate_matches_the_ode() {
        // two agents, no delay: the gap decays like exp(-2 t)
        let traj = integrate(&general(&[0.0, 1.0], 0.0, 10.0)).unwrap();
        let rate = empirical_decay_rate(&traj).unwrap();
        assert!((rate - 2.0).abs() < 1e-3, "{rate}");
    }

    #[test]
    fn r_containment_only_for_controlled() {
        let traj = integrate(&general(&[0.0, 1.0, 2.0], 1.0, 2.0)).unwrap();
        assert_eq!(verify_r_containment(&traj, 1e-3).status, CheckStatus::Inapplicable);
    }

    struct Spread;

    impl crate::integrator::RightHandSide for Spread {
        fn velocities(
            &self,
            state: &crate::dynamics::SystemState,
            _past: &dyn crate::dynamics::DelayedLookup,
            out: &mut crate::dynamics::SystemState,
        ) -> Result<(), crate::error::LookupError> {
            for e in 0..state.follower_count() {
                out.entity_mut(e)[0] = state.entity(e)[0];
            }
            Ok(())
        }
    }

    #[test]
    fn hull_violation_is_detected() {
        let s = general(&[1.0, 2.0], 0.5, 2.0);
        let traj = crate::integrator::integrate_with(&s, &Spread).unwrap();
        let r = verify_hull_and_bound(&traj, 1e-9);
        assert_eq!(r.status, CheckStatus::Fail);
        assert!(r.worst_margin < -1.0);
    }
}
