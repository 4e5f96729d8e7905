//! Diameters, interval diameters, the common-influencer check, decay
//! certificates and the verifiers that test simulated runs against them.

mod certificate;
mod ci;
mod verify;

pub use certificate::{
    consensus_constants, contraction_constants, initial_interval_diameter, state_bound, target_radius,
    ContractionConstants, DecayCertificate,
};
pub use ci::{check_ci, check_ci_with_tolerance, interaction_graph, CiReport};
pub use verify::{
    default_tolerance, empirical_decay_rate, verify_all, verify_contraction, verify_decay_envelope,
    verify_hull_and_bound, verify_interval_monotonicity, verify_interval_recursion, verify_r_containment,
    CheckStatus, VerifierReport,
};

use crate::error::AnalysisError;
use crate::integrator::{HistoryBuffer, Trajectory};

/// Diameter of a point cloud stored row-major with stride `d`.
pub(crate) fn point_set_diameter(points: &[f64], d: usize) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    if d == 1 {
        let (lo, hi) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        return hi - lo;
    }
    let count = points.len() / d;
    let mut best = 0.0_f64;
    for a in 0..count {
        let pa = &points[a * d..(a + 1) * d];
        for b in a + 1..count {
            let pb = &points[b * d..(b + 1) * d];
            let sq: f64 = pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum();
            best = best.max(sq);
        }
    }
    best.sqrt()
}

pub(crate) fn stamp_diameter(buffer: &HistoryBuffer, stamp: usize) -> f64 {
    point_set_diameter(buffer.state_slice(stamp), buffer.dim())
}

/// Maximum pairwise distance over every tracked entity (followers and any
/// leaders) at grid time `t`.
pub fn diameter(trajectory: &Trajectory, t: f64) -> Result<f64, AnalysisError> {
    let stamp = trajectory.buffer.stamp_of(t).ok_or(AnalysisError::OffGrid { t })?;
    Ok(stamp_diameter(&trajectory.buffer, stamp))
}

/// Diameter at any recorded time, interpolating between stamps.
pub(crate) fn diameter_at_time(buffer: &HistoryBuffer, t: f64) -> Result<f64, AnalysisError> {
    if let Some(s) = buffer.stamp_of(t) {
        return Ok(stamp_diameter(buffer, s));
    }
    let points = state_at(buffer, t)?;
    Ok(point_set_diameter(&points, buffer.dim()))
}

pub(crate) fn state_at(buffer: &HistoryBuffer, t: f64) -> Result<Vec<f64>, AnalysisError> {
    let d = buffer.dim();
    let mut points = vec![0.0; d * buffer.entity_count()];
    for e in 0..buffer.entity_count() {
        buffer.lookup_into(e, t, &mut points[e * d..(e + 1) * d])?;
    }
    Ok(points)
}

/// Every entity's state over `[a, b]`: grid stamps inside the window plus
/// interpolated endpoints when those fall between stamps.
pub(crate) fn window_points(buffer: &HistoryBuffer, a: f64, b: f64) -> Result<Vec<f64>, AnalysisError> {
    let slack = 1e-9 * buffer.step_h();
    let times = buffer.times();
    let first = times.partition_point(|&t| t < a - slack);
    let last = times.partition_point(|&t| t <= b + slack);
    let mut points = Vec::new();
    if buffer.stamp_of(a).is_none() {
        points.extend(state_at(buffer, a)?);
    }
    for s in first..last {
        points.extend_from_slice(buffer.state_slice(s));
    }
    if buffer.stamp_of(b).is_none() {
        points.extend(state_at(buffer, b)?);
    }
    Ok(points)
}

/// `D_n` for windows `[origin + (n-1) tau, origin + n tau]`, `n = 0, 1, ...`
/// as far as the trajectory reaches.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalDiameters {
    pub tau: f64,
    pub origin: f64,
    pub values: Vec<f64>,
    pub note: Option<String>,
}

impl IntervalDiameters {
    pub fn window_end(&self, n: usize) -> f64 {
        self.origin + n as f64 * self.tau
    }
}

pub fn interval_diameters(trajectory: &Trajectory) -> Result<IntervalDiameters, AnalysisError> {
    interval_diameters_from(trajectory, 0.0)
}

/// Interval diameters for the system restarted at `origin` (used after the
/// controlled leader's arrival). Requires `origin - tau` to be recorded.
pub fn interval_diameters_from(trajectory: &Trajectory, origin: f64) -> Result<IntervalDiameters, AnalysisError> {
    let buffer = &trajectory.buffer;
    let tau = trajectory.tau();
    if tau <= 0.0 {
        return Ok(IntervalDiameters {
            tau,
            origin,
            values: vec![diameter_at_time(buffer, origin)?],
            note: Some("tau = 0: interval diameters degenerate to d(origin)".into()),
        });
    }
    let end = trajectory.final_time() + 1e-9 * trajectory.step_h();
    let mut values = Vec::new();
    let mut n = 0usize;
    loop {
        let b = origin + n as f64 * tau;
        if b > end {
            break;
        }
        let points = window_points(buffer, b - tau, b)?;
        values.push(point_set_diameter(&points, buffer.dim()));
        n += 1;
    }
    Ok(IntervalDiameters {
        tau,
        origin,
        values,
        note: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::integrate;
    use crate::model::*;

    fn scenario(histories: &[f64], leaders: Vec<History>, variant: ModelVariant) -> ScenarioConfig {
        let n = histories.len();
        let leader_delays = match variant {
            ModelVariant::TwoLeaders => vec![1.0, 1.0],
            _ => vec![],
        };
        ScenarioConfig {
            variant,
            n,
            d: 1,
            chi: AdjacencyMask::empty(n),
            delays: DelayMatrix::uniform(n, 1.0).unwrap(),
            leader_delays,
            kernels: Kernels::all_shared(InfluenceKernel::constant(1.0).unwrap()),
            histories: histories.iter().map(|&x| History::Constant(OpinionVec(vec![x]))).collect(),
            leader_histories: leaders,
            step_h: 0.1,
            horizon_t: 3.0,
        }
    }

    #[test]
    fn diameter_examples() {
        let s = scenario(&[0.0, 3.0], vec![], ModelVariant::General);
        let traj = integrate(&s).unwrap();
        assert_eq!(diameter(&traj, 0.0).unwrap(), 3.0);
        assert!(matches!(diameter(&traj, 0.05), Err(AnalysisError::OffGrid { .. })));

        let y0 = OpinionVec(vec![5.0]);
        let s = scenario(
            &[0.0, 1.0],
            vec![History::Constant(y0.clone())],
            ModelVariant::SingleLeaderConstant { y0 },
        );
        let traj = integrate(&s).unwrap();
        assert_eq!(diameter(&traj, 0.0).unwrap(), 5.0);

        let s = scenario(&[2.0, 2.0, 2.0], vec![], ModelVariant::General);
        assert_eq!(diameter(&integrate(&s).unwrap(), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn motionless_interval_diameters() {
        // chi = 0: nobody moves
        let s = scenario(&[0.0, 1.0, 2.0], vec![], ModelVariant::General);
        let traj = integrate(&s).unwrap();
        let dn = interval_diameters(&traj).unwrap();
        assert_eq!(dn.values, vec![2.0; 4]);
    }

    #[test]
    fn brute_force_diameter_in_2d() {
        let pts = [0.0, 0.0, 3.0, 4.0, 1.0, 1.0, 0.5, 0.5];
        assert_eq!(point_set_diameter(&pts, 2), 5.0);
    }
}
