//! Fixed-step method-of-steps integration.
//!
//! States are recorded on the uniform grid `t_k = k * h`; delayed states
//! between stamps are linearly interpolated. Each step is one explicit
//! midpoint (second-order Runge-Kutta) update.

use crate::dynamics::{DelayedLookup, ModelRhs, SystemState};
use crate::error::{IntegrationError, LookupError};
use crate::model::{OpinionVec, ScenarioConfig};

/// A right-hand side `z' = f(t, z_t)` for the integrator.
pub trait RightHandSide {
    fn velocities(
        &self,
        state: &SystemState,
        past: &dyn DelayedLookup,
        out: &mut SystemState,
    ) -> Result<(), LookupError>;

    /// Hook applied to each accepted state.
    fn after_step(&self, _state: &mut SystemState, _step_h: f64) {}
}

const GRID_EPS: f64 = 1e-9;

/// Time-indexed record of all entities on `[-tau_max, t_current]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryBuffer {
    d: usize,
    n_followers: usize,
    n_leaders: usize,
    step_h: f64,
    tau_max: f64,
    /// Grid index of the first grid stamp (`k_min * h >= -tau_max`).
    k_min: i64,
    /// An extra stamp at exactly `-tau_max` precedes the grid when
    /// `tau_max` is not a multiple of `h`.
    lead: bool,
    times: Vec<f64>,
    states: Vec<f64>,
}

impl HistoryBuffer {
    /// Samples every agent's initial datum on the grid covering `[-tau_max, 0]`.
    pub fn from_scenario(scenario: &ScenarioConfig) -> Self {
        let h = scenario.step_h;
        let tau = scenario.tau_max();
        let ratio = tau / h;
        let (k_min, lead) = if (ratio - ratio.round()).abs() < GRID_EPS * ratio.max(1.0) {
            (-(ratio.round() as i64), false)
        } else {
            (-(ratio.floor() as i64), true)
        };
        let mut buffer = HistoryBuffer {
            d: scenario.d,
            n_followers: scenario.n,
            n_leaders: scenario.leader_count(),
            step_h: h,
            tau_max: tau,
            k_min,
            lead,
            times: Vec::new(),
            states: Vec::new(),
        };
        let mut stamps: Vec<f64> = Vec::new();
        if lead {
            stamps.push(-tau);
        }
        stamps.extend((k_min..=0).map(|k| k as f64 * h));
        for t in stamps {
            buffer.times.push(t);
            for hist in scenario.histories.iter().chain(&scenario.leader_histories) {
                buffer.states.extend_from_slice(&hist.value_at(t).0);
            }
        }
        buffer
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn entity_count(&self) -> usize {
        self.n_followers + self.n_leaders
    }

    pub fn follower_count(&self) -> usize {
        self.n_followers
    }

    pub fn step_h(&self) -> f64 {
        self.step_h
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, stamp: usize) -> f64 {
        self.times[stamp]
    }

    pub fn current_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Stamp index of `t = 0`.
    pub fn zero_stamp(&self) -> usize {
        self.lead as usize + (-self.k_min) as usize
    }

    fn row(&self) -> usize {
        self.d * self.entity_count()
    }

    pub fn state_slice(&self, stamp: usize) -> &[f64] {
        let row = self.row();
        &self.states[stamp * row..(stamp + 1) * row]
    }

    pub fn entity_at(&self, stamp: usize, entity: usize) -> &[f64] {
        let row = self.row();
        let start = stamp * row + entity * self.d;
        &self.states[start..start + self.d]
    }

    pub fn state_at_index(&self, stamp: usize) -> SystemState {
        SystemState::from_flat(
            self.times[stamp],
            self.d,
            self.n_followers,
            self.n_leaders,
            self.state_slice(stamp).to_vec(),
        )
    }

    /// Stamp whose time equals `t` up to rounding, if any.
    pub fn stamp_of(&self, t: f64) -> Option<usize> {
        if self.lead && (t - self.times[0]).abs() <= GRID_EPS * self.step_h {
            return Some(0);
        }
        let r = t / self.step_h - self.k_min as f64;
        let kr = r.round();
        if (r - kr).abs() < GRID_EPS && kr >= 0.0 {
            let s = self.lead as usize + kr as usize;
            (s < self.len()).then_some(s)
        } else {
            None
        }
    }

    pub(crate) fn push(&mut self, state: &[f64]) {
        debug_assert_eq!(state.len(), self.row());
        let k = self.k_min + (self.len() - self.lead as usize) as i64;
        self.times.push(k as f64 * self.step_h);
        self.states.extend_from_slice(state);
    }

    /// Linear interpolation of entity `e` at time `t`; exact at stamps.
    pub fn lookup_into(&self, entity: usize, t: f64, out: &mut [f64]) -> Result<(), LookupError> {
        let start = self.times[0];
        let end = self.current_time();
        let slack = GRID_EPS * self.step_h;
        if !(t >= start - slack && t <= end + slack) || entity >= self.entity_count() {
            return Err(LookupError { t, start, end, entity });
        }
        let (lo, w) = if self.lead && t < self.times[1] {
            (0, (t - self.times[0]) / (self.times[1] - self.times[0]))
        } else {
            let r = t / self.step_h - self.k_min as f64;
            let kr = r.round();
            if (r - kr).abs() < GRID_EPS {
                let s = (self.lead as usize + kr.max(0.0) as usize).min(self.len() - 1);
                out.copy_from_slice(self.entity_at(s, entity));
                return Ok(());
            }
            let k = r.floor().max(0.0);
            (self.lead as usize + k as usize, r - k)
        };
        if lo + 1 >= self.len() {
            out.copy_from_slice(self.entity_at(self.len() - 1, entity));
            return Ok(());
        }
        let a = self.entity_at(lo, entity);
        let b = self.entity_at(lo + 1, entity);
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = x + w * (y - x);
        }
        Ok(())
    }
}

impl DelayedLookup for HistoryBuffer {
    fn delayed_into(&self, entity: usize, t: f64, out: &mut [f64]) -> Result<(), LookupError> {
        self.lookup_into(entity, t, out)
    }
}

/// Delayed lookup during a step: times past the last accepted stamp (only
/// reachable for delays shorter than the step) interpolate toward the stage state.
struct StagedLookup<'a> {
    buffer: &'a HistoryBuffer,
    stage: &'a SystemState,
}

impl DelayedLookup for StagedLookup<'_> {
    fn delayed_into(&self, entity: usize, t: f64, out: &mut [f64]) -> Result<(), LookupError> {
        let t_n = self.buffer.current_time();
        if t <= t_n || self.stage.t <= t_n {
            return self.buffer.lookup_into(entity, t, out);
        }
        let a = self.buffer.entity_at(self.buffer.len() - 1, entity);
        let b = self.stage.entity(entity);
        let w = ((t - t_n) / (self.stage.t - t_n)).min(1.0);
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = x + w * (y - x);
        }
        Ok(())
    }
}

/// `x_j(t)` for agent `agent` from the buffer.
pub fn history_lookup(buffer: &HistoryBuffer, t: f64, agent: usize) -> Result<OpinionVec, LookupError> {
    let mut out = vec![0.0; buffer.dim()];
    buffer.lookup_into(agent, t, &mut out)?;
    Ok(OpinionVec(out))
}

/// A finished run: the scenario and its buffer extended to the horizon.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub scenario: ScenarioConfig,
    pub buffer: HistoryBuffer,
}

impl Trajectory {
    pub fn step_h(&self) -> f64 {
        self.buffer.step_h
    }

    pub fn tau(&self) -> f64 {
        self.buffer.tau_max
    }

    pub fn final_time(&self) -> f64 {
        self.buffer.current_time()
    }

    /// Stamps with `t >= 0`.
    pub fn forward_stamps(&self) -> std::ops::Range<usize> {
        self.buffer.zero_stamp()..self.buffer.len()
    }

    /// First grid time at which the controlled leader sits exactly on its target.
    pub fn arrival_time(&self) -> Option<f64> {
        let crate::model::ModelVariant::SingleLeaderControlled { target, .. } = &self.scenario.variant else {
            return None;
        };
        let e = self.scenario.n;
        self.forward_stamps()
            .find(|&s| self.buffer.entity_at(s, e) == target.as_slice())
            .map(|s| self.buffer.time(s))
    }
}

/// Integrates the scenario's own variant.
pub fn integrate(scenario: &ScenarioConfig) -> Result<Trajectory, IntegrationError> {
    integrate_with(scenario, &ModelRhs::new(scenario))
}

pub fn integrate_with(scenario: &ScenarioConfig, rhs: &dyn RightHandSide) -> Result<Trajectory, IntegrationError> {
    scenario.validate()?;
    let h = scenario.step_h;
    let mut buffer = HistoryBuffer::from_scenario(scenario);
    let steps = (scenario.horizon_t / h - GRID_EPS).ceil().max(0.0) as usize;
    let (d, n, m) = (scenario.d, scenario.n, scenario.leader_count());
    buffer.times.reserve(steps);
    buffer.states.reserve(steps * d * (n + m));

    let mut k1 = SystemState::zeros(0.0, d, n, m);
    let mut k2 = SystemState::zeros(0.0, d, n, m);
    for _ in 0..steps {
        let current = buffer.state_at_index(buffer.len() - 1);
        let t_n = current.t;
        rhs.velocities(&current, &StagedLookup { buffer: &buffer, stage: &current }, &mut k1)?;

        let mut mid = current.clone();
        mid.t = t_n + 0.5 * h;
        for (x, v) in mid.as_mut_slice().iter_mut().zip(k1.as_slice()) {
            *x += 0.5 * h * v;
        }
        rhs.velocities(&mid, &StagedLookup { buffer: &buffer, stage: &mid }, &mut k2)?;

        let mut next = current;
        for (x, v) in next.as_mut_slice().iter_mut().zip(k2.as_slice()) {
            *x += h * v;
        }
        rhs.after_step(&mut next, h);
        if let Some(pos) = next.as_slice().iter().position(|x| !x.is_finite()) {
            return Err(IntegrationError::NonFinite {
                t: t_n + h,
                entity: pos / d,
            });
        }
        buffer.push(next.as_slice());
    }
    Ok(Trajectory {
        scenario: scenario.clone(),
        buffer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn general(histories: Vec<History>, tau: f64, h: f64, horizon: f64) -> ScenarioConfig {
        let n = histories.len();
        ScenarioConfig {
            variant: ModelVariant::General,
            n,
            d: histories[0].dim(),
            chi: AdjacencyMask::complete(n),
            delays: DelayMatrix::uniform(n, tau).unwrap(),
            leader_delays: vec![],
            kernels: Kernels::all_shared(InfluenceKernel::constant(1.0).unwrap()),
            histories,
            leader_histories: vec![],
            step_h: h,
            horizon_t: horizon,
        }
    }

    fn c(x: &[f64]) -> History {
        History::Constant(OpinionVec(x.to_vec()))
    }

    #[test]
    fn constant_history_lookup() {
        let s = general(vec![c(&[2.0, 3.0]), c(&[0.0, 0.0])], 5.0, 0.1, 1.0);
        let b = HistoryBuffer::from_scenario(&s);
        assert_eq!(history_lookup(&b, -1.7, 0).unwrap().0, vec![2.0, 3.0]);
        assert_eq!(b.time(0), -5.0);
        assert_eq!(b.time(b.zero_stamp()), 0.0);
    }

    #[test]
    fn linear_interpolation_between_samples() {
        let hist = History::Samples(vec![(-1.0, OpinionVec(vec![0.0])), (0.0, OpinionVec(vec![2.0]))]);
        let s = general(vec![hist.clone(), hist], 1.0, 1.0, 1.0);
        let b = HistoryBuffer::from_scenario(&s);
        assert_eq!(b.len(), 2);
        let x = history_lookup(&b, -0.75, 0).unwrap();
        assert!((x.0[0] - 0.5).abs() < 1e-15);
        assert_eq!(history_lookup(&b, 0.0, 1).unwrap().0, vec![2.0]);
    }

    #[test]
    fn stamp_lookup_is_exact() {
        let s = general(vec![c(&[0.0]), c(&[1.0]), c(&[2.0])], 1.0, 0.01, 2.0);
        let traj = integrate(&s).unwrap();
        for stamp in [0, 57, 100, 250, traj.buffer.len() - 1] {
            let t = traj.buffer.time(stamp);
            let v = history_lookup(&traj.buffer, t, 1).unwrap();
            assert_eq!(v.0.as_slice(), traj.buffer.entity_at(stamp, 1));
        }
    }

    #[test]
    fn out_of_range_lookup_fails() {
        let s = general(vec![c(&[0.0]), c(&[1.0])], 1.0, 0.1, 1.0);
        let b = HistoryBuffer::from_scenario(&s);
        assert!(history_lookup(&b, -1.5, 0).is_err());
        assert!(history_lookup(&b, 0.5, 0).is_err());
    }

    #[test]
    fn off_grid_tau_gets_lead_stamp() {
        let s = general(vec![c(&[0.0]), c(&[1.0])], 0.25, 0.1, 0.3);
        let b = HistoryBuffer::from_scenario(&s);
        assert_eq!(b.time(0), -0.25);
        assert!((b.time(1) + 0.2).abs() < 1e-15);
        assert_eq!(b.time(b.zero_stamp()), 0.0);
        let traj = integrate(&s).unwrap();
        assert!(traj.final_time() >= 0.3 - 1e-12);
        assert!(traj.buffer.stamp_of(0.2).is_some());
        assert!(traj.buffer.stamp_of(0.25).is_none());
    }

    #[test]
    fn consensus_is_an_equilibrium() {
        let s = general(vec![c(&[1.5]); 4], 1.0, 0.01, 3.0);
        let traj = integrate(&s).unwrap();
        for stamp in 0..traj.buffer.len() {
            assert!(traj.buffer.state_slice(stamp).iter().all(|&x| x == 1.5));
        }
    }

    #[test]
    fn zero_delay_reduces_to_ode() {
        // x1' = (x2 - x1), x2' = (x1 - x2): difference decays like exp(-2t)
        let s = general(vec![c(&[0.0]), c(&[1.0])], 0.0, 1e-3, 1.0);
        let traj = integrate(&s).unwrap();
        let last = traj.buffer.len() - 1;
        let gap = traj.buffer.entity_at(last, 1)[0] - traj.buffer.entity_at(last, 0)[0];
        assert!((gap - (-2.0f64).exp()).abs() < 1e-6, "gap {gap}");
    }

    #[test]
    fn blow_up_is_reported() {
        struct Explode;
        impl RightHandSide for Explode {
            fn velocities(&self, s: &SystemState, _: &dyn DelayedLookup, out: &mut SystemState) -> Result<(), LookupError> {
                for e in 0..s.follower_count() {
                    out.entity_mut(e)[0] = if s.t > 0.5 { f64::INFINITY } else { 0.0 };
                }
                Ok(())
            }
        }
        let s = general(vec![c(&[0.0]), c(&[1.0])], 1.0, 0.1, 2.0);
        let err = integrate_with(&s, &Explode).unwrap_err();
        assert!(matches!(err, IntegrationError::NonFinite { t, entity: 0 } if (t - 0.6).abs() < 1e-9));
    }
}
