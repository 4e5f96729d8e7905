//! Right-hand sides of the five delayed systems and the leader control law.
//!
//! Entities are laid out followers first (`0..n`), then leaders
//! (`n..n + leader_count`). Every function reads the current state and
//! queries delayed states through [`DelayedLookup`].

use crate::error::LookupError;
use crate::integrator::RightHandSide;
use crate::model::{distance, ModelVariant, OpinionVec, ScenarioConfig};

/// Access to past states `z_e(t)` for any recorded `t`.
pub trait DelayedLookup {
    fn delayed_into(&self, entity: usize, t: f64, out: &mut [f64]) -> Result<(), LookupError>;
}

/// Snapshot of every follower and leader at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub t: f64,
    d: usize,
    n_followers: usize,
    n_leaders: usize,
    data: Vec<f64>,
}

impl SystemState {
    pub fn new(t: f64, followers: &[OpinionVec], leaders: &[OpinionVec]) -> Self {
        let d = followers.first().or(leaders.first()).map_or(0, OpinionVec::dim);
        let data = followers
            .iter()
            .chain(leaders)
            .flat_map(|v| v.0.iter().copied())
            .collect();
        SystemState {
            t,
            d,
            n_followers: followers.len(),
            n_leaders: leaders.len(),
            data,
        }
    }

    pub fn zeros(t: f64, d: usize, n_followers: usize, n_leaders: usize) -> Self {
        SystemState {
            t,
            d,
            n_followers,
            n_leaders,
            data: vec![0.0; d * (n_followers + n_leaders)],
        }
    }

    pub(crate) fn from_flat(t: f64, d: usize, n_followers: usize, n_leaders: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), d * (n_followers + n_leaders));
        SystemState {
            t,
            d,
            n_followers,
            n_leaders,
            data,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn follower_count(&self) -> usize {
        self.n_followers
    }

    pub fn leader_count(&self) -> usize {
        self.n_leaders
    }

    pub fn entity(&self, e: usize) -> &[f64] {
        &self.data[e * self.d..(e + 1) * self.d]
    }

    pub fn entity_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.data[e * self.d..(e + 1) * self.d]
    }

    pub fn follower(&self, i: usize) -> &[f64] {
        self.entity(i)
    }

    pub fn leader(&self, j: usize) -> &[f64] {
        self.entity(self.n_followers + j)
    }

    pub fn followers(&self) -> Vec<OpinionVec> {
        (0..self.n_followers).map(|i| OpinionVec(self.follower(i).to_vec())).collect()
    }

    pub fn leaders(&self) -> Vec<OpinionVec> {
        (0..self.n_leaders).map(|j| OpinionVec(self.leader(j).to_vec())).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// `out += weight * (target - x)`
#[inline]
fn pull(out: &mut [f64], weight: f64, target: &[f64], x: &[f64]) {
    for ((o, t), xi) in out.iter_mut().zip(target).zip(x) {
        *o += weight * (t - xi);
    }
}

#[inline]
fn scale(out: &mut [f64], factor: f64) {
    out.iter_mut().for_each(|o| *o *= factor);
}

/// Masked, delayed follower-follower sum `sum_{j != i} chi_ij k(x_i, x_j(t - tau_ij)) (x_j(t - tau_ij) - x_i)`
/// for follower `i`, accumulated into `acc` (unnormalized).
fn follower_sum(
    i: usize,
    state: &SystemState,
    past: &dyn DelayedLookup,
    scenario: &ScenarioConfig,
    family: &crate::model::KernelAssignment,
    acc: &mut [f64],
    scratch: &mut [f64],
) -> Result<(), LookupError> {
    let xi = state.follower(i);
    for j in 0..scenario.n {
        if j == i || !scenario.chi.get(i, j) {
            continue;
        }
        past.delayed_into(j, state.t - scenario.delays.get(i, j), scratch)?;
        let w = family.get(i, j).eval_raw(xi, scratch);
        pull(acc, w, scratch, xi);
    }
    Ok(())
}

/// System without leaders:
/// `x_i' = 1/(N-1) sum_{j != i} chi_ij psi_ij(x_i, x_j(t - tau_ij)) (x_j(t - tau_ij) - x_i)`.
pub fn rhs_general(
    state: &SystemState,
    past: &dyn DelayedLookup,
    scenario: &ScenarioConfig,
    out: &mut SystemState,
) -> Result<(), LookupError> {
    out.clear();
    out.t = state.t;
    let mut scratch = vec![0.0; state.d];
    let norm = 1.0 / (scenario.n - 1) as f64;
    for i in 0..scenario.n {
        let acc = out.entity_mut(i);
        follower_sum(i, state, past, scenario, &scenario.kernels.a, acc, &mut scratch)?;
        scale(acc, norm);
    }
    Ok(())
}

/// Leader-leader coupling shared by the multi- and two-leader systems:
/// leader `p` relaxes toward every other leader's delayed state, scaled by `norm`.
fn leaders_among_themselves(
    state: &SystemState,
    past: &dyn DelayedLookup,
    scenario: &ScenarioConfig,
    norm: f64,
    out: &mut SystemState,
    scratch: &mut [f64],
) -> Result<(), LookupError> {
    let n = scenario.n;
    let m = scenario.leader_count();
    for p in 0..m {
        let yp = state.leader(p);
        let acc = out.entity_mut(n + p);
        for q in 0..m {
            if q == p {
                continue;
            }
            past.delayed_into(n + q, state.t - scenario.leader_delays[q], scratch)?;
            let w = scenario.kernels.a.get(p, q).eval_raw(yp, scratch);
            pull(acc, w, scratch, yp);
        }
        scale(acc, norm);
    }
    Ok(())
}

/// Followers of the multi- and two-leader systems: masked follower sum plus
/// the full sum over leaders, both scaled by `norm`.
fn followers_with_leaders(
    state: &SystemState,
    past: &dyn DelayedLookup,
    scenario: &ScenarioConfig,
    norm: f64,
    out: &mut SystemState,
    scratch: &mut [f64],
) -> Result<(), LookupError> {
    let n = scenario.n;
    for i in 0..n {
        let xi = state.follower(i);
        let acc = out.entity_mut(i);
        follower_sum(i, state, past, scenario, &scenario.kernels.b, acc, scratch)?;
        for j in 0..scenario.leader_count() {
            past.delayed_into(n + j, state.t - scenario.leader_delays[j], scratch)?;
            let w = scenario.kernels.c.get(i, j).eval_raw(xi, scratch);
            pull(acc, w, scratch, xi);
        }
        scale(acc, norm);
    }
    Ok(())
}

/// `m >= 3` leaders coupled all-to-all with normalization `1/(m-1)`;
/// followers normalized by `1/(N+m-1)`.
pub fn rhs_multi_leader(
    state: &SystemState,
    past: &dyn DelayedLookup,
    scenario: &ScenarioConfig,
    out: &mut SystemState,
) -> Result<(), LookupError> {
    let m = scenario.leader_count();
    out.clear();
    out.t = state.t;
    let mut scratch = vec![0.0; state.d];
    leaders_among_themselves(state, past, scenario, 1.0 / (m - 1) as f64, out, &mut scratch)?;
    let norm = 1.0 / (scenario.n + m - 1) as f64;
    followers_with_leaders(state, past, scenario, norm, out, &mut scratch)
}

/// Two leaders each coupled only to the other (no normalization);
/// followers normalized by `1/(N+1)`.
pub fn rhs_two_leaders(
    state: &SystemState,
    past: &dyn DelayedLookup,
    scenario: &ScenarioConfig,
    out: &mut SystemState,
) -> Result<(), LookupError> {
    out.clear();
    out.t = state.t;
    let mut scratch = vec![0.0; state.d];
    leaders_among_themselves(state, past, scenario, 1.0, out, &mut scratch)?;
    let norm = 1.0 / (scenario.n + 1) as f64;
    followers_with_leaders(state, past, scenario, norm, out, &mut scratch)
}

/// Followers of the one-leader systems:
/// `x_i' = 1/N sum_{j != i} chi_ij b_ij (x_j(t - tau_ij) - x_i) + c_i/N (leader_signal - x_i)`
/// where the weight `c_i` is evaluated at `(x_i, leader_now)`.
fn followers_single_leader(
    state: &SystemState,
    past: &dyn DelayedLookup,
    scenario: &ScenarioConfig,
    delayed_leader: bool,
    out: &mut SystemState,
    scratch: &mut [f64],
) -> Result<(), LookupError> {
    let n = scenario.n;
    let norm = 1.0 / n as f64;
    let leader_now = state.leader(0);
    for i in 0..n {
        let xi = state.follower(i);
        let acc = out.entity_mut(i);
        follower_sum(i, state, past, scenario, &scenario.kernels.b, acc, scratch)?;
        if delayed_leader {
            past.delayed_into(n, state.t - scenario.leader_delay(i, 0), scratch)?;
        } else {
            scratch.copy_from_slice(leader_now);
        }
        let w = scenario.kernels.c.get(i, 0).eval_raw(xi, leader_now);
        pull(acc, w, scratch, xi);
        scale(acc, norm);
    }
    Ok(())
}

/// Constant leader `y0`: its velocity is identically zero.
pub fn rhs_single_leader_constant(
    state: &SystemState,
    past: &dyn DelayedLookup,
    scenario: &ScenarioConfig,
    out: &mut SystemState,
) -> Result<(), LookupError> {
    out.clear();
    out.t = state.t;
    let mut scratch = vec![0.0; state.d];
    followers_single_leader(state, past, scenario, false, out, &mut scratch)
}

/// Bang-bang steering toward `target`.
///
/// The direction is fixed by the initial leader position; the control is
/// switched off once the leader sits exactly at the target (the integrator
/// pins the leader there on arrival).
pub fn control_law(
    y0_initial: &OpinionVec,
    y0_current: &OpinionVec,
    target: &OpinionVec,
    max_speed: f64,
) -> OpinionVec {
    let mut u = vec![0.0; target.dim()];
    control_into(&y0_initial.0, &y0_current.0, &target.0, max_speed, &mut u);
    OpinionVec(u)
}

fn control_into(initial: &[f64], current: &[f64], target: &[f64], max_speed: f64, out: &mut [f64]) {
    let span = distance(target, initial);
    if current == target || span == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    for ((o, t), y) in out.iter_mut().zip(target).zip(initial) {
        *o = max_speed * (t - y) / span;
    }
}

/// Controlled leader `y0' = u`; followers see the delayed leader `y0(t - tau_i0)`.
pub fn rhs_single_leader_controlled(
    state: &SystemState,
    past: &dyn DelayedLookup,
    scenario: &ScenarioConfig,
    out: &mut SystemState,
) -> Result<(), LookupError> {
    let ModelVariant::SingleLeaderControlled { target, max_speed } = &scenario.variant else {
        panic!("rhs_single_leader_controlled called for {}", scenario.variant.name());
    };
    out.clear();
    out.t = state.t;
    let mut scratch = vec![0.0; state.d];
    followers_single_leader(state, past, scenario, true, out, &mut scratch)?;
    let initial = scenario.leader_histories[0].value_at(0.0);
    control_into(&initial.0, state.leader(0), &target.0, *max_speed, out.entity_mut(scenario.n));
    Ok(())
}

/// Right-hand side selected by the scenario's variant.
pub struct ModelRhs<'a> {
    scenario: &'a ScenarioConfig,
}

impl<'a> ModelRhs<'a> {
    pub fn new(scenario: &'a ScenarioConfig) -> Self {
        ModelRhs { scenario }
    }
}

impl RightHandSide for ModelRhs<'_> {
    fn velocities(
        &self,
        state: &SystemState,
        past: &dyn DelayedLookup,
        out: &mut SystemState,
    ) -> Result<(), LookupError> {
        let s = self.scenario;
        match s.variant {
            ModelVariant::General => rhs_general(state, past, s, out),
            ModelVariant::MultiLeader { .. } => rhs_multi_leader(state, past, s, out),
            ModelVariant::SingleLeaderConstant { .. } => rhs_single_leader_constant(state, past, s, out),
            ModelVariant::SingleLeaderControlled { .. } => rhs_single_leader_controlled(state, past, s, out),
            ModelVariant::TwoLeaders => rhs_two_leaders(state, past, s, out),
        }
    }

    /// Arrival detection for the controlled leader: once a step reaches or
    /// passes the target along the travel direction, snap to it exactly.
    fn after_step(&self, state: &mut SystemState, step_h: f64) {
        if let ModelVariant::SingleLeaderControlled { target, max_speed } = &self.scenario.variant {
            let e = self.scenario.n;
            let start = self.scenario.leader_histories[0].value_at(0.0);
            let y = state.entity_mut(e);
            if y == target.as_slice() {
                return;
            }
            let span = distance(&target.0, &start.0);
            let ahead: f64 = target
                .0
                .iter()
                .zip(&start.0)
                .zip(y.iter())
                .map(|((t, s), y)| (t - y) * (t - s))
                .sum::<f64>()
                / span.max(f64::MIN_POSITIVE);
            if ahead <= 1e-9 * max_speed * step_h {
                y.copy_from_slice(&target.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::HistoryBuffer;
    use crate::model::*;

    fn v(x: &[f64]) -> OpinionVec {
        OpinionVec(x.to_vec())
    }

    fn scenario(variant: ModelVariant, followers: &[f64], leaders: &[f64], kernel: InfluenceKernel) -> ScenarioConfig {
        let n = followers.len();
        let leader_delays = match variant {
            ModelVariant::General | ModelVariant::SingleLeaderConstant { .. } => vec![],
            ModelVariant::SingleLeaderControlled { .. } => vec![1.0; n],
            _ => vec![1.0; leaders.len()],
        };
        ScenarioConfig {
            variant,
            n,
            d: 1,
            chi: AdjacencyMask::complete(n),
            delays: DelayMatrix::uniform(n, 1.0).unwrap(),
            leader_delays,
            kernels: Kernels::all_shared(kernel),
            histories: followers.iter().map(|&x| History::Constant(v(&[x]))).collect(),
            leader_histories: leaders.iter().map(|&y| History::Constant(v(&[y]))).collect(),
            step_h: 0.01,
            horizon_t: 1.0,
        }
    }

    fn eval(s: &ScenarioConfig) -> SystemState {
        let buffer = HistoryBuffer::from_scenario(s);
        let state = buffer.state_at_index(buffer.len() - 1);
        let mut out = SystemState::zeros(0.0, s.d, s.n, s.leader_count());
        ModelRhs::new(s).velocities(&state, &buffer, &mut out).unwrap();
        out
    }

    #[test]
    fn general_hand_evaluation() {
        let s = scenario(ModelVariant::General, &[0.0, 1.0, 2.0], &[], InfluenceKernel::constant(1.0).unwrap());
        let out = eval(&s);
        assert_eq!(out.as_slice(), &[1.5, 0.0, -1.5]);
    }

    #[test]
    fn general_without_edges_is_still() {
        let mut s = scenario(ModelVariant::General, &[0.0, 1.0, 2.0], &[], InfluenceKernel::constant(1.0).unwrap());
        s.chi = AdjacencyMask::empty(3);
        assert!(eval(&s).as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn multi_leader_hand_evaluation() {
        let s = scenario(
            ModelVariant::MultiLeader { m: 3 },
            &[0.0],
            &[0.0, 3.0, 6.0],
            InfluenceKernel::constant(1.0).unwrap(),
        );
        let out = eval(&s);
        assert_eq!(out.leader(0), &[4.5]);
        assert_eq!(out.follower(0), &[3.0]);
    }

    #[test]
    fn single_leader_constant_hand_evaluation() {
        let s = scenario(
            ModelVariant::SingleLeaderConstant { y0: v(&[4.0]) },
            &[0.0, 2.0],
            &[4.0],
            InfluenceKernel::constant(1.0).unwrap(),
        );
        let out = eval(&s);
        assert_eq!(out.follower(0), &[3.0]);
        assert_eq!(out.leader(0), &[0.0]);
    }

    #[test]
    fn two_leaders_hand_evaluation() {
        let s = scenario(ModelVariant::TwoLeaders, &[1.0], &[0.0, 4.0], InfluenceKernel::constant(1.0).unwrap());
        let out = eval(&s);
        assert_eq!(out.leader(0), &[4.0]);
        assert_eq!(out.leader(1), &[-4.0]);
    }

    #[test]
    fn control_law_cases() {
        let u = control_law(&v(&[0.0, 0.0]), &v(&[1.0, 1.0]), &v(&[3.0, 4.0]), 1.0);
        assert!((u.0[0] - 0.6).abs() < 1e-15 && (u.0[1] - 0.8).abs() < 1e-15);
        assert!((u.norm() - 1.0).abs() < 1e-15);
        assert_eq!(control_law(&v(&[0.0, 0.0]), &v(&[3.0, 4.0]), &v(&[3.0, 4.0]), 1.0), v(&[0.0, 0.0]));
        assert_eq!(control_law(&v(&[3.0]), &v(&[3.0]), &v(&[3.0]), 2.0), v(&[0.0]));
    }

    #[test]
    fn controlled_with_reached_target_matches_constant_leader() {
        let kernel = InfluenceKernel::gaussian(1.0, 1.0).unwrap();
        let c = scenario(ModelVariant::SingleLeaderConstant { y0: v(&[2.5]) }, &[0.0, 2.0, 3.0], &[2.5], kernel.clone());
        let mut k = scenario(
            ModelVariant::SingleLeaderControlled { target: v(&[2.5]), max_speed: 1.0 },
            &[0.0, 2.0, 3.0],
            &[2.5],
            kernel,
        );
        k.leader_delays = vec![1.0; 3];
        assert_eq!(eval(&c), eval(&k));
    }
}
