use crate::error::ConfigError;
use crate::integrator::HistoryBuffer;
use crate::model::{distance, KernelAssignment, ModelVariant, ScenarioConfig};

use super::point_set_diameter;

/// Constants implying `d(t) <= D0 * exp(-gamma (t - 2 tau))`.
///
/// `C` and `C~` sit extremely close to 1 for weak kernels, so their
/// complements are carried separately and `gamma` is computed from them.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayCertificate {
    pub variant: ModelVariant,
    /// Kernel supremum `K` (or `K~` over every family in play).
    pub k_sup: f64,
    /// Kernel infimum on the a-priori ball (`psi0`, or `min(psi0, phi0)`).
    pub psi0: f64,
    /// A-priori bound on `|z(t)|` (`M0` or `C0`).
    pub state_bound: f64,
    pub d0: f64,
    pub tau: f64,
    pub c: f64,
    /// `1 - C`
    pub contraction_gap: f64,
    pub c_tilde: f64,
    /// `1 - C~ = exp(-K tau) (1 - C)`
    pub c_tilde_gap: f64,
    /// `+inf` when `tau = 0` (no delay-interval structure to build on).
    pub gamma: f64,
    pub notes: Vec<String>,
}

impl DecayCertificate {
    /// `C * x` without losing the tiny complement.
    pub fn contract(&self, x: f64) -> f64 {
        x - self.contraction_gap * x
    }

    pub fn envelope(&self, d0: f64, t: f64) -> f64 {
        d0 * (-self.gamma * (t - 2.0 * self.tau)).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionConstants {
    pub c: f64,
    pub contraction_gap: f64,
    pub c_tilde: f64,
    pub c_tilde_gap: f64,
    pub gamma: f64,
}

/// `C`, `C~` and `gamma` from the kernel bounds.
///
/// * general: `1 - C = psi0/(K (N-1)) (1 - e^{-K tau})`
/// * `m >= 3` leaders: same with population `N + m`
/// * one leader: `1 - C = psi0/(K N) (1 - e^{-K tau})`
/// * two leaders: the smallest complement among the three contraction
///   cases `psi0/(K (N+1)) (1 - e^{-K tau})`, `e^{-2 K tau}` and
///   `psi0/K (1 - e^{-K tau})`, so `C` dominates each case
///
/// then `1 - C~ = e^{-K tau} (1 - C)` and `gamma = ln(1/C~) / (3 tau)`.
pub fn contraction_constants(
    variant: &ModelVariant,
    n: usize,
    k_sup: f64,
    psi0: f64,
    tau: f64,
) -> ContractionConstants {
    let spread = -(-k_sup * tau).exp_m1();
    let ratio = psi0 / k_sup;
    let gap = match variant {
        ModelVariant::General => ratio / (n - 1) as f64 * spread,
        ModelVariant::MultiLeader { m } => ratio / (n + m - 1) as f64 * spread,
        ModelVariant::SingleLeaderConstant { .. } | ModelVariant::SingleLeaderControlled { .. } => {
            ratio / n as f64 * spread
        }
        ModelVariant::TwoLeaders => {
            let follower_case = ratio / (n + 1) as f64 * spread;
            let crossing_case = (-2.0 * k_sup * tau).exp();
            let leader_case = ratio * spread;
            follower_case.min(crossing_case).min(leader_case)
        }
    };
    let c_tilde_gap = (-k_sup * tau).exp() * gap;
    let gamma = if tau > 0.0 {
        -(-c_tilde_gap).ln_1p() / (3.0 * tau)
    } else {
        f64::INFINITY
    };
    ContractionConstants {
        c: 1.0 - gap,
        contraction_gap: gap,
        c_tilde: 1.0 - c_tilde_gap,
        c_tilde_gap,
        gamma,
    }
}

/// `R = max |z(s) - target|` over every follower and leader datum.
pub fn target_radius(scenario: &ScenarioConfig, target: &[f64]) -> f64 {
    scenario
        .histories
        .iter()
        .chain(&scenario.leader_histories)
        .map(|h| h.sup_distance_to(target))
        .fold(0.0, f64::max)
}

/// A-priori bound on every `|z(t)|`, `t >= 0`.
///
/// Sup of all initial data (leaders included). For the controlled leader
/// the states stay within `R` of the target, so `|target| + R` is used.
pub fn state_bound(scenario: &ScenarioConfig) -> f64 {
    if let ModelVariant::SingleLeaderControlled { target, .. } = &scenario.variant {
        return target.norm() + target_radius(scenario, &target.0);
    }
    scenario
        .histories
        .iter()
        .chain(&scenario.leader_histories)
        .map(|h| h.sup_norm())
        .fold(0.0, f64::max)
}

/// `D_0` of the initial data on `[-tau, 0]`, sampled on the integration grid.
pub fn initial_interval_diameter(scenario: &ScenarioConfig) -> f64 {
    let buffer = HistoryBuffer::from_scenario(scenario);
    let points: Vec<f64> = (0..buffer.len()).flat_map(|s| buffer.state_slice(s).to_vec()).collect();
    point_set_diameter(&points, scenario.d)
}

fn families(scenario: &ScenarioConfig) -> Vec<&KernelAssignment> {
    let k = &scenario.kernels;
    match scenario.variant {
        ModelVariant::General => vec![&k.a],
        ModelVariant::SingleLeaderConstant { .. } | ModelVariant::SingleLeaderControlled { .. } => vec![&k.b, &k.c],
        ModelVariant::MultiLeader { .. } | ModelVariant::TwoLeaders => vec![&k.a, &k.b, &k.c],
    }
}

/// Certificate for the scenario, built before simulation from its data.
pub fn consensus_constants(scenario: &ScenarioConfig) -> Result<DecayCertificate, ConfigError> {
    scenario.validate()?;
    let bound = state_bound(scenario);
    let in_play = families(scenario);
    let k_sup = in_play.iter().map(|f| f.sup()).fold(0.0, f64::max);
    let mut psi0 = f64::INFINITY;
    for f in &in_play {
        psi0 = psi0.min(f.inf_on_ball(bound)?);
    }
    let tau = scenario.tau_max();
    let consts = contraction_constants(&scenario.variant, scenario.n, k_sup, psi0, tau);
    let mut notes = Vec::new();
    if tau <= 0.0 {
        notes.push("tau = 0: no contraction certified, gamma is the +inf sentinel".to_string());
    }
    match &scenario.variant {
        ModelVariant::MultiLeader { .. } => {
            notes.push("multi-leader constant uses the common-influencer bound with population N+m".into())
        }
        ModelVariant::TwoLeaders => notes.push("two-leader C dominates all three contraction cases".into()),
        ModelVariant::SingleLeaderControlled { target, .. } => {
            let r = target_radius(scenario, &target.0);
            let start = scenario.leader_histories[0].value_at(0.0);
            notes.push(format!(
                "controlled leader: R = {r:.6}, state bound |target| + R, expected arrival {:.6}",
                distance(&start.0, &target.0) / controlled_speed(&scenario.variant)
            ));
        }
        _ => {}
    }
    Ok(DecayCertificate {
        variant: scenario.variant.clone(),
        k_sup,
        psi0,
        state_bound: bound,
        d0: initial_interval_diameter(scenario),
        tau,
        c: consts.c,
        contraction_gap: consts.contraction_gap,
        c_tilde: consts.c_tilde,
        c_tilde_gap: consts.c_tilde_gap,
        gamma: consts.gamma,
        notes,
    })
}

fn controlled_speed(variant: &ModelVariant) -> f64 {
    match variant {
        ModelVariant::SingleLeaderControlled { max_speed, .. } => *max_speed,
        _ => f64::NAN,
    }
}
