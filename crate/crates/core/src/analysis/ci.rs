use std::collections::BTreeMap;

use crate::error::ConfigError;
use crate::model::{AdjacencyMask, DelayMatrix, ModelVariant, ScenarioConfig};

/// Outcome of the common-influencer check.
#[derive(Clone, Debug, PartialEq)]
pub struct CiReport {
    pub holds: bool,
    /// Every common influencer of each unordered pair `(i, j)`, `i < j`.
    /// Empty when the check fails.
    pub witnesses: BTreeMap<(usize, usize), Vec<usize>>,
    pub failing_pair: Option<(usize, usize)>,
    pub reason: Option<String>,
}

/// For every pair `i != j` look for `k` outside `{i, j}` with
/// `chi_ik = chi_jk = 1` and `tau_ik = tau_jk` (exact equality).
pub fn check_ci(chi: &AdjacencyMask, delays: &DelayMatrix) -> Result<CiReport, ConfigError> {
    check_ci_with_tolerance(chi, delays, 0.0)
}

/// Same as [`check_ci`], accepting delays that differ by at most `delay_tol`.
pub fn check_ci_with_tolerance(
    chi: &AdjacencyMask,
    delays: &DelayMatrix,
    delay_tol: f64,
) -> Result<CiReport, ConfigError> {
    let n = chi.size();
    if delays.size() != n {
        return Err(ConfigError::invalid(
            "delays",
            format!("expected {n}x{n} to match chi, got {0}x{0}", delays.size()),
        ));
    }
    if n < 3 {
        return Ok(CiReport {
            holds: false,
            witnesses: BTreeMap::new(),
            failing_pair: (n == 2).then_some((0, 1)),
            reason: Some("no third agent".into()),
        });
    }
    let mut witnesses = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            let found: Vec<usize> = (0..n)
                .filter(|&k| k != i && k != j)
                .filter(|&k| chi.get(i, k) && chi.get(j, k))
                .filter(|&k| (delays.get(i, k) - delays.get(j, k)).abs() <= delay_tol)
                .collect();
            if found.is_empty() {
                return Ok(CiReport {
                    holds: false,
                    witnesses: BTreeMap::new(),
                    failing_pair: Some((i, j)),
                    reason: Some(format!("agents {i} and {j} have no common influencer")),
                });
            }
            witnesses.insert((i, j), found);
        }
    }
    Ok(CiReport {
        holds: true,
        witnesses,
        failing_pair: None,
        reason: None,
    })
}

/// The whole population as a single interaction graph, for the variants
/// whose consensus estimate rests on the common-influencer assumption.
///
/// Multi-leader: entities `n..n+m` are leaders; every follower listens to
/// every leader and leaders listen to each other, with the source leader's
/// delay. Leaders ignore followers.
pub fn interaction_graph(scenario: &ScenarioConfig) -> Option<(AdjacencyMask, DelayMatrix)> {
    match scenario.variant {
        ModelVariant::General => Some((scenario.chi.clone(), scenario.delays.clone())),
        ModelVariant::MultiLeader { m } => {
            let n = scenario.n;
            let total = n + m;
            let mask = AdjacencyMask::from_fn(total, |i, j| {
                if i == j {
                    false
                } else if i < n && j < n {
                    scenario.chi.get(i, j)
                } else {
                    j >= n
                }
            });
            let delays = DelayMatrix::from_fn(total, |i, j| {
                if j >= n {
                    scenario.leader_delays[j - n]
                } else if i < n {
                    scenario.delays.get(i, j)
                } else {
                    0.0
                }
            })
            .ok()?;
            Some((mask, delays))
        }
        _ => None,
    }
}
