//! Domain types for the delayed opinion models and the kernel bounds
//! (supremum and ball infimum) that every consensus constant depends on.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// An agent's opinion, a point in R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpinionVec(pub Vec<f64>);

impl OpinionVec {
    pub fn new(coords: Vec<f64>) -> Result<Self, ConfigError> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(ConfigError::invalid("opinion", "all coordinates must be finite"));
        }
        Ok(OpinionVec(coords))
    }

    pub fn zeros(d: usize) -> Self {
        OpinionVec(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl From<Vec<f64>> for OpinionVec {
    fn from(v: Vec<f64>) -> Self {
        OpinionVec(v)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Square matrix of pairwise transmission delays. Diagonal entries are unused.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DelayMatrix {
    pub fn uniform(n: usize, tau: f64) -> Result<Self, ConfigError> {
        Self::from_fn(n, |_, _| tau)
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, ConfigError> {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(if i == j { 0.0 } else { f(i, j) });
            }
        }
        Self::check(n, entries)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ConfigError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(ConfigError::invalid("delays", "matrix must be square"));
        }
        Self::check(n, rows.into_iter().flatten().collect())
    }

    fn check(n: usize, entries: Vec<f64>) -> Result<Self, ConfigError> {
        for (k, &v) in entries.iter().enumerate() {
            if k / n.max(1) != k % n.max(1) && !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::invalid(
                    format!("delays[{}][{}]", k / n, k % n),
                    format!("delay must be finite and nonnegative, got {v}"),
                ));
            }
        }
        Ok(DelayMatrix { n, entries })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Largest off-diagonal delay among the pairs selected by `used`.
    pub fn max_where(&self, used: impl Fn(usize, usize) -> bool) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && used(i, j) {
                    m = m.max(self.get(i, j));
                }
            }
        }
        m
    }
}

/// `entries[i][j] = true` iff agent j transmits information to agent i.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyMask {
    n: usize,
    entries: Vec<bool>,
}

impl AdjacencyMask {
    pub fn complete(n: usize) -> Self {
        AdjacencyMask {
            n,
            entries: (0..n * n).map(|k| k / n != k % n).collect(),
        }
    }

    pub fn empty(n: usize) -> Self {
        AdjacencyMask {
            n,
            entries: vec![false; n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        AdjacencyMask {
            n,
            entries: (0..n * n).map(|k| f(k / n, k % n)).collect(),
        }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self, ConfigError> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ConfigError::invalid(
                    format!("chi[{i}]"),
                    format!("expected {n} entries, got {}", row.len()),
                ));
            }
            for (j, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(ConfigError::invalid(format!("chi[{i}][{j}]"), "entries must be 0 or 1"));
                }
                entries.push(v == 1);
            }
        }
        Ok(AdjacencyMask { n, entries })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Diagonal entries always read as absent.
    pub fn get(&self, i: usize, j: usize) -> bool {
        i != j && self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.entries[i * self.n + j] = value;
    }
}

/// Positive, bounded, radial influence function `r = |x - x'| -> value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InfluenceKernel {
    Constant { level: f64 },
    /// `scale * exp(-(r - center)^2)`
    GaussianShifted { center: f64, scale: f64 },
    /// Piecewise-linear in `r` through `(radius, value)` samples, flat outside.
    TabulatedRadial { samples: Vec<(f64, f64)> },
}

impl InfluenceKernel {
    pub fn constant(level: f64) -> Result<Self, ConfigError> {
        let k = InfluenceKernel::Constant { level };
        k.validate()?;
        Ok(k)
    }

    pub fn gaussian(center: f64, scale: f64) -> Result<Self, ConfigError> {
        let k = InfluenceKernel::GaussianShifted { center, scale };
        k.validate()?;
        Ok(k)
    }

    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self, ConfigError> {
        let k = InfluenceKernel::TabulatedRadial { samples };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match self {
            InfluenceKernel::Constant { level } if !positive(*level) => {
                Err(ConfigError::invalid("kernel.level", "must be finite and positive"))
            }
            InfluenceKernel::GaussianShifted { center, scale } => {
                if !center.is_finite() {
                    Err(ConfigError::invalid("kernel.center", "must be finite"))
                } else if !positive(*scale) {
                    Err(ConfigError::invalid("kernel.scale", "must be finite and positive"))
                } else {
                    Ok(())
                }
            }
            InfluenceKernel::TabulatedRadial { samples } => {
                if samples.is_empty() {
                    return Err(ConfigError::invalid("kernel.samples", "at least one sample required"));
                }
                for (k, &(r, v)) in samples.iter().enumerate() {
                    if !r.is_finite() || r < 0.0 {
                        return Err(ConfigError::invalid(
                            format!("kernel.samples[{k}]"),
                            "radius must be finite and nonnegative",
                        ));
                    }
                    if !positive(v) {
                        return Err(ConfigError::invalid(
                            format!("kernel.samples[{k}]"),
                            "value must be finite and positive",
                        ));
                    }
                    if k > 0 && r <= samples[k - 1].0 {
                        return Err(ConfigError::invalid(
                            format!("kernel.samples[{k}]"),
                            "radii must be strictly increasing",
                        ));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Kernel value as a function of the distance between the two opinions.
    pub fn radial(&self, r: f64) -> f64 {
        match self {
            InfluenceKernel::Constant { level } => *level,
            InfluenceKernel::GaussianShifted { center, scale } => scale * (-(r - center).powi(2)).exp(),
            InfluenceKernel::TabulatedRadial { samples } => {
                let idx = samples.partition_point(|&(sr, _)| sr <= r);
                if idx == 0 {
                    samples[0].1
                } else if idx == samples.len() {
                    samples[idx - 1].1
                } else {
                    let (r0, v0) = samples[idx - 1];
                    let (r1, v1) = samples[idx];
                    v0 + (v1 - v0) * (r - r0) / (r1 - r0)
                }
            }
        }
    }

    /// Unchecked evaluation on raw coordinates; callers guarantee equal length.
    #[inline]
    pub(crate) fn eval_raw(&self, xi: &[f64], xj: &[f64]) -> f64 {
        match self {
            InfluenceKernel::Constant { level } => *level,
            _ => self.radial(distance(xi, xj)),
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            InfluenceKernel::Constant { level } => *level,
            InfluenceKernel::GaussianShifted { scale, .. } => *scale,
            InfluenceKernel::TabulatedRadial { samples } => {
                samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    /// Infimum over all pairs `|z1|, |z2| <= radius_bound`, i.e. over
    /// `r in [0, 2 * radius_bound]` for a radial kernel.
    pub fn inf_on_ball(&self, radius_bound: f64) -> Result<f64, ConfigError> {
        if !(radius_bound.is_finite() && radius_bound >= 0.0) {
            return Err(ConfigError::invalid("radius_bound", "must be finite and nonnegative"));
        }
        let r_max = 2.0 * radius_bound;
        let value = match self {
            InfluenceKernel::Constant { level } => *level,
            // unimodal in r: the minimum over an interval sits at an endpoint
            InfluenceKernel::GaussianShifted { .. } => self.radial(0.0).min(self.radial(r_max)),
            // piecewise linear: the minimum sits at an endpoint or a breakpoint
            InfluenceKernel::TabulatedRadial { samples } => samples
                .iter()
                .filter(|&&(r, _)| r <= r_max)
                .map(|&(_, v)| v)
                .fold(self.radial(0.0).min(self.radial(r_max)), f64::min),
        };
        if value > 0.0 {
            Ok(value)
        } else {
            Err(ConfigError::NonPositiveInfimum {
                radius: radius_bound,
                value,
            })
        }
    }
}

/// `psi(xi, xj_delayed)`. Radial kernels depend on `|xi - xj_delayed|` only.
pub fn eval_kernel(
    kernel: &InfluenceKernel,
    xi: &OpinionVec,
    xj_delayed: &OpinionVec,
) -> Result<f64, ConfigError> {
    if xi.dim() != xj_delayed.dim() {
        return Err(ConfigError::DimensionMismatch {
            expected: xi.dim(),
            got: xj_delayed.dim(),
        });
    }
    Ok(kernel.eval_raw(&xi.0, &xj_delayed.0))
}

pub fn kernel_sup(kernel: &InfluenceKernel) -> f64 {
    kernel.sup()
}

/// `dim` only needs to be positive: for radial kernels every distance in
/// `[0, 2 * radius_bound]` is realised by some pair inside the ball.
pub fn kernel_inf_on_ball(
    kernel: &InfluenceKernel,
    radius_bound: f64,
    dim: usize,
) -> Result<f64, ConfigError> {
    if dim == 0 {
        return Err(ConfigError::invalid("dim", "must be at least 1"));
    }
    kernel.inf_on_ball(radius_bound)
}

/// One kernel shared by every ordered pair, with optional per-pair overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelAssignment {
    pub shared: InfluenceKernel,
    pub pairs: BTreeMap<(usize, usize), InfluenceKernel>,
}

impl KernelAssignment {
    pub fn shared(kernel: InfluenceKernel) -> Self {
        KernelAssignment {
            shared: kernel,
            pairs: BTreeMap::new(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &InfluenceKernel {
        if self.pairs.is_empty() {
            return &self.shared;
        }
        self.pairs.get(&(i, j)).unwrap_or(&self.shared)
    }

    fn all(&self) -> impl Iterator<Item = &InfluenceKernel> {
        std::iter::once(&self.shared).chain(self.pairs.values())
    }

    pub fn sup(&self) -> f64 {
        self.all().map(InfluenceKernel::sup).fold(0.0, f64::max)
    }

    /// Worst case across every kernel in the table.
    pub fn inf_on_ball(&self, radius_bound: f64) -> Result<f64, ConfigError> {
        let mut m = f64::INFINITY;
        for k in self.all() {
            m = m.min(k.inf_on_ball(radius_bound)?);
        }
        Ok(m)
    }

    pub fn validate(&self, field: &str) -> Result<(), ConfigError> {
        for k in self.all() {
            k.validate().map_err(|e| match e {
                ConfigError::Invalid { field: f, message } => ConfigError::Invalid {
                    field: format!("{field}.{}", f.trim_start_matches("kernel.")),
                    message,
                },
                other => other,
            })?;
        }
        Ok(())
    }
}

/// The kernel families of the five systems: `a` for general pairs or
/// leader-leader coupling, `b` for follower-follower and `c` for
/// leader-to-follower weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernels {
    pub a: KernelAssignment,
    pub b: KernelAssignment,
    pub c: KernelAssignment,
}

impl Kernels {
    pub fn all_shared(kernel: InfluenceKernel) -> Self {
        Kernels {
            a: KernelAssignment::shared(kernel.clone()),
            b: KernelAssignment::shared(kernel.clone()),
            c: KernelAssignment::shared(kernel),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelVariant {
    General,
    MultiLeader { m: usize },
    SingleLeaderConstant { y0: OpinionVec },
    SingleLeaderControlled { target: OpinionVec, max_speed: f64 },
    TwoLeaders,
}

impl ModelVariant {
    pub fn leader_count(&self) -> usize {
        match self {
            ModelVariant::General => 0,
            ModelVariant::MultiLeader { m } => *m,
            ModelVariant::SingleLeaderConstant { .. } | ModelVariant::SingleLeaderControlled { .. } => 1,
            ModelVariant::TwoLeaders => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelVariant::General => "general",
            ModelVariant::MultiLeader { .. } => "multi_leader",
            ModelVariant::SingleLeaderConstant { .. } => "single_leader_constant",
            ModelVariant::SingleLeaderControlled { .. } => "single_leader_controlled",
            ModelVariant::TwoLeaders => "two_leaders",
        }
    }
}

/// Initial datum of one agent on `[-tau, 0]`.
#[derive(Clone, Debug, PartialEq)]
pub enum History {
    Constant(OpinionVec),
    /// Time-sorted samples, linearly interpolated.
    Samples(Vec<(f64, OpinionVec)>),
}

impl History {
    pub fn dim(&self) -> usize {
        match self {
            History::Constant(v) => v.dim(),
            History::Samples(s) => s.first().map_or(0, |(_, v)| v.dim()),
        }
    }

    pub fn value_at(&self, t: f64) -> OpinionVec {
        match self {
            History::Constant(v) => v.clone(),
            History::Samples(s) => {
                let idx = s.partition_point(|(st, _)| *st <= t);
                if idx == 0 {
                    s[0].1.clone()
                } else if idx == s.len() {
                    s[idx - 1].1.clone()
                } else {
                    let (t0, v0) = &s[idx - 1];
                    let (t1, v1) = &s[idx];
                    let w = (t - t0) / (t1 - t0);
                    OpinionVec(v0.0.iter().zip(&v1.0).map(|(a, b)| a + w * (b - a)).collect())
                }
            }
        }
    }

    /// `sup_s |x(s)|` over the datum; attained at a sample for linear paths.
    pub fn sup_norm(&self) -> f64 {
        match self {
            History::Constant(v) => v.norm(),
            History::Samples(s) => s.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max),
        }
    }

    /// `sup_s |x(s) - p|` over the datum.
    pub fn sup_distance_to(&self, p: &[f64]) -> f64 {
        match self {
            History::Constant(v) => distance(&v.0, p),
            History::Samples(s) => s.iter().map(|(_, v)| distance(&v.0, p)).fold(0.0, f64::max),
        }
    }

    fn validate(&self, field: &str, d: usize, tau: f64) -> Result<(), ConfigError> {
        match self {
            History::Constant(v) => {
                if v.dim() != d {
                    return Err(ConfigError::invalid(field, format!("expected dimension {d}, got {}", v.dim())));
                }
                OpinionVec::new(v.0.clone()).map_err(|_| ConfigError::invalid(field, "non-finite coordinate"))?;
            }
            History::Samples(s) => {
                if s.is_empty() {
                    return Err(ConfigError::invalid(field, "samples must not be empty"));
                }
                for (k, (t, v)) in s.iter().enumerate() {
                    if v.dim() != d {
                        return Err(ConfigError::invalid(
                            format!("{field}.samples[{k}]"),
                            format!("expected dimension {d}, got {}", v.dim()),
                        ));
                    }
                    if !t.is_finite() || v.0.iter().any(|c| !c.is_finite()) {
                        return Err(ConfigError::invalid(format!("{field}.samples[{k}]"), "non-finite value"));
                    }
                    if k > 0 && *t <= s[k - 1].0 {
                        return Err(ConfigError::invalid(
                            format!("{field}.samples[{k}]"),
                            "sample times must be strictly increasing",
                        ));
                    }
                }
                let (first, last) = (s[0].0, s[s.len() - 1].0);
                let slack = 1e-9 * tau.max(1.0);
                if first > -tau + slack || last < -slack {
                    return Err(ConfigError::invalid(
                        field,
                        format!("samples cover [{first}, {last}] but must cover [{}, 0]", -tau),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Complete problem statement for one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub variant: ModelVariant,
    /// Number of followers (all agents for the general system).
    pub n: usize,
    pub d: usize,
    /// Follower-to-follower mask.
    pub chi: AdjacencyMask,
    /// Follower-to-follower delays.
    pub delays: DelayMatrix,
    /// Per-leader delays for the multi- and two-leader systems; per-follower
    /// delays of the leader signal for the controlled system; unused otherwise.
    pub leader_delays: Vec<f64>,
    pub kernels: Kernels,
    pub histories: Vec<History>,
    /// Leader initial data; for the constant-leader system this is `[Constant(y0)]`.
    pub leader_histories: Vec<History>,
    pub step_h: f64,
    pub horizon_t: f64,
}

impl ScenarioConfig {
    pub fn leader_count(&self) -> usize {
        self.variant.leader_count()
    }

    pub fn entity_count(&self) -> usize {
        self.n + self.leader_count()
    }

    /// Largest delay over all follower pairs and the leader delays the
    /// variant reads.
    pub fn tau_max(&self) -> f64 {
        let follower = self.delays.max_where(|_, _| true);
        let leader = match self.variant {
            ModelVariant::General | ModelVariant::SingleLeaderConstant { .. } => 0.0,
            _ => self.leader_delays.iter().copied().fold(0.0, f64::max),
        };
        follower.max(leader)
    }

    /// Leader delay seen by follower `i` from leader `j`.
    pub fn leader_delay(&self, follower: usize, leader: usize) -> f64 {
        match self.variant {
            ModelVariant::SingleLeaderControlled { .. } => self.leader_delays[follower],
            ModelVariant::SingleLeaderConstant { .. } => 0.0,
            _ => self.leader_delays[leader],
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 2 {
            return Err(ConfigError::invalid("N", "at least two agents required"));
        }
        if self.d < 1 {
            return Err(ConfigError::invalid("d", "dimension must be at least 1"));
        }
        if self.chi.size() != self.n {
            return Err(ConfigError::invalid(
                "chi",
                format!("expected {0}x{0} matrix, got {1}x{1}", self.n, self.chi.size()),
            ));
        }
        if self.delays.size() != self.n {
            return Err(ConfigError::invalid(
                "delays",
                format!("expected {0}x{0} matrix, got {1}x{1}", self.n, self.delays.size()),
            ));
        }
        let expected_leader_delays = match &self.variant {
            ModelVariant::General | ModelVariant::SingleLeaderConstant { .. } => None,
            ModelVariant::MultiLeader { m } => Some(*m),
            ModelVariant::SingleLeaderControlled { .. } => Some(self.n),
            ModelVariant::TwoLeaders => Some(2),
        };
        if let Some(len) = expected_leader_delays {
            if self.leader_delays.len() != len {
                return Err(ConfigError::invalid(
                    "leader_delays",
                    format!("expected {len} entries, got {}", self.leader_delays.len()),
                ));
            }
            if self.leader_delays.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(ConfigError::invalid("leader_delays", "delays must be finite and nonnegative"));
            }
        }
        match &self.variant {
            ModelVariant::MultiLeader { m } if *m < 3 => {
                return Err(ConfigError::invalid(
                    "variant.m",
                    "the multi-leader system needs m >= 3; use the one- or two-leader systems",
                ));
            }
            ModelVariant::SingleLeaderConstant { y0 } if y0.dim() != self.d => {
                return Err(ConfigError::invalid("variant.y0", format!("expected dimension {}", self.d)));
            }
            ModelVariant::SingleLeaderControlled { target, max_speed } => {
                if target.dim() != self.d {
                    return Err(ConfigError::invalid("variant.target", format!("expected dimension {}", self.d)));
                }
                if !(max_speed.is_finite() && *max_speed > 0.0) {
                    return Err(ConfigError::invalid("variant.M", "must be finite and positive"));
                }
            }
            _ => {}
        }
        self.kernels.a.validate("kernels.a")?;
        self.kernels.b.validate("kernels.b")?;
        self.kernels.c.validate("kernels.c")?;
        if !(self.step_h.is_finite() && self.step_h > 0.0) {
            return Err(ConfigError::invalid("step_h", "must be finite and positive"));
        }
        if !(self.horizon_t.is_finite() && self.horizon_t > 0.0) {
            return Err(ConfigError::invalid("horizon_T", "must be finite and positive"));
        }
        let tau = self.tau_max();
        if tau > 0.0 && self.step_h > tau {
            return Err(ConfigError::invalid(
                "step_h",
                format!("step {} exceeds the largest delay {tau}", self.step_h),
            ));
        }
        if self.histories.len() != self.n {
            return Err(ConfigError::invalid(
                "histories",
                format!("expected {} entries, got {}", self.n, self.histories.len()),
            ));
        }
        for (i, h) in self.histories.iter().enumerate() {
            h.validate(&format!("histories[{i}]"), self.d, tau)?;
        }
        if self.leader_histories.len() != self.leader_count() {
            return Err(ConfigError::invalid(
                "leader_histories",
                format!("expected {} entries, got {}", self.leader_count(), self.leader_histories.len()),
            ));
        }
        for (j, h) in self.leader_histories.iter().enumerate() {
            h.validate(&format!("leader_histories[{j}]"), self.d, tau)?;
        }
        if let ModelVariant::SingleLeaderConstant { y0 } = &self.variant {
            if self.leader_histories[0] != History::Constant(y0.clone()) {
                return Err(ConfigError::invalid("leader_histories", "the constant leader's history must be y0"));
            }
        }
        Ok(())
    }
}
