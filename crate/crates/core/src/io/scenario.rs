use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{
    AdjacencyMask, DelayMatrix, History, InfluenceKernel, KernelAssignment, Kernels, ModelVariant, OpinionVec,
    ScenarioConfig,
};

/// Parse or validation failure, located by field path and (for syntax and
/// type errors) source position.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioError {
    pub field: String,
    pub position: Option<(usize, usize)>,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let field = if self.field.is_empty() { "<root>" } else { &self.field };
        match self.position {
            Some((line, col)) => write!(f, "{field} (line {line}, column {col}): {}", self.message),
            None => write!(f, "{field}: {}", self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

impl From<ConfigError> for ScenarioError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid { field, message } => ScenarioError {
                field,
                position: None,
                message,
            },
            other => ScenarioError {
                field: "kernels".into(),
                position: None,
                message: other.to_string(),
            },
        }
    }
}

fn field_error(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError {
        field: field.into(),
        position: None,
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum VariantSpec {
    General,
    MultiLeader {
        m: usize,
    },
    SingleLeaderConstant {
        y0: Vec<f64>,
    },
    SingleLeaderControlled {
        target: Vec<f64>,
        #[serde(rename = "M")]
        max_speed: f64,
    },
    TwoLeaders,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSpec {
    /// Only `"complete"` is accepted.
    Named(String),
    Matrix(Vec<Vec<u8>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DelaySpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LeaderDelaySpec {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairKernel {
    pub i: usize,
    pub j: usize,
    pub kernel: InfluenceKernel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSpec {
    Table {
        default: InfluenceKernel,
        pairs: Vec<PairKernel>,
    },
    Single(InfluenceKernel),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsSpec {
    #[serde(default)]
    pub a: Option<KernelSpec>,
    #[serde(default)]
    pub b: Option<KernelSpec>,
    #[serde(default)]
    pub c: Option<KernelSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HistorySpec {
    Constant(Vec<f64>),
    Samples(Vec<(f64, Vec<f64>)>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformBox {
    pub low: f64,
    pub high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HistoriesSpec {
    Explicit(Vec<HistorySpec>),
    /// Constant histories drawn uniformly from `[low, high]^d` using `seed`.
    Random { random_constant: UniformBox },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default)]
    pub base: Option<f64>,
}

/// On-disk scenario description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub variant: VariantSpec,
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub chi: MaskSpec,
    pub delays: DelaySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_delays: Option<LeaderDelaySpec>,
    pub kernels: KernelsSpec,
    pub histories: HistoriesSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_histories: Option<HistoriesSpec>,
    pub step_h: f64,
    #[serde(rename = "horizon_T")]
    pub horizon_t: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<ToleranceSpec>,
}

/// A validated scenario plus the file-level settings that are not part of
/// the model.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedScenario {
    pub config: ScenarioConfig,
    pub tolerance: Option<f64>,
    pub seed: u64,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ScenarioError {
                field: if field == "." { String::new() } else { field },
                position: (inner.line() > 0).then(|| (inner.line(), inner.column())),
                message: strip_position(&inner.to_string()),
            }
        })
    }

    pub fn read(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| field_error("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(&self) -> Result<LoadedScenario, ScenarioError> {
        let config = self.to_config()?;
        let tolerance = self.tolerance.and_then(|t| t.base);
        if let Some(t) = tolerance {
            if !(t.is_finite() && t > 0.0) {
                return Err(field_error("tolerance.base", "must be finite and positive"));
            }
        }
        Ok(LoadedScenario {
            config,
            tolerance,
            seed: self.seed,
        })
    }

    fn leader_count(&self) -> usize {
        match self.variant {
            VariantSpec::General => 0,
            VariantSpec::MultiLeader { m } => m,
            VariantSpec::SingleLeaderConstant { .. } | VariantSpec::SingleLeaderControlled { .. } => 1,
            VariantSpec::TwoLeaders => 2,
        }
    }

    pub fn to_config(&self) -> Result<ScenarioConfig, ScenarioError> {
        let (n, d) = (self.n, self.d);
        if d == 0 {
            return Err(field_error("d", "dimension must be at least 1"));
        }
        let variant = match &self.variant {
            VariantSpec::General => ModelVariant::General,
            VariantSpec::MultiLeader { m } => ModelVariant::MultiLeader { m: *m },
            VariantSpec::SingleLeaderConstant { y0 } => ModelVariant::SingleLeaderConstant {
                y0: opinion(y0, d, "variant.y0")?,
            },
            VariantSpec::SingleLeaderControlled { target, max_speed } => ModelVariant::SingleLeaderControlled {
                target: opinion(target, d, "variant.target")?,
                max_speed: *max_speed,
            },
            VariantSpec::TwoLeaders => ModelVariant::TwoLeaders,
        };

        let chi = match &self.chi {
            MaskSpec::Named(name) if name == "complete" => AdjacencyMask::complete(n),
            MaskSpec::Named(name) => {
                return Err(field_error("chi", format!("unknown mask \"{name}\" (expected \"complete\" or a matrix)")))
            }
            MaskSpec::Matrix(rows) => {
                check_square(rows.len(), rows.iter().map(Vec::len), n, "chi")?;
                AdjacencyMask::from_rows(rows).map_err(|e| relabel(e, "chi"))?
            }
        };
        let delays = match &self.delays {
            DelaySpec::Scalar(tau) => DelayMatrix::uniform(n, *tau),
            DelaySpec::Matrix(rows) => {
                check_square(rows.len(), rows.iter().map(Vec::len), n, "delays")?;
                DelayMatrix::from_rows(rows.clone())
            }
        }
        .map_err(|e| relabel(e, "delays"))?;

        let leader_delay_len = match &variant {
            ModelVariant::General | ModelVariant::SingleLeaderConstant { .. } => 0,
            ModelVariant::SingleLeaderControlled { .. } => n,
            other => other.leader_count(),
        };
        let leader_delays = match (&self.leader_delays, leader_delay_len) {
            (None, 0) => Vec::new(),
            (None, _) => {
                return Err(field_error(
                    "leader_delays",
                    format!("required for the {} system", variant.name()),
                ))
            }
            (Some(LeaderDelaySpec::Scalar(t)), len) => vec![*t; len],
            (Some(LeaderDelaySpec::List(v)), _) => v.clone(),
        };

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let histories = build_histories(&self.histories, n, d, &mut rng, "histories")?;
        let m = self.leader_count();
        let leader_histories = match (&self.leader_histories, &variant) {
            (Some(spec), _) => build_histories(spec, m, d, &mut rng, "leader_histories")?,
            (None, ModelVariant::SingleLeaderConstant { y0 }) => vec![History::Constant(y0.clone())],
            (None, _) if m == 0 => Vec::new(),
            (None, _) => {
                return Err(field_error(
                    "leader_histories",
                    format!("required for the {} system", variant.name()),
                ))
            }
        };

        let in_play: &[&str] = match variant {
            ModelVariant::General => &["a"],
            ModelVariant::SingleLeaderConstant { .. } | ModelVariant::SingleLeaderControlled { .. } => &["b", "c"],
            _ => &["a", "b", "c"],
        };
        let family = |name: &str, spec: &Option<KernelSpec>| -> Result<KernelAssignment, ScenarioError> {
            match spec {
                Some(s) => kernel_assignment(s, &format!("kernels.{name}")),
                None if in_play.contains(&name) => Err(field_error(
                    &format!("kernels.{name}"),
                    format!("required for the {} system", variant.name()),
                )),
                None => Ok(KernelAssignment::shared(InfluenceKernel::Constant { level: 1.0 })),
            }
        };
        let kernels = Kernels {
            a: family("a", &self.kernels.a)?,
            b: family("b", &self.kernels.b)?,
            c: family("c", &self.kernels.c)?,
        };

        let config = ScenarioConfig {
            variant,
            n,
            d,
            chi,
            delays,
            leader_delays,
            kernels,
            histories,
            leader_histories,
            step_h: self.step_h,
            horizon_t: self.horizon_t,
        };
        config.validate()?;
        Ok(config)
    }
}

/// serde_json appends " at line L column C"; the position is reported separately.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

fn relabel(e: ConfigError, field: &str) -> ScenarioError {
    match e {
        ConfigError::Invalid { message, .. } => field_error(field, message),
        other => field_error(field, other.to_string()),
    }
}

fn check_square(
    rows: usize,
    lens: impl Iterator<Item = usize>,
    n: usize,
    field: &str,
) -> Result<(), ScenarioError> {
    if rows != n {
        return Err(field_error(field, format!("expected {n} rows, got {rows}")));
    }
    for (i, len) in lens.enumerate() {
        if len != n {
            return Err(field_error(&format!("{field}[{i}]"), format!("expected {n} entries, got {len}")));
        }
    }
    Ok(())
}

fn opinion(v: &[f64], d: usize, field: &str) -> Result<OpinionVec, ScenarioError> {
    if v.len() != d {
        return Err(field_error(field, format!("expected {d} coordinates, got {}", v.len())));
    }
    OpinionVec::new(v.to_vec()).map_err(|e| relabel(e, field))
}

fn kernel_assignment(spec: &KernelSpec, field: &str) -> Result<KernelAssignment, ScenarioError> {
    let table = match spec {
        KernelSpec::Single(k) => KernelAssignment::shared(k.clone()),
        KernelSpec::Table { default, pairs } => {
            let mut map = BTreeMap::new();
            for p in pairs {
                map.insert((p.i, p.j), p.kernel.clone());
            }
            KernelAssignment {
                shared: default.clone(),
                pairs: map,
            }
        }
    };
    table.validate(field)?;
    Ok(table)
}

fn build_histories(
    spec: &HistoriesSpec,
    count: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
    field: &str,
) -> Result<Vec<History>, ScenarioError> {
    match spec {
        HistoriesSpec::Random { random_constant: b } => {
            if !(b.low.is_finite() && b.high.is_finite() && b.low <= b.high) {
                return Err(field_error(
                    &format!("{field}.random_constant"),
                    "need finite low <= high",
                ));
            }
            Ok((0..count)
                .map(|_| {
                    let x: Vec<f64> = (0..d)
                        .map(|_| if b.low == b.high { b.low } else { rng.random_range(b.low..b.high) })
                        .collect();
                    History::Constant(OpinionVec(x))
                })
                .collect())
        }
        HistoriesSpec::Explicit(list) => {
            if list.len() != count {
                return Err(field_error(field, format!("expected {count} entries, got {}", list.len())));
            }
            list.iter()
                .enumerate()
                .map(|(i, h)| match h {
                    HistorySpec::Constant(x) => Ok(History::Constant(opinion(x, d, &format!("{field}[{i}].constant"))?)),
                    HistorySpec::Samples(s) => {
                        let mut samples = Vec::with_capacity(s.len());
                        for (k, (t, x)) in s.iter().enumerate() {
                            samples.push((*t, opinion(x, d, &format!("{field}[{i}].samples[{k}]"))?));
                        }
                        Ok(History::Samples(samples))
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "variant": {"type": "general"},
        "N": 3, "d": 1,
        "chi": "complete",
        "delays": 1.0,
        "kernels": {"a": {"type": "constant", "level": 1.0}},
        "histories": [{"constant": [0.0]}, {"constant": [1.0]}, {"samples": [[-1.0, [2.0]], [0.0, [3.0]]]}],
        "step_h": 0.1,
        "horizon_T": 2.0
    }"#;

    #[test]
    fn minimal_general() {
        let cfg = ScenarioFile::from_json(MINIMAL).unwrap().to_config().unwrap();
        assert_eq!(cfg.n, 3);
        assert_eq!(cfg.tau_max(), 1.0);
        assert_eq!(cfg.histories[2].value_at(-0.5), OpinionVec(vec![2.5]));
    }

    #[test]
    fn type_error_names_field_and_line() {
        let bad = MINIMAL.replace("\"d\": 1", "\"d\": \"one\"");
        let e = ScenarioFile::from_json(&bad).unwrap_err();
        assert_eq!(e.field, "d");
        assert_eq!(e.position.map(|p| p.0), Some(3));
    }

    #[test]
    fn wrong_chi_shape_names_chi() {
        let bad = MINIMAL.replace("\"complete\"", "[[0,1],[1,0]]");
        let e = ScenarioFile::from_json(&bad).unwrap().to_config().unwrap_err();
        assert_eq!(e.field, "chi");
        let bad = MINIMAL.replace("\"complete\"", "[[0,1,1],[1,0],[1,1,0]]");
        let e = ScenarioFile::from_json(&bad).unwrap().to_config().unwrap_err();
        assert_eq!(e.field, "chi[1]");
    }

    #[test]
    fn seeded_histories_are_reproducible() {
        let text = MINIMAL.replace(
            r#"[{"constant": [0.0]}, {"constant": [1.0]}, {"samples": [[-1.0, [2.0]], [0.0, [3.0]]]}]"#,
            r#"{"random_constant": {"low": 0.0, "high": 10.0}}"#,
        );
        let a = ScenarioFile::from_json(&text).unwrap().to_config().unwrap();
        let b = ScenarioFile::from_json(&text).unwrap().to_config().unwrap();
        assert_eq!(a, b);
        for h in &a.histories {
            let x = h.value_at(0.0).0[0];
            assert!((0.0..10.0).contains(&x));
        }
    }

    #[test]
    fn missing_kernel_family() {
        let bad = MINIMAL.replace(r#""kernels": {"a": {"type": "constant", "level": 1.0}}"#, r#""kernels": {}"#);
        let e = ScenarioFile::from_json(&bad).unwrap().to_config().unwrap_err();
        assert_eq!(e.field, "kernels.a");
    }

    #[test]
    fn json_round_trip() {
        let f = ScenarioFile::from_json(MINIMAL).unwrap();
        assert_eq!(ScenarioFile::from_json(&f.to_json()).unwrap(), f);
    }
}
