//! JSON scenario files and dotted `key=value` overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use slas_core::highway::{DomainError, LaneCount, VehicleSeed};
use slas_core::safety::SafetyConfig;
use slas_core::{EgoState, Formulation, PlannerParams, RoadModel, Scenario};

/// Scenarios compiled into the binary, addressable by name.
pub const BUILTIN: [(&str, &str); 2] = [
    ("case_study", include_str!("../scenarios/case_study.json")),
    ("empty_road", include_str!("../scenarios/empty_road.json")),
];

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("`{0}` is neither a file nor a built-in scenario (case_study, empty_road)")]
    Unknown(String),
    #[error("{origin}: {source}")]
    Syntax { origin: String, source: serde_json::Error },
    #[error("{origin}: at `{path}`: {message}")]
    Schema { origin: String, path: String, message: String },
    #[error("override `{key}`: {reason}")]
    Override { key: String, reason: String },
    #[error("{origin}: {source}")]
    Domain { origin: String, source: DomainError },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LanesFile {
    Constant(usize),
    /// `[first_step, count]` pairs.
    Schedule(Vec<(u64, usize)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadFile {
    pub lanes: LanesFile,
    pub lane_width_m: f64,
    pub speed_limit_mps: f64,
    pub length_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoFile {
    pub s0_m: f64,
    pub v0_mps: f64,
    pub lane0: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleFile {
    pub id: u32,
    pub lane: usize,
    pub s0_m: f64,
    pub v_mps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    pub dt_s: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormulationFile {
    Binary,
    Integer,
}

impl From<FormulationFile> for Formulation {
    fn from(f: FormulationFile) -> Self {
        match f {
            FormulationFile::Binary => Formulation::Binary,
            FormulationFile::Integer => Formulation::Integer,
        }
    }
}

impl From<Formulation> for FormulationFile {
    fn from(f: Formulation) -> Self {
        match f {
            Formulation::Binary => FormulationFile::Binary,
            Formulation::Integer => FormulationFile::Integer,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyFile {
    pub d_min: f64,
    pub t_react: f64,
    pub a_brake_ego: f64,
    pub a_brake_other: f64,
    pub gamma4: f64,
    pub vehicle_length: f64,
}

impl Default for SafetyFile {
    fn default() -> Self {
        let s = SafetyConfig::default();
        SafetyFile {
            d_min: s.d_min,
            t_react: s.t_react,
            a_brake_ego: s.a_brake_ego,
            a_brake_other: s.a_brake_other,
            gamma4: s.gamma4,
            vehicle_length: s.vehicle_length,
        }
    }
}

/// Planner settings; every key falls back to the planner default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerFile {
    pub horizon: usize,
    pub dt_s: f64,
    pub lane_change_steps: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    pub max_speed_mps: Option<f64>,
    pub big_m: Option<f64>,
    pub epsilon: f64,
    pub time_limit_s: f64,
    pub lazy_lane_constraints: bool,
    pub accel_horizon: usize,
    pub history_window: usize,
    pub visibility_m: f64,
    pub formulation: FormulationFile,
    pub safety: SafetyFile,
}

impl Default for PlannerFile {
    fn default() -> Self {
        PlannerFile::from(&PlannerParams::default())
    }
}

impl From<&PlannerParams> for PlannerFile {
    fn from(p: &PlannerParams) -> Self {
        let s = p.safety;
        PlannerFile {
            horizon: p.horizon,
            dt_s: p.dt,
            lane_change_steps: p.lane_change_steps,
            gamma1: p.gamma1,
            gamma2: p.gamma2,
            gamma3: p.gamma3,
            accel_min: p.accel_min,
            accel_max: p.accel_max,
            max_speed_mps: p.max_speed,
            big_m: p.big_m,
            epsilon: p.epsilon,
            time_limit_s: p.time_limit,
            lazy_lane_constraints: p.lazy_lane_constraints,
            accel_horizon: p.accel_horizon,
            history_window: p.history_window,
            visibility_m: p.visibility,
            formulation: p.formulation.into(),
            safety: SafetyFile {
                d_min: s.d_min,
                t_react: s.t_react,
                a_brake_ego: s.a_brake_ego,
                a_brake_other: s.a_brake_other,
                gamma4: s.gamma4,
                vehicle_length: s.vehicle_length,
            },
        }
    }
}

impl From<&PlannerFile> for PlannerParams {
    fn from(p: &PlannerFile) -> Self {
        let s = &p.safety;
        PlannerParams {
            horizon: p.horizon,
            dt: p.dt_s,
            lane_change_steps: p.lane_change_steps,
            gamma1: p.gamma1,
            gamma2: p.gamma2,
            gamma3: p.gamma3,
            accel_min: p.accel_min,
            accel_max: p.accel_max,
            max_speed: p.max_speed_mps,
            big_m: p.big_m,
            epsilon: p.epsilon,
            time_limit: p.time_limit_s,
            lazy_lane_constraints: p.lazy_lane_constraints,
            accel_horizon: p.accel_horizon,
            history_window: p.history_window,
            visibility: p.visibility_m,
            formulation: p.formulation.into(),
            safety: SafetyConfig {
                d_min: s.d_min,
                t_react: s.t_react,
                a_brake_ego: s.a_brake_ego,
                a_brake_other: s.a_brake_other,
                gamma4: s.gamma4,
                vehicle_length: s.vehicle_length,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub road: RoadFile,
    pub ego: EgoFile,
    pub traffic: Vec<VehicleFile>,
    pub sim: SimFile,
    pub planner: PlannerFile,
}

impl ScenarioFile {
    pub fn to_scenario(&self) -> Scenario {
        let params = PlannerParams::from(&self.planner);
        let road = RoadModel {
            lanes: match &self.road.lanes {
                LanesFile::Constant(n) => LaneCount::Constant(*n),
                LanesFile::Schedule(s) => LaneCount::Schedule(s.clone()),
            },
            lane_width: self.road.lane_width_m,
            speed_limit: self.road.speed_limit_mps,
            length: self.road.length_m,
        };
        let ego = EgoState::new(
            self.ego.s0_m,
            self.ego.v0_mps,
            self.ego.lane0,
            road.lane_width,
            params.lane_change_steps,
        );
        let traffic = self
            .traffic
            .iter()
            .map(|t| VehicleSeed {
                id: t.id,
                lane: t.lane,
                s0: t.s0_m,
                v: t.v_mps,
            })
            .collect();
        Scenario {
            road,
            ego,
            traffic,
            sim_dt: self.sim.dt_s,
            params,
            seed: self.sim.seed,
        }
    }

    pub fn from_scenario(sc: &Scenario) -> Self {
        ScenarioFile {
            road: RoadFile {
                lanes: match &sc.road.lanes {
                    LaneCount::Constant(n) => LanesFile::Constant(*n),
                    LaneCount::Schedule(s) => LanesFile::Schedule(s.clone()),
                },
                lane_width_m: sc.road.lane_width,
                speed_limit_mps: sc.road.speed_limit,
                length_m: sc.road.length,
            },
            ego: EgoFile {
                s0_m: sc.ego.s,
                v0_mps: sc.ego.v,
                lane0: sc.ego.lane,
            },
            traffic: sc
                .traffic
                .iter()
                .map(|t| VehicleFile {
                    id: t.id,
                    lane: t.lane,
                    s0_m: t.s0,
                    v_mps: t.v,
                })
                .collect(),
            sim: SimFile {
                dt_s: sc.sim_dt,
                seed: sc.seed,
            },
            planner: PlannerFile::from(&sc.params),
        }
    }
}

/// One `--set key=value` assignment. The value is read as JSON when it
/// parses and as a bare string otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: Value,
}

impl std::str::FromStr for Override {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (key, raw) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(format!("malformed key `{key}`"));
        }
        let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
        Ok(Override {
            key: key.to_string(),
            value,
        })
    }
}

impl fmt::Display for Override {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.key, self.value)
    }
}

/// Write `ov` into `doc`, creating object members on the way. Array
/// elements are addressed by index.
pub fn apply_override(doc: &mut Value, ov: &Override) -> Result<(), ScenarioError> {
    let fail = |reason: String| ScenarioError::Override {
        key: ov.key.clone(),
        reason,
    };
    let mut node = doc;
    let parts: Vec<&str> = ov.key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), ov.value.clone());
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let i: usize = part.parse().map_err(|_| fail(format!("`{part}` is not an array index")))?;
                let len = items.len();
                let slot = items.get_mut(i).ok_or_else(|| fail(format!("index {i} out of range (length {len})")))?;
                if last {
                    *slot = ov.value.clone();
                    return Ok(());
                }
                slot
            }
            _ => return Err(fail(format!("`{}` is not an object or array", parts[..depth].join(".")))),
        };
    }
    Ok(())
}

/// Parse a scenario document, apply `overrides` and validate the result.
/// `origin` names the source in error messages.
pub fn parse_scenario(text: &str, origin: &str, overrides: &[Override]) -> Result<(ScenarioFile, Scenario), ScenarioError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|source| ScenarioError::Syntax {
        origin: origin.to_string(),
        source,
    })?;
    for ov in overrides {
        apply_override(&mut doc, ov)?;
    }
    let file: ScenarioFile = serde_path_to_error::deserialize(doc).map_err(|e| ScenarioError::Schema {
        origin: origin.to_string(),
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let scenario = file.to_scenario();
    scenario.validate().map_err(|source| ScenarioError::Domain {
        origin: origin.to_string(),
        source,
    })?;
    Ok((file, scenario))
}

/// Load a scenario from a file, or by built-in name when no such file
/// exists.
pub fn load_scenario(source: &str, overrides: &[Override]) -> Result<(ScenarioFile, Scenario), ScenarioError> {
    let path = Path::new(source);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        return parse_scenario(&text, source, overrides);
    }
    let name = source.strip_suffix(".json").unwrap_or(source);
    match BUILTIN.iter().find(|(n, _)| *n == name) {
        Some((n, text)) => parse_scenario(text, n, overrides),
        None => Err(ScenarioError::Unknown(source.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        for (name, _) in BUILTIN {
            let (file, sc) = load_scenario(name, &[]).unwrap();
            assert_eq!(ScenarioFile::from_scenario(&sc), file);
        }
    }

    #[test]
    fn override_parses_json_or_string() {
        let o: Override = "planner.gamma2=100".parse().unwrap();
        assert_eq!(o.value, serde_json::json!(100));
        let o: Override = "planner.formulation=integer".parse().unwrap();
        assert_eq!(o.value, serde_json::json!("integer"));
        assert!("planner..x=1".parse::<Override>().is_err());
        assert!("gamma".parse::<Override>().is_err());
    }

    #[test]
    fn override_reaches_array_elements() {
        let ov: Override = "traffic.1.v_mps=3.5".parse().unwrap();
        let (_, sc) = load_scenario("case_study", &[ov]).unwrap();
        assert_eq!(sc.traffic[1].v, 3.5);
        let bad: Override = "traffic.9.v_mps=1".parse().unwrap();
        assert!(matches!(load_scenario("case_study", &[bad]), Err(ScenarioError::Override { .. })));
    }
}
