//! Scenario files: a versioned TOML schema resolved into a [`SimSpec`].

use crate::controller::{ControlConfig, Mission, RootMode};
use crate::engine::{EngineError, FailurePlan, FailureTarget, SimSpec, Spawn};
use crate::geom::Vec3;
use crate::msg::RobotKind;
use crate::planner::PlannerConfig;
use crate::radio::RadioConfig;
use crate::world::{parse_map, CellRect, GridMap, WorldError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{file}: schema error at `{path}`: {msg}")]
    Schema { file: String, path: String, msg: String },
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSpec {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    #[serde(default)]
    pub window: Vec<[usize; 2]>,
    #[serde(default = "one")]
    pub window_layer: usize,
}

fn one() -> usize {
    1
}
fn three() -> usize {
    3
}
fn unit() -> f64 {
    1.0
}

/// Either an open `width` x `height` arena or a benchmark map file given
/// relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default = "three")]
    pub layers: usize,
    #[serde(default = "unit")]
    pub resolution: f64,
    /// `[x0, y0, w, h]` in cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<[usize; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall: Option<WallSpec>,
    /// Ground obstacles also block the layers above.
    #[serde(default)]
    pub extrude: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnSpec {
    /// Robot 0 sits here; the rest fill a square grid around it.
    pub center: [f64; 2],
    pub spacing: f64,
    /// Uniform per-axis perturbation drawn from the scenario seed.
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterSpec {
    pub ground: usize,
    #[serde(default)]
    pub flying: usize,
    pub spawn: SpawnSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSpec {
    pub targets: Vec<[f64; 3]>,
    #[serde(default = "one_u32")]
    pub links: u32,
    pub root: RootMode,
}

fn one_u32() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Consecutive robots failed by every depth-selected scripted event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_factor: Option<Vec<u32>>,
    /// Cap fraction of random failures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_cap: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub links: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    FailureFactor,
    RandomCap,
    Links,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "failure_factor" => Some(Self::FailureFactor),
            "random_cap" => Some(Self::RandomCap),
            "links" => Some(Self::Links),
            _ => None,
        }
    }
}

fn default_mtu() -> usize {
    4096
}

fn default_failures() -> FailurePlan {
    FailurePlan::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub max_ticks: u64,
    #[serde(default = "default_mtu")]
    pub mtu: usize,
    #[serde(default)]
    pub strict_audit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub map: MapSpec,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub control: ControlConfig,
    /// Defaults derive from the safe distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner: Option<PlannerConfig>,
    pub mission: MissionSpec,
    pub robots: RosterSpec,
    #[serde(default = "default_failures")]
    pub failures: FailurePlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

/// Parses scenario text; `file` only labels errors.
pub fn parse_scenario(text: &str, file: &str) -> Result<ScenarioSpec, ScenarioError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ScenarioError::Schema {
        file: file.into(),
        path: String::new(),
        msg: e.message().to_string(),
    })?;
    let spec: ScenarioSpec = serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Schema {
        file: file.into(),
        path: e.path().to_string(),
        msg: e.inner().message().to_string(),
    })?;
    if spec.version != SCHEMA_VERSION {
        return Err(ScenarioError::Version(spec.version));
    }
    Ok(spec)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(path.display().to_string(), e))?;
    parse_scenario(&text, &path.display().to_string())
}

pub fn to_toml(spec: &ScenarioSpec) -> String {
    toml::to_string(spec).expect("scenario types serialize to TOML")
}

fn build_map(spec: &MapSpec, base: &Path) -> Result<GridMap, ScenarioError> {
    let mut map = match (&spec.path, spec.width, spec.height) {
        (Some(p), None, None) => {
            let full: PathBuf = base.join(p);
            let text = std::fs::read_to_string(&full).map_err(|e| ScenarioError::Io(full.display().to_string(), e))?;
            parse_map(&text, spec.resolution, spec.layers)?
        }
        (None, Some(w), Some(h)) => GridMap::open(w, h, spec.layers, spec.resolution)?,
        _ => return Err(ScenarioError::Invalid("map needs either `path` or both `width` and `height`".into())),
    };
    if let Some([x0, y0, w, h]) = spec.crop {
        map = map.crop(x0, y0, w, h)?;
    }
    if spec.extrude {
        map.extrude_ground_obstacles();
    }
    if let Some(wall) = &spec.wall {
        let window: Vec<(usize, usize)> = wall.window.iter().map(|c| (c[0], c[1])).collect();
        map.add_wall_with_window(CellRect { x0: wall.x0, y0: wall.y0, x1: wall.x1, y1: wall.y1 }, &window, wall.window_layer)?;
    }
    Ok(map)
}

/// Grid spawn around the center, robot 0 first. Ground robots take the
/// lower ids.
pub fn spawn_positions(roster: &RosterSpec, seed: u64) -> Vec<Spawn> {
    let n = roster.ground + roster.flying;
    let side = (n as f64).sqrt().ceil() as i64;
    let mut slots: Vec<(i64, i64)> = Vec::new();
    let half = side / 2;
    for j in 0..side {
        for i in 0..side {
            slots.push((i - half, j - half));
        }
    }
    slots.sort_by_key(|&(i, j)| (i * i + j * j, j, i));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let s = &roster.spawn;
    (0..n)
        .map(|k| {
            let (i, j) = slots[k];
            let (mut dx, mut dy) = (0.0, 0.0);
            if s.jitter > 0.0 && k > 0 {
                dx = rng.gen_range(-s.jitter..=s.jitter);
                dy = rng.gen_range(-s.jitter..=s.jitter);
            }
            let kind = if k < roster.ground { RobotKind::Ground } else { RobotKind::Flying };
            Spawn {
                kind,
                position: Vec3::flat(s.center[0] + i as f64 * s.spacing + dx, s.center[1] + j as f64 * s.spacing + dy),
            }
        })
        .collect()
}

impl ScenarioSpec {
    /// Resolves map files relative to `base` and validates everything.
    pub fn resolve(&self, base: &Path) -> Result<SimSpec, ScenarioError> {
        self.radio.validate().map_err(EngineError::from)?;
        let map = build_map(&self.map, base)?;
        if self.robots.ground + self.robots.flying == 0 {
            return Err(ScenarioError::Invalid("roster is empty".into()));
        }
        if !(self.robots.spawn.spacing > 0.0) {
            return Err(ScenarioError::Invalid("spawn spacing must be positive".into()));
        }
        let spec = SimSpec {
            name: self.name.clone(),
            map,
            radio: self.radio,
            control: self.control,
            planner: self.planner.unwrap_or_else(|| PlannerConfig::for_safe_distance(self.radio.safe)),
            mission: Mission {
                targets: self.mission.targets.iter().map(|t| Vec3::new(t[0], t[1], t[2])).collect(),
                links: self.mission.links,
                root: self.mission.root,
            },
            roster: spawn_positions(&self.robots, self.seed),
            failures: self.failures.clone(),
            seed: self.seed,
            max_ticks: self.max_ticks,
            strict_audit: self.strict_audit,
            mtu: self.mtu,
            record_trajectory: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// One labelled variant per value of `axis`.
    pub fn variants(&self, axis: SweepAxis) -> Result<Vec<(String, ScenarioSpec)>, ScenarioError> {
        let sweep = self.sweep.clone().unwrap_or_default();
        let missing = |name: &str| ScenarioError::Invalid(format!("scenario has no `sweep.{name}` values"));
        let mut out = Vec::new();
        match axis {
            SweepAxis::FailureFactor => {
                for k in sweep.failure_factor.ok_or_else(|| missing("failure_factor"))? {
                    let mut s = self.clone();
                    let FailurePlan::Scripted { events } = &mut s.failures else {
                        return Err(ScenarioError::Invalid("failure_factor sweep needs scripted failures".into()));
                    };
                    for e in events.iter_mut() {
                        if let FailureTarget::ChainDepths { count, .. } = &mut e.robots {
                            *count = k;
                        }
                    }
                    s.name = format!("{}_k{k}", self.name);
                    out.push((format!("k{k}"), s));
                }
            }
            SweepAxis::RandomCap => {
                for f in sweep.random_cap.ok_or_else(|| missing("random_cap"))? {
                    let mut s = self.clone();
                    let FailurePlan::Random { cap, .. } = &mut s.failures else {
                        return Err(ScenarioError::Invalid("random_cap sweep needs random failures".into()));
                    };
                    *cap = f;
                    s.name = format!("{}_f{f}", self.name);
                    out.push((format!("f{f}"), s));
                }
            }
            SweepAxis::Links => {
                for c in sweep.links.ok_or_else(|| missing("links"))? {
                    let mut s = self.clone();
                    s.mission.links = c;
                    s.name = format!("{}_c{c}", self.name);
                    out.push((format!("c{c}"), s));
                }
            }
        }
        Ok(out)
    }
}
