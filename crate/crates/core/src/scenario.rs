//! Scenario files: the single JSON document that pins a mission, the world,
//! sensor fits, controller gains, network behavior and training knobs.
//!
//! Everything an episode needs is derived from here plus one explicit seed,
//! so two runs with the same file and seed replay identically.

use crate::controllers::{waypoint_entity_id, ControllerConfig};
use crate::ensemble::{EnsemblerDims, PROPOSAL_FIELDS};
use crate::geom::{Rect, Vec2};
use crate::ledger::NetSim;
use crate::sensors::{EnvLayout, SensorSuite};
use crate::statemap::{Entity, EntityKind, MapEncodingLayout, StateMap};
use crate::world::{AssetState, HostileState, MissionPlan, SamSite, WorldParams, WorldState, Zone};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSection {
    pub bounds: Rect,
    #[serde(default)]
    pub wind: Vec2,
    #[serde(default)]
    pub params: WorldParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSpec {
    pub id: String,
    pub position: Vec2,
    #[serde(default)]
    pub heading: f64,
    #[serde(default = "default_max_speed")]
    pub max_speed: f64,
    #[serde(default = "default_max_turn")]
    pub max_turn: f64,
    #[serde(default = "default_fuel")]
    pub fuel: f64,
    #[serde(default = "default_weapons")]
    pub weapons: u32,
    #[serde(default = "default_countermeasures")]
    pub countermeasures: u32,
}

fn default_max_speed() -> f64 {
    60.0
}
fn default_max_turn() -> f64 {
    0.3
}
fn default_fuel() -> f64 {
    10_000.0
}
fn default_weapons() -> u32 {
    2
}
fn default_countermeasures() -> u32 {
    8
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamSpec {
    pub id: String,
    pub position: Vec2,
    pub radar_range: f64,
    pub missile_speed: f64,
    pub lock_ticks: u32,
    /// Whether the site appears in the briefed state map.
    #[serde(default)]
    pub briefed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostileSpec {
    pub id: String,
    pub position: Vec2,
    #[serde(default)]
    pub heading: f64,
    #[serde(default = "default_max_speed")]
    pub max_speed: f64,
    #[serde(default = "default_max_turn")]
    pub max_turn: f64,
    #[serde(default = "default_interceptor")]
    pub classification: String,
    #[serde(default)]
    pub briefed: bool,
}

fn default_interceptor() -> String {
    "interceptor".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub id: String,
    pub position: Vec2,
    #[serde(default = "default_structure")]
    pub classification: String,
    #[serde(default = "default_true")]
    pub briefed: bool,
}

fn default_structure() -> String {
    "structure".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub id: String,
    pub center: Vec2,
    pub radius: f64,
    /// `NoFlyZone` or `Obstacle`.
    #[serde(default = "default_zone_kind")]
    pub kind: EntityKind,
    #[serde(default = "default_true")]
    pub briefed: bool,
}

fn default_zone_kind() -> EntityKind {
    EntityKind::NoFlyZone
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsemblerSection {
    #[serde(default = "default_d_h")]
    pub d_h: usize,
    #[serde(default = "default_delta_max")]
    pub delta_max: f64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default = "default_contact_slots")]
    pub contact_slots: usize,
    #[serde(default = "default_map_slots")]
    pub map_slots_per_kind: usize,
}

fn default_d_h() -> usize {
    16
}
fn default_delta_max() -> f64 {
    0.25
}
fn default_init_scale() -> f64 {
    0.1
}
fn default_contact_slots() -> usize {
    4
}
fn default_map_slots() -> usize {
    2
}

impl Default for EnsemblerSection {
    fn default() -> Self {
        EnsemblerSection {
            d_h: default_d_h(),
            delta_max: default_delta_max(),
            init_scale: default_init_scale(),
            contact_slots: default_contact_slots(),
            map_slots_per_kind: default_map_slots(),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_episodes")]
    pub episodes_per_iteration: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Exploration std for continuous channels.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Flip probability for eligible discrete emissions.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// EMA decay of the return baseline.
    #[serde(default = "default_beta")]
    pub baseline_decay: f64,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_iterations() -> usize {
    300
}
fn default_episodes() -> usize {
    6
}
fn default_lr() -> f64 {
    0.05
}
fn default_sigma() -> f64 {
    0.15
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_beta() -> f64 {
    0.8
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: default_iterations(),
            episodes_per_iteration: default_episodes(),
            learning_rate: default_lr(),
            sigma: default_sigma(),
            epsilon: default_epsilon(),
            baseline_decay: default_beta(),
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LedgerSection {
    #[serde(default)]
    pub key_seed: u64,
}

/// The full scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub world: WorldSection,
    pub assets: Vec<AssetSpec>,
    #[serde(default)]
    pub sam_sites: Vec<SamSpec>,
    #[serde(default)]
    pub hostiles: Vec<HostileSpec>,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub zones: Vec<ZoneSpec>,
    pub mission: MissionPlan,
    #[serde(default)]
    pub sensors: SensorSuite,
    #[serde(default)]
    pub controllers: ControllerSection,
    #[serde(default)]
    pub ensembler: EnsemblerSection,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub network: NetSim,
    #[serde(default)]
    pub ledger: LedgerSection,
    /// Audit-log file name within the run's output directory.
    #[serde(default = "default_audit_log")]
    pub audit_log: String,
}

fn default_audit_log() -> String {
    "audit.jsonl".into()
}

/// Controller gains as written in the file; `swarm_roles` is derived from
/// the asset count, not configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSection {
    #[serde(default = "default_waypoint_gain")]
    pub waypoint_gain: f64,
    #[serde(default = "default_capture_radius")]
    pub capture_radius: f64,
    #[serde(default = "default_avoid_horizon")]
    pub avoid_horizon: f64,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    #[serde(default = "default_stale_after")]
    pub stale_after_ticks: u64,
    #[serde(default = "default_formation_radius")]
    pub formation_radius: f64,
    #[serde(default = "default_threat_classes")]
    pub threat_classes: Vec<String>,
    #[serde(default = "default_obstacle_radius")]
    pub default_obstacle_radius: f64,
}

fn default_waypoint_gain() -> f64 {
    2.0 / std::f64::consts::PI
}
fn default_capture_radius() -> f64 {
    60.0
}
fn default_avoid_horizon() -> f64 {
    250.0
}
fn default_cell_size() -> f64 {
    50.0
}
fn default_stale_after() -> u64 {
    10
}
fn default_formation_radius() -> f64 {
    150.0
}
fn default_threat_classes() -> Vec<String> {
    vec!["SAM".into(), "interceptor".into()]
}
fn default_obstacle_radius() -> f64 {
    40.0
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            waypoint_gain: default_waypoint_gain(),
            capture_radius: default_capture_radius(),
            avoid_horizon: default_avoid_horizon(),
            cell_size: default_cell_size(),
            stale_after_ticks: default_stale_after(),
            formation_radius: default_formation_radius(),
            threat_classes: default_threat_classes(),
            default_obstacle_radius: default_obstacle_radius(),
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 over the canonical JSON form, hex-encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    // Negated comparisons throughout: `!(x > 0)` also fails NaN values.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errors = Vec::new();
        let mut err = |msg: String| errors.push(msg);

        if self.world.bounds.is_degenerate() {
            err("world.bounds must be a non-degenerate box".into());
        }
        let p = &self.world.params;
        if !(p.dt > 0.0) {
            err(format!("world.params.dt must be > 0, got {}", p.dt));
        }
        for (name, v) in [("p_kill", p.p_kill), ("p_hit", p.p_hit)] {
            if !(0.0..=1.0).contains(&v) {
                err(format!("world.params.{name} must be in [0,1], got {v}"));
            }
        }
        if !(p.capture_radius > 0.0) {
            err(format!(
                "world.params.capture_radius must be > 0, got {}",
                p.capture_radius
            ));
        }

        if self.assets.is_empty() {
            err("assets must not be empty".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, a) in self.assets.iter().enumerate() {
            if !seen.insert(&a.id) {
                err(format!("assets[{i}].id `{}` is duplicated", a.id));
            }
            if !self.world.bounds.contains(a.position) {
                err(format!("assets[{i}].position outside world.bounds"));
            }
            if !(a.max_speed > 0.0) {
                err(format!("assets[{i}].max_speed must be > 0"));
            }
            if !(a.max_turn > 0.0) {
                err(format!("assets[{i}].max_turn must be > 0"));
            }
        }

        if let Err(msg) = self.sensors.validate() {
            err(msg);
        }

        for (i, s) in self.sam_sites.iter().enumerate() {
            if !(s.radar_range >= 0.0) {
                err(format!(
                    "sam_sites[{i}].radar_range must be >= 0, got {}",
                    s.radar_range
                ));
            }
            if !(s.missile_speed > 0.0) {
                err(format!("sam_sites[{i}].missile_speed must be > 0"));
            }
            if s.lock_ticks == 0 {
                err(format!("sam_sites[{i}].lock_ticks must be >= 1"));
            }
        }

        for (i, z) in self.zones.iter().enumerate() {
            if !(z.radius > 0.0) {
                err(format!("zones[{i}].radius must be > 0"));
            }
            if !matches!(z.kind, EntityKind::NoFlyZone | EntityKind::Obstacle) {
                err(format!("zones[{i}].kind must be NoFlyZone or Obstacle"));
            }
        }

        if self.mission.max_ticks == 0 {
            err("mission.max_ticks must be > 0".into());
        }
        if !(self.mission.rejection_norm > 0.0) {
            err("mission.rejection_norm must be > 0".into());
        }
        let w = &self.mission.weights;
        for (name, v) in [
            ("w_targets", w.w_targets),
            ("w_waypoints", w.w_waypoints),
            ("w_survival", w.w_survival),
            ("w_constraints", w.w_constraints),
            ("w_time", w.w_time),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                err(format!("mission.weights.{name} must be finite and >= 0"));
            }
        }
        if let Err(msg) = self.mission.constraints.validate() {
            err(format!("mission.{msg}"));
        }
        for (i, t) in self.mission.target_list.iter().enumerate() {
            if !self.targets.iter().any(|spec| spec.id == t.id) {
                err(format!(
                    "mission.target_list[{i}] references unknown target `{}`",
                    t.id
                ));
            }
            if !(0.0..=1.0).contains(&t.priority) {
                err(format!("mission.target_list[{i}].priority must be in [0,1]"));
            }
        }
        for (i, wp) in self.mission.waypoints.iter().enumerate() {
            if !self.world.bounds.contains(*wp) {
                err(format!("mission.waypoints[{i}] outside world.bounds"));
            }
        }

        let e = &self.ensembler;
        if e.d_h == 0 {
            err("ensembler.d_h must be >= 1".into());
        }
        if e.map_slots_per_kind == 0 {
            err("ensembler.map_slots_per_kind must be >= 1".into());
        }
        if !(e.init_scale > 0.0) {
            err("ensembler.init_scale must be > 0".into());
        }
        if !(e.delta_max >= 0.0) {
            err("ensembler.delta_max must be >= 0".into());
        }

        let t = &self.training;
        if !(t.learning_rate > 0.0) {
            err("training.learning_rate must be > 0".into());
        }
        if !(t.sigma >= 0.0) {
            err("training.sigma must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&t.epsilon) {
            err("training.epsilon must be in [0,1]".into());
        }
        if !(0.0..1.0).contains(&t.baseline_decay) {
            err("training.baseline_decay must be in [0,1)".into());
        }
        if t.episodes_per_iteration == 0 {
            err("training.episodes_per_iteration must be >= 1".into());
        }

        if !(0.0..=1.0).contains(&self.network.drop_prob) {
            err(format!(
                "network.drop_prob must be in [0,1], got {}",
                self.network.drop_prob
            ));
        }

        let c = &self.controllers;
        for (name, v) in [
            ("waypoint_gain", c.waypoint_gain),
            ("capture_radius", c.capture_radius),
            ("avoid_horizon", c.avoid_horizon),
            ("cell_size", c.cell_size),
            ("formation_radius", c.formation_radius),
        ] {
            if !(v > 0.0) {
                err(format!("controllers.{name} must be > 0"));
            }
        }

        if errors.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errors))
        }
    }

    pub fn controller_config(&self) -> ControllerConfig {
        let c = &self.controllers;
        ControllerConfig {
            waypoint_gain: c.waypoint_gain,
            capture_radius: c.capture_radius,
            avoid_horizon: c.avoid_horizon,
            cell_size: c.cell_size,
            stale_after_ticks: c.stale_after_ticks,
            formation_radius: c.formation_radius,
            weapon_range: self.world.params.weapon_range,
            threat_classes: c.threat_classes.clone(),
            default_obstacle_radius: c.default_obstacle_radius,
            swarm_roles: self.assets.len().max(1),
        }
    }

    pub fn env_layout(&self) -> EnvLayout {
        let speed_scale = self
            .assets
            .iter()
            .map(|a| a.max_speed)
            .fold(1.0f64, f64::max);
        EnvLayout::new(self.ensembler.contact_slots, self.world.bounds, speed_scale)
    }

    pub fn map_layout(&self) -> MapEncodingLayout {
        MapEncodingLayout::new(self.ensembler.map_slots_per_kind, self.world.bounds)
    }

    pub const N_CONTROLLERS: usize = 5;

    pub fn ensembler_dims(&self) -> EnsemblerDims {
        EnsemblerDims {
            d_in: self.env_layout().len()
                + Self::N_CONTROLLERS * PROPOSAL_FIELDS
                + self.map_layout().encoded_len(),
            d_h: self.ensembler.d_h,
            n_controllers: Self::N_CONTROLLERS,
        }
    }

    /// Ground-truth world at tick 0.
    pub fn build_world(&self) -> WorldState {
        let mut world = WorldState::new(self.world.bounds, self.world.params);
        world.wind = self.world.wind;
        let mut assets: Vec<AssetState> = self
            .assets
            .iter()
            .map(|a| AssetState {
                id: a.id.clone(),
                position: a.position,
                heading: crate::geom::wrap_angle(a.heading),
                speed: 0.0,
                max_speed: a.max_speed,
                max_turn: a.max_turn,
                health: 1.0,
                fuel: a.fuel,
                weapons: a.weapons,
                countermeasures: a.countermeasures,
                alive: true,
                turn_frac: 0.0,
                cm_active: false,
            })
            .collect();
        assets.sort_by(|a, b| a.id.cmp(&b.id));
        world.assets = assets;
        world.sam_sites = self
            .sam_sites
            .iter()
            .map(|s| SamSite {
                id: s.id.clone(),
                position: s.position,
                radar_range: s.radar_range,
                missile_speed: s.missile_speed,
                lock_ticks: s.lock_ticks,
                lock_progress: BTreeMap::new(),
            })
            .collect();
        world.hostiles = self
            .hostiles
            .iter()
            .map(|h| HostileState {
                id: h.id.clone(),
                position: h.position,
                heading: crate::geom::wrap_angle(h.heading),
                speed: 0.0,
                max_speed: h.max_speed,
                max_turn: h.max_turn,
                classification: h.classification.clone(),
                alive: true,
            })
            .collect();
        world.targets = self
            .targets
            .iter()
            .map(|t| {
                let mut e = Entity::new(&t.id, EntityKind::Target, t.position);
                e.classification = t.classification.clone();
                e.priority = self.target_priority(&t.id);
                e
            })
            .collect();
        world.zones = self
            .zones
            .iter()
            .map(|z| Zone {
                id: z.id.clone(),
                center: z.center,
                radius: z.radius,
                kind: z.kind,
            })
            .collect();
        world.waypoints = self.mission.waypoints.clone();
        world
    }

    fn target_priority(&self, id: &str) -> f64 {
        self.mission
            .target_list
            .iter()
            .find(|t| t.id == id)
            .map(|t| t.priority)
            .unwrap_or(0.5)
    }

    /// The briefed state map an asset starts with.
    pub fn initial_map(&self, asset_id: &str) -> StateMap {
        let spec = self
            .assets
            .iter()
            .find(|a| a.id == asset_id)
            .expect("asset exists");
        let mut me = Entity::new(&spec.id, EntityKind::SelfAsset, spec.position);
        me.heading = crate::geom::wrap_angle(spec.heading);
        me.author = spec.id.clone();
        let mut map = StateMap::new(me);

        for other in self.assets.iter().filter(|a| a.id != asset_id) {
            let mut e = Entity::new(&other.id, EntityKind::Allied, other.position);
            e.heading = crate::geom::wrap_angle(other.heading);
            e.author = asset_id.to_string();
            map.upsert_entity(e).unwrap();
        }
        for target in self.targets.iter().filter(|t| t.briefed) {
            let mut e = Entity::new(&target.id, EntityKind::Target, target.position);
            e.classification = target.classification.clone();
            e.priority = self.target_priority(&target.id);
            e.author = asset_id.to_string();
            map.upsert_entity(e).unwrap();
        }
        for zone in self.zones.iter().filter(|z| z.briefed) {
            let mut e = Entity::new(&zone.id, zone.kind, zone.center);
            e.radius = zone.radius;
            e.author = asset_id.to_string();
            map.upsert_entity(e).unwrap();
        }
        for sam in self.sam_sites.iter().filter(|s| s.briefed) {
            let mut e = Entity::new(&sam.id, EntityKind::Hostile, sam.position);
            e.classification = "SAM".into();
            e.author = asset_id.to_string();
            map.upsert_entity(e).unwrap();
        }
        for hostile in self.hostiles.iter().filter(|h| h.briefed) {
            let mut e = Entity::new(&hostile.id, EntityKind::Hostile, hostile.position);
            e.classification = hostile.classification.clone();
            e.author = asset_id.to_string();
            map.upsert_entity(e).unwrap();
        }
        for (i, wp) in self.mission.waypoints.iter().enumerate() {
            let mut e = Entity::new(waypoint_entity_id(i), EntityKind::Waypoint, *wp);
            e.priority = 1.0 - (i as f64 / self.mission.waypoints.len().max(1) as f64);
            e.author = asset_id.to_string();
            map.upsert_entity(e).unwrap();
        }
        map
    }
}
