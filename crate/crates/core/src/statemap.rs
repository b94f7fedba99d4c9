//! Per-asset world model: the state map, its fixed-length vector encoding,
//! and the Cognitive Corpus that persists it alongside mission data.
//!
//! Every swarm member maintains its own map copy. Conflicting writes from
//! different authors are resolved last-writer-wins on `(last_update_tick,
//! author)`, which makes merging commutative: any application order of the
//! same observation set yields the same map.

use crate::filter::ConstraintSet;
use crate::geom::{Rect, Vec2};
use crate::train::PersonalityInfo;
use crate::world::{MissionPlan, UtilityReport};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StateMapError {
    #[error("entity `{id}` has a non-finite position")]
    NonFinitePosition { id: String },
    #[error("entity id must be non-empty")]
    EmptyId,
    #[error("performance tick {tick} is not greater than last recorded tick {last}")]
    OutOfOrderTick { tick: u64, last: u64 },
    #[error("corpus io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus encoding: {0}")]
    Encoding(#[from] serde_json::Error),
}

/// Classification of a state-map entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    SelfAsset,
    Allied,
    Hostile,
    Target,
    NoFlyZone,
    Obstacle,
    Waypoint,
}

impl EntityKind {
    pub const COUNT: usize = 7;
    pub const ALL: [EntityKind; Self::COUNT] = [
        EntityKind::SelfAsset,
        EntityKind::Allied,
        EntityKind::Hostile,
        EntityKind::Target,
        EntityKind::NoFlyZone,
        EntityKind::Obstacle,
        EntityKind::Waypoint,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|k| *k == self).unwrap()
    }
}

/// One tracked object in an asset's world picture.
///
/// `radius` is the footprint for area entities (zones, obstacles) and zero
/// for point objects; the contact schema alone cannot describe an extent,
/// and path planning needs one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    pub position: Vec2,
    pub velocity: Vec2,
    /// Radians in [0, 2π).
    pub heading: f64,
    pub classification: String,
    /// Mission priority in [0, 1].
    pub priority: f64,
    pub neutralized: bool,
    #[serde(default)]
    pub radius: f64,
    pub last_update_tick: u64,
    /// Asset id of the last writer.
    pub author: String,
}

impl Entity {
    pub fn new(id: impl Into<String>, kind: EntityKind, position: Vec2) -> Self {
        Entity {
            id: id.into(),
            kind,
            position,
            velocity: Vec2::ZERO,
            heading: 0.0,
            classification: String::new(),
            priority: 0.5,
            neutralized: false,
            radius: 0.0,
            last_update_tick: 0,
            author: String::new(),
        }
    }

    fn lww_key(&self) -> (u64, &str) {
        (self.last_update_tick, self.author.as_str())
    }
}

/// Outcome of a single map upsert.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsertOutcome {
    Inserted,
    Replaced,
    Ignored,
}

/// An asset's internal world picture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMap {
    pub own_id: String,
    pub tick: u64,
    entities: BTreeMap<String, Entity>,
}

impl StateMap {
    /// Builds a map around the owning asset; the entity is forced to kind
    /// `SelfAsset`.
    pub fn new(mut own: Entity) -> Self {
        own.kind = EntityKind::SelfAsset;
        let own_id = own.id.clone();
        let mut entities = BTreeMap::new();
        entities.insert(own_id.clone(), own);
        StateMap {
            own_id,
            tick: 0,
            entities,
        }
    }

    pub fn set_tick(&mut self, tick: u64) {
        self.tick = self.tick.max(tick);
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn of_kind(&self, kind: EntityKind) -> impl Iterator<Item = &Entity> {
        self.entities.values().filter(move |e| e.kind == kind)
    }

    pub fn self_entity(&self) -> &Entity {
        self.entities
            .get(&self.own_id)
            .expect("state map always holds its own asset")
    }

    /// Last-writer-wins upsert. An observation replaces an existing entity
    /// iff its `(last_update_tick, author)` is strictly greater; new ids are
    /// always inserted. Kind is normalized so that exactly one `SelfAsset`
    /// exists: the owner's id keeps that kind, any other claim is demoted to
    /// `Allied`.
    pub fn upsert_entity(&mut self, mut obs: Entity) -> Result<UpsertOutcome, StateMapError> {
        if obs.id.is_empty() {
            return Err(StateMapError::EmptyId);
        }
        if !obs.position.is_finite() {
            return Err(StateMapError::NonFinitePosition { id: obs.id });
        }
        if obs.id == self.own_id {
            obs.kind = EntityKind::SelfAsset;
        } else if obs.kind == EntityKind::SelfAsset {
            obs.kind = EntityKind::Allied;
        }
        let outcome = match self.entities.get(&obs.id) {
            None => {
                self.entities.insert(obs.id.clone(), obs.clone());
                UpsertOutcome::Inserted
            }
            Some(existing) if obs.lww_key() > existing.lww_key() => {
                self.entities.insert(obs.id.clone(), obs.clone());
                UpsertOutcome::Replaced
            }
            Some(_) => UpsertOutcome::Ignored,
        };
        if outcome != UpsertOutcome::Ignored {
            self.tick = self.tick.max(obs.last_update_tick);
        }
        Ok(outcome)
    }

    /// Up to `k` entities of `kind` ordered by ascending distance from
    /// `origin`, ties broken by id. Neutralized targets are excluded when
    /// querying targets.
    pub fn query_nearest(&self, kind: EntityKind, origin: Vec2, k: usize) -> Vec<&Entity> {
        let mut found: Vec<&Entity> = self
            .entities
            .values()
            .filter(|e| e.kind == kind)
            .filter(|e| !(kind == EntityKind::Target && e.neutralized))
            .collect();
        found.sort_by(|a, b| {
            let da = a.position.dist(origin);
            let db = b.position.dist(origin);
            da.total_cmp(&db).then_with(|| a.id.cmp(&b.id))
        });
        found.truncate(k);
        found
    }
}

/// Fixed-slot layout for the map's vector encoding.
///
/// Per entity kind, the `per_kind_slots` entities nearest to the owning
/// asset fill slots of 7 fields each: present flag, normalized x/y,
/// normalized vx/vy, priority, neutralized flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapEncodingLayout {
    pub per_kind_slots: usize,
    pub bounds: Rect,
}

impl MapEncodingLayout {
    pub const FIELDS_PER_SLOT: usize = 7;

    pub fn new(per_kind_slots: usize, bounds: Rect) -> Self {
        MapEncodingLayout {
            per_kind_slots,
            bounds,
        }
    }

    pub fn encoded_len(&self) -> usize {
        EntityKind::COUNT * self.per_kind_slots * Self::FIELDS_PER_SLOT
    }
}

/// Encodes a state map as a fixed-length vector for the ensembler.
///
/// Length depends only on the layout; overflow entities beyond the slot
/// count are dropped nearest-first, unused slots are all-zero.
pub fn encode_state_map(map: &StateMap, layout: &MapEncodingLayout) -> Vec<f64> {
    let mut out = vec![0.0; layout.encoded_len()];
    let origin = map.self_entity().position;
    let half_w = 0.5 * layout.bounds.width();
    let half_h = 0.5 * layout.bounds.height();
    for (ki, kind) in EntityKind::ALL.iter().enumerate() {
        let nearest = map.query_nearest(*kind, origin, layout.per_kind_slots);
        for (slot, ent) in nearest.iter().enumerate() {
            let base = (ki * layout.per_kind_slots + slot) * MapEncodingLayout::FIELDS_PER_SLOT;
            let p = layout.bounds.normalize(ent.position);
            out[base] = 1.0;
            out[base + 1] = p.x;
            out[base + 2] = p.y;
            out[base + 3] = ent.velocity.x / half_w;
            out[base + 4] = ent.velocity.y / half_h;
            out[base + 5] = ent.priority;
            out[base + 6] = if ent.neutralized { 1.0 } else { 0.0 };
        }
    }
    out
}

/// One performance-log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceEntry {
    pub tick: u64,
    pub report: UtilityReport,
}

/// Per-asset mission store: plan, map, constraints, performance history and
/// the personality registry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CognitiveCorpus {
    pub mission: MissionPlan,
    pub state_map: StateMap,
    pub constraints: ConstraintSet,
    pub performance_log: Vec<PerformanceEntry>,
    pub personalities: Vec<PersonalityInfo>,
}

impl CognitiveCorpus {
    pub fn new(mission: MissionPlan, state_map: StateMap, constraints: ConstraintSet) -> Self {
        CognitiveCorpus {
            mission,
            state_map,
            constraints,
            performance_log: Vec::new(),
            personalities: Vec::new(),
        }
    }

    /// Appends a performance report; ticks must be strictly increasing.
    pub fn record_performance(
        &mut self,
        tick: u64,
        report: UtilityReport,
    ) -> Result<(), StateMapError> {
        if let Some(last) = self.performance_log.last() {
            if tick <= last.tick {
                return Err(StateMapError::OutOfOrderTick {
                    tick,
                    last: last.tick,
                });
            }
        }
        self.performance_log.push(PerformanceEntry { tick, report });
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, StateMapError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), StateMapError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StateMapError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
