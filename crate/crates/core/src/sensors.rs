//! Simulated sensors and the bus that fans their records out.
//!
//! Raw signals are never modeled; every sensor emits a semantically
//! transformed record tagged with one of four categories. The bus snapshot
//! for a tick is immutable and identical for every consumer.

use crate::geom::{bearing, Rect, Vec2};
use crate::rng;
use crate::statemap::EntityKind;
use crate::world::WorldState;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BusError {
    #[error("records from ticks {a} and {b} cannot share a snapshot")]
    MixedTick { a: u64, b: u64 },
    #[error("asset `{0}` is not alive in the world")]
    AssetNotAlive(String),
}

/// The four sensor categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensorCategory {
    Health,
    Performance,
    Navigation,
    EnvironmentalMapping,
}

impl SensorCategory {
    pub const ALL: [SensorCategory; 4] = [
        SensorCategory::Health,
        SensorCategory::Performance,
        SensorCategory::Navigation,
        SensorCategory::EnvironmentalMapping,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WarningKind {
    Rwr,
    Maw,
}

/// Semantic contact: a detected object transformed into position, speed,
/// heading, type and classification. `extent_radius` carries the footprint
/// of area objects (zero for point contacts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub contact_id: String,
    pub position: Vec2,
    pub speed: f64,
    pub heading: f64,
    pub kind: EntityKind,
    pub classification: String,
    pub extent_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    /// Unitless in [0, 1].
    pub engine_vibration: f64,
    pub temperature_c: f64,
    pub pressure_kpa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub velocity: f64,
    /// Unitless in [0, 1].
    pub stress: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavReport {
    pub position_estimate: Vec2,
    pub wind: Vec2,
    pub attitude_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarningReport {
    pub warning_kind: WarningKind,
    /// World-frame bearing to the emitter, radians in [0, 2π).
    pub bearing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SensorPayload {
    Contact(ContactReport),
    Health(HealthReport),
    Perf(PerfReport),
    Nav(NavReport),
    Warning(WarningReport),
}

impl SensorPayload {
    /// The category this payload belongs to; records derive theirs from it,
    /// so the category/payload consistency invariant holds by construction.
    pub fn category(&self) -> SensorCategory {
        match self {
            SensorPayload::Contact(_) | SensorPayload::Warning(_) => {
                SensorCategory::EnvironmentalMapping
            }
            SensorPayload::Health(_) => SensorCategory::Health,
            SensorPayload::Perf(_) => SensorCategory::Performance,
            SensorPayload::Nav(_) => SensorCategory::Navigation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    /// Unique within one tick's snapshot.
    pub record_id: u32,
    pub tick: u64,
    pub category: SensorCategory,
    pub source: String,
    pub payload: SensorPayload,
}

impl SensorRecord {
    pub fn new(record_id: u32, tick: u64, source: impl Into<String>, payload: SensorPayload) -> Self {
        SensorRecord {
            record_id,
            tick,
            category: payload.category(),
            source: source.into(),
            payload,
        }
    }
}

/// Per-asset sensor fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSuite {
    pub radar_range: f64,
    pub radar_noise_std: f64,
    pub rwr_enabled: bool,
    pub maws_enabled: bool,
    pub health_noise_std: f64,
}

impl Default for SensorSuite {
    fn default() -> Self {
        SensorSuite {
            radar_range: 1500.0,
            radar_noise_std: 5.0,
            rwr_enabled: true,
            maws_enabled: true,
            health_noise_std: 0.01,
        }
    }
}

impl SensorSuite {
    // Negated comparisons reject NaN configuration values too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), String> {
        if !(self.radar_range >= 0.0) {
            return Err(format!("sensors.radar_range must be >= 0, got {}", self.radar_range));
        }
        if !(self.radar_noise_std >= 0.0) {
            return Err(format!(
                "sensors.radar_noise_std must be >= 0, got {}",
                self.radar_noise_std
            ));
        }
        if !(self.health_noise_std >= 0.0) {
            return Err(format!(
                "sensors.health_noise_std must be >= 0, got {}",
                self.health_noise_std
            ));
        }
        Ok(())
    }
}

fn gauss2<R: Rng>(rng: &mut R, std: f64) -> Vec2 {
    Vec2::new(rng::normal(rng) * std, rng::normal(rng) * std)
}

/// Runs every sensor for one asset against the current world.
///
/// Emission order is fixed: health, performance, navigation, RWR warning,
/// MAW warnings (missile id order), then contacts (allied assets, hostiles,
/// SAM sites, targets, zones — each in id order). Deterministic given the
/// same world and rng stream state.
pub fn sense<R: Rng>(
    world: &WorldState,
    asset_id: &str,
    suite: &SensorSuite,
    rng: &mut R,
) -> Result<Vec<SensorRecord>, BusError> {
    let asset = world
        .assets
        .iter()
        .find(|a| a.id == asset_id && a.alive)
        .ok_or_else(|| BusError::AssetNotAlive(asset_id.to_string()))?;
    let tick = world.tick;
    let mut records = Vec::new();
    let mut next_id = 0u32;
    let mut push = |records: &mut Vec<SensorRecord>, source: &str, payload: SensorPayload| {
        records.push(SensorRecord::new(next_id, tick, source, payload));
        next_id += 1;
    };

    let speed_frac = if asset.max_speed > 0.0 {
        asset.speed / asset.max_speed
    } else {
        0.0
    };
    let vibration = (0.05 + 0.4 * speed_frac + 0.5 * (1.0 - asset.health)
        + rng::normal(rng) * suite.health_noise_std)
        .clamp(0.0, 1.0);
    let temperature = 60.0 + 30.0 * speed_frac + 80.0 * (1.0 - asset.health)
        + rng::normal(rng) * suite.health_noise_std * 10.0;
    let pressure = 101.3 - 20.0 * (1.0 - asset.health)
        + rng::normal(rng) * suite.health_noise_std * 5.0;
    push(
        &mut records,
        "engine",
        SensorPayload::Health(HealthReport {
            engine_vibration: vibration,
            temperature_c: temperature,
            pressure_kpa: pressure,
        }),
    );

    let stress = (asset.turn_frac.abs() + rng::normal(rng) * suite.health_noise_std)
        .clamp(0.0, 1.0);
    push(
        &mut records,
        "airframe",
        SensorPayload::Perf(PerfReport {
            velocity: (asset.speed + rng::normal(rng) * suite.health_noise_std).max(0.0),
            stress,
        }),
    );

    push(
        &mut records,
        "ins",
        SensorPayload::Nav(NavReport {
            position_estimate: asset.position + gauss2(rng, suite.radar_noise_std),
            wind: world.wind,
            attitude_ok: asset.health > 0.3,
        }),
    );

    if suite.rwr_enabled {
        // Illuminated by any SAM radar: report the nearest illuminator.
        let mut illuminators: Vec<&crate::world::SamSite> = world
            .sam_sites
            .iter()
            .filter(|s| s.position.dist(asset.position) <= s.radar_range)
            .collect();
        illuminators.sort_by(|a, b| {
            a.position
                .dist(asset.position)
                .total_cmp(&b.position.dist(asset.position))
                .then_with(|| a.id.cmp(&b.id))
        });
        if let Some(sam) = illuminators.first() {
            let noisy = sam.position + gauss2(rng, suite.radar_noise_std);
            push(
                &mut records,
                "rwr",
                SensorPayload::Warning(WarningReport {
                    warning_kind: WarningKind::Rwr,
                    bearing: bearing(asset.position, noisy),
                }),
            );
        }
    }

    if suite.maws_enabled {
        for missile in world.missiles.iter().filter(|m| m.target_asset == asset_id) {
            let noisy = missile.position + gauss2(rng, suite.radar_noise_std);
            push(
                &mut records,
                "maws",
                SensorPayload::Warning(WarningReport {
                    warning_kind: WarningKind::Maw,
                    bearing: bearing(asset.position, noisy),
                }),
            );
        }
    }

    let mut contact = |records: &mut Vec<SensorRecord>,
                       rng: &mut R,
                       id: &str,
                       pos: Vec2,
                       speed: f64,
                       heading: f64,
                       kind: EntityKind,
                       class: &str,
                       extent: f64| {
        if pos.dist(asset.position) <= suite.radar_range {
            let noisy = pos + gauss2(rng, suite.radar_noise_std);
            records.push(SensorRecord::new(
                next_id,
                tick,
                "radar",
                SensorPayload::Contact(ContactReport {
                    contact_id: id.to_string(),
                    position: noisy,
                    speed,
                    heading,
                    kind,
                    classification: class.to_string(),
                    extent_radius: extent,
                }),
            ));
            next_id += 1;
        }
    };

    for ally in world.assets.iter().filter(|a| a.alive && a.id != asset_id) {
        contact(
            &mut records,
            rng,
            &ally.id,
            ally.position,
            ally.speed,
            ally.heading,
            EntityKind::Allied,
            "friendly",
            0.0,
        );
    }
    for hostile in world.hostiles.iter().filter(|h| h.alive) {
        contact(
            &mut records,
            rng,
            &hostile.id,
            hostile.position,
            hostile.speed,
            hostile.heading,
            EntityKind::Hostile,
            &hostile.classification,
            0.0,
        );
    }
    for sam in &world.sam_sites {
        contact(
            &mut records,
            rng,
            &sam.id,
            sam.position,
            0.0,
            0.0,
            EntityKind::Hostile,
            "SAM",
            0.0,
        );
    }
    for target in &world.targets {
        let class = if target.neutralized {
            "neutralized"
        } else {
            target.classification.as_str()
        };
        contact(
            &mut records,
            rng,
            &target.id,
            target.position,
            0.0,
            target.heading,
            EntityKind::Target,
            class,
            0.0,
        );
    }
    for zone in &world.zones {
        contact(
            &mut records,
            rng,
            &zone.id,
            zone.center,
            0.0,
            0.0,
            zone.kind,
            if zone.kind == EntityKind::Obstacle {
                "obstacle"
            } else {
                "no-fly"
            },
            zone.radius,
        );
    }

    Ok(records)
}

/// Immutable per-tick record list shared by all consumers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusSnapshot {
    pub tick: u64,
    pub asset_id: String,
    records: Vec<SensorRecord>,
}

/// Publishes one tick's records as a snapshot, sorted by record id.
/// Mixed-tick input is rejected.
pub fn publish(asset_id: &str, mut records: Vec<SensorRecord>) -> Result<BusSnapshot, BusError> {
    let tick = records.first().map(|r| r.tick).unwrap_or(0);
    for r in &records {
        if r.tick != tick {
            return Err(BusError::MixedTick { a: tick, b: r.tick });
        }
    }
    records.sort_by_key(|r| r.record_id);
    Ok(BusSnapshot {
        tick,
        asset_id: asset_id.to_string(),
        records,
    })
}

impl BusSnapshot {
    pub fn records(&self) -> &[SensorRecord] {
        &self.records
    }

    pub fn get(&self, record_id: u32) -> Option<&SensorRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }

    pub fn warnings(&self, kind: WarningKind) -> impl Iterator<Item = &SensorRecord> {
        self.records.iter().filter(move |r| {
            matches!(&r.payload, SensorPayload::Warning(w) if w.warning_kind == kind)
        })
    }

    pub fn contacts(&self) -> impl Iterator<Item = (&SensorRecord, &ContactReport)> {
        self.records.iter().filter_map(|r| match &r.payload {
            SensorPayload::Contact(c) => Some((r, c)),
            _ => None,
        })
    }

    pub fn nav(&self) -> Option<(&SensorRecord, &NavReport)> {
        self.records.iter().find_map(|r| match &r.payload {
            SensorPayload::Nav(n) => Some((r, n)),
            _ => None,
        })
    }

    pub fn health(&self) -> Option<(&SensorRecord, &HealthReport)> {
        self.records.iter().find_map(|r| match &r.payload {
            SensorPayload::Health(h) => Some((r, h)),
            _ => None,
        })
    }

    pub fn perf(&self) -> Option<(&SensorRecord, &PerfReport)> {
        self.records.iter().find_map(|r| match &r.payload {
            SensorPayload::Perf(p) => Some((r, p)),
            _ => None,
        })
    }
}

/// Fixed layout of the environment vector Eᵗ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvLayout {
    pub contact_slots: usize,
    pub bounds: Rect,
    /// Reference speed for normalizing velocities (m/s).
    pub speed_scale: f64,
}

impl EnvLayout {
    pub const FIELDS_PER_CONTACT: usize = 6;
    /// health(3) + perf(2) + nav(4) + warning flags(2).
    pub const FIXED_FIELDS: usize = 11;

    pub fn new(contact_slots: usize, bounds: Rect, speed_scale: f64) -> Self {
        EnvLayout {
            contact_slots,
            bounds,
            speed_scale,
        }
    }

    pub fn len(&self) -> usize {
        Self::FIXED_FIELDS + self.contact_slots * Self::FIELDS_PER_CONTACT
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Builds the fixed-length environment vector from a snapshot.
///
/// Layout: `[vibration, temp, pressure, velocity, stress, pos_x, pos_y,
/// wind_x, wind_y, rwr_flag, maw_flag, contacts...]` with each contact slot
/// holding `[present, dx, dy, speed, heading, kind_code]`. The nearest
/// `contact_slots` contacts by range from the navigation position estimate
/// fill the slots; absent slots are zero.
pub fn build_env_vector(snapshot: &BusSnapshot, layout: &EnvLayout) -> Vec<f64> {
    let mut v = vec![0.0; layout.len()];
    let half_w = 0.5 * layout.bounds.width();
    let half_h = 0.5 * layout.bounds.height();
    let speed_scale = if layout.speed_scale > 0.0 {
        layout.speed_scale
    } else {
        1.0
    };

    if let Some((_, h)) = snapshot.health() {
        v[0] = h.engine_vibration;
        v[1] = h.temperature_c / 200.0;
        v[2] = h.pressure_kpa / 200.0;
    }
    if let Some((_, p)) = snapshot.perf() {
        v[3] = p.velocity / speed_scale;
        v[4] = p.stress;
    }
    let origin = snapshot
        .nav()
        .map(|(_, n)| n.position_estimate)
        .unwrap_or(Vec2::ZERO);
    if let Some((_, n)) = snapshot.nav() {
        let p = layout.bounds.normalize(n.position_estimate);
        v[5] = p.x;
        v[6] = p.y;
        v[7] = n.wind.x / speed_scale;
        v[8] = n.wind.y / speed_scale;
    }
    v[9] = if snapshot.warnings(WarningKind::Rwr).next().is_some() {
        1.0
    } else {
        0.0
    };
    v[10] = if snapshot.warnings(WarningKind::Maw).next().is_some() {
        1.0
    } else {
        0.0
    };

    let mut contacts: Vec<&ContactReport> = snapshot.contacts().map(|(_, c)| c).collect();
    contacts.sort_by(|a, b| {
        a.position
            .dist(origin)
            .total_cmp(&b.position.dist(origin))
            .then_with(|| a.contact_id.cmp(&b.contact_id))
    });
    for (slot, c) in contacts.iter().take(layout.contact_slots).enumerate() {
        let base = EnvLayout::FIXED_FIELDS + slot * EnvLayout::FIELDS_PER_CONTACT;
        v[base] = 1.0;
        v[base + 1] = (c.position.x - origin.x) / half_w;
        v[base + 2] = (c.position.y - origin.y) / half_h;
        v[base + 3] = c.speed / speed_scale;
        v[base + 4] = c.heading / std::f64::consts::TAU;
        v[base + 5] = c.kind.index() as f64 / (EntityKind::COUNT - 1) as f64;
    }
    v
}
