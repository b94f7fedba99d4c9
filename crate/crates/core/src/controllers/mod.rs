//! The independent control systems feeding the ensembler.
//!
//! Five controllers cover the mission capability groups: obstacle
//! avoidance, threat evasion, swarm formation keeping and re-tasking,
//! targeting, and waypoint following. Controllers are pure functions of an
//! immutable per-tick context and are evaluated in fixed id order; each
//! cites the sensor records that justify its discrete proposals, so the
//! action filter can re-derive provenance.

pub mod astar;

use crate::action::{ContinuousCommand, DiscreteAction};
use crate::geom::{bearing, signed_angle_diff, wrap_angle, Circle, Rect, Vec2};
use crate::sensors::{BusSnapshot, SensorPayload, WarningKind};
use crate::statemap::{Entity, EntityKind, StateMap};
use crate::world::MissionPlan;
use astar::{plan_path_astar, PlanGrid};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Tunables for the controller bank, read from the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Proportional steering gain (heading-rate fraction per radian).
    pub waypoint_gain: f64,
    /// Waypoint capture radius, meters.
    pub capture_radius: f64,
    /// Look-ahead distance for obstruction checks, meters.
    pub avoid_horizon: f64,
    /// Planning grid resolution, meters.
    pub cell_size: f64,
    /// Ally staleness threshold for re-tasking, ticks.
    pub stale_after_ticks: u64,
    /// Ring formation radius, meters.
    pub formation_radius: f64,
    /// Weapon engagement range assumed when proposing strikes, meters.
    pub weapon_range: f64,
    /// Contact classifications treated as threats worth targeting.
    pub threat_classes: Vec<String>,
    /// Footprint for obstacles sensed without a usable extent, meters.
    pub default_obstacle_radius: f64,
    /// Number of formation slots (normally the initial swarm size).
    pub swarm_roles: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            waypoint_gain: 2.0 / PI,
            capture_radius: 60.0,
            avoid_horizon: 250.0,
            cell_size: 50.0,
            stale_after_ticks: 10,
            formation_radius: 150.0,
            weapon_range: 800.0,
            threat_classes: vec!["SAM".into(), "interceptor".into()],
            default_obstacle_radius: 40.0,
            swarm_roles: 1,
        }
    }
}

/// One controller's suggestion for this tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerProposal {
    pub controller_id: String,
    pub continuous: ContinuousCommand,
    pub discrete: Vec<DiscreteAction>,
    /// Self-assessed salience in [0, 1].
    pub confidence: f64,
    /// Record ids from the current snapshot supporting this proposal.
    pub justifications: Vec<u32>,
}

impl ControllerProposal {
    fn new(controller_id: &str) -> Self {
        ControllerProposal {
            controller_id: controller_id.to_string(),
            continuous: ContinuousCommand::default(),
            discrete: Vec::new(),
            confidence: 0.0,
            justifications: Vec::new(),
        }
    }

    fn finish(mut self) -> Self {
        self.continuous = self.continuous.clamped();
        self.confidence = self.confidence.clamp(0.0, 1.0);
        self.justifications.sort_unstable();
        self.justifications.dedup();
        self
    }
}

/// Immutable inputs shared by every controller in a tick.
pub struct ControlContext<'a> {
    pub self_entity: &'a Entity,
    pub snapshot: &'a BusSnapshot,
    pub map: &'a StateMap,
    pub mission: &'a MissionPlan,
    pub bounds: Rect,
    /// Engine-managed course override (from an accepted ChangeCourse);
    /// empty means follow the mission waypoints.
    pub active_path: &'a [Vec2],
    pub weapons_remaining: u32,
    pub countermeasures_remaining: u32,
    pub config: &'a ControllerConfig,
}

impl ControlContext<'_> {
    fn nav_record_id(&self) -> Option<u32> {
        self.snapshot.nav().map(|(r, _)| r.record_id)
    }

    /// Waypoint index i is considered captured once the briefed waypoint
    /// entity `wp{i}` is marked neutralized in this asset's map.
    fn waypoint_captured(&self, index: usize) -> bool {
        self.map
            .get(&waypoint_entity_id(index))
            .map(|e| e.neutralized)
            .unwrap_or(false)
    }

    /// Points still to visit: the override course if one is active,
    /// otherwise the uncaptured mission waypoints in order.
    fn remaining_course(&self) -> Vec<Vec2> {
        if !self.active_path.is_empty() {
            return self.active_path.to_vec();
        }
        self.mission
            .waypoints
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.waypoint_captured(*i))
            .map(|(_, p)| *p)
            .collect()
    }

    fn next_objective(&self) -> Option<Vec2> {
        let course = self.remaining_course();
        course
            .iter()
            .find(|p| p.dist(self.self_entity.position) > self.config.capture_radius)
            .or(course.last())
            .copied()
    }
}

/// Entity id used for briefed waypoint markers.
pub fn waypoint_entity_id(index: usize) -> String {
    format!("wp{index}")
}

/// Proportional pure-pursuit steering toward a point.
fn steer_toward(from: &Entity, target: Vec2, gain: f64) -> f64 {
    let err = signed_angle_diff(bearing(from.position, target), from.heading);
    (gain * err).clamp(-1.0, 1.0)
}

pub trait Controller {
    fn id(&self) -> &'static str;
    fn propose(&self, ctx: &ControlContext) -> ControllerProposal;
}

/// Steers around mapped no-fly zones and obstacles, registering newly
/// sensed obstructions and replanning the course when the current heading
/// runs into one.
pub struct AvoidanceController;

fn ray_circle_hit(origin: Vec2, dir: Vec2, circle: &Circle) -> Option<f64> {
    let oc = origin - circle.center;
    let b = oc.dot(dir);
    let c = oc.norm_sq() - circle.radius * circle.radius;
    if c <= 0.0 {
        // Already inside.
        return Some(0.0);
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

impl Controller for AvoidanceController {
    fn id(&self) -> &'static str {
        "avoidance"
    }

    fn propose(&self, ctx: &ControlContext) -> ControllerProposal {
        let mut p = ControllerProposal::new(self.id());
        let cfg = ctx.config;
        let me = ctx.self_entity;

        let zones: Vec<(&Entity, Circle)> = ctx
            .map
            .entities()
            .filter(|e| matches!(e.kind, EntityKind::NoFlyZone | EntityKind::Obstacle))
            .map(|e| (e, Circle::new(e.position, e.radius.max(1.0))))
            .collect();

        // Register obstructions the radar sees but the map does not know.
        let mut cited = Vec::new();
        for (record, contact) in ctx.snapshot.contacts() {
            if matches!(contact.kind, EntityKind::NoFlyZone | EntityKind::Obstacle)
                && ctx.map.get(&contact.contact_id).is_none()
            {
                let radius = if contact.extent_radius > 0.0 {
                    contact.extent_radius
                } else {
                    cfg.default_obstacle_radius
                };
                p.discrete.push(DiscreteAction::AddObstacle {
                    center: contact.position,
                    radius,
                });
                cited.push(record.record_id);
            }
        }

        // First incursion along the current heading within the horizon.
        let dir = Vec2::from_angle(me.heading);
        let mut incursion: Option<(f64, &Entity)> = None;
        for (entity, circle) in &zones {
            if let Some(t) = ray_circle_hit(me.position, dir, circle) {
                if t <= cfg.avoid_horizon
                    && incursion.map(|(best, _)| t < best).unwrap_or(true)
                {
                    incursion = Some((t, entity));
                }
            }
        }

        if let Some((dist, zone_entity)) = incursion {
            if let Some(goal_point) = ctx.next_objective() {
                let circles: Vec<Circle> = zones.iter().map(|(_, c)| *c).collect();
                let mut grid = PlanGrid::from_circles(ctx.bounds, cfg.cell_size, &circles);
                let plan = grid.cell_of(me.position).and_then(|start| {
                    // The asset may already sit inside the inflated margin;
                    // it must still be able to plan its way out.
                    grid.set_blocked(start, false);
                    let goal = grid.cell_of(goal_point)?;
                    plan_path_astar(&grid, start, goal).ok()
                });
                if let Some(cells) = plan {
                    let path: Vec<Vec2> = cells.iter().map(|c| grid.cell_center(*c)).collect();
                    if let Some(first) = path.iter().find(|pt| pt.dist(me.position) > cfg.cell_size)
                    {
                        p.continuous =
                            ContinuousCommand::new(steer_toward(me, *first, cfg.waypoint_gain), 1.0);
                    }
                    p.discrete.push(DiscreteAction::ChangeCourse { path });
                }
            }
            // Cite the contacts covering the incurring zone if the radar
            // currently sees it.
            for (record, contact) in ctx.snapshot.contacts() {
                if contact.contact_id == zone_entity.id {
                    cited.push(record.record_id);
                }
            }
            p.confidence = (2.0 * (1.0 - dist / cfg.avoid_horizon)).clamp(0.0, 1.0);
        }

        if !p.discrete.is_empty() || incursion.is_some() {
            if let Some(nav) = ctx.nav_record_id() {
                cited.push(nav);
            }
        }
        p.justifications = cited;
        p.finish()
    }
}

/// Responds to radar warning and missile approach warnings.
pub struct EvasionController;

impl Controller for EvasionController {
    fn id(&self) -> &'static str {
        "evasion"
    }

    fn propose(&self, ctx: &ControlContext) -> ControllerProposal {
        let mut p = ControllerProposal::new(self.id());
        let me = ctx.self_entity;

        let maws: Vec<_> = ctx.snapshot.warnings(WarningKind::Maw).collect();
        if let Some(first) = maws.first() {
            let SensorPayload::Warning(w) = &first.payload else {
                unreachable!()
            };
            // Hard turn directly away from the missile, full speed, decoys out.
            let desired = wrap_angle(w.bearing + PI);
            let err = signed_angle_diff(desired, me.heading);
            p.continuous = ContinuousCommand::new((4.0 * err).clamp(-1.0, 1.0), 1.0);
            p.discrete.push(DiscreteAction::EvasiveManeuvers);
            p.discrete.push(DiscreteAction::EngageCountermeasures);
            p.confidence = 1.0;
            p.justifications = maws.iter().map(|r| r.record_id).collect();
            return p.finish();
        }

        let rwrs: Vec<_> = ctx.snapshot.warnings(WarningKind::Rwr).collect();
        if let Some(first) = rwrs.first() {
            let SensorPayload::Warning(w) = &first.payload else {
                unreachable!()
            };
            // Beam the emitter: steer perpendicular-away from its bearing.
            let desired = wrap_angle(w.bearing + FRAC_PI_2);
            let err = signed_angle_diff(desired, me.heading);
            p.continuous = ContinuousCommand::new((2.0 * err).clamp(-1.0, 1.0), 1.0);
            p.discrete.push(DiscreteAction::EvasiveManeuvers);
            p.confidence = 0.7;
            p.justifications = rwrs.iter().map(|r| r.record_id).collect();
        }
        p.finish()
    }
}

/// Ring-formation station keeping with deterministic re-tasking when an
/// ally goes stale.
pub struct SwarmController;

/// Role assignment rule: swarm members whose map entry is fresh (age within
/// `stale_after` ticks), sorted by id, take role indices in order. Roles
/// are ordered by priority, so survivors always hold the top roles.
pub fn assign_roles(map: &StateMap, stale_after: u64) -> Vec<(String, usize)> {
    let now = map.tick;
    let mut members: Vec<String> = map
        .entities()
        .filter(|e| match e.kind {
            EntityKind::SelfAsset => true,
            EntityKind::Allied => now.saturating_sub(e.last_update_tick) <= stale_after,
            _ => false,
        })
        .map(|e| e.id.clone())
        .collect();
    members.sort();
    members.into_iter().enumerate().map(|(i, id)| (id, i)).collect()
}

impl Controller for SwarmController {
    fn id(&self) -> &'static str {
        "swarm"
    }

    fn propose(&self, ctx: &ControlContext) -> ControllerProposal {
        let mut p = ControllerProposal::new(self.id());
        let me = ctx.self_entity;
        let cfg = ctx.config;
        let now = ctx.map.tick;

        let assignment = assign_roles(ctx.map, cfg.stale_after_ticks);
        let Some((_, role)) = assignment.iter().find(|(id, _)| id == &me.id) else {
            return p.finish();
        };
        let fresh_ids: Vec<&String> = assignment.iter().map(|(id, _)| id).collect();
        let mut centroid = Vec2::ZERO;
        for id in &fresh_ids {
            centroid = centroid + ctx.map.get(id).map(|e| e.position).unwrap_or(me.position);
        }
        centroid = centroid * (1.0 / fresh_ids.len() as f64);

        let n_roles = cfg.swarm_roles.max(assignment.len());
        let slot_angle = TAU * (*role as f64) / n_roles as f64;
        let slot = centroid + Vec2::from_angle(slot_angle) * cfg.formation_radius;

        let dist = me.position.dist(slot);
        p.continuous = ContinuousCommand::new(
            steer_toward(me, slot, cfg.waypoint_gain),
            (dist / cfg.formation_radius).clamp(0.0, 1.0),
        );
        p.confidence = (dist / cfg.formation_radius).clamp(0.0, 1.0);

        let any_stale = ctx
            .map
            .of_kind(EntityKind::Allied)
            .any(|e| now.saturating_sub(e.last_update_tick) > cfg.stale_after_ticks);
        if any_stale {
            p.discrete.push(DiscreteAction::ChangeCourse { path: vec![slot] });
            if let Some(nav) = ctx.nav_record_id() {
                p.justifications.push(nav);
            }
        }
        p.finish()
    }
}

/// Maintains the target list and proposes weapon engagements.
pub struct TargetingController;

impl Controller for TargetingController {
    fn id(&self) -> &'static str {
        "targeting"
    }

    fn propose(&self, ctx: &ControlContext) -> ControllerProposal {
        let mut p = ControllerProposal::new(self.id());
        let me = ctx.self_entity;
        let cfg = ctx.config;
        let no_strike = &ctx.mission.constraints.no_strike_ids;
        let briefed: std::collections::BTreeSet<&str> = ctx
            .mission
            .target_list
            .iter()
            .map(|t| t.id.as_str())
            .collect();

        for (record, contact) in ctx.snapshot.contacts() {
            let id = contact.contact_id.as_str();
            match contact.kind {
                EntityKind::Hostile => {
                    // Un-briefed threat: add it to the target list.
                    let known_target = briefed.contains(id)
                        || ctx
                            .map
                            .get(id)
                            .map(|e| e.kind == EntityKind::Target)
                            .unwrap_or(false);
                    if cfg.threat_classes.contains(&contact.classification) && !known_target {
                        let mut entity = Entity::new(id, EntityKind::Target, contact.position);
                        entity.classification = contact.classification.clone();
                        entity.heading = contact.heading;
                        entity.priority = 0.8;
                        entity.last_update_tick = ctx.snapshot.tick;
                        entity.author = me.id.clone();
                        p.discrete.push(DiscreteAction::AddNewTarget { entity });
                        p.justifications.push(record.record_id);
                    }
                }
                EntityKind::Target => {
                    let map_entry = ctx.map.get(id);
                    let neutralized_seen = contact.classification == "neutralized";
                    if neutralized_seen {
                        if map_entry.map(|e| e.priority > 0.0).unwrap_or(false) {
                            p.discrete.push(DiscreteAction::DeprioritizeTarget {
                                target_id: id.to_string(),
                            });
                            p.justifications.push(record.record_id);
                        }
                        if briefed.contains(id)
                            && map_entry.map(|e| !e.neutralized).unwrap_or(false)
                        {
                            p.discrete.push(DiscreteAction::UpdateMissionAchievement {
                                target_id: id.to_string(),
                            });
                            p.justifications.push(record.record_id);
                        }
                    } else if no_strike.contains(id)
                        && map_entry.map(|e| e.priority > 0.0).unwrap_or(false)
                    {
                        // Hard-constraint violation: stand down from it.
                        p.discrete.push(DiscreteAction::DeprioritizeTarget {
                            target_id: id.to_string(),
                        });
                        p.justifications.push(record.record_id);
                    }
                }
                _ => {}
            }
        }

        if ctx.weapons_remaining > 0 {
            let mut best: Option<(&Entity, u32)> = None;
            for (record, contact) in ctx.snapshot.contacts() {
                let Some(entity) = ctx.map.get(&contact.contact_id) else {
                    continue;
                };
                if entity.kind != EntityKind::Target
                    || entity.neutralized
                    || contact.classification == "neutralized"
                    || entity.priority <= 0.0
                    || no_strike.contains(&entity.id)
                    || entity.position.dist(me.position) > cfg.weapon_range
                {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((cur, _)) => (entity.priority, &cur.id) > (cur.priority, &entity.id),
                };
                if better {
                    best = Some((entity, record.record_id));
                }
            }
            if let Some((target, record_id)) = best {
                p.discrete.push(DiscreteAction::EngageWeaponSystem {
                    target_id: target.id.clone(),
                });
                p.justifications.push(record_id);
            }
        }

        if !p.discrete.is_empty() {
            p.confidence = 0.9;
        }
        p.finish()
    }
}

/// Pure-pursuit waypoint following.
pub struct WaypointController;

impl Controller for WaypointController {
    fn id(&self) -> &'static str {
        "waypoint"
    }

    fn propose(&self, ctx: &ControlContext) -> ControllerProposal {
        let mut p = ControllerProposal::new(self.id());
        let me = ctx.self_entity;
        let cfg = ctx.config;
        p.confidence = 1.0;
        if let Some(nav) = ctx.nav_record_id() {
            p.justifications.push(nav);
        }

        let course = ctx.remaining_course();
        let target = course
            .iter()
            .find(|pt| pt.dist(me.position) > cfg.capture_radius)
            .copied();
        match target {
            Some(point) => {
                p.continuous =
                    ContinuousCommand::new(steer_toward(me, point, cfg.waypoint_gain), 1.0);
            }
            None => {
                // Final waypoint captured (or no course at all): hold.
                p.continuous = ContinuousCommand::new(0.0, 0.0);
            }
        }
        p.finish()
    }
}

/// The fixed controller bank, evaluated in controller-id order.
pub struct ControllerBank {
    controllers: Vec<Box<dyn Controller + Send + Sync>>,
}

impl ControllerBank {
    pub fn standard() -> Self {
        ControllerBank {
            controllers: vec![
                Box::new(AvoidanceController),
                Box::new(EvasionController),
                Box::new(SwarmController),
                Box::new(TargetingController),
                Box::new(WaypointController),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.controllers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controllers.is_empty()
    }

    pub fn ids(&self) -> Vec<&'static str> {
        self.controllers.iter().map(|c| c.id()).collect()
    }

    pub fn propose_all(&self, ctx: &ControlContext) -> Vec<ControllerProposal> {
        self.controllers.iter().map(|c| c.propose(ctx)).collect()
    }
}
