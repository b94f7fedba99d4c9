//! Deterministic tick-based world: point-mass kinematics, SAM sites and
//! missiles, interceptor pursuit, weapon engagements, waypoint capture and
//! the mission utility function.
//!
//! `step` is functional: it consumes an immutable pre-tick world that all
//! per-asset decision stages may share, and produces the next state. All
//! stochastic draws (kill and hit probabilities) come from the caller's
//! seeded stream in a fixed order.

use crate::action::{ActionVector, DiscreteAction};
use crate::filter::ConstraintSet;
use crate::geom::{signed_angle_diff, wrap_angle, Rect, Vec2};
use crate::statemap::{Entity, EntityKind};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One controllable asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetState {
    pub id: String,
    pub position: Vec2,
    /// Radians in [0, 2π).
    pub heading: f64,
    /// Current speed, m/s.
    pub speed: f64,
    pub max_speed: f64,
    /// Max turn rate, rad/s.
    pub max_turn: f64,
    /// [0, 1].
    pub health: f64,
    /// Seconds of flight remaining at full speed.
    pub fuel: f64,
    pub weapons: u32,
    pub countermeasures: u32,
    pub alive: bool,
    /// Last commanded heading-rate fraction; drives the stress sensor.
    #[serde(default)]
    pub turn_frac: f64,
    /// Whether countermeasures were fired this tick.
    #[serde(default)]
    pub cm_active: bool,
}

/// A pursuing hostile interceptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostileState {
    pub id: String,
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub max_speed: f64,
    pub max_turn: f64,
    pub classification: String,
    pub alive: bool,
}

/// A surface-to-air missile site. It launches at an asset it has
/// continuously illuminated for `lock_ticks` ticks, then begins re-locking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamSite {
    pub id: String,
    pub position: Vec2,
    pub radar_range: f64,
    pub missile_speed: f64,
    pub lock_ticks: u32,
    #[serde(default)]
    pub lock_progress: BTreeMap<String, u32>,
}

/// An in-flight missile in pure pursuit of its target asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Missile {
    pub id: String,
    pub position: Vec2,
    pub velocity: Vec2,
    pub target_asset: String,
    pub fuse_radius: f64,
    pub speed: f64,
}

/// A circular no-fly zone or obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    pub center: Vec2,
    pub radius: f64,
    /// `NoFlyZone` or `Obstacle`.
    pub kind: EntityKind,
}

/// World-level tunables pinned by the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    /// Seconds per tick.
    pub dt: f64,
    /// Missile kill probability on detonation; halved by countermeasures.
    pub p_kill: f64,
    /// Weapon hit probability per shot.
    pub p_hit: f64,
    /// Weapon engagement range, meters.
    pub weapon_range: f64,
    /// Waypoint capture radius, meters.
    pub capture_radius: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            dt: 1.0,
            p_kill: 0.8,
            p_hit: 0.7,
            weapon_range: 800.0,
            capture_radius: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u64,
    pub bounds: Rect,
    pub wind: Vec2,
    pub params: WorldParams,
    pub assets: Vec<AssetState>,
    pub hostiles: Vec<HostileState>,
    pub sam_sites: Vec<SamSite>,
    pub missiles: Vec<Missile>,
    /// Mission targets, kind `Target`.
    pub targets: Vec<Entity>,
    pub zones: Vec<Zone>,
    /// Mission waypoints, captured strictly in order.
    pub waypoints: Vec<Vec2>,
    pub waypoints_captured: usize,
    next_missile_seq: u64,
}

impl WorldState {
    pub fn new(bounds: Rect, params: WorldParams) -> Self {
        WorldState {
            tick: 0,
            bounds,
            wind: Vec2::ZERO,
            params,
            assets: Vec::new(),
            hostiles: Vec::new(),
            sam_sites: Vec::new(),
            missiles: Vec::new(),
            targets: Vec::new(),
            zones: Vec::new(),
            waypoints: Vec::new(),
            waypoints_captured: 0,
            next_missile_seq: 0,
        }
    }

    pub fn asset(&self, id: &str) -> Option<&AssetState> {
        self.assets.iter().find(|a| a.id == id)
    }

    pub fn living_assets(&self) -> impl Iterator<Item = &AssetState> {
        self.assets.iter().filter(|a| a.alive)
    }

    pub fn target(&self, id: &str) -> Option<&Entity> {
        self.targets.iter().find(|t| t.id == id)
    }
}

/// Observable things that happened during a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WorldEvent {
    MissileLaunched {
        sam: String,
        missile: String,
        target: String,
    },
    MissileDetonated {
        missile: String,
        target: String,
        killed: bool,
    },
    WeaponFired {
        by: String,
        target: String,
        hit: bool,
    },
    WaypointCaptured {
        index: usize,
        by: String,
    },
}

/// Advances the world by one tick under the given per-asset filtered
/// actions. Actions for dead assets are ignored; a missing action is
/// treated as zero input.
pub fn step<R: Rng>(
    world: &WorldState,
    actions: &BTreeMap<String, ActionVector>,
    rng: &mut R,
) -> (WorldState, Vec<WorldEvent>) {
    let mut next = world.clone();
    let mut events = Vec::new();
    let dt = next.params.dt;
    let zero = ActionVector::default();

    for asset in next.assets.iter_mut() {
        asset.cm_active = false;
        if !asset.alive {
            continue;
        }
        let action = actions.get(&asset.id).unwrap_or(&zero);
        let cmd = action.continuous;

        if action.has_kind(crate::action::ActionKind::EngageCountermeasures)
            && asset.countermeasures > 0
        {
            asset.countermeasures -= 1;
            asset.cm_active = true;
        }

        asset.turn_frac = cmd.heading_rate.clamp(-1.0, 1.0);
        asset.heading = wrap_angle(asset.heading + asset.turn_frac * asset.max_turn * dt);
        let speed_cmd = if asset.fuel > 0.0 {
            cmd.speed_cmd.clamp(0.0, 1.0)
        } else {
            0.0
        };
        asset.speed = speed_cmd * asset.max_speed;
        asset.position = next
            .bounds
            .clamp_point(asset.position + Vec2::from_angle(asset.heading) * (asset.speed * dt));
        asset.fuel = (asset.fuel - speed_cmd * dt).max(0.0);
    }

    // Weapon engagements, in asset order then action order.
    for ai in 0..next.assets.len() {
        if !next.assets[ai].alive {
            continue;
        }
        let id = next.assets[ai].id.clone();
        let Some(action) = actions.get(&id) else {
            continue;
        };
        for discrete in &action.discrete {
            let DiscreteAction::EngageWeaponSystem { target_id } = discrete else {
                continue;
            };
            if next.assets[ai].weapons == 0 {
                continue;
            }
            let in_range = next
                .targets
                .iter()
                .find(|t| &t.id == target_id && !t.neutralized)
                .map(|t| t.position.dist(next.assets[ai].position) <= next.params.weapon_range)
                .unwrap_or(false);
            if !in_range {
                continue;
            }
            next.assets[ai].weapons -= 1;
            let hit = rng.gen_bool(next.params.p_hit.clamp(0.0, 1.0));
            if hit {
                let target = next
                    .targets
                    .iter_mut()
                    .find(|t| &t.id == target_id)
                    .expect("checked above");
                target.neutralized = true;
            }
            events.push(WorldEvent::WeaponFired {
                by: id.clone(),
                target: target_id.clone(),
                hit,
            });
        }
    }

    // In-flight missile pursuit and detonation. Runs before this tick's
    // launches so a newly spawned missile first moves on the next tick.
    let mut kept = Vec::with_capacity(next.missiles.len());
    let missiles = std::mem::take(&mut next.missiles);
    for mut missile in missiles {
        let Some(target) = next
            .assets
            .iter()
            .position(|a| a.id == missile.target_asset && a.alive)
        else {
            continue; // target gone, missile self-destructs
        };
        let target_pos = next.assets[target].position;
        let to_target = target_pos - missile.position;
        let dist = to_target.norm();
        if dist > 0.0 {
            missile.velocity = to_target * (missile.speed / dist);
        }
        let moved = missile.position + missile.velocity * dt;
        // Proximity fuse over the whole movement segment: a missile that
        // overshoots the target within one tick still detonates.
        let fused = crate::geom::segment_intersects_circle(
            missile.position,
            moved,
            &crate::geom::Circle::new(target_pos, missile.fuse_radius),
        );
        missile.position = moved;
        if fused {
            let mut p = next.params.p_kill.clamp(0.0, 1.0);
            if next.assets[target].cm_active {
                p *= 0.5;
            }
            let killed = rng.gen_bool(p);
            if killed {
                next.assets[target].alive = false;
                next.assets[target].health = 0.0;
                next.assets[target].speed = 0.0;
            }
            events.push(WorldEvent::MissileDetonated {
                missile: missile.id.clone(),
                target: missile.target_asset.clone(),
                killed,
            });
        } else {
            kept.push(missile);
        }
    }
    next.missiles = kept;

    // SAM lock bookkeeping and launches.
    let asset_views: Vec<(String, Vec2, bool)> = next
        .assets
        .iter()
        .map(|a| (a.id.clone(), a.position, a.alive))
        .collect();
    let mut launches = Vec::new();
    for sam in next.sam_sites.iter_mut() {
        for (aid, pos, alive) in &asset_views {
            if !alive {
                sam.lock_progress.remove(aid);
                continue;
            }
            if pos.dist(sam.position) <= sam.radar_range {
                let progress = sam.lock_progress.entry(aid.clone()).or_insert(0);
                *progress += 1;
                if *progress >= sam.lock_ticks {
                    *progress = 0;
                    launches.push((sam.id.clone(), sam.position, sam.missile_speed, aid.clone()));
                }
            } else {
                sam.lock_progress.remove(aid);
            }
        }
    }
    for (sam_id, position, speed, target) in launches {
        let missile_id = format!("m{}", next.next_missile_seq);
        next.next_missile_seq += 1;
        let target_pos = asset_views
            .iter()
            .find(|(aid, _, _)| aid == &target)
            .map(|(_, p, _)| *p)
            .unwrap_or(position);
        let dir = if (target_pos - position).norm() > 0.0 {
            (target_pos - position) * (1.0 / (target_pos - position).norm())
        } else {
            Vec2::new(1.0, 0.0)
        };
        events.push(WorldEvent::MissileLaunched {
            sam: sam_id,
            missile: missile_id.clone(),
            target: target.clone(),
        });
        next.missiles.push(Missile {
            id: missile_id,
            position,
            velocity: dir * speed,
            target_asset: target,
            fuse_radius: 30.0,
            speed,
        });
    }

    // Interceptors pursue the nearest living asset under their own caps.
    let living: Vec<(String, Vec2)> = next
        .assets
        .iter()
        .filter(|a| a.alive)
        .map(|a| (a.id.clone(), a.position))
        .collect();
    for hostile in next.hostiles.iter_mut().filter(|h| h.alive) {
        let Some((_, prey)) = living.iter().min_by(|a, b| {
            a.1.dist(hostile.position)
                .total_cmp(&b.1.dist(hostile.position))
                .then_with(|| a.0.cmp(&b.0))
        }) else {
            continue;
        };
        let desired = crate::geom::bearing(hostile.position, *prey);
        let turn = signed_angle_diff(desired, hostile.heading)
            .clamp(-hostile.max_turn * dt, hostile.max_turn * dt);
        hostile.heading = wrap_angle(hostile.heading + turn);
        hostile.speed = hostile.max_speed;
        hostile.position = next
            .bounds
            .clamp_point(hostile.position + Vec2::from_angle(hostile.heading) * (hostile.speed * dt));
    }

    // Sequential waypoint capture by any living asset.
    while next.waypoints_captured < next.waypoints.len() {
        let wp = next.waypoints[next.waypoints_captured];
        let capturer = next
            .assets
            .iter()
            .find(|a| a.alive && a.position.dist(wp) <= next.params.capture_radius)
            .map(|a| a.id.clone());
        match capturer {
            Some(by) => {
                events.push(WorldEvent::WaypointCaptured {
                    index: next.waypoints_captured,
                    by,
                });
                next.waypoints_captured += 1;
            }
            None => break,
        }
    }

    next.tick += 1;
    (next, events)
}

/// A reference into the mission target list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRef {
    pub id: String,
    pub priority: f64,
}

/// Weights of the mission utility's components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityWeights {
    pub w_targets: f64,
    pub w_waypoints: f64,
    pub w_survival: f64,
    pub w_constraints: f64,
    pub w_time: f64,
}

impl Default for UtilityWeights {
    fn default() -> Self {
        UtilityWeights {
            w_targets: 1.0,
            w_waypoints: 1.0,
            w_survival: 1.0,
            w_constraints: 1.0,
            w_time: 0.0,
        }
    }
}

/// The briefed mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    pub waypoints: Vec<Vec2>,
    pub target_list: Vec<TargetRef>,
    pub weights: UtilityWeights,
    pub constraints: ConstraintSet,
    pub max_ticks: u64,
    /// Audit-rejection count that zeroes the constraint score.
    pub rejection_norm: f64,
}

impl Default for MissionPlan {
    fn default() -> Self {
        MissionPlan {
            waypoints: Vec::new(),
            target_list: Vec::new(),
            weights: UtilityWeights::default(),
            constraints: ConstraintSet::default(),
            max_ticks: 200,
            rejection_norm: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityComponents {
    pub targets_frac: f64,
    pub waypoints_frac: f64,
    pub survival_frac: f64,
    pub constraint_score: f64,
    pub time_frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub components: UtilityComponents,
    pub total: f64,
}

/// Episode outcome counts that the utility is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub ticks_used: u64,
    pub targets_neutralized: usize,
    pub targets_total: usize,
    pub waypoints_captured: usize,
    pub waypoints_total: usize,
    pub assets_initial: usize,
    pub assets_surviving: usize,
    pub audit_rejections: usize,
}

fn frac(num: usize, den: usize) -> f64 {
    if den == 0 {
        // Vacuously achieved.
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Mission utility: weighted achievement of targets, waypoints, survival
/// and constraint compliance, minus a time penalty.
pub fn compute_utility(stats: &EpisodeStats, plan: &MissionPlan) -> UtilityReport {
    let components = UtilityComponents {
        targets_frac: frac(stats.targets_neutralized, stats.targets_total),
        waypoints_frac: frac(stats.waypoints_captured, stats.waypoints_total),
        survival_frac: frac(stats.assets_surviving, stats.assets_initial),
        constraint_score: 1.0
            - (stats.audit_rejections as f64 / plan.rejection_norm.max(1e-9)).min(1.0),
        time_frac: if plan.max_ticks > 0 {
            (stats.ticks_used as f64 / plan.max_ticks as f64).min(1.0)
        } else {
            1.0
        },
    };
    let w = &plan.weights;
    let total = w.w_targets * components.targets_frac
        + w.w_waypoints * components.waypoints_frac
        + w.w_survival * components.survival_frac
        + w.w_constraints * components.constraint_score
        - w.w_time * components.time_frac;
    UtilityReport { components, total }
}
