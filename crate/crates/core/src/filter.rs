//! The hard out-of-band action gate.
//!
//! Every discrete action must be justified by at least one sensor record
//! whose category the permission table allows for that action kind, and the
//! whole vector must respect the mission's not-to-violate constraints. The
//! filter never aborts: it clamps and strips, and writes an audit entry for
//! every verdict.

use crate::action::{ActionKind, ActionVector, ContinuousCommand, DiscreteAction};
use crate::geom::{segment_intersects_circle, Circle, Vec2};
use crate::sensors::{BusSnapshot, SensorCategory};
use crate::statemap::StateMap;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Sensor-category permissions per action kind, indexed
/// `[ActionKind::index()][column]` with columns ordered Health,
/// Performance, Navigation, EnvironmentalMapping.
pub const PERMISSIONS: [[bool; 4]; ActionKind::COUNT] = [
    // Terminate Mission: Health, Perf, Envir.
    [true, true, false, true],
    // Update Mission Achievement: Envir.
    [false, false, false, true],
    // Add New Target: Envir.
    [false, false, false, true],
    // De-prioritize Target: Health, Envir.
    [true, false, false, true],
    // Change Course: Health, Nav, Envir.
    [true, false, true, true],
    // Add Obstacle (Constrain Path): Envir.
    [false, false, false, true],
    // Engage Weapon System: Envir.
    [false, false, false, true],
    // Evasive Maneuvers: Envir.
    [false, false, false, true],
    // Engage Countermeasures: Envir.
    [false, false, false, true],
];

fn category_column(category: SensorCategory) -> usize {
    match category {
        SensorCategory::Health => 0,
        SensorCategory::Performance => 1,
        SensorCategory::Navigation => 2,
        SensorCategory::EnvironmentalMapping => 3,
    }
}

/// Whether `category` may justify actions of `kind`.
pub fn provenance_permitted(kind: ActionKind, category: SensorCategory) -> bool {
    PERMISSIONS[kind.index()][category_column(category)]
}

/// A provenance check failure: the action kind and the categories that were
/// actually presented.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvenanceViolation {
    pub kind: ActionKind,
    pub categories_seen: Vec<SensorCategory>,
}

impl std::fmt::Display for ProvenanceViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "action `{}` justified only by {:?}",
            self.kind.name(),
            self.categories_seen
        )
    }
}

/// Passes iff at least one justification's category is permitted for the
/// action kind.
pub fn check_provenance(
    action: &DiscreteAction,
    justifications: &[&crate::sensors::SensorRecord],
) -> Result<(), ProvenanceViolation> {
    let kind = action.kind();
    if justifications
        .iter()
        .any(|r| provenance_permitted(kind, r.category))
    {
        Ok(())
    } else {
        Err(ProvenanceViolation {
            kind,
            categories_seen: justifications.iter().map(|r| r.category).collect(),
        })
    }
}

/// Mission not-to-violate parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// Upper bound on commanded speed fraction, in [0, 1].
    pub max_speed_cmd: f64,
    /// Upper bound on |heading rate| fraction, in [0, 1].
    pub max_heading_rate: f64,
    /// Forbidden circles no commanded path may cross.
    pub geofence: Vec<Circle>,
    pub no_strike_ids: BTreeSet<String>,
    pub weapons_free: bool,
    pub min_countermeasures_reserve: u32,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet {
            max_speed_cmd: 1.0,
            max_heading_rate: 1.0,
            geofence: Vec::new(),
            no_strike_ids: BTreeSet::new(),
            weapons_free: true,
            min_countermeasures_reserve: 0,
        }
    }
}

impl ConstraintSet {
    // Negated comparisons reject NaN configuration values too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.max_speed_cmd) {
            return Err(format!(
                "constraints.max_speed_cmd must be in [0,1], got {}",
                self.max_speed_cmd
            ));
        }
        if !(0.0..=1.0).contains(&self.max_heading_rate) {
            return Err(format!(
                "constraints.max_heading_rate must be in [0,1], got {}",
                self.max_heading_rate
            ));
        }
        for (i, c) in self.geofence.iter().enumerate() {
            if !(c.radius >= 0.0) || !c.center.is_finite() {
                return Err(format!("constraints.geofence[{i}] is malformed"));
            }
        }
        Ok(())
    }
}

/// Clamps continuous channels into the constraint bounds; values already
/// inside are unchanged.
pub fn clamp_continuous(cmd: ContinuousCommand, c: &ConstraintSet) -> ContinuousCommand {
    let basic = cmd.clamped();
    ContinuousCommand {
        heading_rate: basic
            .heading_rate
            .clamp(-c.max_heading_rate, c.max_heading_rate),
        speed_cmd: basic.speed_cmd.clamp(0.0, c.max_speed_cmd),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditVerdict {
    Passed,
    Clamped,
    Rejected,
}

/// One audit-trail row; every filtered action produces at least one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub tick: u64,
    pub action: String,
    pub verdict: AuditVerdict,
    pub reason: String,
    pub records: Vec<u32>,
}

/// Current expendables of the acting asset, needed for reserve checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetInventory {
    pub weapons: u32,
    pub countermeasures: u32,
}

fn path_clear_of_geofence(path: &[Vec2], fence: &[Circle]) -> bool {
    if path.is_empty() {
        return true;
    }
    for circle in fence {
        if path.len() == 1 {
            if circle.contains(path[0]) {
                return false;
            }
            continue;
        }
        for pair in path.windows(2) {
            if segment_intersects_circle(pair[0], pair[1], circle) {
                return false;
            }
        }
    }
    true
}

/// Applies the full gate to an ensembler output: continuous clamp, per-action
/// provenance and constraint rules. Returns the degraded action and the
/// audit entries describing every verdict. Never fails.
pub fn filter(
    action: &ActionVector,
    snapshot: &BusSnapshot,
    constraints: &ConstraintSet,
    map: &StateMap,
    inventory: &AssetInventory,
) -> (ActionVector, Vec<AuditEntry>) {
    let tick = snapshot.tick;
    let mut audit = Vec::new();

    let clamped = clamp_continuous(action.continuous, constraints);
    if clamped != action.continuous {
        audit.push(AuditEntry {
            tick,
            action: "continuous".into(),
            verdict: AuditVerdict::Clamped,
            reason: "not-to-exceed bounds".into(),
            records: Vec::new(),
        });
    }

    let mut kept = Vec::new();
    let mut kept_prov = Vec::new();
    for (i, discrete) in action.discrete.iter().enumerate() {
        let provenance = action.provenance.get(i).cloned().unwrap_or_default();
        let records: Vec<&crate::sensors::SensorRecord> = provenance
            .records
            .iter()
            .filter_map(|id| snapshot.get(*id))
            .collect();
        let kind = discrete.kind();

        let verdict: Result<(), String> = check_provenance(discrete, &records)
            .map_err(|v| format!("provenance: {v}"))
            .and_then(|()| match discrete {
                DiscreteAction::EngageWeaponSystem { target_id } => {
                    if !constraints.weapons_free {
                        Err("weapons-hold".into())
                    } else if constraints.no_strike_ids.contains(target_id) {
                        Err("no-strike".into())
                    } else {
                        match map.get(target_id) {
                            Some(t) if !t.neutralized => Ok(()),
                            Some(_) => Err("target already neutralized".into()),
                            None => Err("unknown target".into()),
                        }
                    }
                }
                DiscreteAction::EngageCountermeasures => {
                    if inventory.countermeasures > constraints.min_countermeasures_reserve {
                        Ok(())
                    } else {
                        Err("countermeasure reserve".into())
                    }
                }
                DiscreteAction::ChangeCourse { path } => {
                    if path_clear_of_geofence(path, &constraints.geofence) {
                        Ok(())
                    } else {
                        Err("geofence".into())
                    }
                }
                DiscreteAction::AddNewTarget { entity } => {
                    if constraints.no_strike_ids.contains(&entity.id) {
                        Err("no-strike".into())
                    } else {
                        Ok(())
                    }
                }
                _ => Ok(()),
            });

        match verdict {
            Ok(()) => {
                audit.push(AuditEntry {
                    tick,
                    action: kind.name().into(),
                    verdict: AuditVerdict::Passed,
                    reason: String::new(),
                    records: provenance.records.clone(),
                });
                kept.push(discrete.clone());
                kept_prov.push(provenance);
            }
            Err(reason) => {
                audit.push(AuditEntry {
                    tick,
                    action: kind.name().into(),
                    verdict: AuditVerdict::Rejected,
                    reason,
                    records: provenance.records.clone(),
                });
            }
        }
    }

    if audit.is_empty() {
        audit.push(AuditEntry {
            tick,
            action: "continuous".into(),
            verdict: AuditVerdict::Passed,
            reason: String::new(),
            records: Vec::new(),
        });
    }

    (
        ActionVector {
            continuous: clamped,
            discrete: kept,
            provenance: kept_prov,
        },
        audit,
    )
}
