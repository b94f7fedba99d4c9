//! Action vocabulary: the nine discrete mission actions, the continuous
//! control channels, and the combined action vector the ensembler emits.

use crate::geom::Vec2;
use crate::statemap::Entity;
use serde::{Deserialize, Serialize};

/// The closed set of discrete action kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    TerminateMission,
    UpdateMissionAchievement,
    AddNewTarget,
    DeprioritizeTarget,
    ChangeCourse,
    AddObstacle,
    EngageWeaponSystem,
    EvasiveManeuvers,
    EngageCountermeasures,
}

impl ActionKind {
    pub const COUNT: usize = 9;
    pub const ALL: [ActionKind; Self::COUNT] = [
        ActionKind::TerminateMission,
        ActionKind::UpdateMissionAchievement,
        ActionKind::AddNewTarget,
        ActionKind::DeprioritizeTarget,
        ActionKind::ChangeCourse,
        ActionKind::AddObstacle,
        ActionKind::EngageWeaponSystem,
        ActionKind::EvasiveManeuvers,
        ActionKind::EngageCountermeasures,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|k| *k == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::TerminateMission => "terminate_mission",
            ActionKind::UpdateMissionAchievement => "update_mission_achievement",
            ActionKind::AddNewTarget => "add_new_target",
            ActionKind::DeprioritizeTarget => "deprioritize_target",
            ActionKind::ChangeCourse => "change_course",
            ActionKind::AddObstacle => "add_obstacle",
            ActionKind::EngageWeaponSystem => "engage_weapon_system",
            ActionKind::EvasiveManeuvers => "evasive_maneuvers",
            ActionKind::EngageCountermeasures => "engage_countermeasures",
        }
    }
}

/// A discrete mission action with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DiscreteAction {
    TerminateMission,
    UpdateMissionAchievement { target_id: String },
    AddNewTarget { entity: Entity },
    DeprioritizeTarget { target_id: String },
    ChangeCourse { path: Vec<Vec2> },
    AddObstacle { center: Vec2, radius: f64 },
    EngageWeaponSystem { target_id: String },
    EvasiveManeuvers,
    EngageCountermeasures,
}

impl DiscreteAction {
    pub fn kind(&self) -> ActionKind {
        match self {
            DiscreteAction::TerminateMission => ActionKind::TerminateMission,
            DiscreteAction::UpdateMissionAchievement { .. } => ActionKind::UpdateMissionAchievement,
            DiscreteAction::AddNewTarget { .. } => ActionKind::AddNewTarget,
            DiscreteAction::DeprioritizeTarget { .. } => ActionKind::DeprioritizeTarget,
            DiscreteAction::ChangeCourse { .. } => ActionKind::ChangeCourse,
            DiscreteAction::AddObstacle { .. } => ActionKind::AddObstacle,
            DiscreteAction::EngageWeaponSystem { .. } => ActionKind::EngageWeaponSystem,
            DiscreteAction::EvasiveManeuvers => ActionKind::EvasiveManeuvers,
            DiscreteAction::EngageCountermeasures => ActionKind::EngageCountermeasures,
        }
    }
}

/// Continuous control channels: heading rate as a fraction of the asset's
/// maximum turn rate in `[-1, 1]`, speed as a fraction of maximum speed in
/// `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContinuousCommand {
    pub heading_rate: f64,
    pub speed_cmd: f64,
}

impl ContinuousCommand {
    pub fn new(heading_rate: f64, speed_cmd: f64) -> Self {
        ContinuousCommand {
            heading_rate,
            speed_cmd,
        }
    }

    /// Clamps into the declared channel ranges.
    pub fn clamped(self) -> Self {
        ContinuousCommand {
            heading_rate: self.heading_rate.clamp(-1.0, 1.0),
            speed_cmd: self.speed_cmd.clamp(0.0, 1.0),
        }
    }
}

/// Which controllers backed an emitted discrete action, and the sensor
/// records they cited.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionProvenance {
    pub controllers: Vec<String>,
    pub records: Vec<u32>,
}

/// The unified per-tick action: continuous channels plus emitted discrete
/// actions with provenance (parallel to `discrete`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionVector {
    pub continuous: ContinuousCommand,
    pub discrete: Vec<DiscreteAction>,
    pub provenance: Vec<ActionProvenance>,
}

impl ActionVector {
    pub fn continuous_only(cmd: ContinuousCommand) -> Self {
        ActionVector {
            continuous: cmd,
            discrete: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn has_kind(&self, kind: ActionKind) -> bool {
        self.discrete.iter().any(|a| a.kind() == kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_indices_are_stable() {
        for (i, k) in ActionKind::ALL.iter().enumerate() {
            assert_eq!(k.index(), i);
        }
        assert_eq!(ActionKind::EngageCountermeasures.index(), 8);
    }

    #[test]
    fn clamp_respects_channel_ranges() {
        let c = ContinuousCommand::new(-3.0, 1.7).clamped();
        assert_eq!(c.heading_rate, -1.0);
        assert_eq!(c.speed_cmd, 1.0);
    }
}
