//! Deterministic multi-asset autonomy simulator.
//!
//! Independent rule-based controllers propose actions; a recurrent
//! ensembler gates and combines them into one action vector; a hard filter
//! enforces sensor-provenance permissions and not-to-violate constraints
//! with a full audit trail; swarm members replicate their world maps over
//! per-author hash-chained, MAC-authenticated logs; and a REINFORCE
//! trainer evolves mission personalities in simulation.

#![forbid(unsafe_code)]

pub mod action;
pub mod controllers;
pub mod ensemble;
pub mod episode;
pub mod filter;
pub mod geom;
pub mod ledger;
pub mod replay;
pub mod rng;
pub mod scenario;
pub mod sensors;
pub mod statemap;
pub mod train;
pub mod world;

pub use action::{ActionKind, ActionVector, ContinuousCommand, DiscreteAction};
pub use episode::{run_episode, EpisodeResult, Trajectory};
pub use scenario::{Scenario, TrainConfig};
pub use train::{load_personality, save_personality, train, Personality};
pub use world::{compute_utility, UtilityReport, WorldState};
