//! Replay logs and metrics export.
//!
//! A replay log is line-delimited JSON: one `bus` record per asset per tick
//! followed by one `tick` record, in tick order. The metrics CSV carries
//! per-tick utility components and gate weights per asset.

use crate::episode::{BusRecord, TickRecord, Trajectory};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("replay io: {0}")]
    Io(#[from] std::io::Error),
    #[error("replay parse error at line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

/// One replay-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReplayLine {
    Bus(BusRecord),
    Tick(TickRecord),
}

/// Flattens a trajectory into its replay lines.
pub fn lines_from_trajectory(trajectory: &Trajectory) -> Vec<ReplayLine> {
    let mut lines = Vec::new();
    let mut bus_iter = trajectory.bus.iter().peekable();
    for tick in &trajectory.ticks {
        while let Some(bus) = bus_iter.peek() {
            if bus.tick <= tick.tick {
                lines.push(ReplayLine::Bus((*bus).clone()));
                bus_iter.next();
            } else {
                break;
            }
        }
        lines.push(ReplayLine::Tick(tick.clone()));
    }
    for bus in bus_iter {
        lines.push(ReplayLine::Bus(bus.clone()));
    }
    lines
}

pub fn write_replay<W: Write>(writer: &mut W, trajectory: &Trajectory) -> Result<(), ReplayError> {
    for line in lines_from_trajectory(trajectory) {
        serde_json::to_writer(&mut *writer, &line)
            .map_err(|source| ReplayError::Parse { line: 0, source })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_replay<R: BufRead>(reader: R) -> Result<Vec<ReplayLine>, ReplayError> {
    let mut lines = Vec::new();
    for (i, raw) in reader.lines().enumerate() {
        let raw = raw?;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str(&raw).map_err(|source| ReplayError::Parse {
            line: i + 1,
            source,
        })?;
        lines.push(parsed);
    }
    Ok(lines)
}

/// Column names of the metrics CSV for the standard five-controller bank.
pub const METRICS_HEADER: &str = "tick,asset,targets_frac,waypoints_frac,survival_frac,\
constraint_score,time_frac,total,g_avoidance,g_evasion,g_swarm,g_targeting,g_waypoint";

/// Renders per-tick metrics rows, optionally restricted to an inclusive
/// tick range.
pub fn metrics_csv(lines: &[ReplayLine], range: Option<(u64, u64)>) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for line in lines {
        let ReplayLine::Tick(tick) = line else {
            continue;
        };
        if let Some((lo, hi)) = range {
            if tick.tick < lo || tick.tick > hi {
                continue;
            }
        }
        for asset in &tick.assets {
            let c = &asset.utility.components;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}",
                tick.tick,
                asset.asset,
                c.targets_frac,
                c.waypoints_frac,
                c.survival_frac,
                c.constraint_score,
                c.time_frac,
                asset.utility.total
            ));
            for g in &asset.gates {
                out.push_str(&format!(",{g}"));
            }
            out.push('\n');
        }
    }
    out
}

/// Human-readable per-tick summary for the `replay` command.
pub fn render_text(lines: &[ReplayLine], range: Option<(u64, u64)>) -> String {
    let mut out = String::new();
    for line in lines {
        let ReplayLine::Tick(tick) = line else {
            continue;
        };
        if let Some((lo, hi)) = range {
            if tick.tick < lo || tick.tick > hi {
                continue;
            }
        }
        out.push_str(&format!("tick {:>4}  world {}\n", tick.tick, tick.world_digest));
        for asset in &tick.assets {
            let discrete: Vec<&str> = asset
                .action
                .discrete
                .iter()
                .map(|a| a.kind().name())
                .collect();
            out.push_str(&format!(
                "  {}  hdg_rate {:+.3}  speed {:.3}  U {:+.3}  [{}]\n",
                asset.asset,
                asset.action.continuous.heading_rate,
                asset.action.continuous.speed_cmd,
                asset.utility.total,
                discrete.join(", ")
            ));
        }
    }
    out
}
