//! Check-in trace replay.
//!
//! Trace files are plain text, one visit per line:
//! `user_id,place_id,start_step,duration_steps`, with `#` comments.
//! Users are numbered by first appearance; places are mapped onto
//! space ids round-robin by first appearance.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{CoLocation, SpaceId, TimeStep, World};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    /// Mule ordinal (user number by first appearance).
    pub user: usize,
    pub space: SpaceId,
    pub start: TimeStep,
    pub duration: u64,
}

impl TraceRecord {
    pub fn covers(&self, t: TimeStep) -> bool {
        t >= self.start && t < self.start + self.duration
    }
}

#[derive(Debug, Clone, Default)]
pub struct MobilityTrace {
    /// Sorted by (start, user).
    pub records: Vec<TraceRecord>,
    pub n_users: usize,
}

impl MobilityTrace {
    /// Co-location events at step `t`: one per record whose interval
    /// covers `t`. Users between visits are holding (mule phase).
    pub fn colocations(&self, world: &World, t: TimeStep) -> Vec<CoLocation> {
        let mut events: Vec<CoLocation> = self
            .records
            .iter()
            .filter(|r| r.covers(t))
            .map(|r| CoLocation {
                mule: world.mule_device_id(r.user),
                fixed: world.fixed_device_id(r.space),
                t,
            })
            .collect();
        events.sort();
        events
    }

    /// Total co-location count over `[0, horizon)`.
    pub fn total_colocations(&self, horizon: TimeStep) -> u64 {
        self.records
            .iter()
            .map(|r| {
                let end = (r.start + r.duration).min(horizon);
                end.saturating_sub(r.start.min(horizon))
            })
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn load_trace(path: &Path, n_spaces: usize) -> Result<MobilityTrace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, n_spaces, &path.display().to_string())
}

pub fn parse_trace(text: &str, n_spaces: usize, path_label: &str) -> Result<MobilityTrace> {
    if n_spaces == 0 {
        return Err(Error::config("trace replay needs at least one space"));
    }
    let mut users: HashMap<String, usize> = HashMap::new();
    let mut places: HashMap<String, SpaceId> = HashMap::new();
    let mut records = Vec::new();

    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path_label.to_string(),
        line,
        msg,
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(parse_err(
                lineno,
                format!("expected 4 comma-separated fields, got {}", fields.len()),
            ));
        }
        let n_users = users.len();
        let user = *users
            .entry(fields[0].to_string())
            .or_insert_with(|| n_users);
        let n_places = places.len();
        let space = *places
            .entry(fields[1].to_string())
            .or_insert_with(|| SpaceId(n_places % n_spaces));
        let start: TimeStep = fields[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad start_step `{}`", fields[2])))?;
        let duration: u64 = fields[3]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad duration_steps `{}`", fields[3])))?;
        if duration == 0 {
            return Err(Error::validation(format!(
                "{path_label}:{lineno}: duration must be >= 1"
            )));
        }
        records.push(TraceRecord {
            user,
            space,
            start,
            duration,
        });
    }

    // Reject overlapping intervals per user.
    let mut by_user: HashMap<usize, Vec<(TimeStep, TimeStep)>> = HashMap::new();
    for r in &records {
        by_user
            .entry(r.user)
            .or_default()
            .push((r.start, r.start + r.duration));
    }
    for (user, mut intervals) in by_user {
        intervals.sort();
        for w in intervals.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::validation(format!(
                    "overlapping visits for user {user}: [{}, {}) and [{}, {})",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
    }

    records.sort_by_key(|r| (r.start, r.user, r.space));
    Ok(MobilityTrace {
        records,
        n_users: users.len(),
    })
}
