//! Microcontroller-side logic: the threshold teacher used for data
//! collection and the critical-distance reflex that bypasses the planner.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::sensor::{ScanVector, MIN_RANGE};

/// Drive command. The declaration order is the tie-break order used by every
/// vote and majority rule in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Front,
    Back,
    Left,
    Right,
    Stop,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::Front,
        Command::Back,
        Command::Left,
        Command::Right,
        Command::Stop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Command> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Front => "front",
            Command::Back => "back",
            Command::Left => "left",
            Command::Right => "right",
            Command::Stop => "stop",
        }
    }

    pub fn is_turn(self) -> bool {
        matches!(self, Command::Left | Command::Right)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownCommand(pub String);

impl fmt::Display for UnknownCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown command label {:?}", self.0)
    }
}

impl std::error::Error for UnknownCommand {}

impl FromStr for Command {
    type Err = UnknownCommand;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownCommand(s.to_string()))
    }
}

/// Steering threshold and emergency distance, cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub threshold: f64,
    pub critical: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            threshold: 20.0,
            critical: 5.0,
        }
    }
}

impl Thresholds {
    pub fn new(threshold: f64, critical: f64) -> Option<Self> {
        let th = Thresholds { threshold, critical };
        th.is_valid().then_some(th)
    }

    pub fn is_valid(&self) -> bool {
        0.0 < self.critical && self.critical < self.threshold && self.threshold <= 450.0
    }
}

/// True when any channel is inside the critical distance.
///
/// A channel reading at or below the sensor's minimum range cannot be told
/// apart from a closer obstacle, so when the critical distance coincides with
/// that floor the floor reading itself counts as critical. Above the floor the
/// comparison is strict.
pub fn is_critical(scan: &ScanVector, th: &Thresholds) -> bool {
    scan.channels().into_iter().any(|d| channel_critical(d, th))
}

fn channel_critical(d: f64, th: &Thresholds) -> bool {
    d < th.critical || (d <= MIN_RANGE && th.critical <= MIN_RANGE)
}

/// Emergency manoeuvre. Priority: front, then back, then sides; both sides
/// blocked backs off.
pub fn critical_reflex(scan: &ScanVector, th: &Thresholds) -> Command {
    debug_assert!(is_critical(scan, th), "reflex consulted on a non-critical scan");
    let crit = |d: f64| channel_critical(d, th);
    let (f, b, l, r) = (crit(scan.front), crit(scan.back), crit(scan.left), crit(scan.right));
    if f {
        Command::Back
    } else if b {
        Command::Front
    } else if l && r {
        Command::Back
    } else if l {
        Command::Right
    } else if r {
        Command::Left
    } else {
        // Unreachable when the precondition holds.
        Command::Stop
    }
}

/// Rule-based teacher that drives the robot while the dataset is recorded.
/// Ties between equal side clearances go left.
pub fn teacher_decide(scan: &ScanVector, th: &Thresholds) -> Command {
    if scan.front > th.threshold {
        Command::Front
    } else if scan.left.max(scan.right) > th.threshold {
        if scan.left >= scan.right {
            Command::Left
        } else {
            Command::Right
        }
    } else if scan.back > th.threshold {
        Command::Back
    } else {
        Command::Stop
    }
}
