//! Two-tier runtime: per-tick arbitration between the critical reflex and
//! the learned planner, the closed-loop episode runner and its metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learn::Model;
use crate::reflex::{critical_reflex, is_critical, teacher_decide, Command, Thresholds};
use crate::sensor::{sense, NoiseSpec, ScanVector};
use crate::serial::{decode_command, decode_scan, encode_command, encode_scan, DelayChannel, DistanceFrame};
use crate::world::{advance_obstacles, collides, step_kinematics, Pose, RobotSpec, WorldSpec};

/// Byte the planner sends back when it cannot decode a frame.
pub const NAK: u8 = b'?';

/// Window length, in ticks, of the stuck detector.
pub const DISPLACEMENT_WINDOW: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavConfig {
    pub thresholds: Thresholds,
    pub planner_delay_ticks: u64,
    pub tick_seconds: f64,
    pub max_ticks: u64,
    pub noise_sigma: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        NavConfig {
            thresholds: Thresholds::default(),
            planner_delay_ticks: 2,
            tick_seconds: 0.05,
            max_ticks: 4000,
            noise_sigma: NoiseSpec::default().sigma,
        }
    }
}

impl NavConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !self.thresholds.is_valid() {
            return Err("thresholds need 0 < critical < threshold <= 450".into());
        }
        if !(self.tick_seconds.is_finite() && self.tick_seconds > 0.0) {
            return Err("tick_seconds must be > 0".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err("noise_sigma must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Reflex,
    Planner,
    Hold,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Reflex => "reflex",
            Source::Planner => "planner",
            Source::Hold => "hold",
        }
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reflex" => Ok(Source::Reflex),
            "planner" => Ok(Source::Planner),
            "hold" => Ok(Source::Hold),
            _ => Err(format!("unknown source {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Controller alone: reflex, otherwise the threshold teacher with no link.
    ReflexOnly,
    /// Reflex plus the planner answering over the delayed link.
    TwoTier,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::ReflexOnly => "reflex_only",
            Policy::TwoTier => "two_tier",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reflex_only" => Ok(Policy::ReflexOnly),
            "two_tier" => Ok(Policy::TwoTier),
            _ => Err(format!("unknown policy {s:?}")),
        }
    }
}

/// Controller state: the link to the planner and the command being held.
#[derive(Debug)]
pub struct Navigator<'m> {
    policy: Policy,
    model: Option<&'m Model>,
    thresholds: Thresholds,
    uplink: DelayChannel<DistanceFrame>,
    downlink: DelayChannel<u8>,
    awaiting: bool,
    last: Command,
    link_errors: u64,
}

impl<'m> Navigator<'m> {
    /// With no model the threshold teacher answers in the planner's place.
    pub fn new(policy: Policy, model: Option<&'m Model>, cfg: &NavConfig) -> Self {
        Navigator {
            policy,
            model,
            thresholds: cfg.thresholds,
            uplink: DelayChannel::new(cfg.planner_delay_ticks),
            downlink: DelayChannel::new(0),
            awaiting: false,
            last: Command::Stop,
            link_errors: 0,
        }
    }

    /// Unanswered planner messages currently on the link.
    pub fn in_flight(&self) -> usize {
        self.uplink.in_flight() + self.downlink.in_flight()
    }

    pub fn link_errors(&self) -> u64 {
        self.link_errors
    }

    fn plan(&self, scan: &ScanVector) -> Command {
        match self.model {
            Some(m) => m.predict(scan),
            None => teacher_decide(scan, &self.thresholds),
        }
    }

    /// Planner side: answer every frame that has arrived.
    fn service(&mut self, tick: u64) {
        while let Some(frame) = self.uplink.poll(tick) {
            let reply = match decode_scan(frame.as_bytes()) {
                Ok(scan) => encode_command(self.plan(&scan)),
                Err(_) => NAK,
            };
            self.downlink.send(tick, reply);
        }
    }

    /// One control tick.
    pub fn decide(&mut self, scan: &ScanVector, tick: u64) -> (Command, Source) {
        if is_critical(scan, &self.thresholds) {
            // Pending replies are stale once the reflex has taken over.
            self.uplink.clear();
            self.downlink.clear();
            self.awaiting = false;
            self.last = critical_reflex(scan, &self.thresholds);
            return (self.last, Source::Reflex);
        }
        if self.policy == Policy::ReflexOnly {
            self.last = teacher_decide(scan, &self.thresholds);
            return (self.last, Source::Planner);
        }

        self.service(tick);
        let mut fresh = None;
        if let Some(byte) = self.downlink.poll(tick) {
            self.awaiting = false;
            match decode_command(byte) {
                Ok(c) => fresh = Some(c),
                Err(_) => {
                    // Hold now, ask again next tick.
                    self.link_errors += 1;
                    return (self.last, Source::Hold);
                }
            }
        }
        if !self.awaiting {
            self.uplink.send(tick, encode_scan(scan));
            self.awaiting = true;
            if fresh.is_none() {
                self.service(tick);
                if let Some(byte) = self.downlink.poll(tick) {
                    self.awaiting = false;
                    match decode_command(byte) {
                        Ok(c) => fresh = Some(c),
                        Err(_) => self.link_errors += 1,
                    }
                }
            }
        }
        match fresh {
            Some(c) => {
                self.last = c;
                (c, Source::Planner)
            }
            None => (self.last, Source::Hold),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub tick: u64,
    pub pose: Pose,
    pub scan: ScanVector,
    pub command: Command,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
}

pub const TRAJECTORY_HEADER: &str = "tick,x,y,heading,front,back,left,right,command,source";

#[derive(Debug, Clone, PartialEq, Error)]
#[error("trajectory line {line_no}: {reason}")]
pub struct TrajectoryParseError {
    pub line_no: usize,
    pub reason: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn commands(&self) -> Vec<Command> {
        self.records.iter().map(|r| r.command).collect()
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRAJECTORY_HEADER);
        out.push('\n');
        for r in &self.records {
            let [f, b, l, rt] = r.scan.channels();
            writeln!(
                out,
                "{},{:.2},{:.2},{:.2},{f:.2},{b:.2},{l:.2},{rt:.2},{},{}",
                r.tick,
                r.pose.x,
                r.pose.y,
                r.pose.heading,
                r.command,
                r.source.as_str()
            )
            .expect("write to string");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Trajectory, TrajectoryParseError> {
        let err = |line_no, reason: &str| TrajectoryParseError {
            line_no,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end_matches('\r') == TRAJECTORY_HEADER => {}
            _ => return Err(err(1, "missing header")),
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(err(line_no, "expected 10 fields"));
            }
            let tick: u64 = f[0].parse().map_err(|_| err(line_no, "bad tick"))?;
            if tick != records.len() as u64 {
                return Err(err(line_no, "ticks must be consecutive from 0"));
            }
            let mut v = [0.0; 7];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = f[k + 1]
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(line_no, "bad number"))?;
            }
            let command = f[8].parse().map_err(|_| err(line_no, "bad command"))?;
            let source = f[9].parse().map_err(|_| err(line_no, "bad source"))?;
            records.push(TrajectoryRecord {
                tick,
                pose: Pose::new(v[0], v[1], v[2]),
                scan: ScanVector::new(v[3], v[4], v[5], v[6]),
                command,
                source,
            });
        }
        Ok(Trajectory { records })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub collisions: u64,
    pub escaped: bool,
    pub ticks_to_exit: Option<u64>,
    pub lr_alternations: u64,
    pub min_reaction_ticks: Option<u64>,
    /// Smallest net displacement over any stuck-detector window, cm.
    pub displacement_per_window: f64,
}

impl fmt::Display for EpisodeMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<u64>| v.map_or_else(|| "none".to_string(), |t| t.to_string());
        writeln!(f, "collisions              {}", self.collisions)?;
        writeln!(f, "escaped                 {}", self.escaped)?;
        writeln!(f, "ticks_to_exit           {}", opt(self.ticks_to_exit))?;
        writeln!(f, "lr_alternations         {}", self.lr_alternations)?;
        writeln!(f, "min_reaction_ticks      {}", opt(self.min_reaction_ticks))?;
        writeln!(f, "displacement_per_window {:.2}", self.displacement_per_window)
    }
}

/// Left/right switches between consecutive turn commands. Non-turn commands
/// break the chain.
pub fn lr_alternations(commands: &[Command]) -> u64 {
    commands
        .windows(2)
        .filter(|w| w[0].is_turn() && w[1].is_turn() && w[0] != w[1])
        .count() as u64
}

/// Ticks from each critical onset to the first reflex command, minimised
/// over onsets.
fn min_reaction(traj: &Trajectory, th: &Thresholds) -> Option<u64> {
    let crit: Vec<bool> = traj.records.iter().map(|r| is_critical(&r.scan, th)).collect();
    let mut best: Option<u64> = None;
    for i in 0..crit.len() {
        if crit[i] && (i == 0 || !crit[i - 1]) {
            if let Some(j) = (i..traj.records.len()).find(|&j| traj.records[j].source == Source::Reflex) {
                let d = (j - i) as u64;
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
    }
    best
}

fn min_window_displacement(traj: &Trajectory, window: usize) -> f64 {
    let p: Vec<_> = traj.records.iter().map(|r| r.pose.position()).collect();
    match p.len() {
        0 => 0.0,
        n if n <= window => p[0].distance(p[n - 1]),
        n => (0..n - window)
            .map(|i| p[i].distance(p[i + window]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Contact at tick `i`: the robot touches something where it stands, or the
/// move it was commanded would have touched something.
fn contact_flags(traj: &Trajectory, world: &WorldSpec, robot: &RobotSpec, cfg: &NavConfig) -> Vec<bool> {
    let dt = cfg.tick_seconds;
    let moving = !world.mobile_obstacles.is_empty();
    let mut now = world.clone();
    traj.records
        .iter()
        .map(|r| {
            if moving {
                now = advance_obstacles(world, r.tick as f64 * dt);
            }
            let next_world = if moving {
                advance_obstacles(world, (r.tick + 1) as f64 * dt)
            } else {
                now.clone()
            };
            let proposed = step_kinematics(r.pose, r.command, robot, dt);
            collides(&now, &r.pose, robot.body_radius) || collides(&next_world, &proposed, robot.body_radius)
        })
        .collect()
}

pub fn compute_metrics(traj: &Trajectory, world: &WorldSpec, robot: &RobotSpec, cfg: &NavConfig) -> EpisodeMetrics {
    let contact = contact_flags(traj, world, robot, cfg);
    let collisions = contact
        .iter()
        .enumerate()
        .filter(|&(i, &c)| c && (i == 0 || !contact[i - 1]))
        .count() as u64;
    let ticks_to_exit = world.exit.and_then(|e| {
        traj.records
            .iter()
            .find(|r| e.contains(r.pose.position()))
            .map(|r| r.tick)
    });
    EpisodeMetrics {
        collisions,
        escaped: ticks_to_exit.is_some(),
        ticks_to_exit,
        lr_alternations: lr_alternations(&traj.commands()),
        min_reaction_ticks: min_reaction(traj, &cfg.thresholds),
        displacement_per_window: min_window_displacement(traj, DISPLACEMENT_WINDOW),
    }
}

/// Closed loop sense → decide → actuate → advance obstacles. Runs for
/// `cfg.max_ticks` or until the robot stands in the world's exit region.
/// A move that would touch an obstacle is refused and the robot stays put.
pub fn run_episode(
    world: &WorldSpec,
    robot: &RobotSpec,
    policy: Policy,
    model: Option<&Model>,
    cfg: &NavConfig,
    seed: u64,
) -> (Trajectory, EpisodeMetrics) {
    let traj = simulate(world, robot, policy, model, cfg, seed);
    let metrics = compute_metrics(&traj, world, robot, cfg);
    (traj, metrics)
}

fn simulate(
    world: &WorldSpec,
    robot: &RobotSpec,
    policy: Policy,
    model: Option<&Model>,
    cfg: &NavConfig,
    seed: u64,
) -> Trajectory {
    let noise = NoiseSpec::with_seed(cfg.noise_sigma, seed);
    let dt = cfg.tick_seconds;
    let b = &world.bounds;
    let mut pose = world
        .start
        .unwrap_or_else(|| Pose::new(b.center().x, b.center().y, 0.0));
    let moving = !world.mobile_obstacles.is_empty();
    let mut now = world.clone();
    let mut nav = Navigator::new(policy, model, cfg);
    let mut records = Vec::new();
    for tick in 0..cfg.max_ticks {
        let scan = sense(&now, &pose, robot, &noise, tick);
        let (command, source) = nav.decide(&scan, tick);
        records.push(TrajectoryRecord {
            tick,
            pose,
            scan,
            command,
            source,
        });
        if world.exit.is_some_and(|e| e.contains(pose.position())) {
            break;
        }
        let proposed = step_kinematics(pose, command, robot, dt);
        if moving {
            now = advance_obstacles(world, (tick + 1) as f64 * dt);
        }
        if !collides(&now, &proposed, robot.body_radius) {
            pose = proposed;
        }
    }
    Trajectory { records }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use proptest::prelude::*;

    fn cfg(delay: u64) -> NavConfig {
        NavConfig {
            planner_delay_ticks: delay,
            noise_sigma: 0.0,
            max_ticks: 200,
            ..Default::default()
        }
    }

    const OPEN: ScanVector = ScanVector::new(200.0, 200.0, 200.0, 200.0);

    #[test]
    fn critical_front_backs_off_same_tick() {
        let c = cfg(2);
        let mut nav = Navigator::new(Policy::TwoTier, None, &c);
        assert_eq!(
            nav.decide(&ScanVector::new(4.0, 100.0, 100.0, 100.0), 0),
            (Command::Back, Source::Reflex)
        );
    }

    #[test]
    fn planner_reply_lands_after_delay() {
        let c = cfg(2);
        let mut nav = Navigator::new(Policy::TwoTier, None, &c);
        assert_eq!(nav.decide(&OPEN, 0), (Command::Stop, Source::Hold));
        assert_eq!(nav.decide(&OPEN, 1), (Command::Stop, Source::Hold));
        assert_eq!(nav.decide(&OPEN, 2), (Command::Front, Source::Planner));
        assert_eq!(nav.decide(&OPEN, 3), (Command::Front, Source::Hold));
        assert_eq!(nav.decide(&OPEN, 4), (Command::Front, Source::Planner));
    }

    #[test]
    fn zero_delay_answers_every_tick() {
        let c = cfg(0);
        let mut nav = Navigator::new(Policy::TwoTier, None, &c);
        for t in 0..5 {
            assert_eq!(nav.decide(&OPEN, t), (Command::Front, Source::Planner));
        }
    }

    #[test]
    fn reflex_discards_pending_reply() {
        let c = cfg(2);
        let mut nav = Navigator::new(Policy::TwoTier, None, &c);
        nav.decide(&OPEN, 0);
        assert_eq!(
            nav.decide(&ScanVector::new(100.0, 3.0, 100.0, 100.0), 1).1,
            Source::Reflex
        );
        assert_eq!(nav.in_flight(), 0);
        // The request sent at tick 0 would have been answered at tick 2.
        assert_eq!(nav.decide(&OPEN, 2), (Command::Front, Source::Hold));
        assert_eq!(nav.decide(&OPEN, 4), (Command::Front, Source::Planner));
    }

    #[test]
    fn open_arena_drives_straight() {
        let w = WorldSpec::new(Rect::new(-1000.0, -1000.0, 1000.0, 1000.0));
        let mut c = cfg(2);
        c.noise_sigma = 0.5;
        let (traj, m) = run_episode(&w, &RobotSpec::default(), Policy::TwoTier, None, &c, 1);
        assert_eq!(traj.len(), 200);
        assert!(traj.records[2..].iter().all(|r| r.command == Command::Front));
        assert_eq!(m.collisions, 0);
        assert_eq!(m.lr_alternations, 0);
        assert_eq!(m.min_reaction_ticks, None);
    }

    #[test]
    fn alternation_count() {
        use Command::*;
        assert_eq!(lr_alternations(&[Left, Right, Left, Right, Left]), 4);
        assert_eq!(lr_alternations(&[Left, Front, Right]), 0);
        assert_eq!(lr_alternations(&[Front; 10]), 0);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let w = WorldSpec::new(Rect::new(0.0, 0.0, 300.0, 300.0));
        let (traj, _) = run_episode(&w, &RobotSpec::default(), Policy::ReflexOnly, None, &cfg(2), 3);
        let text = traj.to_csv();
        assert!(text.starts_with("tick,x,y,heading,front,back,left,right,command,source\n"));
        let back = Trajectory::from_csv(&text).unwrap();
        assert_eq!(back.to_csv(), text);
        assert_eq!(back.commands(), traj.commands());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let w = WorldSpec::new(Rect::new(0.0, 0.0, 300.0, 200.0))
            .with_static(Rect::new(200.0, 80.0, 230.0, 120.0).to_polygon());
        let mut c = cfg(2);
        c.noise_sigma = 1.0;
        let a = run_episode(&w, &RobotSpec::default(), Policy::TwoTier, None, &c, 9).0;
        let b = run_episode(&w, &RobotSpec::default(), Policy::TwoTier, None, &c, 9).0;
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn blocked_move_counts_one_collision_and_robot_stays_put() {
        // Wall half a centimetre ahead of the body; every forward step is refused.
        let mut w = WorldSpec::new(Rect::new(0.0, 0.0, 62.5, 100.0));
        w.start = Some(Pose::new(50.0, 50.0, 0.0));
        let c = NavConfig {
            thresholds: Thresholds::new(20.0, 0.1).unwrap(),
            ..cfg(2)
        };
        let traj = Trajectory {
            records: (0..5)
                .map(|t| TrajectoryRecord {
                    tick: t,
                    pose: Pose::new(50.0, 50.0, 0.0),
                    scan: OPEN,
                    command: Command::Front,
                    source: Source::Planner,
                })
                .collect(),
        };
        let m = compute_metrics(&traj, &w, &RobotSpec::default(), &c);
        assert_eq!(m.collisions, 1);
    }

    #[test]
    fn reaction_measured_from_onset() {
        let rec = |t, f: f64, src| TrajectoryRecord {
            tick: t,
            pose: Pose::new(0.0, 0.0, 0.0),
            scan: ScanVector::new(f, 100.0, 100.0, 100.0),
            command: Command::Back,
            source: src,
        };
        let traj = Trajectory {
            records: vec![
                rec(0, 100.0, Source::Planner),
                rec(1, 4.0, Source::Reflex),
                rec(2, 100.0, Source::Hold),
            ],
        };
        let w = WorldSpec::new(Rect::new(-500.0, -500.0, 500.0, 500.0));
        let m = compute_metrics(&traj, &w, &RobotSpec::default(), &cfg(2));
        assert_eq!(m.min_reaction_ticks, Some(0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Reflex iff critical, and never more than one request on the link.
        #[test]
        fn arbitration_soundness(
            scans in prop::collection::vec(prop::array::uniform4(5.0..60.0f64), 1..80),
            delay in 0u64..5,
        ) {
            let c = cfg(delay);
            let mut nav = Navigator::new(Policy::TwoTier, None, &c);
            for (t, s) in scans.iter().enumerate() {
                let s = ScanVector::from_channels(*s);
                let (_, src) = nav.decide(&s, t as u64);
                prop_assert_eq!(src == Source::Reflex, is_critical(&s, &c.thresholds));
                prop_assert!(nav.in_flight() <= 1);
            }
        }
    }
}
