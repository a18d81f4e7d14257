//! Labelled scan datasets: recording with the teacher policy, the CSV file
//! format, oscillation repair and stratified splitting.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reflex::{critical_reflex, is_critical, teacher_decide, Command, Thresholds};
use crate::sensor::{sense, NoiseSpec, ScanVector};
use crate::world::{advance_obstacles, collides, step_kinematics, Pose, RobotSpec, WorldSpec};

pub const CSV_HEADER: &str = "Front,Back,Left,Right,Command";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub scan: ScanVector,
    pub label: Command,
}

impl LabeledSample {
    pub fn new(scan: ScanVector, label: Command) -> Self {
        LabeledSample { scan, label }
    }
}

/// Samples in collection order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>) -> Self {
        Dataset { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<Command> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> [usize; 5] {
        let mut c = [0; 5];
        for s in &self.samples {
            c[s.label.index()] += 1;
        }
        c
    }

    pub fn extend(&mut self, other: &Dataset) {
        self.samples.extend_from_slice(&other.samples);
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Ok(parse_csv(&std::fs::read(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, emit_csv(self))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("expected header `{CSV_HEADER}`")]
    Header,
    #[error("line {line_no}: {reason}")]
    Row { line_no: usize, reason: String },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn emit_csv(ds: &Dataset) -> Vec<u8> {
    let mut out = String::with_capacity(32 * (ds.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in &ds.samples {
        let [f, b, l, r] = s.scan.channels();
        writeln!(out, "{f:.2},{b:.2},{l:.2},{r:.2},{}", s.label).expect("write to string");
    }
    out.into_bytes()
}

/// Accepts LF or CRLF line endings and a missing final newline. Values must
/// be finite; they are not range-checked so recorded files with sensor
/// glitches still load.
pub fn parse_csv(bytes: &[u8]) -> Result<Dataset, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ParseError::Row {
        line_no: 1,
        reason: "not valid UTF-8".into(),
    })?;
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    match lines.next() {
        Some(h) if h.trim_start_matches('\u{feff}') == CSV_HEADER => {}
        _ => return Err(ParseError::Header),
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let row_err = |reason: String| ParseError::Row { line_no, reason };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(row_err(format!("{} fields, expected 5", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields[..4]) {
            *slot = f
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| row_err(format!("bad number {f:?}")))?;
        }
        let label = fields[4]
            .trim()
            .parse::<Command>()
            .map_err(|e| row_err(e.to_string()))?;
        samples.push(LabeledSample::new(ScanVector::from_channels(v), label));
    }
    Ok(Dataset::new(samples))
}

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("teacher run collided at tick {tick}")]
    Collision { tick: u64, partial: Dataset },
    #[error("collection needs at least one step")]
    NoSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectOptions {
    pub noise_sigma: f64,
    pub tick_seconds: f64,
    /// Overrides the world's start pose.
    pub start: Option<Pose>,
}

impl Default for CollectOptions {
    fn default() -> Self {
        CollectOptions {
            noise_sigma: NoiseSpec::default().sigma,
            tick_seconds: 0.05,
            start: None,
        }
    }
}

/// Drives the teacher for `steps` ticks and records one sample per tick.
pub fn collect(
    world: &WorldSpec,
    robot: &RobotSpec,
    th: &Thresholds,
    steps: usize,
    seed: u64,
) -> Result<Dataset, CollectError> {
    collect_with(world, robot, th, steps, seed, &CollectOptions::default())
}

/// As [`collect`], with explicit noise level, tick length and start pose.
///
/// Each tick the controller acts exactly as it would without a planner: the
/// reflex handles critical scans, the teacher everything else. The recorded
/// label is the command actually issued.
pub fn collect_with(
    world: &WorldSpec,
    robot: &RobotSpec,
    th: &Thresholds,
    steps: usize,
    seed: u64,
    opts: &CollectOptions,
) -> Result<Dataset, CollectError> {
    if steps == 0 {
        return Err(CollectError::NoSteps);
    }
    let noise = NoiseSpec::with_seed(opts.noise_sigma, seed);
    let b = &world.bounds;
    let mut pose = opts
        .start
        .or(world.start)
        .unwrap_or_else(|| Pose::new(b.center().x, b.center().y, 0.0));
    let dt = opts.tick_seconds;
    let mut samples = Vec::with_capacity(steps);
    let mut current = world.clone();
    for tick in 0..steps as u64 {
        let scan = sense(&current, &pose, robot, &noise, tick);
        let cmd = if is_critical(&scan, th) {
            critical_reflex(&scan, th)
        } else {
            teacher_decide(&scan, th)
        };
        samples.push(LabeledSample::new(scan, cmd));
        let next = step_kinematics(pose, cmd, robot, dt);
        current = advance_obstacles(world, (tick + 1) as f64 * dt);
        if collides(&current, &next, robot.body_radius) {
            return Err(CollectError::Collision {
                tick,
                partial: Dataset::new(samples),
            });
        }
        pose = next;
    }
    Ok(Dataset::new(samples))
}

/// Inclusive index range into a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub start_index: usize,
    pub end_index: usize,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.end_index - self.start_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub const DEFAULT_WINDOW: usize = 8;
pub const DEFAULT_MIN_ALTERNATIONS: usize = 3;

/// Finds maximal runs of turn labels that flip left/right at least
/// `min_alternations` times inside some `window`-long stretch.
pub fn detect_oscillation(labels: &[Command], window: usize, min_alternations: usize) -> Vec<Episode> {
    let window = window.max(2);
    let mut out = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        if !labels[i].is_turn() {
            i += 1;
            continue;
        }
        let start = i;
        while i < labels.len() && labels[i].is_turn() {
            i += 1;
        }
        let run = &labels[start..i];
        // switch[j] is true when run[j] differs from run[j + 1]
        let switches: Vec<bool> = run.windows(2).map(|w| w[0] != w[1]).collect();
        let span = window - 1;
        let hit = if switches.len() <= span {
            switches.iter().filter(|&&s| s).count() >= min_alternations
        } else {
            switches
                .windows(span)
                .any(|w| w.iter().filter(|&&s| s).count() >= min_alternations)
        };
        if hit {
            out.push(Episode {
                start_index: start,
                end_index: i - 1,
            });
        }
    }
    out
}

/// Overwrites every label inside each episode with the episode's first
/// label. Returns the new dataset and how many labels changed.
pub fn relabel(ds: &Dataset, episodes: &[Episode]) -> (Dataset, usize) {
    let mut out = ds.clone();
    let mut changed = 0;
    for ep in episodes {
        let first = out.samples[ep.start_index].label;
        for s in &mut out.samples[ep.start_index..=ep.end_index] {
            if s.label != first {
                s.label = first;
                changed += 1;
            }
        }
    }
    (out, changed)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("class {0} has fewer than 2 samples; cannot stratify")]
    TooFew(Command),
    #[error("train fraction must be in (0, 1)")]
    Fraction,
}

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.75;
pub const DEFAULT_SPLIT_SEED: u64 = 42;

/// Stratified split. Per-class train counts use largest-remainder rounding
/// so the total equals `round(fraction * n)`; each present class keeps at
/// least one sample on both sides. Both halves preserve dataset order.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), SplitError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SplitError::Fraction);
    }
    let mut by_class: [Vec<usize>; 5] = Default::default();
    for (i, s) in ds.samples.iter().enumerate() {
        by_class[s.label.index()].push(i);
    }
    for (c, idx) in by_class.iter().enumerate() {
        if idx.len() == 1 {
            return Err(SplitError::TooFew(Command::ALL[c]));
        }
    }
    let n = ds.len();
    let target = (train_fraction * n as f64).round() as usize;
    let mut quota = [0usize; 5];
    let mut rema = Vec::new();
    for (c, idx) in by_class.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let exact = train_fraction * idx.len() as f64;
        quota[c] = exact.floor() as usize;
        rema.push((exact - exact.floor(), c));
    }
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = target.saturating_sub(quota.iter().sum());
    for &(_, c) in &rema {
        if left == 0 {
            break;
        }
        quota[c] += 1;
        left -= 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; n];
    for (c, idx) in by_class.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let q = quota[c].clamp(1, idx.len() - 1);
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..q] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (s, t) in ds.samples.iter().zip(in_train) {
        if t {
            train.push(*s);
        } else {
            test.push(*s);
        }
    }
    Ok((Dataset::new(train), Dataset::new(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use proptest::prelude::*;
    use Command::*;

    #[test]
    fn parses_recorded_rows() {
        let text = "Front,Back,Left,Right,Command\n128.44,82.77,81.02,74.99,front\n127.98,196.38,80.09,74.95,front\n";
        let ds = parse_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples[0].scan, ScanVector::new(128.44, 82.77, 81.02, 74.99));
        assert_eq!(ds.samples[0].label, Front);
        assert_eq!(emit_csv(&ds), text.as_bytes());
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse_csv(b"A,B,C,D,E\n"), Err(ParseError::Header));
        assert_eq!(parse_csv(b""), Err(ParseError::Header));
        let bad_label = b"Front,Back,Left,Right,Command\n1,2,3,4,up\n";
        assert!(matches!(parse_csv(bad_label), Err(ParseError::Row { line_no: 2, .. })));
        let short = b"Front,Back,Left,Right,Command\n1,2,3,4,front\n1,2,3\n";
        assert!(matches!(parse_csv(short), Err(ParseError::Row { line_no: 3, .. })));
        let nan = b"Front,Back,Left,Right,Command\nNaN,2,3,4,front\n";
        assert!(matches!(parse_csv(nan), Err(ParseError::Row { line_no: 2, .. })));
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_csv(b"Front,Back,Left,Right,Command\n").unwrap().is_empty());
        assert!(parse_csv(b"Front,Back,Left,Right,Command").unwrap().is_empty());
    }

    #[test]
    fn crlf_is_accepted() {
        let ds = parse_csv(b"Front,Back,Left,Right,Command\r\n10.00,20.00,30.00,40.00,left\r\n").unwrap();
        assert_eq!(ds.samples[0].label, Left);
    }

    fn open_room() -> WorldSpec {
        let mut w = WorldSpec::new(Rect::new(0.0, 0.0, 300.0, 300.0))
            .with_static(Rect::new(140.0, 140.0, 170.0, 170.0).to_polygon());
        w.start = Some(Pose::new(50.0, 60.0, 0.3));
        w
    }

    #[test]
    fn collect_one_sample_per_tick() {
        let ds = collect(&open_room(), &RobotSpec::default(), &Thresholds::default(), 1000, 7).unwrap();
        assert_eq!(ds.len(), 1000);
        assert!(ds.samples.iter().all(|s| s.scan.in_envelope()));
        let again = collect(&open_room(), &RobotSpec::default(), &Thresholds::default(), 1000, 7).unwrap();
        assert_eq!(emit_csv(&ds), emit_csv(&again));
    }

    #[test]
    fn collect_rejects_zero_steps() {
        assert!(matches!(
            collect(&open_room(), &RobotSpec::default(), &Thresholds::default(), 0, 1),
            Err(CollectError::NoSteps)
        ));
    }

    #[test]
    fn collect_reports_collision_with_partial_data() {
        // Start inside the block: whatever the teacher does, the next pose
        // is in contact.
        let mut w = open_room();
        w.start = Some(Pose::new(155.0, 155.0, 0.0));
        match collect(&w, &RobotSpec::default(), &Thresholds::default(), 50, 1) {
            Err(CollectError::Collision { tick, partial }) => {
                assert_eq!(tick, 0);
                assert_eq!(partial.len(), 1);
            }
            other => panic!("expected collision, got {other:?}"),
        }
    }

    #[test]
    fn oscillation_examples() {
        assert_eq!(
            detect_oscillation(&[Left, Right, Left, Right, Left, Right], 8, 3),
            vec![Episode {
                start_index: 0,
                end_index: 5
            }]
        );
        assert!(detect_oscillation(&[Front; 4], 8, 3).is_empty());
    }

    /// Brute force over the stated definition: every maximal turn run, every
    /// window start, count switches directly.
    fn oracle(labels: &[Command], window: usize, min_alt: usize) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut s = None;
        for i in 0..=labels.len() {
            let turn = i < labels.len() && labels[i].is_turn();
            match (s, turn) {
                (None, true) => s = Some(i),
                (Some(a), false) => {
                    runs.push((a, i - 1));
                    s = None;
                }
                _ => {}
            }
        }
        runs.into_iter()
            .filter(|&(a, b)| {
                (a..=b).any(|ws| {
                    let we = (ws + window - 1).min(b);
                    (ws + 1..=we).filter(|&j| labels[j] != labels[j - 1]).count() >= min_alt
                })
            })
            .collect()
    }

    #[test]
    fn oscillation_mixed_sequence_matches_enumeration() {
        let labels = [Left, Right, Front, Left, Right, Left, Right, Left];
        assert_eq!(oracle(&labels, 8, 3), vec![(3, 7)]);
        assert_eq!(
            detect_oscillation(&labels, 8, 3),
            vec![Episode {
                start_index: 3,
                end_index: 7
            }]
        );
    }

    #[test]
    fn relabel_commits_to_first_turn() {
        let ds = Dataset::new(
            [Left, Right, Left, Right, Left, Right]
                .into_iter()
                .map(|c| LabeledSample::new(ScanVector::new(10.0, 10.0, 10.0, 10.0), c))
                .collect(),
        );
        let eps = detect_oscillation(&ds.labels(), 8, 3);
        let (fixed, changed) = relabel(&ds, &eps);
        assert_eq!(fixed.labels(), vec![Left; 6]);
        assert_eq!(changed, 3);
        assert_eq!(ds.labels()[1], Right, "input untouched");
        assert_eq!(relabel(&ds, &[]).0, ds);
    }

    fn synthetic(n: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|i| LabeledSample::new(ScanVector::new(5.0 + i as f64, 10.0, 20.0, 30.0), Command::ALL[i % 3]))
                .collect(),
        )
    }

    #[test]
    fn split_sizes_and_stratification() {
        let ds = synthetic(100);
        let (train, test) = split(&ds, 0.75, 42).unwrap();
        assert_eq!((train.len(), test.len()), (75, 25));
        let (ct, cd) = (train.class_counts(), ds.class_counts());
        for c in 0..5 {
            let want = 0.75 * cd[c] as f64;
            assert!((ct[c] as f64 - want).abs() <= 1.0);
        }
        assert_eq!(split(&ds, 0.75, 42).unwrap(), (train, test));
    }

    #[test]
    fn split_needs_two_per_class() {
        let mut ds = synthetic(10);
        ds.samples
            .push(LabeledSample::new(ScanVector::new(9.0, 9.0, 9.0, 9.0), Stop));
        assert_eq!(split(&ds, 0.75, 1), Err(SplitError::TooFew(Stop)));
    }

    fn label_strategy() -> impl Strategy<Value = Command> {
        prop::sample::select(Command::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec(
            (prop::array::uniform4(500u32..=45_000), label_strategy()), 0..40)) {
            let ds = Dataset::new(rows.into_iter()
                .map(|(v, l)| LabeledSample::new(ScanVector::from_channels(v.map(|c| c as f64 / 100.0)), l))
                .collect());
            prop_assert_eq!(parse_csv(&emit_csv(&ds)).unwrap(), ds);
        }

        #[test]
        fn detection_matches_oracle(labels in prop::collection::vec(label_strategy(), 0..60),
                                    window in 2usize..12, min_alt in 1usize..6) {
            let got: Vec<(usize, usize)> = detect_oscillation(&labels, window, min_alt)
                .into_iter().map(|e| (e.start_index, e.end_index)).collect();
            prop_assert_eq!(got, oracle(&labels, window, min_alt));
        }

        #[test]
        fn relabel_removes_the_symptom(labels in prop::collection::vec(label_strategy(), 0..60)) {
            let ds = Dataset::new(labels.iter()
                .map(|&c| LabeledSample::new(ScanVector::new(10.0, 10.0, 10.0, 10.0), c)).collect());
            let eps = detect_oscillation(&labels, 8, 3);
            let (fixed, _) = relabel(&ds, &eps);
            for e in &eps {
                let seg = &fixed.labels()[e.start_index..=e.end_index];
                prop_assert!(detect_oscillation(seg, 8, 3).is_empty());
            }
            let again = relabel(&fixed, &detect_oscillation(&fixed.labels(), 8, 3)).0;
            prop_assert_eq!(again, fixed);
        }

        #[test]
        fn split_partitions(n in 6usize..120, seed in any::<u64>()) {
            let ds = synthetic(n);
            let (train, test) = split(&ds, 0.75, seed).unwrap();
            prop_assert_eq!(train.len() + test.len(), n);
            let mut all: Vec<f64> = train.samples.iter().chain(&test.samples).map(|s| s.scan.front).collect();
            all.sort_by(f64::total_cmp);
            let mut want: Vec<f64> = ds.samples.iter().map(|s| s.scan.front).collect();
            want.sort_by(f64::total_cmp);
            prop_assert_eq!(all, want);
        }
    }
}
