//! Simulation and learning stack for a small indoor robot that steers by four
//! ultrasonic range sensors.
//!
//! The pipeline: drive a rule-based teacher through a simulated world and
//! record labelled scans ([`dataset`]), repair oscillating labels, train a
//! classifier ([`learn`]), then run the two-tier controller ([`nav`]) where a
//! critical-distance reflex overrides the learned planner, which answers over
//! a delayed serial link ([`serial`]).

pub mod curriculum;
pub mod dataset;
pub mod geometry;
pub mod learn;
pub mod nav;
pub mod reflex;
pub mod scenario;
pub mod sensor;
pub mod serial;
pub mod world;

pub use dataset::{Dataset, LabeledSample};
pub use geometry::{Rect, Vec2};
pub use learn::{Algorithm, LearnerConfig, Model};
pub use nav::{run_episode, EpisodeMetrics, NavConfig, Policy, Source, Trajectory};
pub use reflex::{Command, Thresholds};
pub use sensor::{NoiseSpec, ScanVector};
pub use world::{Pose, RobotSpec, WorldSpec};
