//! Gaze-driven robot pick-and-place: the camera → interface → robot geometric
//! pipeline, dwell-based fixation detection, the menu interaction state
//! machine, a 2.5-D arm simulator, synthetic gaze sources and the experiment
//! harness that reproduces the accuracy and pick-and-place protocols.
//!
//! Everything here is deterministic given its seeds. The real-time host
//! ([`service`]) owns a single [`service::Engine`] that is the only writer of
//! interaction and robot state.

pub mod evaluation;
pub mod fixation;
pub mod gaze_sources;
pub mod geometry;
pub mod interaction;
pub mod robot;
pub mod seed;
pub mod service;

pub use geometry::{Point2, fixation_error};
