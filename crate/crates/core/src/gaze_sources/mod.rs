//! Gaze sample producers: seeded synthetic gaze, a synthetic scene camera
//! that exercises the marker/homography path, and trace files.
//!
//! # Noise model
//!
//! Each sample is `target + offset` on the surface, in cm. The offset is the
//! sum of a bias drawn once per stream and an independent per-sample jitter:
//!
//! ```text
//! offset_k = b + j_k,   b ~ N(0, σ_b² I),   j_k ~ N(0, σ_j² I)
//! σ_j = min(jitter, σ),  σ_b = √(σ² − σ_j²)
//! ```
//!
//! so every individual sample is `N(0, σ² I)` around the target. With
//! `jitter = None` the whole variance is per-sample (`σ_b = 0`). A stream
//! may be split into several segments that keep the same bias.

mod camera;
mod trace;

pub use camera::{CameraPose, SyntheticCamera, estimate_camera_homography, marker_correspondences, marker_corners, project_to_camera};
pub use trace::{Trace, TraceError, TraceSegment, load_trace, read_trace, replay, write_trace};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixation::GazeSample;
use crate::geometry::{InterfaceCalibration, Point2};
use crate::seed::{SimRng, rng_from_seed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GazeSourceError {
    #[error("invalid gaze source parameter `{0}`")]
    InvalidConfig(&'static str),
    #[error("point ({x:.3}, {y:.3}) projects outside the camera frame", x = .0.x, y = .0.y)]
    OutOfFrame(Point2),
    #[error("no markers detected")]
    NoMarkers,
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGazeConfig {
    /// Per-axis standard deviation of one sample around the target, cm.
    pub sigma: f64,
    pub outlier_prob: f64,
    /// Per-axis standard deviation of an outlier offset, cm.
    pub outlier_sigma: f64,
    pub seed: u64,
    pub rate: f64,
    /// Per-sample share of `sigma`, cm. `None` puts all of it per sample.
    pub jitter: Option<f64>,
}

impl Default for SyntheticGazeConfig {
    fn default() -> Self {
        SyntheticGazeConfig { sigma: 1.165, outlier_prob: 0.0, outlier_sigma: 5.0, seed: 0, rate: 50.0, jitter: None }
    }
}

impl SyntheticGazeConfig {
    pub fn validate(&self) -> Result<(), GazeSourceError> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(GazeSourceError::InvalidConfig("sigma"));
        }
        if !(0.0..1.0).contains(&self.outlier_prob) {
            return Err(GazeSourceError::InvalidConfig("outlier_prob"));
        }
        if !(self.outlier_sigma.is_finite() && self.outlier_sigma >= 0.0) {
            return Err(GazeSourceError::InvalidConfig("outlier_sigma"));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(GazeSourceError::InvalidConfig("rate"));
        }
        if let Some(j) = self.jitter {
            if !(j.is_finite() && j >= 0.0) {
                return Err(GazeSourceError::InvalidConfig("jitter"));
            }
        }
        Ok(())
    }

    /// `(σ_b, σ_j)`.
    pub fn split_sigma(&self) -> (f64, f64) {
        let j = self.jitter.map_or(self.sigma, |j| j.min(self.sigma));
        ((self.sigma * self.sigma - j * j).max(0.0).sqrt(), j)
    }
}

/// Offset generator for one stream. Every call consumes the same number of
/// draws regardless of the outcome, so streams with different `sigma` but
/// equal seeds stay aligned.
#[derive(Debug, Clone)]
pub struct GazeNoise {
    rng: SimRng,
    bias: Point2,
    sigma_j: f64,
    outlier_prob: f64,
    outlier_sigma: f64,
}

impl GazeNoise {
    pub fn new(cfg: &SyntheticGazeConfig) -> Result<Self, GazeSourceError> {
        cfg.validate()?;
        let mut rng = rng_from_seed(cfg.seed);
        let (sigma_b, sigma_j) = cfg.split_sigma();
        let bias = normal2(&mut rng) * sigma_b;
        Ok(GazeNoise { rng, bias, sigma_j, outlier_prob: cfg.outlier_prob, outlier_sigma: cfg.outlier_sigma })
    }

    pub fn bias(&self) -> Point2 {
        self.bias
    }

    /// Offset of the next sample, cm.
    pub fn next_offset(&mut self) -> Point2 {
        let z = normal2(&mut self.rng);
        let u: f64 = self.rng.random();
        if u < self.outlier_prob { z * self.outlier_sigma } else { self.bias + z * self.sigma_j }
    }

    /// Offset without bias or outliers, for gaze guided by on-screen
    /// feedback (looking at a menu option drawn around the cursor).
    pub fn next_jitter(&mut self) -> Point2 {
        let z = normal2(&mut self.rng);
        let _: f64 = self.rng.random();
        z * self.sigma_j
    }
}

fn normal2(rng: &mut SimRng) -> Point2 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Point2::new(x, y)
}

/// Fixed-rate samples aimed at one surface point, emitted in interface px.
#[derive(Debug, Clone)]
pub struct GazeStream {
    noise: GazeNoise,
    target: Point2,
    calib: InterfaceCalibration,
    rate: f64,
    k: usize,
    n: usize,
}

impl Iterator for GazeStream {
    type Item = GazeSample;

    fn next(&mut self) -> Option<GazeSample> {
        if self.k >= self.n {
            return None;
        }
        let t = self.k as f64 / self.rate;
        self.k += 1;
        let p = self.target + self.noise.next_offset();
        Some(GazeSample::new(t, self.calib.surface_to_interface(p)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.n - self.k;
        (left, Some(left))
    }
}

impl ExactSizeIterator for GazeStream {}

/// `round(duration · rate)` samples starting at `t = 0`.
pub fn gaze_stream(
    target: Point2,
    cfg: &SyntheticGazeConfig,
    duration: f64,
    calib: &InterfaceCalibration,
) -> Result<GazeStream, GazeSourceError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(GazeSourceError::InvalidConfig("duration"));
    }
    let noise = GazeNoise::new(cfg)?;
    let n = ((duration * cfg.rate).round() as usize).max(1);
    Ok(GazeStream { noise, target, calib: calib.clone(), rate: cfg.rate, k: 0, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radial_errors(cfg: &SyntheticGazeConfig, n: usize) -> Vec<f64> {
        let calib = InterfaceCalibration::reference();
        let target = Point2::new(40.0, 24.0);
        gaze_stream(target, cfg, n as f64 / cfg.rate, &calib)
            .unwrap()
            .map(|s| calib.interface_to_surface(s.p).distance(target))
            .collect()
    }

    #[test]
    fn zero_sigma_hits_target() {
        let cfg = SyntheticGazeConfig { sigma: 0.0, ..Default::default() };
        let calib = InterfaceCalibration::reference();
        let target = Point2::new(12.5, 30.0);
        let px = calib.surface_to_interface(target);
        for s in gaze_stream(target, &cfg, 2.0, &calib).unwrap() {
            assert_eq!(s.p, px);
        }
    }

    #[test]
    fn timing_and_count() {
        let cfg = SyntheticGazeConfig::default();
        let s: Vec<_> = gaze_stream(Point2::ORIGIN, &cfg, 2.0, &InterfaceCalibration::reference()).unwrap().collect();
        assert_eq!(s.len(), 100);
        assert_eq!(s[0].t, 0.0);
        assert_eq!(s[99].t, 99.0 / 50.0);
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = SyntheticGazeConfig { seed: 42, jitter: Some(0.2), outlier_prob: 0.1, ..Default::default() };
        let a: Vec<_> = gaze_stream(Point2::ORIGIN, &cfg, 3.0, &InterfaceCalibration::reference()).unwrap().collect();
        let b: Vec<_> = gaze_stream(Point2::ORIGIN, &cfg, 3.0, &InterfaceCalibration::reference()).unwrap().collect();
        assert_eq!(a, b);
        let c: Vec<_> = gaze_stream(Point2::ORIGIN, &SyntheticGazeConfig { seed: 43, ..cfg }, 3.0, &InterfaceCalibration::reference())
            .unwrap()
            .collect();
        assert_ne!(a, c);
    }

    #[test]
    fn rayleigh_mean() {
        let cfg = SyntheticGazeConfig { sigma: 1.165, seed: 1, ..Default::default() };
        let r = radial_errors(&cfg, 100_000);
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let want = 1.165 * (std::f64::consts::PI / 2.0).sqrt();
        assert!((mean / want - 1.0).abs() < 0.01, "mean {mean} vs {want}");
    }

    #[test]
    fn rayleigh_ks() {
        let sigma = 1.165;
        let cfg = SyntheticGazeConfig { sigma, seed: 2, ..Default::default() };
        let mut r = radial_errors(&cfg, 100_000);
        r.sort_by(f64::total_cmp);
        let n = r.len() as f64;
        let d = r
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 1.0 - (-x * x / (2.0 * sigma * sigma)).exp();
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.02, "KS statistic {d}");
    }

    #[test]
    fn split_keeps_marginal_variance() {
        let cfg = SyntheticGazeConfig { sigma: 1.165, jitter: Some(0.2), ..Default::default() };
        let (b, j) = cfg.split_sigma();
        assert!((b * b + j * j - 1.165 * 1.165).abs() < 1e-12);
        assert_eq!(j, 0.2);
        let small = SyntheticGazeConfig { sigma: 0.1, jitter: Some(0.2), ..Default::default() };
        assert_eq!(small.split_sigma(), (0.0, 0.1));

        // pooled over many streams each sample is N(0, σ²) per axis
        let mut sum2 = 0.0;
        let mut n = 0.0;
        for seed in 0..4000 {
            let mut g = GazeNoise::new(&SyntheticGazeConfig { seed, ..cfg }).unwrap();
            for _ in 0..5 {
                let o = g.next_offset();
                sum2 += o.x * o.x + o.y * o.y;
                n += 2.0;
            }
        }
        let var = sum2 / n;
        assert!((var.sqrt() / 1.165 - 1.0).abs() < 0.03, "{}", var.sqrt());
    }

    #[test]
    fn outliers_replace_offsets() {
        let cfg = SyntheticGazeConfig { sigma: 0.0, outlier_prob: 0.3, outlier_sigma: 4.0, seed: 9, ..Default::default() };
        let r = radial_errors(&cfg, 20_000);
        let frac = r.iter().filter(|&&e| e > 0.0).count() as f64 / r.len() as f64;
        assert!((frac - 0.3).abs() < 0.015, "{frac}");
    }

    #[test]
    fn rejects_bad_config() {
        let calib = InterfaceCalibration::reference();
        for cfg in [
            SyntheticGazeConfig { sigma: -1.0, ..Default::default() },
            SyntheticGazeConfig { outlier_prob: 1.0, ..Default::default() },
            SyntheticGazeConfig { rate: 0.0, ..Default::default() },
            SyntheticGazeConfig { jitter: Some(f64::NAN), ..Default::default() },
        ] {
            assert!(gaze_stream(Point2::ORIGIN, &cfg, 1.0, &calib).is_err());
        }
        assert!(gaze_stream(Point2::ORIGIN, &SyntheticGazeConfig::default(), 0.0, &calib).is_err());
    }
}
