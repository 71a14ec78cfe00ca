//! Dwell-time fixation detection on interface-frame gaze samples.
//!
//! Samples accumulate into a window as long as each new one stays within
//! `dispersion_radius` of the running centroid. A sample outside the radius
//! restarts the window at that sample; an invalid (tracking-loss) sample
//! clears it. Each sample stands for `1 / sample_rate` seconds, so a window
//! spanning `[t_first, t_last]` covers `t_last − t_first + 1/sample_rate`.
//! Once that reaches `dwell_duration` a [`FixationEvent`] is emitted and the
//! detector stays quiet until [`DwellDetector::reset`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: f64,
    pub p: Point2,
    pub valid: bool,
}

impl GazeSample {
    pub fn new(t: f64, p: Point2) -> Self {
        Self { t, p, valid: true }
    }

    pub fn lost(t: f64) -> Self {
        Self { t, p: Point2::ORIGIN, valid: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellConfig {
    /// Seconds of stable gaze needed.
    pub dwell_duration: f64,
    /// Interface px.
    pub dispersion_radius: f64,
    /// Hz; sets the duration each sample accounts for.
    pub sample_rate: f64,
}

impl Default for DwellConfig {
    fn default() -> Self {
        Self { dwell_duration: 2.0, dispersion_radius: 40.0, sample_rate: 50.0 }
    }
}

impl DwellConfig {
    pub fn validate(&self) -> Result<(), FixationError> {
        for (name, v) in [
            ("dwell_duration", self.dwell_duration),
            ("dispersion_radius", self.dispersion_radius),
            ("sample_rate", self.sample_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FixationError::InvalidConfig(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationEvent {
    pub centroid: Point2,
    pub start_t: f64,
    pub end_t: f64,
    pub n_samples: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixationError {
    #[error("timestamp {t} is not after the previous sample at {prev}")]
    NonMonotonicTimestamp { prev: f64, t: f64 },
    #[error("`{0}` must be positive and finite")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Default)]
struct Window {
    sum_x: f64,
    sum_y: f64,
    n: usize,
    start_t: f64,
    last_t: f64,
}

impl Window {
    fn centroid(&self) -> Point2 {
        Point2::new(self.sum_x / self.n as f64, self.sum_y / self.n as f64)
    }

    fn start(s: &GazeSample) -> Self {
        Window { sum_x: s.p.x, sum_y: s.p.y, n: 1, start_t: s.t, last_t: s.t }
    }
}

#[derive(Debug, Clone)]
pub struct DwellDetector {
    cfg: DwellConfig,
    window: Option<Window>,
    last_t: Option<f64>,
    suspended: bool,
}

impl DwellDetector {
    pub fn new(cfg: DwellConfig) -> Result<Self, FixationError> {
        cfg.validate()?;
        Ok(Self { cfg, window: None, last_t: None, suspended: false })
    }

    pub fn config(&self) -> &DwellConfig {
        &self.cfg
    }

    /// True after an event until the next reset.
    pub fn is_suspended(&self) -> bool {
        self.suspended
    }

    /// Fraction of the dwell accumulated so far, in `[0, 1]`.
    pub fn progress(&self) -> f64 {
        if self.suspended {
            return 1.0;
        }
        match &self.window {
            Some(w) => (self.covered(w) / self.cfg.dwell_duration).clamp(0.0, 1.0),
            None => 0.0,
        }
    }

    fn covered(&self, w: &Window) -> f64 {
        w.last_t - w.start_t + 1.0 / self.cfg.sample_rate
    }

    pub fn push_sample(&mut self, s: GazeSample) -> Result<Option<FixationEvent>, FixationError> {
        if let Some(prev) = self.last_t {
            if s.t.is_nan() || s.t <= prev {
                return Err(FixationError::NonMonotonicTimestamp { prev, t: s.t });
            }
        }
        self.last_t = Some(s.t);
        if self.suspended {
            return Ok(None);
        }
        if !s.valid {
            self.window = None;
            return Ok(None);
        }

        match &mut self.window {
            Some(w) if w.centroid().distance(s.p) <= self.cfg.dispersion_radius => {
                w.sum_x += s.p.x;
                w.sum_y += s.p.y;
                w.n += 1;
                w.last_t = s.t;
            }
            _ => self.window = Some(Window::start(&s)),
        }

        let w = self.window.as_ref().expect("window was just filled");
        let covered = self.covered(w);
        if covered + TIME_EPS >= self.cfg.dwell_duration {
            let ev = FixationEvent {
                centroid: w.centroid(),
                start_t: w.start_t,
                end_t: w.last_t + 1.0 / self.cfg.sample_rate,
                n_samples: w.n,
            };
            self.window = None;
            self.suspended = true;
            return Ok(Some(ev));
        }
        Ok(None)
    }

    /// Clears the window and re-arms detection. The timestamp history is kept,
    /// so the stream must still move forward.
    pub fn reset(&mut self) {
        self.window = None;
        self.suspended = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn det() -> DwellDetector {
        DwellDetector::new(DwellConfig::default()).unwrap()
    }

    fn t(k: usize) -> f64 {
        k as f64 / 50.0
    }

    #[test]
    fn steady_two_seconds_fires_once() {
        let mut d = det();
        let mut events = Vec::new();
        for k in 0..100 {
            if let Some(e) = d.push_sample(GazeSample::new(t(k), Point2::new(400.0, 300.0))).unwrap() {
                events.push((k, e));
            }
        }
        assert_eq!(events.len(), 1);
        let (k, e) = events[0];
        assert_eq!(k, 99);
        assert_eq!(e.centroid, Point2::new(400.0, 300.0));
        assert_eq!(e.n_samples, 100);
        assert!((e.end_t - 2.0).abs() < 1e-9);
        assert_eq!(e.start_t, 0.0);
    }

    #[test]
    fn jump_outside_radius_restarts() {
        let mut d = det();
        for k in 0..99 {
            assert!(d.push_sample(GazeSample::new(t(k), Point2::new(400.0, 300.0))).unwrap().is_none());
        }
        assert!(d.push_sample(GazeSample::new(t(99), Point2::new(800.0, 300.0))).unwrap().is_none());
        // the new window started at sample 99: it fires 99 samples later
        for k in 100..198 {
            assert!(d.push_sample(GazeSample::new(t(k), Point2::new(800.0, 300.0))).unwrap().is_none());
        }
        let e = d.push_sample(GazeSample::new(t(198), Point2::new(800.0, 300.0))).unwrap().unwrap();
        assert_eq!(e.centroid, Point2::new(800.0, 300.0));
        assert_eq!(e.start_t, t(99));
    }

    #[test]
    fn jittered_centroid_is_the_mean() {
        let mut d = det();
        let pts: Vec<Point2> = (0..100)
            .map(|k| {
                let s = if k % 2 == 0 { 2.0 } else { -2.0 };
                Point2::new(400.0 + s, 300.0 - s * 0.5 + if k % 3 == 0 { 1.0 } else { 0.0 })
            })
            .collect();
        let mut ev = None;
        for (k, p) in pts.iter().enumerate() {
            ev = ev.or(d.push_sample(GazeSample::new(t(k), *p)).unwrap());
        }
        let e = ev.unwrap();
        let mean = Point2::new(
            pts.iter().map(|p| p.x).sum::<f64>() / 100.0,
            pts.iter().map(|p| p.y).sum::<f64>() / 100.0,
        );
        assert!(e.centroid.distance(mean) < 1e-9);
    }

    #[test]
    fn invalid_sample_clears_window() {
        let mut d = det();
        for k in 0..60 {
            d.push_sample(GazeSample::new(t(k), Point2::new(10.0, 10.0))).unwrap();
        }
        d.push_sample(GazeSample::lost(t(60))).unwrap();
        assert_eq!(d.progress(), 0.0);
        for k in 61..160 {
            assert!(d.push_sample(GazeSample::new(t(k), Point2::new(10.0, 10.0))).unwrap().is_none());
        }
        assert!(d.push_sample(GazeSample::new(t(160), Point2::new(10.0, 10.0))).unwrap().is_some());
    }

    #[test]
    fn suspended_until_reset_then_fires_again() {
        let mut d = det();
        let p = Point2::new(1.0, 2.0);
        let mut k = 0;
        let mut fired = 0;
        for _ in 0..300 {
            fired += d.push_sample(GazeSample::new(t(k), p)).unwrap().is_some() as usize;
            k += 1;
        }
        assert_eq!(fired, 1);
        assert!(d.is_suspended());
        d.reset();
        d.reset(); // idempotent
        for _ in 0..100 {
            fired += d.push_sample(GazeSample::new(t(k), p)).unwrap().is_some() as usize;
            k += 1;
        }
        assert_eq!(fired, 2);
    }

    #[test]
    fn reset_mid_accumulation_restarts_timer() {
        let mut d = det();
        let p = Point2::new(1.0, 2.0);
        for k in 0..80 {
            d.push_sample(GazeSample::new(t(k), p)).unwrap();
        }
        d.reset();
        assert_eq!(d.progress(), 0.0);
        for k in 80..179 {
            assert!(d.push_sample(GazeSample::new(t(k), p)).unwrap().is_none(), "{k}");
        }
        assert!(d.push_sample(GazeSample::new(t(179), p)).unwrap().is_some());
    }

    #[test]
    fn non_monotonic_time_is_an_error() {
        let mut d = det();
        d.push_sample(GazeSample::new(1.0, Point2::ORIGIN)).unwrap();
        let err = d.push_sample(GazeSample::new(1.0, Point2::ORIGIN)).unwrap_err();
        assert!(matches!(err, FixationError::NonMonotonicTimestamp { .. }));
        assert!(d.push_sample(GazeSample::new(0.5, Point2::ORIGIN)).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = DwellConfig { dispersion_radius: 0.0, ..Default::default() };
        assert!(DwellDetector::new(bad).is_err());
    }

    /// Brute-force reference: scan backwards from each sample for the
    /// current window, recomputing its centroid from scratch.
    fn earliest_allowed_event(samples: &[GazeSample], cfg: &DwellConfig) -> Option<usize> {
        let mut start: Option<usize> = None;
        for (i, s) in samples.iter().enumerate() {
            if !s.valid {
                start = None;
                continue;
            }
            match start {
                Some(st) => {
                    let n = (i - st) as f64;
                    let c = Point2::new(
                        samples[st..i].iter().map(|q| q.p.x).sum::<f64>() / n,
                        samples[st..i].iter().map(|q| q.p.y).sum::<f64>() / n,
                    );
                    if c.distance(s.p) > cfg.dispersion_radius {
                        start = Some(i);
                    }
                }
                None => start = Some(i),
            }
            let st = start.unwrap();
            if s.t - samples[st].t + 1.0 / cfg.sample_rate + 1e-9 >= cfg.dwell_duration {
                return Some(i);
            }
        }
        None
    }

    proptest! {
        #[test]
        fn events_match_reference_and_respect_dwell(seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let cfg = DwellConfig::default();
            let mut samples = Vec::new();
            let mut tt = 0.0;
            let mut anchor = Point2::new(500.0, 400.0);
            for _ in 0..400 {
                tt += rng.random_range(0.005..0.04);
                if rng.random_bool(0.01) {
                    anchor = Point2::new(rng.random_range(0.0..1600.0), rng.random_range(0.0..970.0));
                }
                let valid = !rng.random_bool(0.003);
                let p = anchor + Point2::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0));
                samples.push(GazeSample { t: tt, p, valid });
            }
            let mut d = DwellDetector::new(cfg).unwrap();
            let mut first = None;
            for (i, s) in samples.iter().enumerate() {
                if let Some(e) = d.push_sample(*s).unwrap() {
                    prop_assert!(e.end_t - e.start_t + 1e-9 >= cfg.dwell_duration);
                    if first.is_none() { first = Some(i); }
                    else { prop_assert!(false, "second event without reset"); }
                }
            }
            prop_assert_eq!(first, earliest_allowed_event(&samples, &cfg));
        }
    }
}
