//! Coordinate frames and the planar maps between them.
//!
//! Three frames take part in the pipeline:
//!
//! * the eye-tracker camera frame (pixels of the head-mounted scene camera),
//! * the interface frame (pixels of the projected interface image),
//! * the robot frame (centimetres on the table, robot base convention).
//!
//! Camera → interface goes through a [`Homography`] estimated from the marker
//! corners; interface → robot is the fixed affine map built by
//! [`build_affine`]. Errors are measured on the surface in centimetres, where
//! surface coordinates are interface pixels scaled by the α factors.

mod affine;
mod calibration;
mod homography;

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use affine::{AffineInterfaceToRobot, build_affine, interface_to_robot, robot_to_interface};
pub use calibration::{CalibrationError, InterfaceCalibration, Rect};
pub use homography::{Homography, apply_homography, estimate_homography};

/// Determinant threshold below which a normalized 3×3 map is singular.
pub const SINGULAR_DET: f64 = 1e-12;
/// Homogeneous scale at or below which a mapped point is at infinity.
pub const INFINITY_W: f64 = 1e-12;
/// Relative triangle area (against the bounding box) treated as collinear.
pub const COLLINEAR_REL_AREA: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("at least 4 correspondences are required, got {0}")]
    InsufficientPoints(usize),
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("point maps to infinity (|w| = {0:e})")]
    PointAtInfinity(f64),
    #[error("matrix is singular (|det| = {0:e})")]
    Singular(f64),
    #[error("non-finite coordinate")]
    NonFinite,
}

/// A planar point. Units depend on the frame it lives in.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Chebyshev (∞) norm.
    pub fn norm_inf(&self) -> f64 {
        self.x.abs().max(self.y.abs())
    }

    pub fn distance(&self, other: Point2) -> f64 {
        (*self - other).norm()
    }

    pub fn midpoint(&self, other: Point2) -> Point2 {
        Point2::new((self.x + other.x) / 2.0, (self.y + other.y) / 2.0)
    }

    pub fn to_homogeneous(self) -> HomogeneousPoint {
        HomogeneousPoint { x: self.x, y: self.y, w: 1.0 }
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2::new(x, y)
    }
}

/// Homogeneous planar point `[x, y, w]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousPoint {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

impl HomogeneousPoint {
    pub fn new(x: f64, y: f64, w: f64) -> Self {
        Self { x, y, w }
    }

    /// Divides through by `w`.
    pub fn normalize(&self) -> Result<Point2, GeometryError> {
        if self.w.abs() <= INFINITY_W {
            return Err(GeometryError::PointAtInfinity(self.w));
        }
        let p = Point2::new(self.x / self.w, self.y / self.w);
        if p.is_finite() { Ok(p) } else { Err(GeometryError::NonFinite) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// Eye-tracker scene camera, pixels.
    Camera,
    /// Projected interface image, pixels.
    Interface,
    /// Robot base frame, centimetres.
    Robot,
}

impl Frame {
    /// Frames reachable in one hop. Camera → interface uses a homography,
    /// interface → robot the calibration affine map.
    pub fn next(self) -> Option<Frame> {
        match self {
            Frame::Camera => Some(Frame::Interface),
            Frame::Interface => Some(Frame::Robot),
            Frame::Robot => None,
        }
    }
}

/// Euclidean distance between the intended point and the realized one, in
/// whatever unit both are expressed in (centimetres on the surface).
pub fn fixation_error(target: Point2, realized: Point2) -> f64 {
    let dx = target.x - realized.x;
    let dy = target.y - realized.y;
    (dx * dx + dy * dy).sqrt()
}

pub(crate) type Mat3 = [[f64; 3]; 3];

pub(crate) fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub(crate) fn mat3_apply(m: &Mat3, p: HomogeneousPoint) -> HomogeneousPoint {
    HomogeneousPoint {
        x: m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.w,
        y: m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.w,
        w: m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.w,
    }
}

pub(crate) fn mat3_det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Explicit adjugate inverse.
pub(crate) fn mat3_inverse(m: &Mat3) -> Result<Mat3, GeometryError> {
    let det = mat3_det(m);
    if det.abs() <= SINGULAR_DET || !det.is_finite() {
        return Err(GeometryError::Singular(det.abs()));
    }
    let inv_det = 1.0 / det;
    Ok([
        [
            (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn error_examples() {
        assert_eq!(fixation_error(Point2::new(5.0, 5.0), Point2::new(5.0, 5.0)), 0.0);
        assert_eq!(fixation_error(Point2::new(0.0, 0.0), Point2::new(3.0, 4.0)), 5.0);
        // 1.2² + 1.6² = 4
        let e = fixation_error(Point2::new(1.0, 2.0), Point2::new(2.2, 0.4));
        assert!((e - 2.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn normalize_rejects_infinity() {
        let h = HomogeneousPoint::new(1.0, 2.0, 1e-13);
        assert!(matches!(h.normalize(), Err(GeometryError::PointAtInfinity(_))));
        assert_eq!(HomogeneousPoint::new(4.0, 6.0, 2.0).normalize().unwrap(), Point2::new(2.0, 3.0));
    }

    #[test]
    fn frame_edges() {
        assert_eq!(Frame::Camera.next(), Some(Frame::Interface));
        assert_eq!(Frame::Interface.next(), Some(Frame::Robot));
        assert_eq!(Frame::Robot.next(), None);
    }

    #[test]
    fn inverse_of_known_matrix() {
        let m = [[2.0, 0.0, 1.0], [0.0, 4.0, -2.0], [0.0, 0.0, 1.0]];
        let inv = mat3_inverse(&m).unwrap();
        let id = mat3_mul(&m, &inv);
        for (i, row) in id.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-15);
            }
        }
        assert!(mat3_inverse(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]).is_err());
    }

    fn pt() -> impl Strategy<Value = Point2> {
        (-1e3..1e3f64, -1e3..1e3f64).prop_map(|(x, y)| Point2::new(x, y))
    }

    proptest! {
        #[test]
        fn error_is_a_metric(a in pt(), b in pt(), c in pt()) {
            let ab = fixation_error(a, b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, fixation_error(b, a));
            prop_assert_eq!(fixation_error(a, a), 0.0);
            if a != b { prop_assert!(ab > 0.0); }
            prop_assert!(ab <= fixation_error(a, c) + fixation_error(c, b) + 1e-9);
        }
    }
}
