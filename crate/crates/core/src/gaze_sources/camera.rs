use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::GazeSourceError;
use crate::geometry::{Homography, InterfaceCalibration, Point2, estimate_homography};
use crate::seed::rng_from_seed;

/// Pinhole camera looking down at the table from the user's side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    /// From the optical center to the looked-at surface point, cm.
    pub distance: f64,
    /// Angle between the optical axis and the table normal, degrees.
    pub tilt_deg: f64,
    /// Rotation about the optical axis, degrees.
    pub roll_deg: f64,
    /// Sideways displacement of the head, cm.
    pub lateral: f64,
    pub focal_px: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for CameraPose {
    fn default() -> Self {
        CameraPose { distance: 95.0, tilt_deg: 25.0, roll_deg: 3.0, lateral: 4.0, focal_px: 1100.0, width: 1920.0, height: 1080.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCamera {
    /// Surface cm → camera px.
    pub h_true: Homography,
    pub detected_markers: Vec<usize>,
    pub corner_noise_px: f64,
    pub width: f64,
    pub height: f64,
}

impl SyntheticCamera {
    /// Camera aimed at the center of the marker rectangle.
    pub fn looking_at(calib: &InterfaceCalibration, pose: &CameraPose) -> Result<Self, GazeSourceError> {
        let c = calib.interface_to_surface(calib.marker_rect_center_px());
        let look = Vector3::new(c.x, c.y, 0.0);
        // surface x right, y toward the user, z into the table
        let (st, ct) = pose.tilt_deg.to_radians().sin_cos();
        let eye = look + Vector3::new(pose.lateral, pose.distance * st, -pose.distance * ct);
        let f = (look - eye).normalize();
        let ex = Vector3::x();
        let r0 = (ex - f * ex.dot(&f)).normalize();
        let d0 = f.cross(&r0);
        let (sr, cr) = pose.roll_deg.to_radians().sin_cos();
        let r = r0 * cr + d0 * sr;
        let d = d0 * cr - r0 * sr;
        let rot = Matrix3::from_rows(&[r.transpose(), d.transpose(), f.transpose()]);
        let t = -(rot * eye);
        let k = Matrix3::new(
            pose.focal_px,
            0.0,
            pose.width / 2.0,
            0.0,
            pose.focal_px,
            pose.height / 2.0,
            0.0,
            0.0,
            1.0,
        );
        let m = k * Matrix3::from_columns(&[rot.column(0).into_owned(), rot.column(1).into_owned(), t]);
        let h = Homography::from_matrix(std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])))?;
        Ok(SyntheticCamera { h_true: h, detected_markers: vec![0, 1, 2, 3], corner_noise_px: 0.0, width: pose.width, height: pose.height })
    }

    /// `px = scale · cm`; a frame large enough for the reference layout.
    pub fn identity_scaled(scale: f64) -> Result<Self, GazeSourceError> {
        let h = Homography::from_matrix([[scale, 0.0, 0.0], [0.0, scale, 0.0], [0.0, 0.0, 1.0]])?;
        Ok(SyntheticCamera {
            h_true: h,
            detected_markers: vec![0, 1, 2, 3],
            corner_noise_px: 0.0,
            width: 100.0 * scale,
            height: 60.0 * scale,
        })
    }

    pub fn with_markers(mut self, ids: &[usize]) -> Self {
        self.detected_markers = ids.to_vec();
        self
    }

    pub fn with_corner_noise(mut self, sigma_px: f64) -> Self {
        self.corner_noise_px = sigma_px;
        self
    }

    fn in_frame(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }
}

/// Surface cm → camera px.
pub fn project_to_camera(cam: &SyntheticCamera, surface_point: Point2) -> Result<Point2, GazeSourceError> {
    let p = cam.h_true.apply(surface_point)?;
    if cam.in_frame(p) { Ok(p) } else { Err(GazeSourceError::OutOfFrame(p)) }
}

/// Detected marker corners in camera px, with Gaussian corner noise drawn
/// from `noise_seed`.
pub fn marker_corners(
    cam: &SyntheticCamera,
    calib: &InterfaceCalibration,
    noise_seed: u64,
) -> Result<Vec<(usize, [Point2; 4])>, GazeSourceError> {
    if cam.detected_markers.is_empty() {
        return Err(GazeSourceError::NoMarkers);
    }
    let mut rng = rng_from_seed(noise_seed);
    let mut out = Vec::with_capacity(cam.detected_markers.len());
    for &id in &cam.detected_markers {
        let px = calib.marker_corners_px(id);
        let mut corners = [Point2::ORIGIN; 4];
        for (c, p) in corners.iter_mut().zip(px) {
            let exact = project_to_camera(cam, calib.interface_to_surface(p))?;
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            *c = exact + Point2::new(nx, ny) * cam.corner_noise_px;
        }
        out.push((id, corners));
    }
    Ok(out)
}

/// `(camera px, interface px)` pairs for every detected corner.
pub fn marker_correspondences(
    detections: &[(usize, [Point2; 4])],
    calib: &InterfaceCalibration,
) -> Vec<(Point2, Point2)> {
    detections
        .iter()
        .flat_map(|(id, cam)| cam.iter().copied().zip(calib.marker_corners_px(*id)))
        .collect()
}

/// Camera px → interface px from the markers the camera sees.
pub fn estimate_camera_homography(
    cam: &SyntheticCamera,
    calib: &InterfaceCalibration,
    noise_seed: u64,
) -> Result<Homography, GazeSourceError> {
    let det = marker_corners(cam, calib, noise_seed)?;
    Ok(estimate_homography(&marker_correspondences(&det, calib))?)
}
