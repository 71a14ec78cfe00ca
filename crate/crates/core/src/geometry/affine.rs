use super::{CalibrationError, InterfaceCalibration, Mat3, Point2, mat3_apply, mat3_inverse};

/// Interface px → robot cm: per-axis α scaling plus the offset
/// `−α (w_i + w_m/2)` / `−α (h_i + h_m/2)`.
///
/// An axis flip negates both the diagonal entry and the translation of that
/// axis, so a flipped axis reads `x_t = α_x (w_i + w_m/2 − x′)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineInterfaceToRobot {
    a: Mat3,
}

impl AffineInterfaceToRobot {
    pub fn matrix(&self) -> Mat3 {
        self.a
    }
}

pub fn build_affine(calib: &InterfaceCalibration) -> Result<AffineInterfaceToRobot, CalibrationError> {
    calib.validate()?;
    let sx = if calib.axis_flip_x { -1.0 } else { 1.0 };
    let sy = if calib.axis_flip_y { -1.0 } else { 1.0 };
    let ax = sx * calib.alpha_x();
    let ay = sy * calib.alpha_y();
    Ok(AffineInterfaceToRobot {
        a: [
            [ax, 0.0, -ax * (calib.w_i + calib.w_m / 2.0)],
            [0.0, ay, -ay * (calib.h_i + calib.h_m / 2.0)],
            [0.0, 0.0, 1.0],
        ],
    })
}

/// `p_t = A · [x′, y′, 1]ᵀ`, returned as `(x_t, y_t)` in cm.
pub fn interface_to_robot(a: &AffineInterfaceToRobot, g_prime: Point2) -> Point2 {
    let p = mat3_apply(&a.a, g_prime.to_homogeneous());
    Point2::new(p.x, p.y)
}

/// Inverse of [`interface_to_robot`].
pub fn robot_to_interface(a: &AffineInterfaceToRobot, p_t: Point2) -> Point2 {
    // A is built from positive α factors, so its inverse always exists
    let inv = mat3_inverse(&a.a).expect("affine map has non-zero diagonal");
    let p = mat3_apply(&inv, p_t.to_homogeneous());
    Point2::new(p.x, p.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example_calib() -> InterfaceCalibration {
        // α = 0.1 on both axes, 1000 × 600 px interface, 100 px markers
        let mut c = InterfaceCalibration::reference();
        c.w_i = 1000.0;
        c.h_i = 600.0;
        c.w_m = 100.0;
        c.h_m = 100.0;
        c.cc_x = 700.0;
        c.cc_y = 385.0;
        c.marker_centers_px = [
            Point2::new(150.0, 107.5),
            Point2::new(850.0, 107.5),
            Point2::new(850.0, 492.5),
            Point2::new(150.0, 492.5),
        ];
        c.axis_flip_x = false;
        c.axis_flip_y = false;
        c
    }

    #[test]
    fn matrix_matches_closed_form() {
        let a = build_affine(&example_calib()).unwrap().matrix();
        let want = [[0.1, 0.0, -105.0], [0.0, 0.1, -65.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - want[i][j]).abs() < 1e-12, "{a:?}");
            }
        }
    }

    #[test]
    fn translation_cancels_and_scales() {
        let a = build_affine(&example_calib()).unwrap();
        let o = interface_to_robot(&a, Point2::new(1050.0, 650.0));
        assert!(o.norm() < 1e-12, "{o:?}");
        let p = interface_to_robot(&a, Point2::new(1060.0, 660.0));
        assert!((p.x - 1.0).abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn flip_negates_diagonal_and_translation() {
        let mut c = example_calib();
        c.axis_flip_x = true;
        let a = build_affine(&c).unwrap().matrix();
        assert!((a[0][0] + 0.1).abs() < 1e-15);
        assert!((a[0][2] - 105.0).abs() < 1e-12);
        assert!((a[1][1] - 0.1).abs() < 1e-15);
        assert_eq!((a[0][1], a[1][0], a[2][0], a[2][1], a[2][2]), (0.0, 0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn invalid_calibration_is_rejected() {
        let mut c = example_calib();
        c.cc_xr = 0.0;
        assert!(build_affine(&c).is_err());
    }

    fn pt() -> impl Strategy<Value = Point2> {
        (-2000.0..2000.0f64, -2000.0..2000.0f64).prop_map(|(x, y)| Point2::new(x, y))
    }

    proptest! {
        #[test]
        fn roundtrip_and_midpoints(p in pt(), q in pt(), fx in any::<bool>(), fy in any::<bool>()) {
            let mut c = InterfaceCalibration::reference();
            c.axis_flip_x = fx;
            c.axis_flip_y = fy;
            let a = build_affine(&c).unwrap();
            let back = robot_to_interface(&a, interface_to_robot(&a, p));
            prop_assert!(back.distance(p) < 1e-9);
            let mid = interface_to_robot(&a, p.midpoint(q));
            let mid2 = interface_to_robot(&a, p).midpoint(interface_to_robot(&a, q));
            prop_assert!(mid.distance(mid2) < 1e-12);
        }
    }
}
