use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Point2;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("reading calibration file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("key `{key}`: cannot parse `{value}`")]
    InvalidValue { key: String, value: String },
    #[error("invalid calibration: {0}")]
    Invalid(String),
}

/// Axis-aligned rectangle `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn from_center(center: Point2, width: f64, height: f64) -> Self {
        let half = Point2::new(width / 2.0, height / 2.0);
        Rect { min: center - half, max: center + half }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn inflate(&self, margin: f64) -> Rect {
        let m = Point2::new(margin, margin);
        Rect { min: self.min - m, max: self.max + m }
    }

    pub fn center(&self) -> Point2 {
        self.min.midpoint(self.max)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// Smallest rectangle containing both corners, in either order.
    pub fn spanning(a: Point2, b: Point2) -> Rect {
        Rect {
            min: Point2::new(a.x.min(b.x), a.y.min(b.y)),
            max: Point2::new(a.x.max(b.x), a.y.max(b.y)),
        }
    }
}

/// Physical and pixel dimensions of the projected interface.
///
/// Pixel quantities refer to the interface image; `cc_xr`/`cc_yr` and the
/// workspace size are centimetres on the table. Markers are numbered
/// 0 top-left, 1 top-right, 2 bottom-right, 3 bottom-left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceCalibration {
    pub w_i: f64,
    pub h_i: f64,
    pub w_m: f64,
    pub h_m: f64,
    pub cc_x: f64,
    pub cc_y: f64,
    pub cc_xr: f64,
    pub cc_yr: f64,
    pub workspace_w: f64,
    pub workspace_h: f64,
    pub marker_centers_px: [Point2; 4],
    pub axis_flip_x: bool,
    pub axis_flip_y: bool,
}

const KEYS: [&str; 13] = [
    "w_i",
    "h_i",
    "w_m",
    "h_m",
    "cc_x",
    "cc_y",
    "cc_xr",
    "cc_yr",
    "workspace_w",
    "workspace_h",
    "marker_centers_px",
    "axis_flip_x",
    "axis_flip_y",
];

impl InterfaceCalibration {
    /// Lab layout: markers 70 × 38.5 cm apart, a 57 × 25.6 cm workspace, and
    /// a 1600 × 970 px interface at 0.05 cm/px on both axes.
    pub fn reference() -> Self {
        InterfaceCalibration {
            w_i: 1600.0,
            h_i: 970.0,
            w_m: 200.0,
            h_m: 200.0,
            cc_x: 1400.0,
            cc_y: 770.0,
            cc_xr: 70.0,
            cc_yr: 38.5,
            workspace_w: 57.0,
            workspace_h: 25.6,
            marker_centers_px: Self::centered_markers(1600.0, 970.0, 1400.0, 770.0),
            axis_flip_x: true,
            axis_flip_y: false,
        }
    }

    fn centered_markers(w_i: f64, h_i: f64, cc_x: f64, cc_y: f64) -> [Point2; 4] {
        let x0 = (w_i - cc_x) / 2.0;
        let y0 = (h_i - cc_y) / 2.0;
        [
            Point2::new(x0, y0),
            Point2::new(x0 + cc_x, y0),
            Point2::new(x0 + cc_x, y0 + cc_y),
            Point2::new(x0, y0 + cc_y),
        ]
    }

    pub fn alpha_x(&self) -> f64 {
        self.cc_xr / self.cc_x
    }

    pub fn alpha_y(&self) -> f64 {
        self.cc_yr / self.cc_y
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let dims = [
            ("w_i", self.w_i),
            ("h_i", self.h_i),
            ("w_m", self.w_m),
            ("h_m", self.h_m),
            ("cc_x", self.cc_x),
            ("cc_y", self.cc_y),
            ("cc_xr", self.cc_xr),
            ("cc_yr", self.cc_yr),
            ("workspace_w", self.workspace_w),
            ("workspace_h", self.workspace_h),
        ];
        for (name, v) in dims {
            if !(v.is_finite() && v > 0.0) {
                return Err(CalibrationError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.cc_x > self.w_i || self.cc_y > self.h_i {
            return Err(CalibrationError::Invalid("marker spacing exceeds interface size".into()));
        }
        let [m0, m1, m2, m3] = self.marker_centers_px;
        if self.marker_centers_px.iter().any(|p| !p.is_finite()) {
            return Err(CalibrationError::Invalid("marker centers must be finite".into()));
        }
        let tol = 1e-6 * self.cc_x.max(self.cc_y);
        let rect = (m0.y - m1.y).abs() <= tol
            && (m3.y - m2.y).abs() <= tol
            && (m0.x - m3.x).abs() <= tol
            && (m1.x - m2.x).abs() <= tol
            && ((m1.x - m0.x) - self.cc_x).abs() <= tol
            && ((m3.y - m0.y) - self.cc_y).abs() <= tol;
        if !rect {
            return Err(CalibrationError::Invalid(
                "marker centers must form an axis-aligned cc_x × cc_y rectangle (0 TL, 1 TR, 2 BR, 3 BL)".into(),
            ));
        }
        if self.workspace_w > self.cc_xr || self.workspace_h > self.cc_yr {
            return Err(CalibrationError::Invalid("workspace larger than the marker rectangle".into()));
        }
        Ok(())
    }

    /// Center of the marker rectangle, interface px.
    pub fn marker_rect_center_px(&self) -> Point2 {
        self.marker_centers_px[0].midpoint(self.marker_centers_px[2])
    }

    /// Corners of marker `id` in interface px: top-left, top-right,
    /// bottom-right, bottom-left.
    pub fn marker_corners_px(&self, id: usize) -> [Point2; 4] {
        let c = self.marker_centers_px[id];
        let (hw, hh) = (self.w_m / 2.0, self.h_m / 2.0);
        [
            Point2::new(c.x - hw, c.y - hh),
            Point2::new(c.x + hw, c.y - hh),
            Point2::new(c.x + hw, c.y + hh),
            Point2::new(c.x - hw, c.y + hh),
        ]
    }

    /// Interaction area between the markers, interface px.
    pub fn workspace_px(&self) -> Rect {
        Rect::from_center(
            self.marker_rect_center_px(),
            self.workspace_w / self.alpha_x(),
            self.workspace_h / self.alpha_y(),
        )
    }

    /// Interaction area on the table, surface cm.
    pub fn workspace_surface(&self) -> Rect {
        let px = self.workspace_px();
        Rect { min: self.interface_to_surface(px.min), max: self.interface_to_surface(px.max) }
    }

    /// Interface px → surface cm. The projector scale is α on each axis with
    /// the surface origin under interface pixel (0, 0).
    pub fn interface_to_surface(&self, p: Point2) -> Point2 {
        Point2::new(p.x * self.alpha_x(), p.y * self.alpha_y())
    }

    pub fn surface_to_interface(&self, p: Point2) -> Point2 {
        Point2::new(p.x / self.alpha_x(), p.y / self.alpha_y())
    }

    pub fn parse(text: &str) -> Result<Self, CalibrationError> {
        let mut values: BTreeMap<&'static str, (usize, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CalibrationError::Syntax { line: line_no });
            };
            let k = k.trim();
            let Some(key) = KEYS.iter().find(|known| **known == k) else {
                return Err(CalibrationError::UnknownKey { line: line_no, key: k.to_string() });
            };
            if values.insert(key, (line_no, v.trim().to_string())).is_some() {
                return Err(CalibrationError::DuplicateKey { line: line_no, key: k.to_string() });
            }
        }

        let num = |key: &'static str| -> Result<f64, CalibrationError> {
            let (_, v) = values.get(key).ok_or(CalibrationError::MissingKey(key))?;
            v.parse::<f64>()
                .map_err(|_| CalibrationError::InvalidValue { key: key.into(), value: v.clone() })
        };
        let flag = |key: &'static str, default: bool| -> Result<bool, CalibrationError> {
            match values.get(key) {
                None => Ok(default),
                Some((_, v)) => match v.as_str() {
                    "true" | "1" | "yes" => Ok(true),
                    "false" | "0" | "no" => Ok(false),
                    _ => Err(CalibrationError::InvalidValue { key: key.into(), value: v.clone() }),
                },
            }
        };

        let (w_i, h_i, cc_x, cc_y) = (num("w_i")?, num("h_i")?, num("cc_x")?, num("cc_y")?);
        let marker_centers_px = match values.get("marker_centers_px") {
            None => Self::centered_markers(w_i, h_i, cc_x, cc_y),
            Some((_, v)) => parse_centers(v).ok_or_else(|| CalibrationError::InvalidValue {
                key: "marker_centers_px".into(),
                value: v.clone(),
            })?,
        };
        let calib = InterfaceCalibration {
            w_i,
            h_i,
            w_m: num("w_m")?,
            h_m: num("h_m")?,
            cc_x,
            cc_y,
            cc_xr: num("cc_xr")?,
            cc_yr: num("cc_yr")?,
            workspace_w: num("workspace_w")?,
            workspace_h: num("workspace_h")?,
            marker_centers_px,
            axis_flip_x: flag("axis_flip_x", true)?,
            axis_flip_y: flag("axis_flip_y", false)?,
        };
        calib.validate()?;
        Ok(calib)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CalibrationError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_cfg_string(&self) -> String {
        let mut s = String::new();
        let nums = [
            ("w_i", self.w_i),
            ("h_i", self.h_i),
            ("w_m", self.w_m),
            ("h_m", self.h_m),
            ("cc_x", self.cc_x),
            ("cc_y", self.cc_y),
            ("cc_xr", self.cc_xr),
            ("cc_yr", self.cc_yr),
            ("workspace_w", self.workspace_w),
            ("workspace_h", self.workspace_h),
        ];
        for (k, v) in nums {
            let _ = writeln!(s, "{k} = {v}");
        }
        let centers: Vec<String> = self.marker_centers_px.iter().map(|p| format!("{},{}", p.x, p.y)).collect();
        let _ = writeln!(s, "marker_centers_px = {}", centers.join("; "));
        let _ = writeln!(s, "axis_flip_x = {}", self.axis_flip_x);
        let _ = writeln!(s, "axis_flip_y = {}", self.axis_flip_y);
        s
    }
}

impl Default for InterfaceCalibration {
    fn default() -> Self {
        Self::reference()
    }
}

/// `x0,y0; x1,y1; x2,y2; x3,y3`
fn parse_centers(v: &str) -> Option<[Point2; 4]> {
    let pts: Vec<Point2> = v
        .split(';')
        .map(|pair| {
            let (x, y) = pair.split_once(',')?;
            Some(Point2::new(x.trim().parse().ok()?, y.trim().parse().ok()?))
        })
        .collect::<Option<_>>()?;
    pts.try_into().ok()
}
