use nalgebra::{DMatrix, Matrix3};

use super::{
    COLLINEAR_REL_AREA, GeometryError, HomogeneousPoint, Mat3, Point2, SINGULAR_DET, mat3_apply,
    mat3_det, mat3_inverse, mat3_mul,
};

/// Planar projective map, stored with `h[2][2] == 1` whenever that entry is
/// non-zero (otherwise scaled to unit Frobenius norm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    h: Mat3,
}

impl Homography {
    pub const IDENTITY: Homography = Homography { h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };

    /// Canonicalizes the scale of `m` and checks invertibility.
    pub fn from_matrix(m: Mat3) -> Result<Self, GeometryError> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let scale = if m[2][2].abs() > f64::EPSILON * frobenius(&m) {
            m[2][2]
        } else {
            frobenius(&m)
        };
        if scale == 0.0 {
            return Err(GeometryError::Singular(0.0));
        }
        let mut h = m;
        for v in h.iter_mut().flatten() {
            *v /= scale;
        }
        let det = mat3_det(&h);
        if det.abs() <= SINGULAR_DET {
            return Err(GeometryError::Singular(det.abs()));
        }
        Ok(Self { h })
    }

    pub fn matrix(&self) -> Mat3 {
        self.h
    }

    pub fn apply_homogeneous(&self, p: HomogeneousPoint) -> HomogeneousPoint {
        mat3_apply(&self.h, p)
    }

    pub fn apply(&self, p: Point2) -> Result<Point2, GeometryError> {
        apply_homography(self, p)
    }

    /// `self ∘ first`: maps through `first`, then through `self`.
    pub fn compose(&self, first: &Homography) -> Result<Homography, GeometryError> {
        Homography::from_matrix(mat3_mul(&self.h, &first.h))
    }

    pub fn inverse(&self) -> Result<Homography, GeometryError> {
        Homography::from_matrix(mat3_inverse(&self.h)?)
    }

    /// Frobenius distance between the canonical forms.
    pub fn frobenius_distance(&self, other: &Homography) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = self.h[i][j] - other.h[i][j];
                acc += d * d;
            }
        }
        acc.sqrt()
    }
}

fn frobenius(m: &Mat3) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Maps `p` through `h` and divides by the resulting `w`.
pub fn apply_homography(h: &Homography, p: Point2) -> Result<Point2, GeometryError> {
    h.apply_homogeneous(p.to_homogeneous()).normalize()
}

/// Direct linear transform over all correspondences `(source, target)` with
/// `target ≈ H · source`.
///
/// Both point sets are conditioned first (centroid to the origin, RMS
/// distance √2). The stacked 2n×9 system is solved through its SVD; the
/// right singular vector of the smallest singular value is the solution.
/// With four pairs the system is padded with a zero row so the null space is
/// still available from a full V.
pub fn estimate_homography(pairs: &[(Point2, Point2)]) -> Result<Homography, GeometryError> {
    if pairs.len() < 4 {
        return Err(GeometryError::InsufficientPoints(pairs.len()));
    }
    if pairs.iter().any(|(s, t)| !s.is_finite() || !t.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let src: Vec<Point2> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<Point2> = pairs.iter().map(|p| p.1).collect();
    if !has_general_quad(&src) {
        return Err(GeometryError::DegenerateConfiguration("source points are collinear or coincident"));
    }
    if !has_general_quad(&dst) {
        return Err(GeometryError::DegenerateConfiguration("target points are collinear or coincident"));
    }

    let (src_n, t_src) = condition(&src);
    let (dst_n, t_dst) = condition(&dst);

    let n = pairs.len();
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (s, d)) in src_n.iter().zip(&dst_n).enumerate() {
        let (x, y) = (s.x, s.y);
        let (u, v) = (d.x, d.y);
        let r = 2 * k;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;

        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::DegenerateConfiguration("SVD did not converge"))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let (smallest, second, largest) = (order[0], order[1], order[order.len() - 1]);
    // rank < 8 means the correspondences do not pin down a unique map
    if sv[second] <= 1e-9 * sv[largest] {
        return Err(GeometryError::DegenerateConfiguration("correspondence system is rank deficient"));
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);

    // undo the conditioning: H = T_dst⁻¹ · Hn · T_src
    let t_dst_inv = t_dst.try_inverse().ok_or(GeometryError::Singular(0.0))?;
    let full = t_dst_inv * hn * t_src;
    let mut m = [[0.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = full[(i, j)];
        }
    }
    Homography::from_matrix(m)
}

/// Similarity that moves the centroid to the origin and scales the RMS
/// distance from it to √2.
fn condition(pts: &[Point2]) -> (Vec<Point2>, Matrix3<f64>) {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let ms = pts.iter().map(|p| (p.x - cx).powi(2) + (p.y - cy).powi(2)).sum::<f64>() / n;
    let s = if ms > 0.0 { (2.0 / ms).sqrt() } else { 1.0 };
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let out = pts.iter().map(|p| Point2::new(s * (p.x - cx), s * (p.y - cy))).collect();
    (out, t)
}

fn tri_area(a: Point2, b: Point2, c: Point2) -> f64 {
    ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs() / 2.0
}

/// True when some four of the points have no three collinear, with
/// collinearity judged relative to the bounding-box area.
///
/// Greedy: anchor, farthest point from it, point of largest triangle with
/// those two, then the point maximizing the smallest of the three new
/// triangles.
fn has_general_quad(pts: &[Point2]) -> bool {
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in pts {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let bbox = (max_x - min_x) * (max_y - min_y);
    if bbox <= 0.0 {
        return false;
    }
    let tol = COLLINEAR_REL_AREA * bbox;

    let a = pts[0];
    let Some(b) = pts.iter().copied().max_by(|p, q| a.distance(*p).total_cmp(&a.distance(*q))) else {
        return false;
    };
    let Some(c) = pts.iter().copied().max_by(|p, q| tri_area(a, b, *p).total_cmp(&tri_area(a, b, *q)))
    else {
        return false;
    };
    if tri_area(a, b, c) <= tol {
        return false;
    }
    let score = |p: Point2| tri_area(a, b, p).min(tri_area(a, c, p)).min(tri_area(b, c, p));
    pts.iter().any(|p| score(*p) > tol)
}
