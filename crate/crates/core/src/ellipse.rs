//! Ellipse model, direct least-squares fitting and the candidate goodness
//! score (edge support × inner/outer contrast).

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::edges::EdgeMap;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Relative axis difference below which an ellipse is treated as a circle
/// and reported with `theta = 0`.
const CIRCLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    /// Semi-major axis.
    pub a: f64,
    /// Semi-minor axis.
    pub b: f64,
    /// Major-axis direction in radians, `[0, π)`.
    pub theta: f64,
}

impl Ellipse {
    /// Builds an ellipse, swapping axes if needed so that `a >= b` and
    /// folding `theta` into `[0, π)`.
    pub fn new(cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> Self {
        let (a, b, theta) = if b > a { (b, a, theta + PI / 2.0) } else { (a, b, theta) };
        let theta = if (a - b) <= CIRCLE_TOL * a {
            0.0
        } else {
            let t = theta.rem_euclid(PI);
            if t >= PI { 0.0 } else { t }
        };
        Self { cx, cy, a, b, theta }
    }

    pub fn circle(cx: f64, cy: f64, r: f64) -> Self {
        Self::new(cx, cy, r, r, 0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }

    /// Point at parametric angle `t` on the ellipse scaled about its centre.
    #[inline]
    pub fn point_at(&self, t: f64, scale: f64) -> (f64, f64) {
        let (st, ct) = t.sin_cos();
        let (sth, cth) = self.theta.sin_cos();
        let (u, v) = (scale * self.a * ct, scale * self.b * st);
        (self.cx + u * cth - v * sth, self.cy + u * sth + v * cth)
    }

    /// Algebraic test: `<= 1` inside or on the boundary.
    pub fn normalized_radius2(&self, x: f64, y: f64) -> f64 {
        let (sth, cth) = self.theta.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * cth + dy * sth;
        let v = -dx * sth + dy * cth;
        (u / self.a).powi(2) + (v / self.b).powi(2)
    }

    pub fn is_valid(&self) -> bool {
        self.a.is_finite()
            && self.b.is_finite()
            && self.cx.is_finite()
            && self.cy.is_finite()
            && self.b > 0.0
            && self.a >= self.b
    }
}

pub fn ellipse_area(e: &Ellipse) -> f64 {
    PI * e.a * e.b
}

pub fn axis_ratio(e: &Ellipse) -> f64 {
    e.a / e.b
}

/// Direct least-squares ellipse fit with the `4AC − B² = 1` constraint,
/// solved in the numerically stable reduced 3×3 form on centred and scaled
/// coordinates. The result is always an ellipse.
pub fn fit_ellipse(points: &[(f64, f64)]) -> Result<Ellipse> {
    let n = points.len();
    if n < 5 {
        return Err(Error::InsufficientPoints(n));
    }
    let inv_n = 1.0 / n as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x * inv_n, sy + y * inv_n));
    let spread = points
        .iter()
        .map(|&(x, y)| (x - mx).powi(2) + (y - my).powi(2))
        .sum::<f64>()
        * inv_n;
    if !(spread.is_finite() && spread > 0.0) {
        return Err(Error::Degenerate("points coincide"));
    }
    let scale = (spread / 2.0).sqrt();

    // scatter blocks: quadratic terms vs linear terms
    let mut s1 = Matrix3::<f64>::zeros();
    let mut s2 = Matrix3::<f64>::zeros();
    let mut s3 = Matrix3::<f64>::zeros();
    for &(x, y) in points {
        let (x, y) = ((x - mx) / scale, (y - my) / scale);
        let q = Vector3::new(x * x, x * y, y * y);
        let l = Vector3::new(x, y, 1.0);
        s1 += q * q.transpose();
        s2 += q * l.transpose();
        s3 += l * l.transpose();
    }
    let s3_inv = s3
        .try_inverse()
        .ok_or(Error::Degenerate("collinear points"))?;
    // eliminates the linear terms: a2 = t * a1
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // premultiply by the inverse of the constraint block [[0,0,2],[0,-1,0],[2,0,0]]
    let reduced = Matrix3::new(
        m[(2, 0)] / 2.0,
        m[(2, 1)] / 2.0,
        m[(2, 2)] / 2.0,
        -m[(1, 0)],
        -m[(1, 1)],
        -m[(1, 2)],
        m[(0, 0)] / 2.0,
        m[(0, 1)] / 2.0,
        m[(0, 2)] / 2.0,
    );
    if !reduced.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("non-finite scatter"));
    }

    let norm = reduced.abs().max().max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for ev in reduced.complex_eigenvalues().iter() {
        if ev.im.abs() > 1e-8 * norm {
            continue;
        }
        let Some(v) = null_vector(&(reduced - Matrix3::identity() * ev.re)) else {
            continue;
        };
        if 4.0 * v[0] * v[2] - v[1] * v[1] <= 0.0 {
            continue;
        }
        if best.as_ref().is_none_or(|(lam, _)| ev.re.abs() < lam.abs()) {
            best = Some((ev.re, v));
        }
    }
    let (_, a1) = best.ok_or(Error::Degenerate("no elliptic solution"))?;
    let a2 = t * a1;
    let e = conic_to_ellipse([a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]])?;
    let out = Ellipse::new(mx + scale * e.cx, my + scale * e.cy, scale * e.a, scale * e.b, e.theta);
    if !out.is_valid() {
        return Err(Error::Degenerate("invalid ellipse parameters"));
    }
    Ok(out)
}

/// Unit vector spanning the (numerical) null space of a rank-2 matrix: the
/// largest cross product of two of its rows.
fn null_vector(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let rows = [m.row(0).transpose(), m.row(1).transpose(), m.row(2).transpose()];
    let cands = [rows[0].cross(&rows[1]), rows[0].cross(&rows[2]), rows[1].cross(&rows[2])];
    let v = cands
        .into_iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))?;
    let n = v.norm();
    (n > 0.0 && n.is_finite()).then(|| v / n)
}

/// Geometric parameters of `A x² + B xy + C y² + D x + E y + F = 0`.
pub fn conic_to_ellipse(coef: [f64; 6]) -> Result<Ellipse> {
    let [mut a, mut b, mut c, mut d, mut e, mut f] = coef;
    if a + c < 0.0 {
        (a, b, c, d, e, f) = (-a, -b, -c, -d, -e, -f);
    }
    let det = 4.0 * a * c - b * b;
    if det <= 0.0 {
        return Err(Error::Degenerate("conic is not an ellipse"));
    }
    let x0 = (b * e - 2.0 * c * d) / det;
    let y0 = (b * d - 2.0 * a * e) / det;
    let f0 = a * x0 * x0 + b * x0 * y0 + c * y0 * y0 + d * x0 + e * y0 + f;
    let half_sum = 0.5 * (a + c);
    let r = (0.25 * (a - c).powi(2) + 0.25 * b * b).sqrt();
    let (lam_max, lam_min) = (half_sum + r, half_sum - r);
    if !(lam_min > 0.0 && f0 < 0.0) {
        return Err(Error::Degenerate("imaginary ellipse"));
    }
    let major = (-f0 / lam_min).sqrt();
    let minor = (-f0 / lam_max).sqrt();
    // direction of the largest eigenvalue, rotated a quarter turn to the major axis
    let phi = 0.5 * b.atan2(a - c);
    Ok(Ellipse::new(x0, y0, major, minor, phi + PI / 2.0))
}

/// Lower-middle median; `None` for an empty slice.
pub fn lower_median(values: &mut [u8]) -> Option<u8> {
    if values.is_empty() {
        return None;
    }
    let k = (values.len() - 1) / 2;
    let (_, m, _) = values.select_nth_unstable(k);
    Some(*m)
}

/// Rounded pixel position of a sample, `None` outside the raster.
#[inline]
fn sample_pixel(x: f64, y: f64, width: usize, height: usize) -> Option<(usize, usize)> {
    let (xi, yi) = ((x + 0.5).floor(), (y + 0.5).floor());
    if xi < 0.0 || yi < 0.0 || xi >= width as f64 || yi >= height as f64 {
        None
    } else {
        Some((xi as usize, yi as usize))
    }
}

/// Medians of `n` samples at uniform parametric angles on the ellipse scaled
/// by `inner_scale` and by `outer_scale`. Samples outside the image are
/// discarded.
pub fn sample_ring_medians(
    img: &GrayImage,
    e: &Ellipse,
    inner_scale: f64,
    outer_scale: f64,
    n: usize,
) -> Result<(u8, u8)> {
    if !(0.0 < inner_scale && inner_scale < 1.0 && outer_scale > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "ring scales must satisfy 0 < inner < 1 < outer, got {inner_scale}/{outer_scale}"
        )));
    }
    if n < 8 {
        return Err(Error::InvalidParameter(format!("need at least 8 ring samples, got {n}")));
    }
    let ring = |scale: f64| -> Vec<u8> {
        (0..n)
            .filter_map(|k| {
                let (x, y) = e.point_at(2.0 * PI * k as f64 / n as f64, scale);
                sample_pixel(x, y, img.width(), img.height()).map(|(px, py)| img.get(px, py))
            })
            .collect()
    };
    let mut inner = ring(inner_scale);
    let mut outer = ring(outer_scale);
    match (lower_median(&mut inner), lower_median(&mut outer)) {
        (Some(i), Some(o)) => Ok((i, o)),
        _ => Err(Error::SamplesOutOfBounds),
    }
}

/// Sampling parameters for [`goodness`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodnessParams {
    pub samples: usize,
    pub support_dist: usize,
    pub inner_scale: f64,
    pub outer_scale: f64,
}

impl Default for GoodnessParams {
    fn default() -> Self {
        Self {
            samples: 64,
            support_dist: 2,
            inner_scale: 0.7,
            outer_scale: 1.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goodness {
    /// `edge_support * contrast`.
    pub value: f64,
    pub edge_support: f64,
    pub contrast: f64,
}

impl Goodness {
    pub const ZERO: Goodness = Goodness {
        value: 0.0,
        edge_support: 0.0,
        contrast: 0.0,
    };

    pub fn from_parts(edge_support: f64, contrast: f64) -> Self {
        let edge_support = edge_support.clamp(0.0, 1.0);
        let contrast = contrast.clamp(0.0, 1.0);
        Self {
            value: edge_support * contrast,
            edge_support,
            contrast,
        }
    }
}

/// Fraction of `n` boundary samples with an edge pixel within Chebyshev
/// distance `support_dist`.
pub fn edge_support(edges: &EdgeMap, e: &Ellipse, n: usize, support_dist: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let r = support_dist as i64;
    let hits = (0..n)
        .filter(|&k| {
            let (x, y) = e.point_at(2.0 * PI * k as f64 / n as f64, 1.0);
            if !(x.is_finite() && y.is_finite()) {
                return false;
            }
            let (xi, yi) = ((x + 0.5).floor() as i64, (y + 0.5).floor() as i64);
            (-r..=r).any(|dy| (-r..=r).any(|dx| edges.get_checked(xi + dx, yi + dy)))
        })
        .count();
    hits as f64 / n as f64
}

/// Confidence score of a pupil hypothesis. Also returns the inner median.
pub fn goodness_with_inner(
    img: &GrayImage,
    edges: &EdgeMap,
    e: &Ellipse,
    p: &GoodnessParams,
) -> Result<(Goodness, u8)> {
    if p.samples < 16 {
        return Err(Error::InvalidParameter(format!(
            "goodness needs at least 16 samples, got {}",
            p.samples
        )));
    }
    let (inner, outer) = sample_ring_medians(img, e, p.inner_scale, p.outer_scale, p.samples)?;
    let contrast = (outer as f64 - inner as f64) / 255.0;
    let support = edge_support(edges, e, p.samples, p.support_dist);
    Ok((Goodness::from_parts(support, contrast), inner))
}

pub fn goodness(img: &GrayImage, edges: &EdgeMap, e: &Ellipse, p: &GoodnessParams) -> Result<Goodness> {
    goodness_with_inner(img, edges, e, p).map(|(g, _)| g)
}
