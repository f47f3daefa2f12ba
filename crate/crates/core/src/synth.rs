//! Synthetic dark-pupil eye images with exact ground truth.
//!
//! A scene is a bright sclera, a mid-gray iris disk and a dark pupil ellipse,
//! optionally with saturated glints, eyelids closing over the pupil,
//! Gaussian blur and additive Gaussian noise. Coordinates are pixel centres:
//! pixel `(x, y)` covers `[x - ½, x + ½] × [y - ½, y + ½]`.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ellipse::Ellipse;
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::kv;

/// Sub-samples per pixel along each axis for anti-aliasing.
const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Glint {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub intensity: f64,
}

impl Glint {
    pub fn new(cx: f64, cy: f64, radius: f64) -> Self {
        Self {
            cx,
            cy,
            radius,
            intensity: 255.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Ground-truth pupil in image coordinates.
    pub pupil: Ellipse,
    /// Iris centre offset from the pupil centre.
    pub iris_offset: (f64, f64),
    pub iris_radius: f64,
    pub pupil_intensity: f64,
    pub iris_intensity: f64,
    pub sclera_intensity: f64,
    pub eyelid_intensity: f64,
    /// Added to every layer before blur and noise.
    pub illumination: f64,
    pub glints: Vec<Glint>,
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    /// Blink closure: the upper lid hides this fraction of the pupil's
    /// vertical extent while the lower lid rises from the iris bottom, the
    /// two meeting below the pupil at 1.
    pub occlusion: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            pupil: Ellipse::new(320.0, 240.0, 30.0, 26.0, 0.3),
            iris_offset: (0.0, 0.0),
            iris_radius: 115.0,
            pupil_intensity: 25.0,
            iris_intensity: 90.0,
            sclera_intensity: 190.0,
            eyelid_intensity: 150.0,
            illumination: 0.0,
            glints: Vec::new(),
            blur_sigma: 0.0,
            noise_sigma: 0.0,
            occlusion: 0.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn iris_center(&self) -> (f64, f64) {
        (self.pupil.cx + self.iris_offset.0, self.pupil.cy + self.iris_offset.1)
    }

    pub fn truth(&self) -> (f64, f64) {
        (self.pupil.cx, self.pupil.cy)
    }

    /// Half extents of the pupil's axis-aligned bounding box.
    fn pupil_extent(&self) -> (f64, f64) {
        let e = &self.pupil;
        let (s, c) = e.theta.sin_cos();
        (
            ((e.a * c).powi(2) + (e.b * s).powi(2)).sqrt(),
            ((e.a * s).powi(2) + (e.b * c).powi(2)).sqrt(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if self.width < 2 || self.height < 2 {
            return bad(format!("image must be at least 2x2, got {}x{}", self.width, self.height));
        }
        if !self.pupil.is_valid() {
            return bad("pupil ellipse is invalid".into());
        }
        if !(self.pupil_intensity < self.iris_intensity && self.iris_intensity < self.sclera_intensity) {
            return bad("intensities must satisfy pupil < iris < sclera".into());
        }
        let (icx, icy) = self.iris_center();
        let r = self.iris_radius;
        if r.is_nan() || r <= 0.0
            || icx - r < -0.5
            || icy - r < -0.5
            || icx + r > self.width as f64 - 0.5
            || icy + r > self.height as f64 - 0.5
        {
            return bad(format!("iris (centre {icx:.2},{icy:.2}, radius {r}) leaves the image"));
        }
        let outside = (0..360).any(|k| {
            let (x, y) = self.pupil.point_at(2.0 * PI * k as f64 / 360.0, 1.0);
            (x - icx).powi(2) + (y - icy).powi(2) > r * r
        });
        if outside {
            return bad("pupil is not inside the iris".into());
        }
        if !(0.0..=1.0).contains(&self.occlusion) {
            return bad(format!("occlusion must be in [0, 1], got {}", self.occlusion));
        }
        if self.blur_sigma < 0.0 || self.noise_sigma < 0.0 {
            return bad("blur and noise sigmas must be non-negative".into());
        }
        if self.glints.iter().any(|g| g.radius.is_nan() || g.radius <= 0.0) {
            return bad("glint radius must be positive".into());
        }
        Ok(())
    }

    /// Rows above and below which the lids cover the image, if any.
    fn eyelid_rows(&self) -> Option<(f64, f64)> {
        if self.occlusion <= 0.0 {
            return None;
        }
        let (_, ey) = self.pupil_extent();
        let f = self.occlusion;
        let pupil_bottom = self.pupil.cy + ey;
        let iris_bottom = self.iris_center().1 + self.iris_radius;
        let upper = self.pupil.cy - ey + f * 2.0 * ey;
        let lower = iris_bottom - f * (iris_bottom - pupil_bottom);
        Some((upper, lower))
    }

    fn shade(&self, x: f64, y: f64, lid: Option<(f64, f64)>, iris: (f64, f64)) -> f64 {
        if lid.is_some_and(|(upper, lower)| y <= upper || y >= lower) {
            return self.eyelid_intensity;
        }
        let mut v = self.sclera_intensity;
        if (x - iris.0).powi(2) + (y - iris.1).powi(2) <= self.iris_radius.powi(2) {
            v = self.iris_intensity;
        }
        if self.pupil.normalized_radius2(x, y) <= 1.0 {
            v = self.pupil_intensity;
        }
        for g in &self.glints {
            if (x - g.cx).powi(2) + (y - g.cy).powi(2) <= g.radius * g.radius {
                v = g.intensity;
            }
        }
        v
    }
}

fn gaussian_blur_f64(buf: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let cl = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * buf[y * w + cl(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[cl(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Renders a scene and returns it with the exact pupil centre.
pub fn render(spec: &SceneSpec) -> Result<(GrayImage, (f64, f64))> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let lid = spec.eyelid_rows();
    let iris = spec.iris_center();
    let n = SUPERSAMPLE;
    let step = 1.0 / n as f64;

    let mut buf = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64, y as f64);
            let corners = [
                spec.shade(fx - 0.5, fy - 0.5, lid, iris),
                spec.shade(fx + 0.5, fy - 0.5, lid, iris),
                spec.shade(fx - 0.5, fy + 0.5, lid, iris),
                spec.shade(fx + 0.5, fy + 0.5, lid, iris),
            ];
            let centre = spec.shade(fx, fy, lid, iris);
            let v = if corners.iter().all(|&c| c == centre) {
                centre
            } else {
                let mut acc = 0.0;
                for j in 0..n {
                    for i in 0..n {
                        let sx = fx - 0.5 + (i as f64 + 0.5) * step;
                        let sy = fy - 0.5 + (j as f64 + 0.5) * step;
                        acc += spec.shade(sx, sy, lid, iris);
                    }
                }
                acc / (n * n) as f64
            };
            buf[y * w + x] = v + spec.illumination;
        }
    }
    if spec.blur_sigma > 0.0 {
        buf = gaussian_blur_f64(&buf, w, h, spec.blur_sigma);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = (spec.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma validated"));
    let data = buf
        .iter()
        .map(|&v| {
            let v = match &noise {
                Some(d) => v + d.sample(&mut rng),
                None => v,
            };
            (v + 0.5).floor().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok((GrayImage::new(w, h, data)?, spec.truth()))
}

/// Frame `k` of a drifting sequence: pupil, iris and glints translated by
/// `k * drift`, noise reseeded with `seed + k`.
pub fn frame_spec(base: &SceneSpec, k: usize, drift: (f64, f64)) -> SceneSpec {
    let (dx, dy) = (drift.0 * k as f64, drift.1 * k as f64);
    let mut s = base.clone();
    s.pupil.cx += dx;
    s.pupil.cy += dy;
    for g in &mut s.glints {
        g.cx += dx;
        g.cy += dy;
    }
    s.seed = base.seed.wrapping_add(k as u64);
    s
}

pub fn render_sequence(base: &SceneSpec, n: usize, drift: (f64, f64)) -> Result<Vec<(GrayImage, (f64, f64))>> {
    for k in [0, n.saturating_sub(1)] {
        frame_spec(base, k, drift).validate().map_err(|e| {
            Error::InvalidScene(format!("drift ({}, {}) over {n} frames: {e}", drift.0, drift.1))
        })?;
    }
    (0..n).map(|k| render(&frame_spec(base, k, drift))).collect()
}

/// Scene families used by the evaluation suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Sharp images, noise σ ≤ 5, at most one glint anywhere on the iris.
    Clean,
    /// Blur σ ∈ [2, 4] with two glints sitting on the pupil boundary.
    Blur,
}

/// Deterministic random scene `index` of a suite.
pub fn suite_scene(suite: Suite, index: u64, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let a = rng.random_range(20.0..38.0);
    let b = a * rng.random_range(0.65..1.0);
    let theta = rng.random_range(0.0..PI);
    let iris_radius = rng.random_range(105.0..130.0);
    let off = (rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
    let margin = iris_radius + 8.0;
    let cx = rng.random_range(margin..640.0 - margin);
    let cy = rng.random_range(margin..480.0 - margin);
    let pupil = Ellipse::new(cx, cy, a, b, theta);

    let mut spec = SceneSpec {
        pupil,
        iris_offset: off,
        iris_radius,
        illumination: rng.random_range(-15.0..15.0),
        seed: rng.random(),
        ..SceneSpec::default()
    };
    match suite {
        Suite::Clean => {
            spec.noise_sigma = rng.random_range(0.0..5.0);
            if rng.random_bool(0.5) {
                let t = rng.random_range(0.0..2.0 * PI);
                let r = rng.random_range(0.0..0.8 * iris_radius);
                spec.glints.push(Glint::new(
                    cx + off.0 + r * t.cos(),
                    cy + off.1 + r * t.sin(),
                    rng.random_range(3.0..7.0),
                ));
            }
        }
        Suite::Blur => {
            spec.blur_sigma = rng.random_range(2.0..4.0);
            spec.noise_sigma = rng.random_range(0.0..3.0);
            let t0 = rng.random_range(0.0..2.0 * PI);
            for k in 0..2 {
                let t = t0 + k as f64 * rng.random_range(0.6..2.5);
                let (x, y) = pupil.point_at(t, rng.random_range(0.85..1.1));
                spec.glints.push(Glint::new(x, y, rng.random_range(4.0..8.0)));
            }
        }
    }
    spec
}

/// Scene description file: flat `key = value` pairs. `glint = x, y, r` may
/// repeat. `drift_x`/`drift_y` are returned separately.
pub fn load_scene(path: impl AsRef<Path>) -> Result<(SceneSpec, (f64, f64))> {
    let (path, entries) = kv::read(path)?;
    let mut s = SceneSpec::default();
    let mut drift = (0.0, 0.0);
    let (mut cx, mut cy, mut a, mut b, mut theta) = (s.pupil.cx, s.pupil.cy, s.pupil.a, s.pupil.b, s.pupil.theta);
    for e in &entries {
        match e.key.as_str() {
            "width" => s.width = e.parse(&path)?,
            "height" => s.height = e.parse(&path)?,
            "pupil_cx" => cx = e.parse(&path)?,
            "pupil_cy" => cy = e.parse(&path)?,
            "pupil_a" => a = e.parse(&path)?,
            "pupil_b" => b = e.parse(&path)?,
            "pupil_theta" => theta = e.parse(&path)?,
            "iris_dx" => s.iris_offset.0 = e.parse(&path)?,
            "iris_dy" => s.iris_offset.1 = e.parse(&path)?,
            "iris_radius" => s.iris_radius = e.parse(&path)?,
            "pupil_intensity" => s.pupil_intensity = e.parse(&path)?,
            "iris_intensity" => s.iris_intensity = e.parse(&path)?,
            "sclera_intensity" => s.sclera_intensity = e.parse(&path)?,
            "eyelid_intensity" => s.eyelid_intensity = e.parse(&path)?,
            "illumination" => s.illumination = e.parse(&path)?,
            "blur_sigma" => s.blur_sigma = e.parse(&path)?,
            "noise_sigma" => s.noise_sigma = e.parse(&path)?,
            "occlusion" => s.occlusion = e.parse(&path)?,
            "seed" => s.seed = e.parse(&path)?,
            "drift_x" => drift.0 = e.parse(&path)?,
            "drift_y" => drift.1 = e.parse(&path)?,
            "glint" => {
                let v = e.parse_list(&path)?;
                if v.len() != 3 {
                    return Err(e.error(&path, "glint needs `x, y, radius`"));
                }
                s.glints.push(Glint::new(v[0], v[1], v[2]));
            }
            other => return Err(e.error(&path, format!("unknown scene key `{other}`"))),
        }
    }
    s.pupil = Ellipse::new(cx, cy, a, b, theta);
    s.validate()?;
    Ok((s, drift))
}
