//! Pupil-centre detection: edge-based ellipse candidates first, dark stable
//! regions as fallback, and a search window that follows confident results.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use crate::edges::{approx_polyline, canny, split_at_inflections, trace_segments, EdgeMap, EdgeSegment};
use crate::ellipse::{axis_ratio, ellipse_area, fit_ellipse, goodness_with_inner, Ellipse, Goodness, GoodnessParams};
use crate::error::{Error, Result};
use crate::image::{crop, downsample_half, preprocess, GrayImage, Rect};
use crate::kv;
use crate::mser::{detect_multiscale_with, MserParams, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    EdgeStage,
    MserStage,
    None,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::EdgeStage => "edge",
            Stage::MserStage => "mser",
            Stage::None => "none",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// σ of the 5×5 smoothing kernel.
    pub blur_sigma: f64,
    pub canny_low: f64,
    pub canny_high: f64,
    pub min_seg_len: usize,
    pub dp_epsilon: f64,
    /// Candidate ellipse area bounds as fractions of the processing image.
    pub area_min_frac: f64,
    pub area_max_frac: f64,
    pub max_axis_ratio: f64,
    /// Inner median must be below this; also the MSER level cap.
    pub tau_int: u8,
    pub merge_di: f64,
    pub merge_dist: f64,
    pub tau_good: f64,
    pub mser_delta: u8,
    pub mser_max_variation: f64,
    pub mser_min_diversity: f64,
    pub mser_dup_dist: f64,
    pub octaves: u32,
    pub track_k: f64,
    /// Smallest ROI half-width, processing pixels.
    pub roi_min_half: f64,
    pub tau_track: f64,
    pub goodness: GoodnessParams,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            blur_sigma: 1.0,
            canny_low: 60.0,
            canny_high: 160.0,
            min_seg_len: 10,
            dp_epsilon: 1.5,
            area_min_frac: 0.0005,
            area_max_frac: 0.1,
            max_axis_ratio: 3.0,
            tau_int: 100,
            merge_di: 10.0,
            merge_dist: 5.0,
            tau_good: 0.2,
            mser_delta: 5,
            mser_max_variation: 0.25,
            mser_min_diversity: 0.2,
            mser_dup_dist: crate::mser::DEFAULT_DUP_DIST,
            octaves: 3,
            track_k: 3.0,
            roi_min_half: 40.0,
            tau_track: 0.2,
            goodness: GoodnessParams::default(),
        }
    }
}

/// Every key accepted in a detector config file.
pub const CONFIG_KEYS: &[&str] = &[
    "blur_sigma",
    "canny_low",
    "canny_high",
    "min_seg_len",
    "dp_epsilon",
    "area_min_frac",
    "area_max_frac",
    "max_axis_ratio",
    "tau_int",
    "merge_di",
    "merge_dist",
    "tau_good",
    "mser_delta",
    "mser_max_variation",
    "mser_min_diversity",
    "mser_dup_dist",
    "octaves",
    "track_k",
    "roi_min_half",
    "tau_track",
    "goodness_samples",
    "goodness_support_dist",
    "goodness_inner_scale",
    "goodness_outer_scale",
];

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        let positive = [
            ("blur_sigma", self.blur_sigma),
            ("canny_low", self.canny_low),
            ("canny_high", self.canny_high),
            ("dp_epsilon", self.dp_epsilon),
            ("area_min_frac", self.area_min_frac),
            ("max_axis_ratio", self.max_axis_ratio),
            ("merge_dist", self.merge_dist),
            ("mser_dup_dist", self.mser_dup_dist),
            ("track_k", self.track_k),
            ("roi_min_half", self.roi_min_half),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.canny_low > self.canny_high {
            return Err(Error::ThresholdOrder {
                low: self.canny_low,
                high: self.canny_high,
            });
        }
        if !(self.area_min_frac < self.area_max_frac && self.area_max_frac <= 1.0) {
            return bad("area fractions must satisfy 0 < area_min_frac < area_max_frac <= 1");
        }
        if self.max_axis_ratio < 1.0 {
            return bad("max_axis_ratio must be at least 1");
        }
        if self.tau_int == 0 || self.min_seg_len == 0 || self.octaves == 0 || self.mser_delta == 0 {
            return bad("tau_int, min_seg_len, octaves and mser_delta must be positive");
        }
        if self.merge_di.is_nan() || self.merge_di < 0.0 {
            return bad("merge_di must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.tau_good) || !(0.0..=1.0).contains(&self.tau_track) {
            return bad("tau_good and tau_track must be in [0, 1]");
        }
        let g = &self.goodness;
        if g.samples < 16 || !(0.0 < g.inner_scale && g.inner_scale < 1.0 && g.outer_scale > 1.0) {
            return bad("goodness needs >= 16 samples and 0 < inner_scale < 1 < outer_scale");
        }
        Ok(())
    }

    /// Stable-region parameters for a processing image of `image_area` pixels.
    pub fn mser_params(&self, image_area: usize) -> MserParams {
        let (lo, hi) = self.area_bounds(image_area);
        let min_area = (lo.ceil() as usize).max(1);
        MserParams {
            delta: self.mser_delta,
            min_area,
            max_area: (hi.floor() as usize).max(min_area + 1),
            max_level: self.tau_int,
            max_variation: self.mser_max_variation,
            min_diversity: self.mser_min_diversity,
        }
    }

    fn area_bounds(&self, image_area: usize) -> (f64, f64) {
        let a = image_area as f64;
        (self.area_min_frac * a, self.area_max_frac * a)
    }

    fn set(&mut self, e: &kv::Entry, path: &Path) -> Result<()> {
        fn p<T: FromStr>(e: &kv::Entry, path: &Path) -> Result<T> {
            e.parse(path)
        }
        match e.key.as_str() {
            "blur_sigma" => self.blur_sigma = p(e, path)?,
            "canny_low" => self.canny_low = p(e, path)?,
            "canny_high" => self.canny_high = p(e, path)?,
            "min_seg_len" => self.min_seg_len = p(e, path)?,
            "dp_epsilon" => self.dp_epsilon = p(e, path)?,
            "area_min_frac" => self.area_min_frac = p(e, path)?,
            "area_max_frac" => self.area_max_frac = p(e, path)?,
            "max_axis_ratio" => self.max_axis_ratio = p(e, path)?,
            "tau_int" => self.tau_int = p(e, path)?,
            "merge_di" => self.merge_di = p(e, path)?,
            "merge_dist" => self.merge_dist = p(e, path)?,
            "tau_good" => self.tau_good = p(e, path)?,
            "mser_delta" => self.mser_delta = p(e, path)?,
            "mser_max_variation" => self.mser_max_variation = p(e, path)?,
            "mser_min_diversity" => self.mser_min_diversity = p(e, path)?,
            "mser_dup_dist" => self.mser_dup_dist = p(e, path)?,
            "octaves" => self.octaves = p(e, path)?,
            "track_k" => self.track_k = p(e, path)?,
            "roi_min_half" => self.roi_min_half = p(e, path)?,
            "tau_track" => self.tau_track = p(e, path)?,
            "goodness_samples" => self.goodness.samples = p(e, path)?,
            "goodness_support_dist" => self.goodness.support_dist = p(e, path)?,
            "goodness_inner_scale" => self.goodness.inner_scale = p(e, path)?,
            "goodness_outer_scale" => self.goodness.outer_scale = p(e, path)?,
            other => return Err(e.error(path, format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Defaults overridden by the `key = value` pairs in `text`.
    pub fn parse_str(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for e in kv::parse(text, path)? {
            cfg.set(&e, path)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (path, entries) = kv::read(path)?;
        let mut cfg = Self::default();
        for e in &entries {
            cfg.set(e, &path)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config file text reproducing `self`.
    pub fn to_kv(&self) -> String {
        let g = &self.goodness;
        let values: [String; 24] = [
            self.blur_sigma.to_string(),
            self.canny_low.to_string(),
            self.canny_high.to_string(),
            self.min_seg_len.to_string(),
            self.dp_epsilon.to_string(),
            self.area_min_frac.to_string(),
            self.area_max_frac.to_string(),
            self.max_axis_ratio.to_string(),
            self.tau_int.to_string(),
            self.merge_di.to_string(),
            self.merge_dist.to_string(),
            self.tau_good.to_string(),
            self.mser_delta.to_string(),
            self.mser_max_variation.to_string(),
            self.mser_min_diversity.to_string(),
            self.mser_dup_dist.to_string(),
            self.octaves.to_string(),
            self.track_k.to_string(),
            self.roi_min_half.to_string(),
            self.tau_track.to_string(),
            g.samples.to_string(),
            g.support_dist.to_string(),
            g.inner_scale.to_string(),
            g.outer_scale.to_string(),
        ];
        CONFIG_KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PupilCandidate {
    /// Processing-scale coordinates.
    pub ellipse: Ellipse,
    pub goodness: Goodness,
    pub source: Stage,
    pub inner_median: u8,
}

/// Candidate ordering for selection: higher goodness, then darker interior,
/// then smaller x, then smaller y.
fn better(a: &PupilCandidate, b: &PupilCandidate) -> Ordering {
    b.goodness
        .value
        .total_cmp(&a.goodness.value)
        .then(a.inner_median.cmp(&b.inner_median))
        .then(a.ellipse.cx.total_cmp(&b.ellipse.cx))
        .then(a.ellipse.cy.total_cmp(&b.ellipse.cy))
}

fn best_of(cands: impl IntoIterator<Item = PupilCandidate>) -> Option<PupilCandidate> {
    cands.into_iter().min_by(better)
}

/// Scoring context shared by both stages.
struct Scorer<'a> {
    img: &'a GrayImage,
    edges: &'a EdgeMap,
    cfg: &'a DetectorConfig,
    /// Area bounds in processing pixels.
    area: (f64, f64),
}

impl Scorer<'_> {
    fn passes_shape(&self, e: &Ellipse) -> bool {
        let area = ellipse_area(e);
        e.is_valid() && area >= self.area.0 && area <= self.area.1 && axis_ratio(e) <= self.cfg.max_axis_ratio
    }

    fn candidate(&self, e: Ellipse, source: Stage) -> Option<PupilCandidate> {
        if !self.passes_shape(&e) {
            return None;
        }
        let (g, inner) = goodness_with_inner(self.img, self.edges, &e, &self.cfg.goodness).ok()?;
        Some(PupilCandidate {
            ellipse: e,
            goodness: g,
            source,
            inner_median: inner,
        })
    }
}

/// Tracing, approximation and inflection splitting of an edge map.
pub fn extract_segments(edges: &EdgeMap, cfg: &DetectorConfig) -> Vec<EdgeSegment> {
    trace_segments(edges, cfg.min_seg_len)
        .iter()
        .flat_map(|s| split_at_inflections(s, &approx_polyline(s, cfg.dp_epsilon)))
        .filter(|s| s.len() >= 5)
        .collect()
}

fn edge_stage_in(
    img: &GrayImage,
    edges: &EdgeMap,
    segments: &[EdgeSegment],
    cfg: &DetectorConfig,
    image_area: usize,
) -> Option<PupilCandidate> {
    let sc = Scorer {
        img,
        edges,
        cfg,
        area: cfg.area_bounds(image_area),
    };
    struct Cluster {
        cand: PupilCandidate,
        points: Vec<(f64, f64)>,
    }
    let mut clusters: Vec<Cluster> = segments
        .iter()
        .filter_map(|s| {
            let points: Vec<(f64, f64)> = s.points.iter().map(|p| p.to_f64()).collect();
            let e = fit_ellipse(&points).ok()?;
            let cand = sc.candidate(e, Stage::EdgeStage)?;
            (cand.inner_median < cfg.tau_int).then_some(Cluster { cand, points })
        })
        .collect();
    clusters.sort_by(|a, b| {
        a.cand
            .inner_median
            .cmp(&b.cand.inner_median)
            .then_with(|| better(&a.cand, &b.cand))
    });

    // Single greedy pass: each cluster absorbs later compatible ones.
    let mut merged: Vec<PupilCandidate> = Vec::new();
    let mut used = vec![false; clusters.len()];
    for i in 0..clusters.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mut cand = clusters[i].cand.clone();
        let mut points = clusters[i].points.clone();
        for j in i + 1..clusters.len() {
            if used[j] {
                continue;
            }
            let other = &clusters[j];
            let di = (cand.inner_median as f64 - other.cand.inner_median as f64).abs();
            let (dx, dy) = (cand.ellipse.cx - other.cand.ellipse.cx, cand.ellipse.cy - other.cand.ellipse.cy);
            if di > cfg.merge_di || dx.hypot(dy) > cfg.merge_dist {
                continue;
            }
            let mut joined = points.clone();
            joined.extend_from_slice(&other.points);
            let Ok(e) = fit_ellipse(&joined) else { continue };
            let Some(mut refit) = sc.candidate(e, Stage::EdgeStage) else { continue };
            refit.inner_median = cand.inner_median.min(other.cand.inner_median);
            cand = refit;
            points = joined;
            used[j] = true;
        }
        merged.push(cand);
    }
    best_of(merged).filter(|c| c.goodness.value > cfg.tau_good)
}

/// Best edge-based candidate on a processing-scale image, if confident.
pub fn edge_stage(
    img: &GrayImage,
    edges: &EdgeMap,
    segments: &[EdgeSegment],
    cfg: &DetectorConfig,
) -> Option<PupilCandidate> {
    edge_stage_in(img, edges, segments, cfg, img.area())
}

/// One level of the evidence pyramid used to score stable regions.
struct Octave {
    img: GrayImage,
    edges: EdgeMap,
    scale: f64,
}

fn evidence_pyramid(img: &GrayImage, edges: &EdgeMap, cfg: &DetectorConfig) -> Vec<Octave> {
    let mut levels = vec![Octave {
        img: img.clone(),
        edges: edges.clone(),
        scale: 1.0,
    }];
    for _ in 1..cfg.octaves {
        let last = levels.last().expect("non-empty");
        if last.img.width() < 8 || last.img.height() < 8 {
            break;
        }
        let Ok(small) = downsample_half(&last.img) else { break };
        let Ok(e) = canny(&small, cfg.canny_low, cfg.canny_high) else { break };
        let scale = last.scale * 2.0;
        levels.push(Octave {
            img: small,
            edges: e,
            scale,
        });
    }
    levels
}

/// Region candidates scored at the pyramid level where their boundary
/// evidence is strongest.
fn region_candidates(
    pyramid: &[Octave],
    regions: &[Region],
    cfg: &DetectorConfig,
    image_area: usize,
) -> Vec<PupilCandidate> {
    let base = &pyramid[0];
    let sc = Scorer {
        img: &base.img,
        edges: &base.edges,
        cfg,
        area: cfg.area_bounds(image_area),
    };
    regions
        .iter()
        .filter_map(|r| {
            let e = fit_ellipse(&r.boundary).ok()?;
            if !sc.passes_shape(&e) {
                return None;
            }
            pyramid
                .iter()
                .filter_map(|o| {
                    let shift = (o.scale - 1.0) / 2.0;
                    let scaled = Ellipse {
                        cx: (e.cx - shift) / o.scale,
                        cy: (e.cy - shift) / o.scale,
                        a: e.a / o.scale,
                        b: e.b / o.scale,
                        theta: e.theta,
                    };
                    let (g, inner) = goodness_with_inner(&o.img, &o.edges, &scaled, &cfg.goodness).ok()?;
                    Some(PupilCandidate {
                        ellipse: e,
                        goodness: g,
                        source: Stage::MserStage,
                        inner_median: inner,
                    })
                })
                .min_by(better)
        })
        .collect()
}

fn mser_stage_in(img: &GrayImage, edges: &EdgeMap, cfg: &DetectorConfig, image_area: usize) -> Option<PupilCandidate> {
    let p = cfg.mser_params(image_area);
    let regions = detect_multiscale_with(img, &p, cfg.octaves, cfg.mser_dup_dist).ok()?;
    if regions.is_empty() {
        return None;
    }
    let pyramid = evidence_pyramid(img, edges, cfg);
    best_of(region_candidates(&pyramid, &regions, cfg, image_area)).filter(|c| c.goodness.value > cfg.tau_good)
}

/// Best stable-region candidate on a processing-scale image, if confident.
pub fn mser_stage(img: &GrayImage, edges: &EdgeMap, cfg: &DetectorConfig) -> Option<PupilCandidate> {
    mser_stage_in(img, edges, cfg, img.area())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackerState {
    /// Processing-scale centre of the last confident detection.
    pub last_center: Option<(f64, f64)>,
    pub last_major: f64,
    pub last_goodness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    /// Original image coordinates.
    pub center: Option<(f64, f64)>,
    pub confidence: f64,
    pub stage: Stage,
    pub used_roi: bool,
    pub elapsed_ms: f64,
}

impl Detection {
    fn miss(used_roi: bool) -> Self {
        Self {
            center: None,
            confidence: 0.0,
            stage: Stage::None,
            used_roi,
            elapsed_ms: 0.0,
        }
    }
}

/// Processing-scale point to original image coordinates. A processing pixel
/// is the mean of a 2×2 block whose centre lies at `2p + ½`.
pub fn to_original(p: (f64, f64)) -> (f64, f64) {
    (2.0 * p.0 + 0.5, 2.0 * p.1 + 0.5)
}

/// Original image point to processing-scale coordinates.
pub fn to_processing(p: (f64, f64)) -> (f64, f64) {
    ((p.0 - 0.5) / 2.0, (p.1 - 0.5) / 2.0)
}

/// Both stages over `window` of the preprocessed frame. Returns the winner in
/// full processing coordinates.
fn search(pre: &GrayImage, window: Rect, cfg: &DetectorConfig) -> Result<Option<PupilCandidate>> {
    let owned;
    let img = if window.is_full(pre.width(), pre.height()) {
        pre
    } else {
        owned = crop(pre, window)?;
        &owned
    };
    let area = pre.area();
    let edges = canny(img, cfg.canny_low, cfg.canny_high)?;
    let segments = extract_segments(&edges, cfg);
    let found = edge_stage_in(img, &edges, &segments, cfg, area).or_else(|| mser_stage_in(img, &edges, cfg, area));
    Ok(found.map(|mut c| {
        c.ellipse.cx += window.x0 as f64;
        c.ellipse.cy += window.y0 as f64;
        c
    }))
}

/// One tracking step on an original-resolution frame.
pub fn detect_frame(img: &GrayImage, state: &TrackerState, cfg: &DetectorConfig) -> Result<(Detection, TrackerState)> {
    let start = Instant::now();
    let pre = preprocess(img, cfg.blur_sigma)?;
    let full = pre.full_rect();

    let roi = match state.last_center {
        Some((cx, cy)) if state.last_goodness > cfg.tau_track => {
            let half = cfg.roi_min_half.max(cfg.track_k * state.last_major);
            Rect::around(cx, cy, half, pre.width(), pre.height()).filter(|r| !r.is_full(pre.width(), pre.height()))
        }
        _ => None,
    };
    let mut used_roi = false;
    let mut found = None;
    if let Some(r) = roi {
        found = search(&pre, r, cfg)?;
        used_roi = found.is_some();
    }
    if found.is_none() {
        found = search(&pre, full, cfg)?;
    }

    let (mut det, next) = match found {
        Some(c) => {
            let (x, y) = to_original(c.ellipse.center());
            let center = (
                x.clamp(0.0, img.width() as f64 - 1.0),
                y.clamp(0.0, img.height() as f64 - 1.0),
            );
            (
                Detection {
                    center: Some(center),
                    confidence: c.goodness.value,
                    stage: c.source,
                    used_roi,
                    elapsed_ms: 0.0,
                },
                TrackerState {
                    last_center: Some(c.ellipse.center()),
                    last_major: c.ellipse.a,
                    last_goodness: c.goodness.value,
                },
            )
        }
        None => (Detection::miss(false), TrackerState::default()),
    };
    det.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((det, next))
}

/// Sequential detector for one video stream.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub config: DetectorConfig,
    pub state: TrackerState,
    /// When false every frame is searched in full.
    pub tracking: bool,
}

impl Tracker {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: TrackerState::default(),
            tracking: true,
        })
    }

    pub fn reset(&mut self) {
        self.state = TrackerState::default();
    }

    pub fn detect(&mut self, img: &GrayImage) -> Result<Detection> {
        if !self.tracking {
            self.reset();
        }
        let (d, s) = detect_frame(img, &self.state, &self.config)?;
        self.state = s;
        Ok(d)
    }
}

/// Intermediate products of one full-frame detection, for inspection.
pub struct DebugProducts {
    pub preprocessed: GrayImage,
    pub edges: EdgeMap,
    pub segments: Vec<EdgeSegment>,
    pub regions: Vec<Region>,
    pub edge_candidate: Option<PupilCandidate>,
    pub mser_candidate: Option<PupilCandidate>,
}

pub fn debug_products(img: &GrayImage, cfg: &DetectorConfig) -> Result<DebugProducts> {
    let pre = preprocess(img, cfg.blur_sigma)?;
    let edges = canny(&pre, cfg.canny_low, cfg.canny_high)?;
    let segments = extract_segments(&edges, cfg);
    let regions = detect_multiscale_with(&pre, &cfg.mser_params(pre.area()), cfg.octaves, cfg.mser_dup_dist)?;
    let edge_candidate = edge_stage(&pre, &edges, &segments, cfg);
    let mser_candidate = mser_stage(&pre, &edges, cfg);
    Ok(DebugProducts {
        preprocessed: pre,
        edges,
        segments,
        regions,
        edge_candidate,
        mser_candidate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edges::Point;
    use crate::image::gaussian_blur_5x5;
    use crate::synth::{render, render_sequence, Glint, SceneSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dark filled ellipse (value 20) on a 200 background, processing scale.
    fn disk_image(w: usize, h: usize, e: &Ellipse) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| if e.normalized_radius2(x as f64, y as f64) <= 1.0 { 20 } else { 200 })
    }

    fn arc(e: &Ellipse, t0: f64, t1: f64) -> EdgeSegment {
        let n = 200;
        let mut pts: Vec<Point> = Vec::new();
        for k in 0..=n {
            let (x, y) = e.point_at(t0 + (t1 - t0) * k as f64 / n as f64, 1.0);
            let p = Point::new(x.round() as i32, y.round() as i32);
            if pts.last() != Some(&p) {
                pts.push(p);
            }
        }
        EdgeSegment::new(pts)
    }

    fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
        (a.0 - b.0).hypot(a.1 - b.1)
    }

    #[test]
    fn config_round_trip_and_errors() {
        let cfg = DetectorConfig::default();
        assert_eq!(DetectorConfig::parse_str(&cfg.to_kv(), Path::new("c")).unwrap(), cfg);
        let c = DetectorConfig::parse_str("tau_good = 0.5 # stricter\noctaves=2\n", Path::new("c")).unwrap();
        assert_eq!((c.tau_good, c.octaves), (0.5, 2));
        let e = DetectorConfig::parse_str("tau_good = 0.5\nfoo = 1\n", Path::new("c")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(DetectorConfig::parse_str("tau_good = x", Path::new("c")).is_err());
        assert!(DetectorConfig::parse_str("tau_good = 1.5", Path::new("c")).is_err());
        assert!(DetectorConfig::parse_str("area_min_frac = 0.2\narea_max_frac = 0.1", Path::new("c")).is_err());
        assert!(matches!(
            DetectorConfig::parse_str("canny_low = 90\ncanny_high = 80", Path::new("c")),
            Err(Error::ThresholdOrder { .. })
        ));
        assert_eq!(CONFIG_KEYS.len(), cfg.to_kv().lines().count());
    }

    #[test]
    fn coordinate_mapping_inverts() {
        let p = (12.25, 7.5);
        let q = to_processing(to_original(p));
        assert!(dist(p, q) < 1e-12);
        assert_eq!(to_original((0.0, 0.0)), (0.5, 0.5));
    }

    #[test]
    fn edge_stage_single_ring() {
        let e = Ellipse::new(80.3, 60.7, 18.0, 13.0, 0.4);
        let img = disk_image(160, 120, &e);
        let cfg = DetectorConfig::default();
        let edges = canny(&img, cfg.canny_low, cfg.canny_high).unwrap();
        let segs = extract_segments(&edges, &cfg);
        let c = edge_stage(&img, &edges, &segs, &cfg).expect("candidate");
        assert!(dist(c.ellipse.center(), e.center()) < 1.0);
        assert!(c.goodness.value > cfg.tau_good);
        assert_eq!(c.source, Stage::EdgeStage);
    }

    #[test]
    fn edge_stage_merges_arcs_split_by_glint() {
        let e = Ellipse::new(80.0, 60.0, 20.0, 15.0, 0.2);
        let img = disk_image(160, 120, &e);
        let edges = EdgeMap::empty(160, 120);
        let mut edges_on = edges.clone();
        let a1 = arc(&e, 0.1, 3.0);
        let a2 = arc(&e, 3.3, 6.0);
        for p in a1.points.iter().chain(&a2.points) {
            edges_on.set(p.x as usize, p.y as usize, true);
        }
        let cfg = DetectorConfig::default();
        let pts = |s: &EdgeSegment| s.points.iter().map(|p| p.to_f64()).collect::<Vec<_>>();
        let (f1, f2) = (fit_ellipse(&pts(&a1)).unwrap(), fit_ellipse(&pts(&a2)).unwrap());
        assert!(dist(f1.center(), f2.center()) <= cfg.merge_dist);
        let c = edge_stage(&img, &edges_on, &[a1.clone(), a2.clone()], &cfg).expect("candidate");
        assert!(dist(c.ellipse.center(), e.center()) < 1.0, "{:?}", c);
        // support from both arcs means the merged fit won
        assert!(c.goodness.edge_support > 0.85, "{:?}", c.goodness);

    }

    #[test]
    fn edge_stage_rejects_straight_edge() {
        let img = GrayImage::from_fn(160, 120, |_, y| if y < 40 { 200 } else { 30 });
        let cfg = DetectorConfig::default();
        let edges = canny(&img, cfg.canny_low, cfg.canny_high).unwrap();
        let segs = extract_segments(&edges, &cfg);
        assert!(!segs.is_empty());
        assert!(edge_stage(&img, &edges, &segs, &cfg).is_none());
    }

    #[test]
    fn mser_stage_blurred_pupil() {
        let e = Ellipse::new(80.4, 60.2, 16.0, 12.0, 0.6);
        let mut img = disk_image(160, 120, &e);
        for _ in 0..8 {
            img = gaussian_blur_5x5(&img, 2.0).unwrap();
        }
        let cfg = DetectorConfig::default();
        let edges = canny(&img, cfg.canny_low, cfg.canny_high).unwrap();
        let segs = extract_segments(&edges, &cfg);
        assert!(edge_stage(&img, &edges, &segs, &cfg).is_none(), "edge stage should defer on a soft boundary");
        let c = mser_stage(&img, &edges, &cfg).expect("candidate");
        assert!(dist(c.ellipse.center(), e.center()) < 2.0);
        assert_eq!(c.source, Stage::MserStage);
    }

    #[test]
    fn mser_stage_uniform_noise_is_none() {
        let cfg = DetectorConfig::default();
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frame = GrayImage::from_fn(640, 480, |_, _| rng.random());
            let img = preprocess(&frame, cfg.blur_sigma).unwrap();
            let edges = canny(&img, cfg.canny_low, cfg.canny_high).unwrap();
            let c = mser_stage(&img, &edges, &cfg);
            assert!(c.is_none(), "{c:?}");
            let (d, _) = detect_frame(&frame, &TrackerState::default(), &cfg).unwrap();
            assert_eq!(d.stage, Stage::None);
        }
    }

    #[test]
    fn mser_stage_axis_ratio_gate() {
        let cfg = DetectorConfig::default();
        let check = |a: f64, b: f64| {
            let e = Ellipse::new(80.0, 60.0, a, b, 0.0);
            let img = disk_image(160, 120, &e);
            let edges = canny(&img, cfg.canny_low, cfg.canny_high).unwrap();
            mser_stage(&img, &edges, &cfg)
        };
        let ok = check(24.0, 12.0).expect("2:1 accepted");
        assert!((axis_ratio(&ok.ellipse) - 2.0).abs() < 0.2);
        assert!(check(40.0, 10.0).is_none(), "4:1 rejected");
    }

    fn scene() -> SceneSpec {
        SceneSpec {
            pupil: Ellipse::new(250.0, 230.0, 28.0, 22.0, 0.5),
            noise_sigma: 3.0,
            glints: vec![Glint::new(270.0, 215.0, 5.0)],
            seed: 5,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn first_frame_is_full_search() {
        let (img, truth) = render(&scene()).unwrap();
        let (d, s) = detect_frame(&img, &TrackerState::default(), &DetectorConfig::default()).unwrap();
        assert!(!d.used_roi);
        assert!(dist(d.center.unwrap(), truth) < 2.0);
        assert!(d.confidence > DetectorConfig::default().tau_good);
        assert_eq!(s.last_goodness, d.confidence);
        assert!(s.last_major > 0.0);
    }

    #[test]
    fn drift_sequence_uses_roi_and_matches_full_frame() {
        let cfg = DetectorConfig::default();
        let frames = render_sequence(&scene(), 12, (3.0, 0.0)).unwrap();
        let mut state = TrackerState::default();
        for (k, (img, _)) in frames.iter().enumerate() {
            let (tracked, next) = detect_frame(img, &state, &cfg).unwrap();
            let (full, _) = detect_frame(img, &TrackerState::default(), &cfg).unwrap();
            assert_eq!(tracked.used_roi, k >= 1, "frame {k}");
            assert!(dist(tracked.center.unwrap(), full.center.unwrap()) < 0.5, "frame {k}");
            state = next;
        }
    }

    #[test]
    fn occlusion_resets_tracking() {
        let cfg = DetectorConfig::default();
        let (img, _) = render(&scene()).unwrap();
        let (_, state) = detect_frame(&img, &TrackerState::default(), &cfg).unwrap();
        let hidden = SceneSpec {
            occlusion: 1.0,
            ..scene()
        };
        let (img2, _) = render(&hidden).unwrap();
        let (d, state2) = detect_frame(&img2, &state, &cfg).unwrap();
        assert_eq!((d.center, d.stage), (None, Stage::None));
        assert_eq!(state2, TrackerState::default());
        let (d3, _) = detect_frame(&img, &state2, &cfg).unwrap();
        assert!(!d3.used_roi && d3.center.is_some());
    }

    #[test]
    fn deterministic_detection() {
        let (img, _) = render(&scene()).unwrap();
        let cfg = DetectorConfig::default();
        let (mut a, sa) = detect_frame(&img, &TrackerState::default(), &cfg).unwrap();
        let (mut b, sb) = detect_frame(&img, &TrackerState::default(), &cfg).unwrap();
        a.elapsed_ms = 0.0;
        b.elapsed_ms = 0.0;
        assert_eq!((a, sa), (b, sb));
    }

    #[test]
    fn tie_break_order() {
        let mk = |g: f64, inner: u8, cx: f64, cy: f64| PupilCandidate {
            ellipse: Ellipse::new(cx, cy, 5.0, 4.0, 0.0),
            goodness: Goodness::from_parts(1.0, g),
            source: Stage::EdgeStage,
            inner_median: inner,
        };
        let cands = vec![mk(0.5, 10, 3.0, 3.0), mk(0.5, 8, 4.0, 3.0), mk(0.5, 8, 4.0, 2.0), mk(0.4, 0, 0.0, 0.0)];
        let b = best_of(cands).unwrap();
        assert_eq!((b.inner_median, b.ellipse.cx, b.ellipse.cy), (8, 4.0, 2.0));
    }

    #[test]
    fn tiny_image_is_error() {
        let img = GrayImage::filled(1, 1, 0);
        assert!(detect_frame(&img, &TrackerState::default(), &DetectorConfig::default()).is_err());
    }
}
