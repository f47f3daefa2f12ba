//! Canny edges and the edge-segment front end: chain tracing over the edge
//! mask, Douglas-Peucker polygonal approximation and splitting of segments at
//! turn-direction inflections.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Integer pixel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    #[inline]
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn is_8_adjacent(self, other: Point) -> bool {
        let (dx, dy) = ((self.x - other.x).abs(), (self.y - other.y).abs());
        dx <= 1 && dy <= 1 && (dx | dy) != 0
    }

    #[inline]
    pub fn to_f64(self) -> (f64, f64) {
        (self.x as f64, self.y as f64)
    }
}

/// Binary edge mask with the dimensions of its source image.
#[derive(Clone, PartialEq, Eq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl std::fmt::Debug for EdgeMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EdgeMap")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("edges", &self.count())
            .finish()
    }
}

impl EdgeMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn from_mask(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "edge mask holds {} values, {width}x{height} needs {}",
                mask.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.mask[y * self.width + x] = on;
    }

    /// Edge test that is false outside the raster.
    #[inline]
    pub fn get_checked(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.mask[y as usize * self.width + x as usize]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| Point::new((i % self.width) as i32, (i / self.width) as i32))
    }

    /// 255 for edge pixels, 0 elsewhere.
    pub fn to_image(&self) -> GrayImage {
        GrayImage::new(
            self.width,
            self.height,
            self.mask.iter().map(|&m| if m { 255 } else { 0 }).collect(),
        )
        .expect("edge map dimensions are positive")
    }
}

/// Sobel gradients with replicated borders.
pub struct Gradients {
    pub gx: Vec<i32>,
    pub gy: Vec<i32>,
    pub magnitude: Vec<f32>,
}

pub fn sobel(img: &GrayImage) -> Gradients {
    let (w, h) = (img.width(), img.height());
    let d = img.data();
    let n = w * h;
    let mut gx = vec![0i32; n];
    let mut gy = vec![0i32; n];
    let mut magnitude = vec![0f32; n];
    for y in 0..h {
        let ym = y.saturating_sub(1) * w;
        let y0 = y * w;
        let yp = (y + 1).min(h - 1) * w;
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let p = |r: usize, c: usize| d[r + c] as i32;
            let sx = (p(ym, xp) + 2 * p(y0, xp) + p(yp, xp)) - (p(ym, xm) + 2 * p(y0, xm) + p(yp, xm));
            let sy = (p(yp, xm) + 2 * p(yp, x) + p(yp, xp)) - (p(ym, xm) + 2 * p(ym, x) + p(ym, xp));
            let i = y0 + x;
            gx[i] = sx;
            gy[i] = sy;
            magnitude[i] = ((sx * sx + sy * sy) as f32).sqrt();
        }
    }
    Gradients { gx, gy, magnitude }
}

/// Canny edge detector: Sobel gradients, non-maximum suppression along one of
/// four quantized directions, then hysteresis with 8-connected linking.
///
/// Thresholds are in raw Sobel magnitude units.
pub fn canny(img: &GrayImage, low: f64, high: f64) -> Result<EdgeMap> {
    if !(low >= 0.0 && low < high) {
        return Err(Error::ThresholdOrder { low, high });
    }
    let (w, h) = (img.width(), img.height());
    let Gradients { gx, gy, magnitude } = sobel(img);
    let (low, high) = (low as f32, high as f32);

    // 0 = weak candidate, 1 = strong, u8::MAX = suppressed
    const NONE: u8 = u8::MAX;
    let mut class = vec![NONE; w * h];
    let mut queue = VecDeque::new();

    let mag_at = |x: isize, y: isize| -> f32 {
        if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
            0.0
        } else {
            magnitude[y as usize * w + x as usize]
        }
    };

    // sector bounds: tan(22.5°), tan(67.5°)
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = magnitude[i];
            if m < low || m == 0.0 {
                continue;
            }
            let (sx, sy) = (gx[i] as f64, gy[i] as f64);
            let (ax, ay) = (sx.abs(), sy.abs());
            // (dx, dy) steps along the quantized gradient direction
            let (dx, dy): (isize, isize) = if ay <= ax * 0.414_213_562_373_095 {
                (1, 0)
            } else if ay >= ax * 2.414_213_562_373_095 {
                (0, 1)
            } else if (sx > 0.0) == (sy > 0.0) {
                (1, 1)
            } else {
                (1, -1)
            };
            let (xi, yi) = (x as isize, y as isize);
            let before = mag_at(xi - dx, yi - dy);
            let after = mag_at(xi + dx, yi + dy);
            // strict on one side so two-pixel plateaus keep a single pixel
            if m > before && m >= after {
                if m >= high {
                    class[i] = 1;
                    queue.push_back(i);
                } else {
                    class[i] = 0;
                }
            }
        }
    }

    let mut mask = vec![false; w * h];
    for &i in &queue {
        mask[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !mask[j] && class[j] == 0 {
                    mask[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(EdgeMap {
        width: w,
        height: h,
        mask,
    })
}

/// Ordered chain of 8-connected edge pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSegment {
    pub points: Vec<Point>,
}

impl EdgeSegment {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// Ring order: N, NE, E, SE, S, SW, W, NW.
const RING: [(i64, i64); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];
// Four-neighbours first so chains prefer axis steps over diagonal shortcuts.
const WALK_ORDER: [(i64, i64); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];

fn ring_bits(mask: &[bool], w: usize, h: usize, x: usize, y: usize) -> u8 {
    let mut bits = 0u8;
    for (k, (dx, dy)) in RING.iter().enumerate() {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && mask[ny as usize * w + nx as usize] {
            bits |= 1 << k;
        }
    }
    bits
}

/// Number of 8-connected groups among the set neighbours of a pixel.
fn neighbour_groups(bits: u8) -> u32 {
    let mut parent: [u8; 8] = std::array::from_fn(|i| i as u8);
    fn find(p: &mut [u8; 8], mut i: u8) -> u8 {
        while p[i as usize] != i {
            i = p[i as usize];
        }
        i
    }
    let mut join = |a: usize, b: usize| {
        if bits & (1 << a) != 0 && bits & (1 << b) != 0 {
            let (ra, rb) = (find(&mut parent, a as u8), find(&mut parent, b as u8));
            if ra != rb {
                parent[ra as usize] = rb;
            }
        }
    };
    for k in 0..8 {
        join(k, (k + 1) % 8);
    }
    // edge-adjacent neighbours touch diagonally even without the corner pixel
    for k in [0usize, 2, 4, 6] {
        join(k, (k + 2) % 8);
    }
    (0..8u8)
        .filter(|&k| bits & (1 << k) != 0 && find(&mut parent, k) == k)
        .count() as u32
}

/// One raster pass removing staircase corners: pixels with two set
/// edge-adjacent neighbours at a right angle whose removal keeps the
/// neighbourhood connected. End points are never touched.
fn thin(edges: &EdgeMap) -> Vec<bool> {
    let (w, h) = (edges.width, edges.height);
    let mut mask = edges.mask.clone();
    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            let bits = ring_bits(&mask, w, h, x, y);
            // N|E, E|S, S|W, W|N
            let corner = [(0, 2), (2, 4), (4, 6), (6, 0)]
                .iter()
                .any(|&(a, b)| bits & (1 << a) != 0 && bits & (1 << b) != 0);
            if corner && bits.count_ones() <= 6 && neighbour_groups(bits) == 1 {
                mask[y * w + x] = false;
            }
        }
    }
    mask
}

/// Splits the edge mask into simple 8-connected chains and returns those with
/// more than `min_len` points.
///
/// The mask is thinned first; pixels with three or more neighbours are
/// junctions and end the chains meeting there. Open chains are walked from
/// their end points, remaining closed loops from their first pixel in raster
/// order. No pixel is used twice.
pub fn trace_segments(edges: &EdgeMap, min_len: usize) -> Vec<EdgeSegment> {
    let (w, h) = (edges.width, edges.height);
    let thinned = thin(edges);
    let mut usable = thinned.clone();
    for y in 0..h {
        for x in 0..w {
            if thinned[y * w + x] && ring_bits(&thinned, w, h, x, y).count_ones() >= 3 {
                usable[y * w + x] = false;
            }
        }
    }

    let mut visited = vec![false; w * h];
    let mut segments = Vec::new();
    let degree = |usable: &[bool], x: usize, y: usize| ring_bits(usable, w, h, x, y).count_ones();

    let walk = |start: usize, visited: &mut Vec<bool>| -> Vec<Point> {
        let mut chain = vec![Point::new((start % w) as i32, (start / w) as i32)];
        visited[start] = true;
        let mut cur = start;
        loop {
            let (cx, cy) = ((cur % w) as i64, (cur / w) as i64);
            let next = WALK_ORDER.iter().find_map(|(dx, dy)| {
                let (nx, ny) = (cx + dx, cy + dy);
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    return None;
                }
                let j = ny as usize * w + nx as usize;
                (usable[j] && !visited[j]).then_some(j)
            });
            match next {
                Some(j) => {
                    visited[j] = true;
                    chain.push(Point::new((j % w) as i32, (j / w) as i32));
                    cur = j;
                }
                None => break,
            }
        }
        chain
    };

    for pass in 0..2 {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !usable[i] || visited[i] {
                    continue;
                }
                if pass == 0 && degree(&usable, x, y) > 1 {
                    continue;
                }
                let chain = walk(i, &mut visited);
                if chain.len() > min_len {
                    segments.push(EdgeSegment::new(chain));
                }
            }
        }
    }
    segments
}

/// Polygonal approximation of a segment. `indices[k]` is the position of
/// `vertices[k]` inside the source segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polyline {
    pub vertices: Vec<Point>,
    pub indices: Vec<usize>,
}

/// Distance from `p` to the closed segment `a`–`b`.
pub fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    if len2 == 0.0 {
        return (wx * wx + wy * wy).sqrt();
    }
    let t = ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0);
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    (dx * dx + dy * dy).sqrt()
}

/// Douglas-Peucker simplification with tolerance `epsilon` pixels.
pub fn approx_polyline(seg: &EdgeSegment, epsilon: f64) -> Polyline {
    let pts = &seg.points;
    let n = pts.len();
    if n <= 2 {
        return Polyline {
            vertices: pts.clone(),
            indices: (0..n).collect(),
        };
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0usize, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (a, b) = (pts[lo].to_f64(), pts[hi].to_f64());
        let (far, dist) = (lo + 1..hi)
            .map(|k| (k, point_segment_distance(pts[k].to_f64(), a, b)))
            .fold((lo, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if dist > epsilon {
            keep[far] = true;
            stack.push((lo, far));
            stack.push((far, hi));
        }
    }
    let indices: Vec<usize> = (0..n).filter(|&k| keep[k]).collect();
    Polyline {
        vertices: indices.iter().map(|&k| pts[k]).collect(),
        indices,
    }
}

/// Cuts `seg` at polyline vertices where the turn direction (sign of the
/// cross product of consecutive polyline edges) flips. Collinear vertices do
/// not count as a flip. The cut vertex closes the earlier piece.
pub fn split_at_inflections(seg: &EdgeSegment, poly: &Polyline) -> Vec<EdgeSegment> {
    let v = &poly.vertices;
    let mut cuts = Vec::new();
    let mut last_sign = 0i64;
    for k in 1..v.len().saturating_sub(1) {
        let e0 = (v[k].x as i64 - v[k - 1].x as i64, v[k].y as i64 - v[k - 1].y as i64);
        let e1 = (v[k + 1].x as i64 - v[k].x as i64, v[k + 1].y as i64 - v[k].y as i64);
        let sign = (e0.0 * e1.1 - e0.1 * e1.0).signum();
        if sign == 0 {
            continue;
        }
        if last_sign != 0 && sign != last_sign {
            cuts.push(poly.indices[k]);
        }
        last_sign = sign;
    }
    let mut pieces = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for c in cuts {
        pieces.push(EdgeSegment::new(seg.points[start..=c].to_vec()));
        start = c + 1;
    }
    if start < seg.points.len() {
        pieces.push(EdgeSegment::new(seg.points[start..].to_vec()));
    }
    pieces
}

/// `segment_id,x,y` rows, one per point.
pub fn write_segments_csv(segments: &[EdgeSegment], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "segment_id,x,y")?;
    for (id, s) in segments.iter().enumerate() {
        for p in &s.points {
            writeln!(out, "{id},{},{}", p.x, p.y)?;
        }
    }
    Ok(())
}
