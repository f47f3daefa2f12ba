//! Dark maximally stable extremal regions.
//!
//! The component tree of the lower level sets `{p : I(p) <= t}` is built with
//! a union-find flood that visits pixels in increasing intensity and stops
//! `delta + 1` levels above `max_level`. For a component `C` at level `t` the
//! variation is
//!
//! ```text
//! q(C, t) = (|C at t + delta| - |largest component at t - delta inside C|) / |C|
//! ```
//!
//! A level is kept when `q` is a local minimum along the branch (ties allowed)
//! and does not exceed `max_variation`. The branch neighbour below is the
//! largest sub-component one level down; ties in area go to the component
//! containing the smallest raster index. Nested survivors whose areas are too
//! similar (`small / large >= 1 - min_diversity`) are thinned greedily in
//! order of increasing variation.

use std::cmp::Ordering;

use crate::ellipse::fit_ellipse;
use crate::error::{Error, Result};
use crate::image::{downsample_half, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MserParams {
    pub delta: u8,
    pub min_area: usize,
    pub max_area: usize,
    pub max_level: u8,
    pub max_variation: f64,
    pub min_diversity: f64,
}

impl MserParams {
    /// Defaults with area bounds at 0.05 % and 10 % of `image_area`.
    pub fn for_image_area(image_area: usize, max_level: u8) -> Self {
        Self {
            delta: 5,
            min_area: ((image_area as f64 * 0.0005).ceil() as usize).max(1),
            max_area: ((image_area as f64 * 0.10).floor() as usize).max(2),
            max_level,
            max_variation: 0.25,
            min_diversity: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta == 0 {
            return Err(Error::InvalidParameter("mser delta must be at least 1".into()));
        }
        if !(0 < self.min_area && self.min_area < self.max_area) {
            return Err(Error::InvalidParameter(format!(
                "mser area bounds must satisfy 0 < min < max, got {}..{}",
                self.min_area, self.max_area
            )));
        }
        if !(self.max_variation >= 0.0 && self.max_variation.is_finite()) {
            return Err(Error::InvalidParameter("mser max_variation must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.min_diversity) {
            return Err(Error::InvalidParameter("mser min_diversity must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A dark extremal region.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    /// Member pixels in raster order.
    pub pixels: Vec<(u32, u32)>,
    pub area: usize,
    /// Threshold at which the region was extracted.
    pub level: u8,
    /// Stability score `q` at `level`.
    pub variation: f64,
    /// Closed outer contour, pixel centres in traversal order.
    pub boundary: Vec<(f64, f64)>,
    /// Pyramid octave the region was found in (0 = input resolution).
    pub octave: u32,
}

impl Region {
    pub fn centroid(&self) -> (f64, f64) {
        let n = self.pixels.len().max(1) as f64;
        let (sx, sy) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x as f64, sy + y as f64));
        (sx / n, sy / n)
    }

    /// Centre of the ellipse fitted to the boundary, or the centroid when the
    /// boundary cannot be fitted.
    pub fn center(&self) -> (f64, f64) {
        fit_ellipse(&self.boundary)
            .map(|e| (e.cx, e.cy))
            .unwrap_or_else(|_| self.centroid())
    }
}

/// Variation as an exact ratio `num / den`.
#[derive(Debug, Clone, Copy)]
struct Variation {
    num: i64,
    den: i64,
}

impl Variation {
    fn cmp(self, other: Variation) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }

    fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// `a <= b` with `None` standing for +∞.
fn le(a: Variation, b: Option<Variation>) -> bool {
    b.is_none_or(|b| a.cmp(b) != Ordering::Greater)
}

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    level: u8,
    area: u32,
    min_idx: u32,
    first_child: u32,
    last_child: u32,
    next_sibling: u32,
    pix_head: u32,
    pix_tail: u32,
    parent: u32,
    alive: bool,
}

/// Largest component at a lower level inside a node: (area, min_idx, node).
#[derive(Debug, Clone, Copy)]
struct Below {
    area: u32,
    min_idx: u32,
    node: u32,
}

const NO_BELOW: Below = Below {
    area: 0,
    min_idx: u32::MAX,
    node: NIL,
};

impl Below {
    fn better_than(&self, other: &Below) -> bool {
        self.area > other.area || (self.area == other.area && self.min_idx < other.min_idx)
    }
}

struct ComponentTree {
    nodes: Vec<Node>,
    next_pix: Vec<u32>,
    /// `below[n * (delta + 1) + k]`: best component at level `level(n) - 1 - k`.
    below: Vec<Below>,
    delta: usize,
    top: u8,
}

impl ComponentTree {
    fn build(img: &GrayImage, delta: u8, top: u8) -> Self {
        let (w, h) = (img.width(), img.height());
        let data = img.data();
        let n = w * h;

        // counting sort of pixels up to `top`, raster order within a level
        let mut counts = [0usize; 257];
        for &v in data {
            if v <= top {
                counts[v as usize + 1] += 1;
            }
        }
        for i in 1..257 {
            counts[i] += counts[i - 1];
        }
        let mut order = vec![0u32; counts[256]];
        let mut fill = counts;
        for (i, &v) in data.iter().enumerate() {
            if v <= top {
                order[fill[v as usize]] = i as u32;
                fill[v as usize] += 1;
            }
        }

        let mut uf = vec![NIL; n];
        let mut node_of = vec![NIL; n];
        let mut next_pix = vec![NIL; n];
        let mut nodes: Vec<Node> = Vec::with_capacity(order.len());

        fn find(uf: &mut [u32], mut x: u32) -> u32 {
            let mut root = x;
            while uf[root as usize] != root {
                root = uf[root as usize];
            }
            while uf[x as usize] != root {
                let next = uf[x as usize];
                uf[x as usize] = root;
                x = next;
            }
            root
        }

        let push_child = |nodes: &mut Vec<Node>, parent: u32, child: u32| {
            let p = &mut nodes[parent as usize];
            if p.first_child == NIL {
                p.first_child = child;
            } else {
                let last = p.last_child;
                nodes[last as usize].next_sibling = child;
            }
            nodes[parent as usize].last_child = child;
        };

        for level in 0..=top as usize {
            for &p in &order[counts[level]..counts[level + 1]] {
                let nid = nodes.len() as u32;
                nodes.push(Node {
                    level: level as u8,
                    area: 1,
                    min_idx: p,
                    first_child: NIL,
                    last_child: NIL,
                    next_sibling: NIL,
                    pix_head: p,
                    pix_tail: p,
                    parent: NIL,
                    alive: true,
                });
                uf[p as usize] = p;
                node_of[p as usize] = nid;
                let (x, y) = (p as usize % w, p as usize / w);
                let mut neigh = [NIL; 4];
                if x > 0 {
                    neigh[0] = p - 1;
                }
                if x + 1 < w {
                    neigh[1] = p + 1;
                }
                if y > 0 {
                    neigh[2] = p - w as u32;
                }
                if y + 1 < h {
                    neigh[3] = p + w as u32;
                }
                for q in neigh {
                    if q == NIL || uf[q as usize] == NIL {
                        continue;
                    }
                    let rp = find(&mut uf, p);
                    let rq = find(&mut uf, q);
                    if rp == rq {
                        continue;
                    }
                    let np = node_of[rp as usize];
                    let nq = node_of[rq as usize];
                    if nodes[nq as usize].level as usize == level {
                        // two fresh nodes of this level: fold nq into np
                        let (q_first, q_last) = (nodes[nq as usize].first_child, nodes[nq as usize].last_child);
                        if q_first != NIL {
                            if nodes[np as usize].first_child == NIL {
                                nodes[np as usize].first_child = q_first;
                            } else {
                                let last = nodes[np as usize].last_child;
                                nodes[last as usize].next_sibling = q_first;
                            }
                            nodes[np as usize].last_child = q_last;
                        }
                        let (q_head, q_tail) = (nodes[nq as usize].pix_head, nodes[nq as usize].pix_tail);
                        let tail = nodes[np as usize].pix_tail;
                        next_pix[tail as usize] = q_head;
                        nodes[np as usize].pix_tail = q_tail;
                        let (qa, qm) = (nodes[nq as usize].area, nodes[nq as usize].min_idx);
                        let npn = &mut nodes[np as usize];
                        npn.area += qa;
                        npn.min_idx = npn.min_idx.min(qm);
                        nodes[nq as usize].alive = false;
                    } else {
                        push_child(&mut nodes, np, nq);
                        let (qa, qm) = (nodes[nq as usize].area, nodes[nq as usize].min_idx);
                        let npn = &mut nodes[np as usize];
                        npn.area += qa;
                        npn.min_idx = npn.min_idx.min(qm);
                    }
                    // union by index keeps it deterministic; path compression bounds depth
                    let (root, other) = if rp < rq { (rp, rq) } else { (rq, rp) };
                    uf[other as usize] = root;
                    node_of[root as usize] = np;
                }
            }
        }

        for id in 0..nodes.len() {
            if !nodes[id].alive {
                continue;
            }
            let mut c = nodes[id].first_child;
            while c != NIL {
                nodes[c as usize].parent = id as u32;
                c = nodes[c as usize].next_sibling;
            }
        }

        let delta = delta as usize;
        let stride = delta + 1;
        let mut below = vec![NO_BELOW; nodes.len() * stride];
        // children always precede their parent in id order
        for id in 0..nodes.len() {
            if !nodes[id].alive {
                continue;
            }
            let level = nodes[id].level as i64;
            let mut c = nodes[id].first_child;
            while c != NIL {
                let child = &nodes[c as usize];
                for k in 0..stride {
                    let s = level - 1 - k as i64;
                    if s < 0 {
                        break;
                    }
                    let cand = if child.level as i64 <= s {
                        Below {
                            area: child.area,
                            min_idx: child.min_idx,
                            node: c,
                        }
                    } else {
                        let j = (child.level as i64 - 1 - s) as usize;
                        below[c as usize * stride + j]
                    };
                    let slot = &mut below[id * stride + k];
                    if cand.node != NIL && cand.better_than(slot) {
                        *slot = cand;
                    }
                }
                c = child.next_sibling;
            }
        }

        ComponentTree {
            nodes,
            next_pix,
            below,
            delta,
            top,
        }
    }

    /// First level at which `id` no longer exists as itself.
    fn end(&self, id: u32) -> usize {
        let p = self.nodes[id as usize].parent;
        if p == NIL {
            self.top as usize + 1
        } else {
            self.nodes[p as usize].level as usize
        }
    }

    fn below(&self, id: u32, s: i64) -> Below {
        let n = &self.nodes[id as usize];
        if s < 0 {
            NO_BELOW
        } else if s >= n.level as i64 {
            Below {
                area: n.area,
                min_idx: n.min_idx,
                node: id,
            }
        } else {
            self.below[id as usize * (self.delta + 1) + (n.level as i64 - 1 - s) as usize]
        }
    }

    /// Variation of node `id` evaluated at level `t` inside its lifetime.
    fn variation(&self, id: u32, t: usize) -> Variation {
        let up_level = (t + self.delta).min(255);
        let mut m = id;
        while self.end(m) <= up_level {
            m = self.nodes[m as usize].parent;
        }
        let down = self.below(id, t as i64 - self.delta as i64).area;
        let area = self.nodes[id as usize].area as i64;
        Variation {
            num: self.nodes[m as usize].area as i64 - down as i64,
            den: area,
        }
    }

    fn is_ancestor(&self, anc: u32, mut id: u32) -> bool {
        let lvl = self.nodes[anc as usize].level;
        while id != NIL {
            if id == anc {
                return true;
            }
            let n = &self.nodes[id as usize];
            if n.level > lvl {
                return false;
            }
            id = n.parent;
        }
        false
    }

    fn pixels(&self, id: u32) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.nodes[id as usize].area as usize);
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            let mut p = node.pix_head;
            loop {
                out.push(p);
                if p == node.pix_tail {
                    break;
                }
                p = self.next_pix[p as usize];
            }
            let mut c = node.first_child;
            while c != NIL {
                stack.push(c);
                c = self.nodes[c as usize].next_sibling;
            }
        }
        out.sort_unstable();
        out
    }
}

struct Candidate {
    node: u32,
    level: u8,
    q: Variation,
}

/// Maximally stable dark regions of a single image.
pub fn component_tree_regions(img: &GrayImage, p: &MserParams) -> Result<Vec<Region>> {
    p.validate()?;
    let top = (p.max_level as usize + p.delta as usize + 1).min(255) as u8;
    let tree = ComponentTree::build(img, p.delta, top);

    let mut cands: Vec<Candidate> = Vec::new();
    for id in 0..tree.nodes.len() as u32 {
        let node = &tree.nodes[id as usize];
        if !node.alive || node.level > p.max_level {
            continue;
        }
        let area = node.area as usize;
        if area < p.min_area || area > p.max_area {
            continue;
        }
        let last = (tree.end(id) - 1).min(p.max_level as usize);
        let mut best: Option<Candidate> = None;
        for t in node.level as usize..=last {
            let q = tree.variation(id, t);
            if q.num as f64 > p.max_variation * q.den as f64 {
                continue;
            }
            let next = if t + 1 > 255 {
                None
            } else if t + 1 < tree.end(id) {
                Some(tree.variation(id, t + 1))
            } else {
                Some(tree.variation(node.parent, t + 1))
            };
            if !le(q, next) {
                continue;
            }
            let prev = if t == 0 {
                None
            } else if t > node.level as usize {
                Some(tree.variation(id, t - 1))
            } else {
                let b = tree.below(id, t as i64 - 1);
                (b.node != NIL).then(|| tree.variation(b.node, t - 1))
            };
            if !le(q, prev) {
                continue;
            }
            if best.as_ref().is_none_or(|b| q.cmp(b.q) == Ordering::Less) {
                best = Some(Candidate {
                    node: id,
                    level: t as u8,
                    q,
                });
            }
        }
        cands.extend(best);
    }

    cands.sort_by(|a, b| {
        a.q.cmp(b.q)
            .then(a.level.cmp(&b.level))
            .then(tree.nodes[a.node as usize].min_idx.cmp(&tree.nodes[b.node as usize].min_idx))
    });
    let mut kept: Vec<&Candidate> = Vec::new();
    for c in &cands {
        let ca = tree.nodes[c.node as usize].area as f64;
        let redundant = kept.iter().any(|k| {
            let ka = tree.nodes[k.node as usize].area as f64;
            let nested = if ka >= ca {
                tree.is_ancestor(k.node, c.node)
            } else {
                tree.is_ancestor(c.node, k.node)
            };
            nested && ca.min(ka) / ca.max(ka) >= 1.0 - p.min_diversity
        });
        if !redundant {
            kept.push(c);
        }
    }
    kept.sort_by_key(|c| (c.level, tree.nodes[c.node as usize].min_idx));

    let w = img.width();
    Ok(kept
        .into_iter()
        .map(|c| {
            let pix = tree.pixels(c.node);
            let pixels: Vec<(u32, u32)> = pix.iter().map(|&i| (i % w as u32, i / w as u32)).collect();
            let boundary = outer_boundary(&pixels)
                .into_iter()
                .map(|(x, y)| (x as f64, y as f64))
                .collect();
            Region {
                area: pixels.len(),
                pixels,
                level: c.level,
                variation: c.q.value(),
                boundary,
                octave: 0,
            }
        })
        .collect())
}

/// Moore-neighbour trace of the outer contour of a 4-connected pixel set,
/// starting from its first pixel in raster order.
pub fn outer_boundary(pixels: &[(u32, u32)]) -> Vec<(i64, i64)> {
    let Some(&start) = pixels.iter().min_by_key(|&&(x, y)| (y, x)) else {
        return Vec::new();
    };
    let (min_x, max_x) = pixels
        .iter()
        .fold((u32::MAX, 0), |(lo, hi), &(x, _)| (lo.min(x), hi.max(x)));
    let (min_y, max_y) = pixels
        .iter()
        .fold((u32::MAX, 0), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
    // one pixel of padding on every side
    let bw = (max_x - min_x + 3) as usize;
    let bh = (max_y - min_y + 3) as usize;
    let mut mask = vec![false; bw * bh];
    for &(x, y) in pixels {
        mask[(y - min_y + 1) as usize * bw + (x - min_x + 1) as usize] = true;
    }
    let inside = |x: i64, y: i64| mask[y as usize * bw + x as usize];

    // clockwise in image coordinates (y down), starting west
    const DIRS: [(i64, i64); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];
    let s = ((start.0 - min_x + 1) as i64, (start.1 - min_y + 1) as i64);
    let to_img = |(x, y): (i64, i64)| (x + min_x as i64 - 1, y + min_y as i64 - 1);

    let mut contour = vec![to_img(s)];
    let mut cur = s;
    // the start is the topmost-leftmost pixel, so its west neighbour is empty
    let mut back = 0usize;
    let mut first_move: Option<((i64, i64), usize)> = None;
    let limit = 4 * pixels.len() + 8;
    for _ in 0..limit {
        let mut found = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let (nx, ny) = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            if inside(nx, ny) {
                found = Some(((nx, ny), d));
                break;
            }
        }
        let Some((next, d)) = found else {
            break; // isolated pixel
        };
        match first_move {
            None => first_move = Some((next, d)),
            Some(fm) if cur == s && fm == (next, d) => {
                contour.pop();
                break;
            }
            _ => {}
        }
        contour.push(to_img(next));
        cur = next;
        // resume the sweep from the neighbour preceding the one we came from
        back = (d + 5) % 8;
    }
    if contour.len() > 1 && contour.first() == contour.last() {
        contour.pop();
    }
    contour
}

/// MSER on each octave of a half-resolution pyramid. Coarse-octave regions
/// are mapped back to input coordinates; a coarse region duplicating a finer
/// one (centre distance below `dup_dist`, area ratio within a factor of two)
/// is dropped.
pub fn detect_multiscale(img: &GrayImage, p: &MserParams, octaves: u32) -> Result<Vec<Region>> {
    detect_multiscale_with(img, p, octaves, DEFAULT_DUP_DIST)
}

pub const DEFAULT_DUP_DIST: f64 = 5.0;

pub fn detect_multiscale_with(img: &GrayImage, p: &MserParams, octaves: u32, dup_dist: f64) -> Result<Vec<Region>> {
    if octaves == 0 {
        return Err(Error::InvalidParameter("octaves must be at least 1".into()));
    }
    p.validate()?;
    let mut all = component_tree_regions(img, p)?;
    if octaves == 1 {
        return Ok(all);
    }

    let mut level_img = img.clone();
    for octave in 1..octaves {
        if level_img.width() < 4 || level_img.height() < 4 {
            break;
        }
        level_img = downsample_half(&level_img)?;
        let factor = 1usize << octave;
        let scale2 = factor * factor;
        let min_area = p.min_area.div_ceil(scale2).max(1);
        let max_area = p.max_area / scale2;
        if max_area <= min_area {
            break;
        }
        let op = MserParams {
            min_area,
            max_area,
            ..*p
        };
        let f = factor as u32;
        let shift = (factor as f64 - 1.0) / 2.0;
        for r in component_tree_regions(&level_img, &op)? {
            let mut pixels = Vec::with_capacity(r.area * scale2);
            for &(x, y) in &r.pixels {
                for dy in 0..f {
                    for dx in 0..f {
                        pixels.push((x * f + dx, y * f + dy));
                    }
                }
            }
            pixels.sort_unstable_by_key(|&(x, y)| (y, x));
            all.push(Region {
                area: pixels.len(),
                pixels,
                level: r.level,
                variation: r.variation,
                boundary: r
                    .boundary
                    .iter()
                    .map(|&(x, y)| (x * factor as f64 + shift, y * factor as f64 + shift))
                    .collect(),
                octave,
            });
        }
    }

    // finer octaves first; within an octave by level
    all.sort_by_key(|r| (r.octave, r.level, r.pixels.first().map(|&(x, y)| (y, x))));
    let centers: Vec<(f64, f64)> = all.iter().map(Region::center).collect();
    let mut keep: Vec<usize> = Vec::new();
    for i in 0..all.len() {
        let dup = keep.iter().any(|&k| {
            if all[k].octave == all[i].octave {
                return false;
            }
            let d = ((centers[i].0 - centers[k].0).powi(2) + (centers[i].1 - centers[k].1).powi(2)).sqrt();
            let ratio = all[i].area as f64 / all[k].area as f64;
            d < dup_dist && (0.5..=2.0).contains(&ratio)
        });
        if !dup {
            keep.push(i);
        }
    }
    let mut out: Vec<Region> = Vec::with_capacity(keep.len());
    let mut taken: Vec<Option<Region>> = all.into_iter().map(Some).collect();
    for k in keep {
        out.push(taken[k].take().expect("each region kept once"));
    }
    Ok(out)
}

/// Label map for visual inspection: region `k` is painted with a distinct
/// gray value, later regions over earlier ones.
pub fn label_map(width: usize, height: usize, regions: &[Region]) -> GrayImage {
    let mut img = GrayImage::filled(width, height, 0);
    let n = regions.len().max(1);
    for (k, r) in regions.iter().enumerate() {
        let v = (((k + 1) * 255) / n).clamp(1, 255) as u8;
        for &(x, y) in &r.pixels {
            if (x as usize) < width && (y as usize) < height {
                img.set(x as usize, y as usize, v);
            }
        }
    }
    img
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Brute-force reference: labels every threshold level independently.

    use super::*;
    use std::collections::{HashMap, VecDeque};

    struct Level {
        label: Vec<u32>,
        area: Vec<u32>,
        min_idx: Vec<u32>,
    }

    fn label_level(img: &GrayImage, t: u8) -> Level {
        let (w, h) = (img.width(), img.height());
        let d = img.data();
        let mut label = vec![u32::MAX; w * h];
        let mut area = Vec::new();
        let mut min_idx = Vec::new();
        for s in 0..w * h {
            if d[s] > t || label[s] != u32::MAX {
                continue;
            }
            let id = area.len() as u32;
            let mut count = 0;
            let mut q = VecDeque::from([s]);
            label[s] = id;
            while let Some(i) = q.pop_front() {
                count += 1;
                let (x, y) = (i % w, i / w);
                let mut visit = |j: usize| {
                    if d[j] <= t && label[j] == u32::MAX {
                        label[j] = id;
                        q.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
            area.push(count);
            min_idx.push(s as u32);
        }
        Level { label, area, min_idx }
    }

    /// Reference regions as sorted pixel-index sets with their levels.
    pub fn regions(img: &GrayImage, p: &MserParams) -> Vec<(u8, Vec<u32>)> {
        let d = img.data();
        let levels: Vec<Level> = (0..=255u8).map(|t| label_level(img, t)).collect();
        let delta = p.delta as i64;

        // pixels of component `c` at level `t`
        let members = |t: usize, c: u32| -> Vec<u32> {
            (0..d.len() as u32).filter(|&i| levels[t].label[i as usize] == c).collect()
        };
        // largest component at level s inside component c of level t
        let largest_below = |t: usize, c: u32, s: i64| -> Option<u32> {
            if s < 0 {
                return None;
            }
            let s = s as usize;
            let mut best: Option<u32> = None;
            for i in 0..d.len() {
                if levels[t].label[i] != c || d[i] as usize > s {
                    continue;
                }
                let l = levels[s].label[i];
                best = match best {
                    None => Some(l),
                    Some(b) => {
                        let (la, ba) = (levels[s].area[l as usize], levels[s].area[b as usize]);
                        let better = la > ba
                            || (la == ba && levels[s].min_idx[l as usize] < levels[s].min_idx[b as usize]);
                        Some(if better { l } else { b })
                    }
                };
            }
            best
        };
        let q = |t: usize, c: u32| -> (i64, i64) {
            let lv = &levels[t];
            let seed = lv.min_idx[c as usize] as usize;
            let up_t = (t as i64 + delta).min(255) as usize;
            let up = levels[up_t].area[levels[up_t].label[seed] as usize] as i64;
            let down = largest_below(t, c, t as i64 - delta)
                .map(|b| levels[(t as i64 - delta) as usize].area[b as usize] as i64)
                .unwrap_or(0);
            (up - down, lv.area[c as usize] as i64)
        };
        let le = |a: (i64, i64), b: Option<(i64, i64)>| b.is_none_or(|b| a.0 * b.1 <= b.0 * a.1);

        // (min_idx, area) identifies a pixel set across levels
        let mut best: HashMap<(u32, u32), ((i64, i64), u8)> = HashMap::new();
        for t in 0..=p.max_level as usize {
            let lv = &levels[t];
            for c in 0..lv.area.len() as u32 {
                let area = lv.area[c as usize] as usize;
                if area < p.min_area || area > p.max_area {
                    continue;
                }
                let qc = q(t, c);
                if qc.0 as f64 > p.max_variation * qc.1 as f64 {
                    continue;
                }
                let next = (t < 255).then(|| {
                    let seed = lv.min_idx[c as usize] as usize;
                    q(t + 1, levels[t + 1].label[seed])
                });
                let prev = if t == 0 {
                    None
                } else {
                    largest_below(t, c, t as i64 - 1).map(|b| q(t - 1, b))
                };
                if !(le(qc, next) && le(qc, prev)) {
                    continue;
                }
                let key = (lv.min_idx[c as usize], area as u32);
                let better = match best.get(&key) {
                    None => true,
                    Some(&(bq, bl)) => {
                        let ord = (qc.0 * bq.1).cmp(&(bq.0 * qc.1));
                        ord == Ordering::Less || (ord == Ordering::Equal && (t as u8) < bl)
                    }
                };
                if better {
                    best.insert(key, (qc, t as u8));
                }
            }
        }

        let mut cands: Vec<(u32, u32, (i64, i64), u8)> =
            best.into_iter().map(|((m, a), (qv, l))| (m, a, qv, l)).collect();
        cands.sort_by(|a, b| {
            (a.2 .0 * b.2 .1)
                .cmp(&(b.2 .0 * a.2 .1))
                .then(a.3.cmp(&b.3))
                .then(a.0.cmp(&b.0))
        });
        let mut kept: Vec<(u8, Vec<u32>)> = Vec::new();
        for (m, _a, _q, l) in cands {
            let set = members(l as usize, levels[l as usize].label[m as usize]);
            let redundant = kept.iter().any(|(_, k)| {
                let (small, large) = if k.len() <= set.len() { (k, &set) } else { (&set, k) };
                let nested = large.binary_search(&small[0]).is_ok();
                nested && small.len() as f64 / large.len() as f64 >= 1.0 - p.min_diversity
            });
            if !redundant {
                kept.push((l, set));
            }
        }
        kept.sort_by_key(|(l, s)| (*l, s[0]));
        kept
    }
}
