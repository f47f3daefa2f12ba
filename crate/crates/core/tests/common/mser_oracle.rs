//! Brute-force dark-MSER reference: every threshold level is labelled from
//! scratch with a 4-connected flood fill.

use std::collections::HashMap;

use pupil_core::image::GrayImage;
use pupil_core::mser::MserParams;

struct Level {
    label: Vec<u32>,
    area: Vec<i64>,
    /// Smallest raster index of each component.
    first: Vec<u32>,
}

fn label_level(d: &[u8], w: usize, h: usize, t: u8) -> Level {
    let mut label = vec![u32::MAX; w * h];
    let (mut area, mut first) = (Vec::new(), Vec::new());
    let mut stack = Vec::new();
    for s in 0..w * h {
        if d[s] > t || label[s] != u32::MAX {
            continue;
        }
        let id = area.len() as u32;
        label[s] = id;
        stack.push(s);
        let mut n = 0;
        while let Some(i) = stack.pop() {
            n += 1;
            let (x, y) = (i % w, i / w);
            let nb = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for j in nb.into_iter().flatten() {
                if d[j] <= t && label[j] == u32::MAX {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        area.push(n);
        first.push(s as u32);
    }
    Level { label, area, first }
}

/// For every component of level `t`, the largest component of level `s < t`
/// inside it (ties: smaller first index).
fn largest_inside(d: &[u8], levels: &[Level], t: usize, s: usize) -> Vec<Option<u32>> {
    let lt = &levels[t];
    let ls = &levels[s];
    let mut best: Vec<Option<u32>> = vec![None; lt.area.len()];
    for i in 0..d.len() {
        if d[i] as usize > s {
            continue;
        }
        let (c, b) = (lt.label[i] as usize, ls.label[i]);
        let replace = match best[c] {
            None => true,
            Some(o) => {
                let (ab, ao) = (ls.area[b as usize], ls.area[o as usize]);
                ab > ao || (ab == ao && ls.first[b as usize] < ls.first[o as usize])
            }
        };
        if replace {
            best[c] = Some(b);
        }
    }
    best
}

/// Reference regions: `(level, sorted raster indices)`, sorted by level then
/// first index.
pub fn regions(img: &GrayImage, p: &MserParams) -> Vec<(u8, Vec<u32>)> {
    let (w, h, d) = (img.width(), img.height(), img.data());
    let levels: Vec<Level> = (0..=255u8).map(|t| label_level(d, w, h, t)).collect();
    let delta = p.delta as usize;

    // variation numerator/denominator of every component at every level
    let q: Vec<Vec<(i64, i64)>> = (0..256)
        .map(|t| {
            let lt = &levels[t];
            let up_t = (t + delta).min(255);
            let down = if t >= delta {
                largest_inside(d, &levels, t, t - delta)
            } else {
                vec![None; lt.area.len()]
            };
            (0..lt.area.len())
                .map(|c| {
                    let seed = lt.first[c] as usize;
                    let up = levels[up_t].area[levels[up_t].label[seed] as usize];
                    let dn = down[c].map_or(0, |b| levels[t - delta].area[b as usize]);
                    (up - dn, lt.area[c])
                })
                .collect()
        })
        .collect();
    let le = |a: (i64, i64), b: Option<(i64, i64)>| b.is_none_or(|b| a.0 * b.1 <= b.0 * a.1);

    let mut best: HashMap<(u32, i64), ((i64, i64), u8)> = HashMap::new();
    for t in 0..=p.max_level as usize {
        let lt = &levels[t];
        let prev_map = (t > 0).then(|| largest_inside(d, &levels, t, t - 1));
        for c in 0..lt.area.len() {
            let area = lt.area[c];
            if (area as usize) < p.min_area || area as usize > p.max_area {
                continue;
            }
            let qc = q[t][c];
            if qc.0 as f64 > p.max_variation * qc.1 as f64 {
                continue;
            }
            let seed = lt.first[c] as usize;
            let next = (t < 255).then(|| q[t + 1][levels[t + 1].label[seed] as usize]);
            let prev = prev_map.as_ref().and_then(|m| m[c]).map(|b| q[t - 1][b as usize]);
            if !(le(qc, next) && le(qc, prev)) {
                continue;
            }
            let key = (lt.first[c], area);
            let better = match best.get(&key) {
                None => true,
                Some(&(bq, bl)) => {
                    let (l, r) = (qc.0 * bq.1, bq.0 * qc.1);
                    l < r || (l == r && (t as u8) < bl)
                }
            };
            if better {
                best.insert(key, (qc, t as u8));
            }
        }
    }

    let mut cands: Vec<(u32, (i64, i64), u8)> = best.into_iter().map(|((f, _), (qv, l))| (f, qv, l)).collect();
    cands.sort_by(|a, b| (a.1 .0 * b.1 .1).cmp(&(b.1 .0 * a.1 .1)).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(u8, Vec<u32>)> = Vec::new();
    for (f, _, l) in cands {
        let lv = &levels[l as usize];
        let c = lv.label[f as usize];
        let set: Vec<u32> = (0..d.len() as u32).filter(|&i| lv.label[i as usize] == c).collect();
        let redundant = kept.iter().any(|(_, k)| {
            let (small, large) = if k.len() <= set.len() { (k, &set) } else { (&set, k) };
            large.binary_search(&small[0]).is_ok() && small.len() as f64 / large.len() as f64 >= 1.0 - p.min_diversity
        });
        if !redundant {
            kept.push((l, set));
        }
    }
    kept.sort_by_key(|(l, s)| (*l, s[0]));
    kept
}
