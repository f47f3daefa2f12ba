//! Evaluation against ground truth: pixel errors, detection-rate curves and
//! timing over directories of frames.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;

use crate::detector::{Detection, DetectorConfig, Stage, Tracker};
use crate::error::{Error, Result};
use crate::image::load_image;

/// Frame index to pupil centre in original image coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub entries: BTreeMap<u64, (f64, f64)>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, frame: u64) -> Option<(f64, f64)> {
        self.entries.get(&frame).copied()
    }
}

/// Parses `frame,x,y` lines. A leading non-numeric header line and `#`
/// comments are skipped.
pub fn parse_ground_truth(text: &str, path: &Path) -> Result<GroundTruth> {
    let err = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut gt = GroundTruth::default();
    let mut seen_data = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_data && fields.len() == 3 && fields.iter().all(|f| f.parse::<f64>().is_err()) {
            seen_data = true;
            continue;
        }
        seen_data = true;
        if fields.len() != 3 {
            return Err(err(line_no, 1, format!("expected `frame,x,y`, found {} fields", fields.len())));
        }
        let column = |k: usize| 1 + raw.split(',').take(k).map(|f| f.len() + 1).sum::<usize>();
        let frame: u64 = fields[0]
            .parse()
            .map_err(|_| err(line_no, column(0), format!("invalid frame index `{}`", fields[0])))?;
        let mut xy = [0.0; 2];
        for k in 0..2 {
            xy[k] = fields[k + 1]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(line_no, column(k + 1), format!("invalid coordinate `{}`", fields[k + 1])))?;
        }
        if gt.entries.insert(frame, (xy[0], xy[1])).is_some() {
            return Err(err(line_no, column(0), format!("duplicate frame {frame}")));
        }
    }
    Ok(gt)
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth(&text, path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PixelError {
    Px(f64),
    Missed,
}

impl PixelError {
    pub fn within(self, t: f64) -> bool {
        matches!(self, PixelError::Px(e) if e <= t)
    }
}

pub fn pixel_error(d: &Detection, gt: (f64, f64)) -> PixelError {
    match d.center {
        Some((x, y)) => PixelError::Px((x - gt.0).hypot(y - gt.1)),
        None => PixelError::Missed,
    }
}

/// `(t, rate)` for integer thresholds `1..=max_t`.
pub fn detection_rate_curve(errors: &[PixelError], max_t: u32) -> Result<Vec<(u32, f64)>> {
    if errors.is_empty() {
        return Err(Error::InvalidParameter("detection-rate curve needs at least one frame".into()));
    }
    if max_t == 0 {
        return Err(Error::InvalidParameter("max threshold must be at least 1".into()));
    }
    let n = errors.len() as f64;
    Ok((1..=max_t)
        .map(|t| (t, errors.iter().filter(|e| e.within(t as f64)).count() as f64 / n))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: u64,
    pub detection: Detection,
    pub error: PixelError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub frames: Vec<FrameResult>,
    pub curve: Vec<(u32, f64)>,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub edge_count: usize,
    pub mser_count: usize,
    pub miss_count: usize,
}

impl EvalReport {
    pub fn from_frames(frames: Vec<FrameResult>, max_t: u32) -> Result<Self> {
        let errors: Vec<PixelError> = frames.iter().map(|f| f.error).collect();
        let curve = detection_rate_curve(&errors, max_t)?;
        let mut ms: Vec<f64> = frames.iter().map(|f| f.detection.elapsed_ms).collect();
        ms.sort_by(f64::total_cmp);
        let mean_ms = ms.iter().sum::<f64>() / ms.len() as f64;
        let median_ms = if ms.len() % 2 == 1 {
            ms[ms.len() / 2]
        } else {
            (ms[ms.len() / 2 - 1] + ms[ms.len() / 2]) / 2.0
        };
        let count = |s: Stage| frames.iter().filter(|f| f.detection.stage == s).count();
        Ok(Self {
            edge_count: count(Stage::EdgeStage),
            mser_count: count(Stage::MserStage),
            miss_count: count(Stage::None),
            curve,
            mean_ms,
            median_ms,
            frames,
        })
    }

    /// Rate at threshold `t`, or 0 beyond the curve.
    pub fn rate_at(&self, t: u32) -> f64 {
        self.curve.iter().find(|&&(k, _)| k == t).map_or(0.0, |&(_, r)| r)
    }

    pub fn frames_csv(&self) -> String {
        let mut s = String::from("frame,x,y,confidence,stage,used_roi,ms\n");
        for f in &self.frames {
            let d = &f.detection;
            let (x, y) = match d.center {
                Some((x, y)) => (format!("{x:.6}"), format!("{y:.6}")),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                s,
                "{},{x},{y},{:.6},{},{},{:.6}",
                f.frame, d.confidence, d.stage, d.used_roi as u8, d.elapsed_ms
            );
        }
        s
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("threshold,rate\n");
        for (t, r) in &self.curve {
            let _ = writeln!(s, "{t},{r:.6}");
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "frames={} rate@5={:.6} mean_ms={:.6} median_ms={:.6} edge={} mser={} missed={}",
            self.frames.len(),
            self.rate_at(5),
            self.mean_ms,
            self.median_ms,
            self.edge_count,
            self.mser_count,
            self.miss_count
        )
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub config: DetectorConfig,
    pub tracking: bool,
    pub max_threshold: u32,
    pub out_dir: Option<PathBuf>,
    pub jobs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            config: DetectorConfig::default(),
            tracking: true,
            max_threshold: 15,
            out_dir: None,
            jobs: 1,
        }
    }
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm", "pnm", "ppm", "pbm"];

/// Image files of `dir` whose stem is a frame index, sorted by index.
pub fn list_frames(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        let index = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok());
        if let (true, Some(i)) = (ext_ok && path.is_file(), index) {
            out.push((i, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Runs one tracker over the frames of `dir` that have ground truth.
pub fn evaluate_frames(dir: &Path, gt: &GroundTruth, opts: &EvalOptions) -> Result<Vec<FrameResult>> {
    let mut tracker = Tracker::new(opts.config.clone())?;
    tracker.tracking = opts.tracking;
    let mut results = Vec::new();
    for (frame, path) in list_frames(dir)? {
        let Some(truth) = gt.get(frame) else {
            warn!("no ground truth for frame {frame} ({}); skipped", path.display());
            continue;
        };
        let img = load_image(&path)?;
        let detection = tracker.detect(&img)?;
        results.push(FrameResult {
            frame,
            error: pixel_error(&detection, truth),
            detection,
        });
    }
    Ok(results)
}

fn write_outputs(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [("frames.csv", report.frames_csv()), ("curve.csv", report.curve_csv())] {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Evaluates a frame directory. When `frames_dir` has no frames of its own,
/// each subdirectory is treated as an independent sequence with its own
/// tracker and its ground truth at `<gt_path>/<name>.csv` (if `gt_path` is a
/// directory) or the shared `gt_path` file.
pub fn run_eval(frames_dir: &Path, gt_path: &Path, opts: &EvalOptions) -> Result<EvalReport> {
    opts.config.validate()?;
    let own = list_frames(frames_dir)?;
    if !own.is_empty() || !has_subdirs(frames_dir)? {
        let gt = load_ground_truth(gt_path)?;
        let frames = evaluate_frames(frames_dir, &gt, opts)?;
        let report = EvalReport::from_frames(frames, opts.max_threshold)?;
        if let Some(out) = &opts.out_dir {
            write_outputs(out, &report)?;
        }
        return Ok(report);
    }

    let mut subdirs: Vec<PathBuf> = fs::read_dir(frames_dir)
        .map_err(|e| Error::io(frames_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    let per_dir = |dir: &PathBuf| -> Result<Vec<FrameResult>> {
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let gt_file = if gt_path.is_dir() {
            gt_path.join(format!("{name}.csv"))
        } else {
            gt_path.to_path_buf()
        };
        let gt = load_ground_truth(&gt_file)?;
        let frames = evaluate_frames(dir, &gt, opts)?;
        if let Some(out) = &opts.out_dir {
            if !frames.is_empty() {
                write_outputs(&out.join(name), &EvalReport::from_frames(frames.clone(), opts.max_threshold)?)?;
            }
        }
        Ok(frames)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let chunks: Vec<Result<Vec<FrameResult>>> = pool.install(|| subdirs.par_iter().map(per_dir).collect());
    let mut all = Vec::new();
    for c in chunks {
        all.extend(c?);
    }
    let report = EvalReport::from_frames(all, opts.max_threshold)?;
    if let Some(out) = &opts.out_dir {
        write_outputs(out, &report)?;
    }
    Ok(report)
}

fn has_subdirs(dir: &Path) -> Result<bool> {
    Ok(fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .any(|e| e.path().is_dir()))
}
