#![allow(dead_code)]

pub mod mser_oracle;

use pupil_core::detector::{DetectorConfig, Tracker};
use pupil_core::harness::{pixel_error, EvalReport, FrameResult};
use pupil_core::synth::{render, suite_scene, SceneSpec, Suite};

/// Seed for the evaluation suites; distinct from any seed used while
/// choosing detector defaults.
pub const SUITE_SEED: u64 = 7;

pub fn suite_specs(suite: Suite, n: u64) -> Vec<SceneSpec> {
    (0..n).map(|i| suite_scene(suite, i, SUITE_SEED)).collect()
}

/// Independent single frames, each detected from an empty tracker state.
pub fn eval_independent(specs: &[SceneSpec], cfg: &DetectorConfig) -> EvalReport {
    let frames = specs
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let (img, truth) = render(spec).expect("valid scene");
            let mut t = Tracker::new(cfg.clone()).expect("valid config");
            let detection = t.detect(&img).expect("detection runs");
            FrameResult {
                frame: k as u64,
                error: pixel_error(&detection, truth),
                detection,
            }
        })
        .collect();
    EvalReport::from_frames(frames, 15).expect("non-empty")
}

pub fn curve_is_sane(r: &EvalReport) -> bool {
    r.curve.iter().all(|&(_, v)| (0.0..=1.0).contains(&v)) && r.curve.windows(2).all(|w| w[0].1 <= w[1].1)
}
