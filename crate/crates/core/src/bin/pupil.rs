use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pupil_core::detector::{debug_products, detect_frame, DetectorConfig, TrackerState};
use pupil_core::edges::write_segments_csv;
use pupil_core::harness::{run_eval, EvalOptions};
use pupil_core::image::{load_image, save_image};
use pupil_core::mser::label_map;
use pupil_core::synth::{load_scene, render_sequence};
use pupil_core::Error;

#[derive(Parser)]
#[command(name = "pupil", about = "Pupil-centre detection for dark-pupil eye images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect the pupil centre in one image; prints `x,y,confidence,stage`.
    Detect {
        image: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write preprocessed image, edges, segments and regions here.
        #[arg(long)]
        debug_dir: Option<PathBuf>,
    },
    /// Evaluate a frame directory against `frame,x,y` ground truth.
    Eval {
        frames_dir: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        no_track: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u32).range(1..))]
        max_threshold: u32,
        /// Parallel sequences when `frames_dir` holds one subdirectory per sequence.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Render a synthetic sequence from a scene file.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        frames: usize,
    },
    /// Print the version.
    Version,
}

/// Failure with its process exit code.
struct Fail {
    code: u8,
    message: String,
}

impl Fail {
    fn input(e: Error) -> Self {
        Self {
            code: 2,
            message: e.to_string(),
        }
    }

    fn classify(e: Error) -> Self {
        Self {
            code: if e.is_input_error() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<DetectorConfig, Fail> {
    match path {
        Some(p) => DetectorConfig::load(p).map_err(Fail::input),
        None => Ok(DetectorConfig::default()),
    }
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<(), Fail> {
    fs::write(path, body).map_err(|e| Fail {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn create_dir(path: &Path) -> Result<(), Fail> {
    fs::create_dir_all(path).map_err(|e| Fail {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn detect(image: &Path, config: Option<&Path>, debug_dir: Option<&Path>) -> Result<(), Fail> {
    let cfg = load_config(config)?;
    let img = load_image(image).map_err(Fail::input)?;
    let (d, _) = detect_frame(&img, &TrackerState::default(), &cfg).map_err(Fail::classify)?;
    match d.center {
        Some((x, y)) => println!("{x:.6},{y:.6},{:.6},{}", d.confidence, d.stage),
        None => println!(",,{:.6},{}", d.confidence, d.stage),
    }
    if let Some(dir) = debug_dir {
        create_dir(dir)?;
        let dbg = debug_products(&img, &cfg).map_err(Fail::classify)?;
        let pre = &dbg.preprocessed;
        save_image(pre, dir.join("preprocessed.pgm")).map_err(Fail::classify)?;
        save_image(&dbg.edges.to_image(), dir.join("edges.pgm")).map_err(Fail::classify)?;
        save_image(&label_map(pre.width(), pre.height(), &dbg.regions), dir.join("regions.pgm"))
            .map_err(Fail::classify)?;
        let mut seg = Vec::new();
        write_segments_csv(&dbg.segments, &mut seg).map_err(|e| Fail {
            code: 3,
            message: e.to_string(),
        })?;
        write_file(&dir.join("segments.csv"), seg)?;
    }
    Ok(())
}

fn synth(spec: &Path, out_dir: &Path, frames: usize) -> Result<(), Fail> {
    let (scene, drift) = load_scene(spec).map_err(Fail::input)?;
    let seq = render_sequence(&scene, frames, drift).map_err(Fail::input)?;
    create_dir(out_dir)?;
    let mut truth = String::from("frame,x,y\n");
    for (k, (img, (x, y))) in seq.iter().enumerate() {
        save_image(img, out_dir.join(format!("{k:06}.png"))).map_err(Fail::classify)?;
        let _ = writeln!(truth, "{k},{x:.6},{y:.6}");
    }
    write_file(&out_dir.join("truth.csv"), truth)
}

fn run(cli: Cli) -> Result<(), Fail> {
    match cli.command {
        Command::Detect {
            image,
            config,
            debug_dir,
        } => detect(&image, config.as_deref(), debug_dir.as_deref()),
        Command::Eval {
            frames_dir,
            gt,
            config,
            no_track,
            out_dir,
            max_threshold,
            jobs,
        } => {
            let opts = EvalOptions {
                config: load_config(config.as_deref())?,
                tracking: !no_track,
                max_threshold,
                out_dir,
                jobs,
            };
            let report = run_eval(&frames_dir, &gt, &opts).map_err(Fail::classify)?;
            println!("{}", report.summary());
            Ok(())
        }
        Command::Synth { spec, out_dir, frames } => synth(&spec, &out_dir, frames),
        Command::Version => {
            println!("pupil {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
