use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vpp::bench::{bench_tracking, BenchParams};
use vpp::metrics::{load_ground_truth, report_metrics};
use vpp::run::{read_jsonl, FrameResult, StageTiming, RESULTS_FILE, TIMING_FILE};
use vpp::synth::{generate, SynthParams};
use vpp::{run_pipeline, PipelineConfig, PipelineError};
use vpp_core::imaging::{load_image, save_png};
use vpp_core::photometric::{relight, RelightMethod};

#[derive(Parser)]
#[command(
    name = "vpp",
    version,
    about = "Place a flat ad on empty wall space across a frame sequence"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process a frame directory as described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a run's results.jsonl against ground-truth quads.
    Eval {
        /// Output directory of a previous run.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        overlap_threshold: f64,
    },
    /// Reprojection error for every matcher and estimator combination.
    BenchTracking {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the rows as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relight an ad image against a background image.
    Relight {
        #[arg(long)]
        ad: PathBuf,
        #[arg(long)]
        bg: PathBuf,
        #[arg(long, value_parser = parse_method, default_value = "lab_light")]
        method: RelightMethod,
        #[arg(long, default_value = "relit.png")]
        out: PathBuf,
    },
    /// Write a synthetic kitchen sequence with artifacts, ground truth and a config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 31)]
        frames: usize,
        #[arg(long, default_value_t = 512)]
        width: usize,
        #[arg(long, default_value_t = 288)]
        height: usize,
        #[arg(long, default_value_t = 2, allow_negative_numbers = true)]
        step_x: i64,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        step_y: i64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 600)]
        ad_width: usize,
        #[arg(long, default_value_t = 300)]
        ad_height: usize,
        #[arg(long)]
        no_person: bool,
        /// Emit detections that fail the scene gate.
        #[arg(long)]
        not_kitchen: bool,
    },
}

fn parse_method(s: &str) -> Result<RelightMethod, String> {
    RelightMethod::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
        let names: Vec<&str> = RelightMethod::ALL.iter().map(|m| m.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn execute(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::Run { config } => {
            let cfg = PipelineConfig::load(&config)?;
            let summary = run_pipeline(&cfg)?;
            let m = &summary.metrics;
            println!(
                "{} frames, {} kitchen, {} placed, {} with errors, {:.2} fps -> {}",
                m.frames,
                m.kitchen_frames,
                m.placed_frames,
                m.failed_frames,
                m.fps.unwrap_or(0.0),
                cfg.output.display()
            );
            if let Some(iou) = m.mean_iou {
                println!("mean IoU {iou:.4}, GT overlap {}/{}", m.gt_overlap, m.gt_frames);
            }
        }
        Command::Eval {
            pred,
            gt,
            overlap_threshold,
        } => {
            let results: Vec<FrameResult> = read_jsonl(&pred.join(RESULTS_FILE))?;
            let timing_path = pred.join(TIMING_FILE);
            let timings: Vec<StageTiming> = if timing_path.is_file() {
                read_jsonl(&timing_path)?
            } else {
                Vec::new()
            };
            let truth = load_ground_truth(&gt)?;
            let report = report_metrics(&results, Some(&truth), &timings, overlap_threshold);
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::BenchTracking {
            config,
            sigma,
            seed,
            out,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let rows = bench_tracking(&cfg, &BenchParams { sigma, seed })?;
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |e| format!("{e:.3}"));
            println!(
                "{:<42} {:>8} {:>8} {:>9} {:>9} {:>8}",
                "method", "matches", "inliers", "kp_err", "quad_err", "ms/pair"
            );
            for r in &rows {
                println!(
                    "{:<42} {:>8.1} {:>8.1} {:>9} {:>9} {:>8.2}{}",
                    r.method,
                    r.mean_matches,
                    r.mean_inliers,
                    fmt(r.keypoint_error),
                    fmt(r.quad_error),
                    r.ms_per_pair,
                    if r.failures > 0 {
                        format!("  ({} failed pairs)", r.failures)
                    } else {
                        String::new()
                    }
                );
            }
            if let Some(out) = out {
                write_file(&out, &serde_json::to_string_pretty(&rows).expect("rows serialize"))?;
            }
        }
        Command::Relight { ad, bg, method, out } => {
            let (ad, bg) = (load_image(&ad)?, load_image(&bg)?);
            save_png(&relight(method, &ad, &bg), &out)?;
        }
        Command::Synth {
            out,
            frames,
            width,
            height,
            step_x,
            step_y,
            seed,
            ad_width,
            ad_height,
            no_person,
            not_kitchen,
        } => {
            let params = SynthParams {
                width,
                height,
                frames,
                step: (step_x, step_y),
                seed,
                person: !no_person,
                kitchen: !not_kitchen,
                ad_size: (ad_width, ad_height),
                ..SynthParams::default()
            };
            generate(&params)?.write(&out)?;
            println!("wrote {frames} frames to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
