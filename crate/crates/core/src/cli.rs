//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::io::{frame_sets, load_detections, load_tracks, write_detections, write_tracks, write_truth};
use crate::metrics::{evaluate, EvaluationReport};
use crate::simulator::simulate;
use crate::tracker::{records, FrameOutput, Tracker};

#[derive(Debug, Parser)]
#[command(name = "vbtrack", version, about = "Variational Bayesian multi-object tracker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scene; writes detections.txt (+ .hist sidecar) and truth.txt.
    Simulate {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track a detection file.
    Track {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate tracks against ground truth.
    Eval {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        report_format: ReportFormat,
        /// Report file; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate, track and evaluate a preset in one go.
    Demo {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        report_format: ReportFormat,
    },
    /// Print the effective configuration.
    Config {
        #[command(flatten)]
        settings: Settings,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Structured,
}

/// Settings are layered: preset (or defaults), then the config file, then
/// `--set`, then `--seed` and `--max-iters`.
#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any config key, e.g. `--set pi_v=0.95`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Simulator seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

impl Settings {
    pub fn resolve(&self) -> Result<Config> {
        let mut c = match &self.preset {
            Some(name) => Config::preset(name)?,
            None => Config::default(),
        };
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        for pair in &self.set {
            c.set_pair(pair)?;
        }
        if let Some(seed) = self.seed {
            c.sim_seed = seed;
        }
        if let Some(n) = self.max_iters {
            c.vem.max_iterations = n;
        }
        Ok(c)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_simulate(config: &Config, out_dir: &Path) -> Result<()> {
    let scene = simulate(&config.scenario()?)?;
    create_dir(out_dir)?;
    write_detections(&out_dir.join("detections.txt"), &scene.detections)?;
    write_truth(&out_dir.join("truth.txt"), &scene.truth.frames)?;
    info!(
        "simulated {} frames, {} detections",
        scene.detections.len(),
        scene.detections.iter().map(Vec::len).sum::<usize>()
    );
    Ok(())
}

pub fn cmd_track(config: &Config, detections: &Path, out: &Path) -> Result<Vec<FrameOutput>> {
    let stream = load_detections(detections, config.appearance_bins)?;
    let mut tracker = Tracker::new(config.model_params()?)?;
    let mut outputs = Vec::with_capacity(stream.len());
    for (t, dets) in stream.iter().enumerate() {
        let o = tracker.step(t as u64 + 1, dets)?;
        info!(
            "frame {}: detections={} reported={} births={} iterations_used={} converged={}",
            o.frame,
            dets.len(),
            o.reported.len(),
            o.births.len(),
            o.iterations_used,
            o.converged
        );
        outputs.push(o);
    }
    write_tracks(out, &records(&outputs))?;
    Ok(outputs)
}

pub fn cmd_eval(config: &Config, truth: &Path, tracks: &Path) -> Result<EvaluationReport> {
    let truth = load_tracks(truth)?;
    let hyps = load_tracks(tracks)?;
    let frames = truth.iter().chain(&hyps).map(|r| r.frame).max().unwrap_or(0) as usize;
    evaluate(&frame_sets(&truth, frames), &frame_sets(&hyps, frames), &config.metrics_config()?)
}

pub fn render(report: &EvaluationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Structured => report.to_json() + "\n",
    }
}

pub struct DemoSummary {
    pub report: EvaluationReport,
    pub mean_iterations: f64,
    pub converged_fraction: f64,
}

impl DemoSummary {
    pub fn table(&self) -> String {
        let c = &self.report.clear;
        format!(
            "{:<10} {:>7} {:>7} {:>5} {:>5} {:>5} {:>8} {:>8} {:>8} {:>9}\n\
             {:<10} {:>7.2} {:>7.2} {:>5} {:>5} {:>5} {:>8.3} {:>8.3} {:>8.2} {:>9.3}\n",
            "frames", "MOTA", "MOTP", "FP", "FN", "IDSW", "OSPA", "count=0", "iters", "converged",
            self.report.frames,
            c.mota,
            c.motp,
            c.false_positives,
            c.false_negatives,
            c.id_switches,
            self.report.sets.mean_ospa,
            self.report.counts.fraction_exact,
            self.mean_iterations,
            self.converged_fraction,
        )
    }
}

/// Simulate, track and evaluate into `out_dir`.
pub fn cmd_demo(config: &Config, out_dir: &Path, format: ReportFormat) -> Result<DemoSummary> {
    cmd_simulate(config, out_dir)?;
    let tracks = out_dir.join("tracks.txt");
    let outputs = cmd_track(config, &out_dir.join("detections.txt"), &tracks)?;
    let report = cmd_eval(config, &out_dir.join("truth.txt"), &tracks)?;
    let name = match format {
        ReportFormat::Text => "report.txt",
        ReportFormat::Structured => "report.json",
    };
    let path = out_dir.join(name);
    fs::write(&path, render(&report, format)).map_err(|e| Error::io(&path, e))?;
    let n = outputs.len().max(1) as f64;
    Ok(DemoSummary {
        report,
        mean_iterations: outputs.iter().map(|o| o.iterations_used as f64).sum::<f64>() / n,
        converged_fraction: outputs.iter().filter(|o| o.converged).count() as f64 / n,
    })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { settings, out } => cmd_simulate(&settings.resolve()?, &out),
        Command::Track {
            settings,
            detections,
            out,
        } => cmd_track(&settings.resolve()?, &detections, &out).map(|_| ()),
        Command::Eval {
            settings,
            truth,
            tracks,
            report_format,
            out,
        } => {
            let report = cmd_eval(&settings.resolve()?, &truth, &tracks)?;
            let text = render(&report, report_format);
            match out {
                Some(path) => fs::write(&path, text).map_err(|e| Error::io(&path, e)),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Demo {
            settings,
            out,
            report_format,
        } => {
            let summary = cmd_demo(&settings.resolve()?, &out, report_format)?;
            print!("{}", summary.table());
            Ok(())
        }
        Command::Config { settings } => {
            print!("{}", settings.resolve()?.to_text());
            Ok(())
        }
    }
}
