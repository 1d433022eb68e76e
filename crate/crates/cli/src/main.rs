use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use planesdf::evaluation::{score, EvaluationReport};
use planesdf::pipeline::{run, write_artifacts, Direction};
use planesdf::scene_io::synthetic::{generate_scene_pair, ScenarioKind, SyntheticScenario};
use planesdf::scene_io::{
    load_labeled_point_cloud, load_point_cloud_auto, save_labeled_point_cloud,
    LabeledPointCloud,
};
use planesdf::{Error, PipelineConfig};

#[derive(Parser)]
#[command(name = "planesdf", version, about = "Object-level change detection between two point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect changed objects between a source and a target cloud.
    Detect {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Config override, e.g. `--set delta_h=0.03`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "both")]
        direction: Direction,
        /// Labeled PLY of ground-truth changed points; enables scoring.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// RANSAC seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Also write every plane's SDF volume.
        #[arg(long)]
        dump_volumes: bool,
    },
    /// Generate a synthetic scene pair with ground truth.
    Gen {
        /// add, remove, move, swap or unchanged.
        #[arg(long)]
        scenario: ScenarioKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sensor noise standard deviation in meters.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a detected cloud against labeled ground truth.
    Eval {
        #[arg(long)]
        detected: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

/// 2: bad input, 3: bad config, 4: internal invariant violated.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 3,
        Error::Invariant(_) => 4,
        _ => 2,
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Error> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn evaluate(detected: &planesdf::PointCloud, gt: &LabeledPointCloud, config: &PipelineConfig) -> EvaluationReport {
    score(detected, gt, config.match_radius, 2.0 * config.voxel_size)
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Detect {
            source,
            target,
            config,
            overrides,
            out,
            direction,
            gt,
            seed,
            dump_volumes,
        } => {
            let mut cfg = PipelineConfig::load(config.as_deref(), &overrides)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            // Everything is read before the output directory exists, so bad
            // input leaves nothing behind.
            let src = load_point_cloud_auto(&source)?;
            let tgt = load_point_cloud_auto(&target)?;
            let gt = gt.map(load_labeled_point_cloud).transpose()?;

            let start = Instant::now();
            let det = run(&src, &tgt, &cfg, direction)?;
            write_artifacts(&det, &cfg, &out, dump_volumes)?;
            println!(
                "planes: {} source, {} target ({:.2}s)",
                det.source_planes.len(),
                det.target_planes.len(),
                start.elapsed().as_secs_f64()
            );
            for d in det.directions() {
                let validated = d.pairs.iter().map(|p| p.verdicts.len()).sum::<usize>();
                let changed = d
                    .pairs
                    .iter()
                    .flat_map(|p| &p.verdicts)
                    .filter(|v| v.changed)
                    .count();
                println!(
                    "{}: {} pairings, {validated} blobs validated, {changed} changed, {} changed voxels",
                    d.direction,
                    d.matches.pairings.len(),
                    d.changed_points.len()
                );
            }
            if let Some(gt) = gt {
                let report = evaluate(&det.changed_points(), &gt, &cfg);
                print!("{}", report.to_text());
                write_file(&out.join("report.txt"), report.to_text())?;
                write_file(
                    &out.join("report.csv"),
                    format!("{}\n{}\n", EvaluationReport::CSV_HEADER, report.to_csv_row()),
                )?;
            }
            Ok(())
        }
        Command::Gen {
            scenario,
            seed,
            noise,
            out,
        } => {
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Error::Validation(format!("noise must be a finite non-negative number, got {noise}")));
            }
            let scenario = SyntheticScenario::random(scenario, seed).with_noise(noise);
            let pair = generate_scene_pair(&scenario, seed)?;
            create_dir(&out)?;
            save_labeled_point_cloud(&pair.source, out.join("source.ply"))?;
            save_labeled_point_cloud(&pair.target, out.join("target.ply"))?;
            let fwd = pair.gt_forward();
            let bwd = pair.gt_backward();
            save_labeled_point_cloud(&fwd, out.join("gt_forward.ply"))?;
            save_labeled_point_cloud(&bwd, out.join("gt_backward.ply"))?;
            save_labeled_point_cloud(&fwd.concat(&bwd), out.join("gt.ply"))?;
            write_file(&out.join("ground_truth.csv"), pair.ground_truth.to_csv())?;
            println!(
                "{} scenario, seed {seed}: {} source points, {} target points, changed objects {:?}",
                scenario.kind,
                pair.source.cloud.len(),
                pair.target.cloud.len(),
                pair.ground_truth.changed_ids()
            );
            Ok(())
        }
        Command::Eval {
            detected,
            gt,
            config,
            overrides,
        } => {
            let cfg = PipelineConfig::load(config.as_deref(), &overrides)?;
            let det = load_point_cloud_auto(&detected)?;
            let gt = load_labeled_point_cloud(&gt)?;
            let report = evaluate(&det, &gt, &cfg);
            print!("{}", report.to_text());
            Ok(())
        }
    }
}
