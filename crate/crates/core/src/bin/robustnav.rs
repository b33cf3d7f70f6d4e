use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use robustnav::cli::{
    cmd_preview_corruption, cmd_replay, cmd_report, cmd_run, cmd_suite_gen, preview_pose, scene_ascii, RunConfig,
    SEED_ENV,
};
use robustnav::metrics::{GroupKey, ReportFormat};
use robustnav::render::{decode_ppm, encode_ppm, CameraIntrinsics};
use robustnav::task::{EnvConfig, TaskKind};
use robustnav::viscorrupt::{CorruptionStack, VisCorruption};
use robustnav::world::{generate_scene, load_scene, save_scene, GridMap, Pose, SceneParams};

#[derive(Parser)]
#[command(name = "robustnav", version, about = "Navigation benchmark under visual and dynamics corruptions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an episode suite.
    SuiteGen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        task: Option<TaskKind>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, env = SEED_ENV)]
        seed: Option<u64>,
        /// Number of generated scenes (seeds 0..n).
        #[arg(long)]
        scenes: Option<u64>,
    },
    /// Run an agent over a suite under every configured condition.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        calibration_budget: Option<u64>,
        #[arg(long, env = SEED_ENV)]
        seed: Option<u64>,
    },
    /// Aggregate traces into a report.
    Report {
        traces: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "corruption,visual,dynamics,sensor")]
        group_by: Vec<GroupKey>,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
    },
    /// Recompute a run's report from its traces and compare.
    Replay {
        run_dir: PathBuf,
        #[arg(long, value_delimiter = ',')]
        group_by: Option<Vec<GroupKey>>,
    },
    /// Write one corrupted egocentric frame as PPM.
    PreviewCorruption {
        #[arg(long, default_value_t = 0)]
        scene_seed: u64,
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Visual stack, e.g. `speckle:5+camera_crack`.
        #[arg(long, default_value = "clean", conflicts_with = "kind")]
        corruption: String,
        /// Single corruption kind, an alternative to `--corruption`.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, requires = "kind")]
        severity: Option<u8>,
        /// Corrupt this PPM instead of rendering a scene.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Also write the clean depth as raw little-endian f32.
        #[arg(long)]
        depth_out: Option<PathBuf>,
        #[arg(long, default_value_t = 224)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        frame: u64,
        /// Pose as x,y,heading; defaults to the most open spot.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        pose: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a top-down view of a scene and optionally save it.
    PreviewScene {
        #[arg(long, default_value_t = 0)]
        scene_seed: u64,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        save: Option<PathBuf>,
    },
}

fn scene(seed: u64, path: Option<&PathBuf>) -> Result<GridMap> {
    Ok(match path {
        Some(p) => load_scene(&fs::read(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => generate_scene(seed, &SceneParams::default())?,
    })
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    })
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::SuiteGen {
            config,
            out,
            task,
            episodes,
            seed,
            scenes,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(t) = task {
                cfg.suite.task = t;
            }
            if let Some(n) = episodes {
                cfg.suite.n_episodes = n;
            }
            if let Some(s) = seed {
                cfg.suite.seed = s;
            }
            if let Some(n) = scenes {
                cfg.scenes.generate = (0..n).collect();
            }
            let [e, m, h] = cmd_suite_gen(&cfg, &out)?;
            println!("wrote {}: easy {e}, medium {m}, hard {h}", out.display());
        }
        Cmd::Run {
            config,
            suite,
            out,
            agent,
            workers,
            calibration_budget,
            seed,
        } => {
            let mut cfg = load_config(Some(&config))?;
            if let Some(s) = seed {
                cfg.suite.seed = s;
            }
            if suite.is_some() {
                cfg.suite.file = suite;
            }
            if let Some(o) = out {
                cfg.run.output = o;
            }
            if let Some(a) = agent {
                cfg.agent.name = a;
            }
            if let Some(w) = workers {
                cfg.run.workers = w;
            }
            if let Some(b) = calibration_budget {
                cfg.run.calibration_budget = b;
            }
            let summary = cmd_run(&cfg)?;
            eprintln!(
                "{} episodes, report in {}",
                summary.episodes,
                summary.output.join("report.md").display()
            );
            if !summary.protocol_errors.is_empty() {
                for e in &summary.protocol_errors {
                    eprintln!("protocol error: {e}");
                }
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::Report {
            traces,
            group_by,
            format,
        } => {
            let bytes = cmd_report(&traces, &group_by, format)?;
            print!("{}", String::from_utf8_lossy(&bytes));
        }
        Cmd::Replay { run_dir, group_by } => {
            let r = cmd_replay(&run_dir, group_by.as_deref())?;
            print!("{}", String::from_utf8_lossy(&r.csv));
            if !r.mismatches.is_empty() {
                for m in &r.mismatches {
                    eprintln!("mismatch: {m}");
                }
                return Ok(ExitCode::from(1));
            }
            eprintln!("replay matches");
        }
        Cmd::PreviewCorruption {
            scene_seed,
            scene: path,
            corruption,
            kind,
            severity,
            input,
            depth_out,
            size,
            seed,
            frame,
            pose,
            out,
        } => {
            let stack = match kind {
                Some(k) => CorruptionStack::new(vec![VisCorruption::new(k.parse()?, severity, 0)?])?,
                None => CorruptionStack::parse(&corruption)?,
            };
            if let Some(inp) = input {
                let (w, h, rgb) = decode_ppm(&fs::read(&inp).with_context(|| format!("reading {}", inp.display()))?)?;
                let bound = stack.bind(seed, w, h);
                fs::write(&out, encode_ppm(w, h, &bound.apply(&rgb, w, h, frame)?))?;
                println!("wrote {} ({w}x{h}, {})", out.display(), stack.label());
                return Ok(ExitCode::SUCCESS);
            }
            let map = scene(scene_seed, path.as_ref())?;
            let mut env = EnvConfig::default();
            env.intrinsics = CameraIntrinsics::with_size(size, size);
            env.visual = stack;
            let pose = match pose.as_deref() {
                Some([x, y, h]) => Pose::new(*x, *y, *h),
                Some(_) => bail!("--pose takes x,y,heading"),
                None => preview_pose(&map, env.agent_radius)?,
            };
            let f = cmd_preview_corruption(&map, &pose, &env, seed, frame)?;
            fs::write(&out, f.to_ppm())?;
            if let Some(d) = depth_out {
                fs::write(&d, f.depth_le_bytes())?;
            }
            println!("wrote {} ({}x{}, {})", out.display(), f.width, f.height, env.visual.label());
        }
        Cmd::PreviewScene {
            scene_seed,
            scene: path,
            save,
        } => {
            let map = scene(scene_seed, path.as_ref())?;
            print!("{}", scene_ascii(&map));
            if let Some(p) = save {
                fs::write(&p, save_scene(&map))?;
                println!("saved {}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
