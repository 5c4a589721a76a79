use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use image::ExtendedColorType;

use streetstage_core::frames::encode_png;
use streetstage_core::render::{preview_frame, MASK_GREEN};
use streetstage_core::{parse_scene, validate_scene, Scene};
use streetstage_imagery::BBox;
use streetstage_jobs::queue::{read_log, replay, EVENTS_FILE};
use streetstage_jobs::{JobState, QueueConfig, RenderQueue};

use crate::api::{router, AppState, JobView};
use crate::config::{BackendKind, Config, ProviderKind};
use crate::pipeline::{copy_sequence, panorama_for, stage_scene, PipelineError};
use crate::projects::ProjectStore;

#[derive(Debug, Parser)]
#[command(name = "streetstage", version, about = "Stage actors and camera moves on street-view panoramas")]
pub struct Cli {
    /// Config file (default: ./streetstage.toml if present).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `data_dir` from the config.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Overrides the imagery provider from the config.
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Overrides the fixture imagery directory.
    #[arg(long, global = true)]
    pub fixture_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List panoramic nodes inside a bounding box.
    Scout {
        /// minLon,minLat,maxLon,maxLat in degrees.
        #[arg(long, allow_hyphen_values = true)]
        bbox: String,
        #[arg(long, default_value_t = 50)]
        limit: usize,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Check a scene file and list every problem found.
    Validate { scene: PathBuf },
    /// Render one frame of the street view with the actor cards drawn in.
    Preview {
        scene: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a scene's sequences, queue the job and wait for the result.
    Render {
        scene: PathBuf,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        /// Copy the result frames here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Simulated per-mask time for the mock backend.
        #[arg(long)]
        latency_ms: Option<u64>,
        /// Return once the job is queued.
        #[arg(long)]
        no_wait: bool,
    },
    /// Inspect the render queue.
    Jobs {
        #[command(subcommand)]
        command: JobsCommand,
    },
    /// Run the HTTP API (and the UI, if built).
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum JobsCommand {
    Ls,
    Show { job_id: String },
}

fn load_scene(path: &Path) -> anyhow::Result<Scene> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scene(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn effective_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(d) = &cli.data_dir {
        config.data_dir = d.clone();
    }
    if let Some(p) = cli.provider {
        config.imagery.provider = p;
    }
    if let Some(d) = &cli.fixture_dir {
        config.imagery.fixture_dir = d.clone();
    }
    if let Command::Render { backend, latency_ms, .. } = &cli.command {
        if let Some(b) = backend {
            config.backend.kind = *b;
        }
        if let Some(l) = latency_ms {
            config.backend.mock_latency_ms = *l;
        }
    }
    Ok(config)
}

fn open_queue(config: &Config) -> anyhow::Result<RenderQueue> {
    let queue_dir = config.queue_dir();
    RenderQueue::open(QueueConfig::new(&queue_dir), config.backend()?)
        .with_context(|| format!("opening the render queue in {}", queue_dir.display()))
}

/// Runs one command, writing its output to `out`. Returns the exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<i32> {
    let config = effective_config(&cli)?;
    match cli.command {
        Command::Scout { bbox, limit, json } => {
            let bbox = BBox::parse(&bbox)?;
            let nodes = config.imagery_client()?.search_nodes(&bbox, limit)?;
            if json {
                let records: Vec<_> = nodes.iter().map(streetstage_imagery::NodeRecord::from).collect();
                writeln!(out, "{}", serde_json::to_string_pretty(&records)?)?;
            } else {
                writeln!(out, "{:<24} {:>12} {:>13} {:>8}  captured", "node", "lat", "lon", "compass")?;
                for n in &nodes {
                    writeln!(
                        out,
                        "{:<24} {:>12.7} {:>13.7} {:>8.1}  {}",
                        n.node_id,
                        n.position.lat_deg(),
                        n.position.lon_deg(),
                        n.compass_angle.to_degrees(),
                        n.capture_time
                    )?;
                }
                writeln!(out, "{} node(s)", nodes.len())?;
            }
            Ok(0)
        }
        Command::Validate { scene } => {
            let parsed = match load_scene(&scene) {
                Ok(s) => s,
                Err(e) => {
                    writeln!(out, "{e:#}")?;
                    return Ok(1);
                }
            };
            let diagnostics = validate_scene(&parsed);
            if diagnostics.is_empty() {
                writeln!(out, "{}: ok ({} actors, {} frames)", scene.display(), parsed.actors.len(), parsed.frame_count())?;
                return Ok(0);
            }
            for d in &diagnostics {
                writeln!(out, "{}: {d}", scene.display())?;
            }
            Ok(1)
        }
        Command::Preview { scene, t, out: path } => {
            let scene = load_scene(&scene)?;
            let diagnostics = validate_scene(&scene);
            if !diagnostics.is_empty() {
                for d in &diagnostics {
                    writeln!(out, "{d}")?;
                }
                return Ok(1);
            }
            if !(0.0..=scene.duration).contains(&t) {
                bail!("--t must be within [0, {}]", scene.duration);
            }
            let pano = panorama_for(&config.imagery_client()?, &scene)?;
            let frame = preview_frame(&scene, &pano, t, MASK_GREEN);
            let bytes = encode_png(frame.as_raw(), frame.width(), frame.height(), ExtendedColorType::Rgb8)?;
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "wrote {}", path.display())?;
            Ok(0)
        }
        Command::Render { scene: scene_path, out: out_dir, no_wait, .. } => {
            let scene = load_scene(&scene_path)?;
            let imagery = config.imagery_client()?;
            let bundle = match stage_scene(&imagery, &scene, &config.staging_dir()) {
                Err(PipelineError::Invalid(diagnostics)) => {
                    for d in &diagnostics {
                        writeln!(out, "{d}")?;
                    }
                    return Ok(1);
                }
                other => other?,
            };
            let queue = open_queue(&config)?;
            let job_id = queue.submit(bundle)?;
            writeln!(out, "queued {job_id}")?;
            if no_wait {
                return Ok(0);
            }
            let job = loop {
                let job = queue.wait(&job_id, Duration::from_secs(3600)).context("job vanished")?;
                if job.state.is_terminal() {
                    break job;
                }
            };
            queue.shutdown();
            match job.state {
                JobState::Done => {
                    let result = job.result.expect("done jobs carry a result");
                    let location = match out_dir {
                        Some(dir) => copy_sequence(&result, &dir)?.dir,
                        None => result.dir.clone(),
                    };
                    writeln!(out, "{job_id} done: {} frames in {}", result.len(), location.display())?;
                    Ok(0)
                }
                _ => {
                    writeln!(out, "{job_id} failed: {}", job.error.unwrap_or_default())?;
                    Ok(1)
                }
            }
        }
        Command::Jobs { command } => {
            // Read the log directly so that looking does not start any work.
            let state = replay(&read_log(&config.queue_dir().join(EVENTS_FILE))?)?;
            match command {
                JobsCommand::Ls => {
                    writeln!(out, "{:<22} {:<8} {:>6} {:>8}  error", "job", "state", "masks", "attempts")?;
                    for job in state.list() {
                        let v = JobView::from(job);
                        let done = v.masks.iter().filter(|m| m.state == streetstage_jobs::MaskState::Done).count();
                        writeln!(
                            out,
                            "{:<22} {:<8} {:>6} {:>8}  {}",
                            v.job_id,
                            format!("{:?}", v.state).to_lowercase(),
                            format!("{done}/{}", v.masks.len()),
                            v.attempts,
                            v.error.unwrap_or_default()
                        )?;
                    }
                    Ok(0)
                }
                JobsCommand::Show { job_id } => match state.get(&job_id) {
                    Some(job) => {
                        writeln!(out, "{}", serde_json::to_string_pretty(&JobView::from(job))?)?;
                        Ok(0)
                    }
                    None => {
                        writeln!(out, "no job {job_id}")?;
                        Ok(1)
                    }
                },
            }
        }
        Command::Serve { bind } => {
            let bind = bind.unwrap_or_else(|| config.server.bind.clone());
            let state = app_state(config)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
                tracing::info!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, router(state)).await?;
                Ok::<_, anyhow::Error>(())
            })?;
            Ok(0)
        }
    }
}

/// Everything the HTTP API needs, built from a config.
pub fn app_state(config: Config) -> anyhow::Result<AppState> {
    let imagery = Arc::new(config.imagery_client()?);
    let projects = Arc::new(ProjectStore::open(config.projects_dir())?);
    let queue = Arc::new(open_queue(&config)?);
    Ok(AppState { config: Arc::new(config), imagery, projects, queue })
}
