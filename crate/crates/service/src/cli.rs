//! `vidtint` command line.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use vidtint::diffusion::{make_schedule, ScheduleKind};
use vidtint::io::{read_clip_dir, read_frame, write_atomic, write_clip_dir};
use vidtint::masks::RegionSpec;
use vidtint::metrics::{evaluate_corpus, reports_to_csv, MetricAdapters};
use vidtint::propagate::PropagationMode;
use vidtint::types::{Fps, VideoClip};

use crate::adapters::Adapters;
use crate::api::{run_edit, run_metrics, serve, AppState, RegionsRequest};
use crate::error::{Result, ServiceError};
use crate::jobs::{execute, prepare, JobQueue};
use crate::store::{JobSpec, JobStatus, Store};

#[derive(Debug, Parser)]
#[command(name = "vidtint", version, about = "Training-free video colour editing")]
pub struct Cli {
    /// Directory holding sessions and jobs.
    #[arg(long, global = true, env = "DC_STORE", default_value = "vidtint-store")]
    pub store: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Job worker threads; defaults to the CPU count.
        #[arg(long)]
        workers: Option<usize>,
    },
    #[command(subcommand)]
    Session(SessionCommand),
    /// Score many edited/reference clip pairs listed in a CSV with columns
    /// `clip,edited,reference`. Paths are relative to the list file.
    Corpus {
        list: PathBuf,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Import a clip directory or an ordered list of PNG files.
    Create {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Frame rate such as `24` or `30000/1001`; defaults to the clip's.
        #[arg(long)]
        fps: Option<Fps>,
    },
    Show {
        #[arg(long)]
        session: String,
    },
    /// Recolour one frame. The regions file holds a JSON array of regions;
    /// without it the frame's stored user hints are used.
    Edit {
        #[arg(long)]
        session: String,
        #[arg(long)]
        frame: usize,
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Propagate stored edits through the clip and wait for the result.
    Propagate(PropagateArgs),
    /// Score a finished job against the session's source clip.
    Metrics {
        #[arg(long)]
        session: String,
        #[arg(long)]
        job: String,
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    #[arg(long)]
    pub session: String,
    #[arg(long, default_value = "first")]
    pub mode: PropagationMode,
    /// Edited frames to use, comma separated; defaults to every stored edit.
    #[arg(long, value_delimiter = ',')]
    pub edits: Vec<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub tau_conv: Option<usize>,
    #[arg(long)]
    pub tau_sa: Option<usize>,
    #[arg(long)]
    pub tau_ta: Option<usize>,
    #[arg(long)]
    pub tau_idx: Option<usize>,
    #[arg(long)]
    pub guidance: Option<f64>,
    #[arg(long, value_enum, default_value = "linear")]
    pub schedule: Schedule,
    #[arg(long)]
    pub ablate_weighted_sum: bool,
    #[arg(long)]
    pub ablate_blend_prompt: bool,
    #[arg(long)]
    pub no_colour_prompt: bool,
    #[arg(long)]
    pub no_scene_prompt: bool,
    /// Copy the output frames and provenance here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum Schedule {
    Linear,
    Cosine,
}

impl PropagateArgs {
    pub fn spec(&self) -> JobSpec {
        let mut spec = JobSpec::new(self.mode);
        spec.edits = self.edits.clone();
        let inj = &mut spec.config.injection;
        for (slot, value) in [
            (&mut inj.steps, self.steps),
            (&mut inj.tau_conv, self.tau_conv),
            (&mut inj.tau_sa, self.tau_sa),
            (&mut inj.tau_ta, self.tau_ta),
            (&mut inj.tau_idx, self.tau_idx),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        if let Some(g) = self.guidance {
            spec.config.guidance_scale = g;
        }
        spec.config.ablate_weighted_sum = self.ablate_weighted_sum;
        spec.config.ablate_blend_prompt = self.ablate_blend_prompt;
        spec.prompt_options.colour_prompt = !self.no_colour_prompt;
        spec.prompt_options.scene_prompt = !self.no_scene_prompt;
        spec.schedule = match self.schedule {
            Schedule::Linear => ScheduleKind::Linear,
            Schedule::Cosine => ScheduleKind::Cosine,
        };
        spec
    }
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_inputs(inputs: &[PathBuf]) -> Result<VideoClip> {
    if let [dir] = inputs {
        if dir.is_dir() {
            return Ok(read_clip_dir(dir)?);
        }
    }
    let frames = inputs
        .iter()
        .enumerate()
        .map(|(i, p)| read_frame(p, i))
        .collect::<vidtint::Result<Vec<_>>>()?;
    Ok(VideoClip::new(frames, Fps::default())?)
}

#[derive(Debug, Deserialize)]
struct CorpusRow {
    clip: String,
    edited: PathBuf,
    reference: PathBuf,
}

fn corpus(list: &Path, adapters: &Adapters) -> Result<String> {
    let base = list.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(list).map_err(|e| ServiceError::BadRequest(format!("{}: {e}", list.display())))?;
    let mut clips = Vec::new();
    for row in reader.deserialize() {
        let row: CorpusRow = row.map_err(|e| ServiceError::BadRequest(format!("{}: {e}", list.display())))?;
        clips.push((row.clip, read_clip_dir(&base.join(row.edited))?, read_clip_dir(&base.join(row.reference))?));
    }
    let reports = evaluate_corpus(
        &clips,
        MetricAdapters {
            extractor: Some(adapters.extractor.as_ref()),
            lpips: Some(adapters.lpips.as_ref()),
        },
    )?;
    Ok(reports_to_csv(&reports)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let adapters = Adapters::from_env()?;
    let store = Arc::new(Store::open(&cli.store)?);
    match cli.command {
        Command::Serve { addr, workers } => {
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let jobs = JobQueue::start(store.clone(), adapters.clone(), workers)?;
            let state = AppState { store, jobs, adapters };
            let runtime = tokio::runtime::Runtime::new().map_err(|e| ServiceError::Internal(e.to_string()))?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .map_err(|e| ServiceError::BadRequest(format!("cannot bind {addr}: {e}")))?;
                let local = listener.local_addr().map_err(|e| ServiceError::Internal(e.to_string()))?;
                println!("listening on http://{local}");
                let _ = std::io::stdout().flush();
                serve(listener, state).await.map_err(|e| ServiceError::Internal(e.to_string()))
            })
        }
        Command::Corpus { list, out } => {
            let table = corpus(&list, &adapters)?;
            match out {
                Some(path) => Ok(write_atomic(&path, table.as_bytes())?),
                None => {
                    print!("{table}");
                    Ok(())
                }
            }
        }
        Command::Session(cmd) => session(cmd, &store, &adapters),
    }
}

fn session(cmd: SessionCommand, store: &Store, adapters: &Adapters) -> Result<()> {
    match cmd {
        SessionCommand::Create { inputs, fps } => {
            let mut clip = load_inputs(&inputs)?;
            if let Some(fps) = fps {
                clip = VideoClip::new(clip.into_frames(), fps)?;
            }
            print_json(&store.create_session(&clip)?)
        }
        SessionCommand::Show { session } => print_json(&store.session(&session)?),
        SessionCommand::Edit {
            session,
            frame,
            regions,
            radius,
            tolerance,
        } => {
            let mut req = RegionsRequest::default();
            if let Some(path) = regions {
                let bytes = std::fs::read(&path).map_err(|e| vidtint::Error::io(&path, e))?;
                req.regions = serde_json::from_slice::<Vec<RegionSpec>>(&bytes)?;
            }
            if let Some(r) = radius {
                req.options.radius = r;
            }
            if let Some(t) = tolerance {
                req.options.tolerance = t;
            }
            print_json(&run_edit(store, adapters, &session, frame, req)?)
        }
        SessionCommand::Propagate(args) => {
            let spec = args.spec();
            prepare(store, adapters, &args.session, &spec)?;
            make_schedule(spec.config.injection.steps, spec.schedule)?;
            let record = store.create_job(&args.session, spec)?;
            let record = execute(store, adapters, &record.job_id)?;
            print_json(&record)?;
            if record.status != JobStatus::Done {
                let msg = record.error.map(|e| e.message).unwrap_or_default();
                return Err(ServiceError::Conflict(format!("job {} failed: {msg}", record.job_id)));
            }
            if let Some(out) = args.out {
                let (_, provenance) = store.job_output(&record)?;
                write_clip_dir(&out, &store.job_clip(&record)?)?;
                let bytes = std::fs::read(&provenance).map_err(|e| vidtint::Error::io(&provenance, e))?;
                write_atomic(&out.join("provenance.json"), &bytes)?;
            }
            Ok(())
        }
        SessionCommand::Metrics { session, job, csv } => {
            let view = run_metrics(store, adapters, &session, &job)?;
            if csv {
                print!("{}", reports_to_csv(std::slice::from_ref(&view.report))?);
                Ok(())
            } else {
                let mut out = BTreeMap::new();
                out.insert("metric_id", serde_json::to_value(&view.metric_id)?);
                out.insert("report", serde_json::to_value(&view.report)?);
                print_json(&out)
            }
        }
    }
}
