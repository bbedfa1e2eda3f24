//! Filesystem persistence. Every manifest is JSON written atomically, and
//! artifacts are written before the manifest that references them.
//!
//! ```text
//! <root>/sessions/<id>/session.json
//!                     /clip/frame_00000.png … clip.json
//!                     /hints/image_00003.json, user_00003.json
//!                     /masks/00003/<region>.png, <region>.json
//!                     /edits/00003/edited.png
//!                     /metrics/<metric id>.json
//! <root>/jobs/<id>/job.json
//!                 /output/frame_00000.png … clip.json
//!                 /provenance.json
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use vidtint::diffusion::ScheduleKind;
use vidtint::edit::{EditOptions, ObjectiveReport, RegionOutcome};
use vidtint::hints::{compute_superpixels, superpixels_to_grid_hints, DEFAULT_COMPACTNESS, DEFAULT_SEGMENTS};
use vidtint::io::{read_clip_dir, read_frame, save_mask, write_atomic, write_clip_dir, write_frame, frame_file_name};
use vidtint::masks::RegionSpec;
use vidtint::metrics::MetricReport;
use vidtint::prompts::{PromptOptions, PromptSet};
use vidtint::propagate::{PropagationConfig, PropagationMode};
use vidtint::types::{Fps, Frame, HintGrid, InstanceMask, VideoClip};

use crate::error::{Result, ServiceError};

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn io_err(path: &Path, e: std::io::Error) -> ServiceError {
    ServiceError::Core(vidtint::Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    Ok(write_atomic(path, &serde_json::to_vec_pretty(value)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub regions: Vec<RegionSpec>,
    pub options: EditOptions,
    pub outcomes: Vec<RegionOutcome>,
    pub objective_report: ObjectiveReport,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub session_id: String,
    pub created_at: u64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub fps: Fps,
    pub user_hints: BTreeSet<usize>,
    pub edits: BTreeMap<usize, EditRecord>,
    pub jobs: Vec<String>,
    pub metrics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

/// Propagation request. `edits` lists frames whose stored edits are
/// propagated; when empty, every stored edit is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub mode: PropagationMode,
    #[serde(default)]
    pub edits: Vec<usize>,
    #[serde(default)]
    pub config: PropagationConfig,
    #[serde(default)]
    pub prompt_options: PromptOptions,
    /// Used verbatim instead of captioning the edited frame.
    #[serde(default)]
    pub prompts: Option<PromptSet>,
    #[serde(default)]
    pub schedule: ScheduleKind,
}

impl JobSpec {
    pub fn new(mode: PropagationMode) -> Self {
        Self {
            mode,
            edits: Vec::new(),
            config: PropagationConfig::default(),
            prompt_options: PromptOptions::default(),
            prompts: None,
            schedule: ScheduleKind::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobError {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub session_id: String,
    pub status: JobStatus,
    pub spec: JobSpec,
    pub created_at: u64,
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
    pub error: Option<JobError>,
    /// Output clip directory relative to the store root, set on DONE.
    pub output: Option<String>,
}

pub struct Store {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
        return Err(ServiceError::NotFound(format!("`{id}`")));
    }
    Ok(())
}

fn region_stem(region_id: &str) -> String {
    let safe: String = region_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("region_{safe}")
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for d in ["sessions", "jobs"] {
            let p = root.join(d);
            fs::create_dir_all(&p).map_err(|e| io_err(&p, e))?;
        }
        Ok(Self {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn session_dir(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id)
    }

    fn job_dir(&self, id: &str) -> PathBuf {
        self.root.join("jobs").join(id)
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        let mut map = self.locks.lock().expect("lock table poisoned");
        map.entry(id.to_owned()).or_default().clone()
    }

    pub fn create_session(&self, clip: &VideoClip) -> Result<SessionManifest> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.session_dir(&id);
        let staging = self.root.join("sessions").join(format!(".{id}.tmp"));
        write_clip_dir(&staging.join("clip"), clip)?;
        fs::rename(&staging, &dir).map_err(|e| io_err(&dir, e))?;
        let (height, width) = clip.dims();
        let manifest = SessionManifest {
            session_id: id,
            created_at: now(),
            frames: clip.len(),
            height,
            width,
            fps: clip.fps(),
            user_hints: BTreeSet::new(),
            edits: BTreeMap::new(),
            jobs: Vec::new(),
            metrics: Vec::new(),
        };
        write_json(&dir.join("session.json"), &manifest)?;
        Ok(manifest)
    }

    pub fn session(&self, id: &str) -> Result<SessionManifest> {
        check_id(id)?;
        let path = self.session_dir(id).join("session.json");
        if !path.exists() {
            return Err(ServiceError::NotFound(format!("session `{id}`")));
        }
        read_json(&path)
    }

    /// Read-modify-write of a session manifest under its lock.
    pub fn update_session<T>(&self, id: &str, f: impl FnOnce(&mut SessionManifest) -> Result<T>) -> Result<T> {
        let lock = self.lock(id);
        let _guard = lock.lock().expect("session lock poisoned");
        let mut m = self.session(id)?;
        let out = f(&mut m)?;
        write_json(&self.session_dir(id).join("session.json"), &m)?;
        Ok(out)
    }

    /// Runs `f` holding the session lock without touching the manifest.
    pub fn with_session_lock<T>(&self, id: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let lock = self.lock(id);
        let _guard = lock.lock().expect("session lock poisoned");
        f()
    }

    pub fn check_frame(&self, m: &SessionManifest, i: usize) -> Result<()> {
        if i >= m.frames {
            return Err(ServiceError::NotFound(format!("frame {i} of session `{}`", m.session_id)));
        }
        Ok(())
    }

    pub fn clip(&self, id: &str) -> Result<VideoClip> {
        self.session(id)?;
        Ok(read_clip_dir(&self.session_dir(id).join("clip"))?)
    }

    pub fn frame_path(&self, id: &str, i: usize) -> Result<PathBuf> {
        let m = self.session(id)?;
        self.check_frame(&m, i)?;
        Ok(self.session_dir(id).join("clip").join(frame_file_name(i)))
    }

    pub fn frame(&self, id: &str, i: usize) -> Result<Frame> {
        Ok(read_frame(&self.frame_path(id, i)?, i)?)
    }

    /// Superpixel hint grid of frame `i`, computed on first request.
    pub fn image_hints(&self, id: &str, i: usize) -> Result<HintGrid> {
        let frame = self.frame(id, i)?;
        let path = self.session_dir(id).join("hints").join(format!("image_{i:05}.json"));
        if path.exists() {
            return read_json(&path);
        }
        let sp = compute_superpixels(&frame, DEFAULT_SEGMENTS, DEFAULT_COMPACTNESS)?;
        let grid = superpixels_to_grid_hints(&sp);
        self.with_session_lock(id, || {
            fs::create_dir_all(path.parent().unwrap()).map_err(|e| io_err(&path, e))?;
            write_json(&path, &grid)
        })?;
        Ok(grid)
    }

    pub fn put_user_hints(&self, id: &str, i: usize, grid: &HintGrid) -> Result<()> {
        let dir = self.session_dir(id).join("hints");
        self.update_session(id, |m| {
            self.check_frame(m, i)?;
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            write_json(&dir.join(format!("user_{i:05}.json")), grid)?;
            m.user_hints.insert(i);
            Ok(())
        })
    }

    pub fn user_hints(&self, id: &str, i: usize) -> Result<Option<HintGrid>> {
        let m = self.session(id)?;
        self.check_frame(&m, i)?;
        if !m.user_hints.contains(&i) {
            return Ok(None);
        }
        read_json(&self.session_dir(id).join("hints").join(format!("user_{i:05}.json"))).map(Some)
    }

    /// Stores masks under `masks/<frame>/` and returns their file stems.
    pub fn save_masks(&self, id: &str, i: usize, masks: &[InstanceMask]) -> Result<Vec<String>> {
        let dir = self.session_dir(id).join("masks").join(format!("{i:05}"));
        self.with_session_lock(id, || {
            masks
                .iter()
                .map(|m| {
                    let stem = region_stem(&m.region_id);
                    save_mask(&dir, &stem, m)?;
                    Ok(stem)
                })
                .collect()
        })
    }

    pub fn save_edit(&self, id: &str, i: usize, edited: &Frame, record: EditRecord) -> Result<()> {
        let dir = self.session_dir(id).join("edits").join(format!("{i:05}"));
        self.update_session(id, |m| {
            self.check_frame(m, i)?;
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            write_frame(&dir.join("edited.png"), edited)?;
            m.edits.insert(i, record);
            Ok(())
        })
    }

    pub fn edited_frame_path(&self, id: &str, i: usize) -> Result<PathBuf> {
        let m = self.session(id)?;
        if !m.edits.contains_key(&i) {
            return Err(ServiceError::NotFound(format!("edit of frame {i}")));
        }
        Ok(self.session_dir(id).join("edits").join(format!("{i:05}")).join("edited.png"))
    }

    pub fn edited_frame(&self, id: &str, i: usize) -> Result<Frame> {
        Ok(read_frame(&self.edited_frame_path(id, i)?, i)?)
    }

    pub fn save_metrics(&self, id: &str, report: &MetricReport) -> Result<String> {
        let metric_id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.session_dir(id).join("metrics");
        self.update_session(id, |m| {
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            write_json(&dir.join(format!("{metric_id}.json")), report)?;
            m.metrics.push(metric_id.clone());
            Ok(())
        })?;
        Ok(metric_id)
    }

    /// Registers a PENDING job with its session.
    pub fn create_job(&self, session_id: &str, spec: JobSpec) -> Result<JobRecord> {
        let job_id = uuid::Uuid::new_v4().simple().to_string();
        let record = JobRecord {
            job_id: job_id.clone(),
            session_id: session_id.to_owned(),
            status: JobStatus::Pending,
            spec,
            created_at: now(),
            started_at: None,
            finished_at: None,
            error: None,
            output: None,
        };
        let dir = self.job_dir(&job_id);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        write_json(&dir.join("job.json"), &record)?;
        self.update_session(session_id, |m| {
            m.jobs.push(job_id.clone());
            Ok(())
        })?;
        Ok(record)
    }

    pub fn job(&self, id: &str) -> Result<JobRecord> {
        check_id(id)?;
        let path = self.job_dir(id).join("job.json");
        if !path.exists() {
            return Err(ServiceError::NotFound(format!("job `{id}`")));
        }
        read_json(&path)
    }

    pub fn write_job(&self, record: &JobRecord) -> Result<()> {
        write_json(&self.job_dir(&record.job_id).join("job.json"), record)
    }

    pub fn jobs(&self) -> Result<Vec<JobRecord>> {
        let dir = self.root.join("jobs");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            if entry.path().join("job.json").exists() {
                out.push(read_json(&entry.path().join("job.json"))?);
            }
        }
        out.sort_by(|a: &JobRecord, b| (a.created_at, &a.job_id).cmp(&(b.created_at, &b.job_id)));
        Ok(out)
    }

    /// Writes a job's output clip and provenance; a partial earlier attempt
    /// is discarded first.
    pub fn write_job_output(&self, id: &str, clip: &VideoClip, provenance: &impl Serialize) -> Result<String> {
        let dir = self.job_dir(id);
        let staging = dir.join("output.tmp");
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
        }
        write_clip_dir(&staging, clip)?;
        let out = dir.join("output");
        if out.exists() {
            fs::remove_dir_all(&out).map_err(|e| io_err(&out, e))?;
        }
        fs::rename(&staging, &out).map_err(|e| io_err(&out, e))?;
        write_json(&dir.join("provenance.json"), provenance)?;
        Ok(format!("jobs/{id}/output"))
    }

    pub fn job_output(&self, record: &JobRecord) -> Result<(PathBuf, PathBuf)> {
        let rel = record
            .output
            .as_ref()
            .ok_or_else(|| ServiceError::Conflict(format!("job `{}` has no output", record.job_id)))?;
        Ok((self.root.join(rel), self.job_dir(&record.job_id).join("provenance.json")))
    }

    pub fn job_clip(&self, record: &JobRecord) -> Result<VideoClip> {
        Ok(read_clip_dir(&self.job_output(record)?.0)?)
    }
}
