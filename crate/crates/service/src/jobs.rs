//! Propagation jobs: a bounded pool of worker threads fed from a queue.
//! Job state lives in `job.json`; outputs are written before a job is
//! marked DONE, so a DONE job always has a complete result.

use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread;

use vidtint::diffusion::make_schedule;
use vidtint::prompts::build_prompts;
use vidtint::propagate::{PropagationJob, PropagationOutput, Propagator};

use crate::adapters::Adapters;
use crate::error::{Result, ServiceError};
use crate::store::{now, JobError, JobRecord, JobSpec, JobStatus, Store};

/// Loads the clip and stored edits a spec refers to and builds prompts.
pub fn prepare(store: &Store, adapters: &Adapters, session_id: &str, spec: &JobSpec) -> Result<PropagationJob> {
    let manifest = store.session(session_id)?;
    let indices: Vec<usize> = if spec.edits.is_empty() {
        manifest.edits.keys().copied().collect()
    } else {
        spec.edits.clone()
    };
    if indices.is_empty() {
        return Err(ServiceError::BadRequest(format!("session `{session_id}` has no edited frames")));
    }
    for i in &indices {
        store.check_frame(&manifest, *i)?;
        if !manifest.edits.contains_key(i) {
            return Err(ServiceError::BadRequest(format!("frame {i} has not been edited")));
        }
    }
    spec.config.injection.validate()?;
    let edits = indices
        .iter()
        .map(|&i| Ok((i, store.edited_frame(session_id, i)?)))
        .collect::<Result<Vec<_>>>()?;
    let prompts = match &spec.prompts {
        Some(p) => p.clone(),
        None => build_prompts(&edits[0].1, adapters.captioner.as_ref(), spec.mode, &spec.prompt_options)?,
    };
    let job = PropagationJob {
        clip: store.clip(session_id)?,
        edits,
        mode: spec.mode,
        config: spec.config.clone(),
        prompts,
    };
    job.validate()?;
    Ok(job)
}

fn propagate(store: &Store, adapters: &Adapters, record: &JobRecord) -> Result<PropagationOutput> {
    let job = prepare(store, adapters, &record.session_id, &record.spec)?;
    let schedule = make_schedule(job.config.injection.steps, record.spec.schedule)?;
    let backend = adapters.backend(&schedule)?;
    let propagator = Propagator::new(backend.as_ref(), &schedule, job.config.clone())?;
    let mut out = propagator.run(&job)?;
    out.provenance
        .adapters
        .extend(adapters.identities().map(|(k, v)| (k.to_owned(), v)));
    Ok(out)
}

/// Runs one job to completion and records the outcome.
pub fn execute(store: &Store, adapters: &Adapters, job_id: &str) -> Result<JobRecord> {
    let mut record = store.job(job_id)?;
    if record.status != JobStatus::Pending {
        return Ok(record);
    }
    record.status = JobStatus::Running;
    record.started_at = Some(now());
    store.write_job(&record)?;
    log::info!("job {job_id} started ({})", record.spec.mode);

    let result =
        propagate(store, adapters, &record).and_then(|out| store.write_job_output(job_id, &out.clip, &out.provenance));
    record.finished_at = Some(now());
    match result {
        Ok(rel) => {
            record.status = JobStatus::Done;
            record.output = Some(rel);
            log::info!("job {job_id} done");
        }
        Err(e) => {
            log::warn!("job {job_id} failed: {e}");
            record.status = JobStatus::Failed;
            record.error = Some(JobError {
                kind: e.kind().to_owned(),
                message: e.to_string(),
            });
        }
    }
    store.write_job(&record)?;
    Ok(record)
}

pub struct JobQueue {
    store: Arc<Store>,
    adapters: Adapters,
    tx: Mutex<Sender<String>>,
}

impl JobQueue {
    /// Starts `workers` threads. Jobs left RUNNING by an earlier process are
    /// marked FAILED and PENDING ones are queued again.
    pub fn start(store: Arc<Store>, adapters: Adapters, workers: usize) -> Result<Arc<Self>> {
        let (tx, rx) = channel::<String>();
        let rx = Arc::new(Mutex::new(rx));
        for n in 0..workers.max(1) {
            let (store, adapters, rx) = (store.clone(), adapters.clone(), rx.clone());
            thread::Builder::new()
                .name(format!("job-worker-{n}"))
                .spawn(move || worker(&store, &adapters, &rx))
                .map_err(|e| ServiceError::Core(vidtint::Error::Io {
                    path: "job worker".into(),
                    source: e,
                }))?;
        }
        for mut record in store.jobs()? {
            match record.status {
                JobStatus::Running => {
                    log::warn!("job {} was interrupted", record.job_id);
                    record.status = JobStatus::Failed;
                    record.finished_at = Some(now());
                    record.error = Some(JobError {
                        kind: "interrupted".into(),
                        message: "the service stopped while the job was running".into(),
                    });
                    store.write_job(&record)?;
                }
                JobStatus::Pending => {
                    let _ = tx.send(record.job_id);
                }
                JobStatus::Done | JobStatus::Failed => {}
            }
        }
        Ok(Arc::new(Self {
            store,
            adapters,
            tx: Mutex::new(tx),
        }))
    }

    /// Validates the job spec against the session, then records and queues it.
    pub fn submit(&self, session_id: &str, spec: JobSpec) -> Result<JobRecord> {
        prepare(&self.store, &self.adapters, session_id, &spec)?;
        make_schedule(spec.config.injection.steps, spec.schedule)?;
        let record = self.store.create_job(session_id, spec)?;
        self.tx
            .lock()
            .expect("queue poisoned")
            .send(record.job_id.clone())
            .map_err(|_| ServiceError::Conflict("job queue is closed".into()))?;
        Ok(record)
    }
}

fn worker(store: &Store, adapters: &Adapters, rx: &Mutex<Receiver<String>>) {
    loop {
        let next = rx.lock().expect("queue poisoned").recv();
        let Ok(job_id) = next else { return };
        if let Err(e) = execute(store, adapters, &job_id) {
            log::error!("job {job_id}: {e}");
        }
    }
}
