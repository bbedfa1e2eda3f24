//! REST API. Handlers hand all decoding, segmentation, editing and store
//! access to the blocking thread pool.

use std::io::{Cursor, Write};
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use vidtint::edit::{edit_multi_region, EditOptions};
use vidtint::hints::merge_hints;
use vidtint::io::{decode_png, encode_mask_png, frame_file_name, CLIP_MANIFEST};
use vidtint::masks::{segment_multi_region, RegionSpec};
use vidtint::metrics::{evaluate_clip, reports_to_csv, MetricAdapters, MetricReport};
use vidtint::types::{Fps, HintGrid, HintSource, Pixel, VideoClip};

use crate::adapters::Adapters;
use crate::error::{Result, ServiceError};
use crate::jobs::JobQueue;
use crate::store::{EditRecord, JobRecord, JobSpec, JobStatus, SessionManifest, Store};

const UPLOAD_LIMIT: usize = 1 << 30;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub jobs: Arc<JobQueue>,
    pub adapters: Adapters,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        use vidtint::Error as E;
        let status = match &self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Core(e) => match e {
                E::InvalidInput(_) | E::ShapeMismatch(_) | E::Json(_) | E::Codec(_) | E::Prompt(_) | E::Plan(_) => {
                    StatusCode::BAD_REQUEST
                }
                E::MaskRejected { .. } | E::EditFailed { .. } | E::Caption(_) => StatusCode::UNPROCESSABLE_ENTITY,
                E::AdapterUnavailable(_) => StatusCode::NOT_IMPLEMENTED,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            },
        };
        let body = serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } });
        (status, Json(body)).into_response()
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

fn bad(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::BadRequest(e.to_string())
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/frames/{i}", get(get_frame))
        .route("/sessions/{id}/edits/{i}", get(get_edited_frame))
        .route("/sessions/{id}/hints/{i}", get(get_hints).put(put_hints))
        .route("/sessions/{id}/masks/{action}", post(preview_masks))
        .route("/sessions/{id}/edit/{i}", post(edit_frame))
        .route("/sessions/{id}/jobs", post(submit_job))
        .route("/sessions/{id}/metrics", post(session_metrics))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/result", get(job_result))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .with_state(state)
}

async fn health(State(s): State<AppState>) -> Json<serde_json::Value> {
    let adapters: serde_json::Map<_, _> = s
        .adapters
        .identities()
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.into()))
        .collect();
    Json(serde_json::json!({ "status": "ok", "adapters": adapters }))
}

/// Multipart upload: every part except `fps` is a PNG frame, in order.
async fn create_session(
    State(s): State<AppState>,
    mut form: Multipart,
) -> Result<(StatusCode, Json<SessionManifest>)> {
    let mut pngs = Vec::new();
    let mut fps = Fps::default();
    while let Some(field) = form.next_field().await.map_err(bad)? {
        let is_fps = field.name() == Some("fps");
        let bytes = field.bytes().await.map_err(bad)?;
        if is_fps {
            fps = std::str::from_utf8(&bytes).map_err(bad)?.parse()?;
        } else {
            pngs.push(bytes);
        }
    }
    let manifest = blocking(move || {
        let frames = pngs
            .iter()
            .enumerate()
            .map(|(i, b)| decode_png(b, i))
            .collect::<vidtint::Result<Vec<_>>>()?;
        let clip = VideoClip::new(frames, fps)?;
        s.store.create_session(&clip)
    })
    .await?;
    log::info!("session {} created with {} frames", manifest.session_id, manifest.frames);
    Ok((StatusCode::CREATED, Json(manifest)))
}

async fn get_session(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionManifest>> {
    Ok(Json(blocking(move || s.store.session(&id)).await?))
}

async fn get_frame(State(s): State<AppState>, Path((id, i)): Path<(String, usize)>) -> Result<Response> {
    let bytes = blocking(move || {
        let path = s.store.frame_path(&id, i)?;
        std::fs::read(&path).map_err(|e| vidtint::Error::io(&path, e).into())
    })
    .await?;
    Ok(png(bytes))
}

async fn get_edited_frame(State(s): State<AppState>, Path((id, i)): Path<(String, usize)>) -> Result<Response> {
    let bytes = blocking(move || {
        let path = s.store.edited_frame_path(&id, i)?;
        std::fs::read(&path).map_err(|e| vidtint::Error::io(&path, e).into())
    })
    .await?;
    Ok(png(bytes))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HintsView {
    pub frame: usize,
    pub image: HintGrid,
    pub user: Option<HintGrid>,
    pub merged: HintGrid,
}

async fn get_hints(State(s): State<AppState>, Path((id, i)): Path<(String, usize)>) -> Result<Json<HintsView>> {
    let view = blocking(move || {
        let image = s.store.image_hints(&id, i)?;
        let user = s.store.user_hints(&id, i)?;
        let empty = HintGrid::empty(HintSource::User);
        let merged = merge_hints(user.as_ref().unwrap_or(&empty), &image)?;
        Ok(HintsView {
            frame: i,
            image,
            user,
            merged,
        })
    })
    .await?;
    Ok(Json(view))
}

async fn put_hints(
    State(s): State<AppState>,
    Path((id, i)): Path<(String, usize)>,
    Json(grid): Json<HintGrid>,
) -> Result<StatusCode> {
    if grid.source() != HintSource::User {
        return Err(bad(format!("user hints must have source USER, got {:?}", grid.source())));
    }
    if let Some((cell, _)) = grid.occupied().find(|(_, h)| h.origin != HintSource::User) {
        return Err(bad(format!("cell {cell} is not a user hint")));
    }
    blocking(move || s.store.put_user_hints(&id, i, &grid)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct RegionsRequest {
    /// When empty, the frame's stored user hints form a single region.
    #[serde(default)]
    pub regions: Vec<RegionSpec>,
    #[serde(default)]
    pub options: EditOptions,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MaskView {
    pub region_id: String,
    pub area: usize,
    pub positive_points: Vec<Pixel>,
    pub negative_points: Vec<Pixel>,
    /// Base64 of a 1-bit PNG.
    pub png: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MaskPreview {
    pub frame: usize,
    pub masks: Vec<MaskView>,
    pub warnings: Vec<String>,
}

fn regions_for(store: &Store, id: &str, i: usize, regions: Vec<RegionSpec>) -> Result<Vec<RegionSpec>> {
    if !regions.is_empty() {
        return Ok(regions);
    }
    match store.user_hints(id, i)? {
        Some(grid) if grid.occupied_count() > 0 => Ok(vec![RegionSpec::from_grid("user", &grid)?]),
        _ => Err(bad(format!("no regions given and frame {i} has no user hints"))),
    }
}

/// `POST /sessions/{id}/masks/{i}:preview`
async fn preview_masks(
    State(s): State<AppState>,
    Path((id, action)): Path<(String, String)>,
    Json(req): Json<RegionsRequest>,
) -> Result<Json<MaskPreview>> {
    let i: usize = action
        .strip_suffix(":preview")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| ServiceError::NotFound(format!("route `masks/{action}`")))?;
    let preview = blocking(move || {
        let frame = s.store.frame(&id, i)?;
        let regions = regions_for(&s.store, &id, i, req.regions)?;
        let out = segment_multi_region(&frame, &regions, s.adapters.segmenter.as_ref())?;
        s.store.save_masks(&id, i, &out.masks)?;
        let masks = out
            .masks
            .iter()
            .map(|m| {
                Ok(MaskView {
                    region_id: m.region_id.clone(),
                    area: m.area(),
                    positive_points: m.positive_points.clone(),
                    negative_points: m.negative_points.clone(),
                    png: BASE64.encode(encode_mask_png(&m.mask)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MaskPreview {
            frame: i,
            masks,
            warnings: out.warnings,
        })
    })
    .await?;
    Ok(Json(preview))
}

/// Recolours one frame and stores the result as that frame's edit.
pub fn run_edit(store: &Store, adapters: &Adapters, id: &str, i: usize, req: RegionsRequest) -> Result<EditRecord> {
    let frame = store.frame(id, i)?;
    let regions = regions_for(store, id, i, req.regions)?;
    let out = edit_multi_region(
        &frame,
        &regions,
        adapters.segmenter.as_ref(),
        adapters.colourizer.as_ref(),
        &req.options,
    )?;
    store.save_masks(id, i, &out.masks)?;
    let record = EditRecord {
        regions,
        options: req.options,
        outcomes: out.regions,
        objective_report: out.objective_report,
        warnings: out.warnings,
    };
    store.save_edit(id, i, &out.edited, record.clone())?;
    Ok(record)
}

async fn edit_frame(
    State(s): State<AppState>,
    Path((id, i)): Path<(String, usize)>,
    Json(req): Json<RegionsRequest>,
) -> Result<Json<EditRecord>> {
    Ok(Json(blocking(move || run_edit(&s.store, &s.adapters, &id, i, req)).await?))
}

async fn submit_job(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(spec): Json<JobSpec>,
) -> Result<(StatusCode, Json<JobRecord>)> {
    let record = blocking(move || s.jobs.submit(&id, spec)).await?;
    Ok((StatusCode::ACCEPTED, Json(record)))
}

async fn get_job(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<JobRecord>> {
    Ok(Json(blocking(move || s.store.job(&id)).await?))
}

fn done_job(store: &Store, id: &str) -> Result<JobRecord> {
    let record = store.job(id)?;
    if record.status != JobStatus::Done {
        return Err(ServiceError::Conflict(format!("job `{id}` is {:?}", record.status)));
    }
    Ok(record)
}

/// Zip archive with the output frames, `clip.json` and `provenance.json`.
pub fn result_archive(store: &Store, record: &JobRecord) -> Result<Vec<u8>> {
    let (dir, provenance) = store.job_output(record)?;
    let meta: vidtint::io::ClipMeta = serde_json::from_slice(&read(&dir.join(CLIP_MANIFEST))?)?;
    let mut names: Vec<String> = (0..meta.frames).map(frame_file_name).collect();
    names.push(CLIP_MANIFEST.to_owned());
    let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let opts = zip::write::SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
    let zerr = |e: zip::result::ZipError| ServiceError::Internal(format!("zip: {e}"));
    for name in names {
        zip.start_file(format!("frames/{name}"), opts).map_err(zerr)?;
        zip.write_all(&read(&dir.join(&name))?)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
    }
    zip.start_file("provenance.json", opts).map_err(zerr)?;
    zip.write_all(&read(&provenance)?)
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    Ok(zip.finish().map_err(zerr)?.into_inner())
}

fn read(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| vidtint::Error::io(path, e).into())
}

async fn job_result(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    let name = format!("attachment; filename=\"{id}.zip\"");
    let bytes = blocking(move || {
        let record = done_job(&s.store, &id)?;
        result_archive(&s.store, &record)
    })
    .await?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/zip".to_owned()),
            (header::CONTENT_DISPOSITION, name),
        ],
        bytes,
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
pub struct MetricsRequest {
    pub job_id: String,
}

#[derive(Debug, Deserialize)]
pub struct FormatQuery {
    #[serde(default)]
    pub format: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsView {
    pub metric_id: String,
    pub report: MetricReport,
}

/// Scores a finished job's output against the session's source clip.
pub fn run_metrics(store: &Store, adapters: &Adapters, session_id: &str, job_id: &str) -> Result<MetricsView> {
    let record = done_job(store, job_id)?;
    if record.session_id != session_id {
        return Err(ServiceError::NotFound(format!("job `{job_id}` in session `{session_id}`")));
    }
    let edited = store.job_clip(&record)?;
    let reference = store.clip(session_id)?;
    let report = evaluate_clip(
        &edited,
        &reference,
        MetricAdapters {
            extractor: Some(adapters.extractor.as_ref()),
            lpips: Some(adapters.lpips.as_ref()),
        },
        (job_id, session_id),
    )?;
    let metric_id = store.save_metrics(session_id, &report)?;
    Ok(MetricsView { metric_id, report })
}

async fn session_metrics(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FormatQuery>,
    Json(req): Json<MetricsRequest>,
) -> Result<Response> {
    let csv = match q.format.as_deref() {
        None | Some("json") => false,
        Some("csv") => true,
        Some(other) => return Err(bad(format!("unknown format `{other}`"))),
    };
    let view = blocking(move || run_metrics(&s.store, &s.adapters, &id, &req.job_id)).await?;
    if csv {
        let text = reports_to_csv(std::slice::from_ref(&view.report))?;
        return Ok(([(header::CONTENT_TYPE, "text/csv")], text).into_response());
    }
    Ok(Json(view).into_response())
}

/// Serves until ctrl-c or SIGTERM.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}
