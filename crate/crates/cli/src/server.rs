//! HTTP service for interactive selection.
//!
//! Structured payloads are JSON, images are PNG. Every session response
//! carries the session's current revision in the `x-revision` header (and
//! in the JSON body where there is one); masks and selected renders also
//! name the revision they were computed from in `x-segment-revision`.
//!
//! There is no authentication: the service reads scene files from paths
//! given by clients and is meant for local use only.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use voxsel::geometry::Camera;
use voxsel::pipeline::{
    FeatureCache, InputConfig, PipelineConfig, PipelineError, Scene, SegmentOptions, SegmentPlan, Session,
};
use voxsel::scribbles::{ScribbleError, Stroke};

/// Shared service state.
pub struct AppState {
    defaults: PipelineConfig,
    sessions: Mutex<HashMap<String, Arc<SessionSlot>>>,
    cache: FeatureCache,
    next_id: AtomicU64,
}

struct SessionSlot {
    session: Mutex<Session>,
    /// Held for the whole of a segment request: one in flight per session.
    segment: tokio::sync::Mutex<()>,
}

impl AppState {
    /// `defaults` supplies γ, training, graph-cut and stage settings for
    /// every session; its `input` section is ignored.
    pub fn new(defaults: PipelineConfig) -> Arc<Self> {
        Arc::new(Self {
            defaults,
            sessions: Mutex::new(HashMap::new()),
            cache: FeatureCache::default(),
            next_id: AtomicU64::new(1),
        })
    }

    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.sessions
            .lock()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id:?}")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/scribbles", post(post_scribbles))
        .route("/sessions/{id}/segment", post(post_segment))
        .route("/sessions/{id}/views/{view}/image", get(view_image))
        .route("/sessions/{id}/views/{view}/mask", get(view_mask))
        .route("/sessions/{id}/render", get(render))
        .with_state(state)
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    revision: Option<u64>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    revision: Option<u64>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            revision: None,
        }
    }

    fn at(mut self, revision: u64) -> Self {
        self.revision = Some(revision);
        self
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Scribbles(_) | PipelineError::Config(_) | PipelineError::Input(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            PipelineError::Cancelled => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<ScribbleError> for ApiError {
    fn from(e: ScribbleError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut res = (
            self.status,
            Json(ErrorBody {
                error: self.message,
                revision: self.revision,
            }),
        )
            .into_response();
        if let Some(r) = self.revision {
            res.headers_mut().insert("x-revision", HeaderValue::from(r));
        }
        res
    }
}

fn with_revision(revision: u64, body: impl IntoResponse) -> Response {
    let mut res = body.into_response();
    res.headers_mut().insert("x-revision", HeaderValue::from(revision));
    res
}

fn png(revision: u64, segment_revision: Option<u64>, bytes: Vec<u8>) -> Response {
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
    if let Some(r) = segment_revision {
        headers.insert("x-segment-revision", HeaderValue::from(r));
    }
    with_revision(revision, (headers, bytes))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub input: InputConfig,
    /// Include multi-view features (default from the service config).
    #[serde(default)]
    pub mvs_features: Option<bool>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SessionInfo {
    pub id: String,
    pub revision: u64,
    pub scene: String,
    pub views: usize,
    pub width: usize,
    pub height: usize,
    pub validation_view: Option<usize>,
    pub strokes: Vec<Stroke>,
    /// Revision of the stored segmentation, if any.
    pub segmented_revision: Option<u64>,
    pub selected_voxels: Option<usize>,
}

fn info(s: &Session) -> SessionInfo {
    let cam = &s.scene.volume.ref_cam;
    let result = s.result();
    SessionInfo {
        id: s.id.clone(),
        revision: s.revision(),
        scene: s.scene.id.clone(),
        views: s.num_views(),
        width: cam.width,
        height: cam.height,
        validation_view: s.scene.validation,
        strokes: s.scribbles().strokes.clone(),
        segmented_revision: result.map(|r| r.revision),
        selected_voxels: result.map(|r| r.segmentation.labels.iter().filter(|&&l| l).count()),
    }
}

async fn create_session(State(state): State<Arc<AppState>>, Json(req): Json<CreateSession>) -> Result<Response, ApiError> {
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let st = state.clone();
    let sid = id.clone();
    let session = blocking(move || -> Result<Session, PipelineError> {
        let mut cfg = st.defaults.clone();
        cfg.input = req.input;
        if let Some(seed) = req.seed {
            cfg.seed = seed;
        }
        cfg.output_dir = std::env::temp_dir();
        cfg.validate()?;
        let scene = Arc::new(Scene::load(&cfg.input)?);
        let with_mvs = req.mvs_features.unwrap_or(cfg.stages.mvs_features);
        Session::new(sid, scene, SegmentOptions::from_config(&cfg), with_mvs, &st.cache)
    })
    .await??;
    let body = info(&session);
    state.sessions.lock().expect("session table").insert(
        id,
        Arc::new(SessionSlot {
            session: Mutex::new(session),
            segment: tokio::sync::Mutex::new(()),
        }),
    );
    Ok(with_revision(body.revision, (StatusCode::CREATED, Json(body))))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let s = slot.session.lock().expect("session");
    Ok(with_revision(s.revision(), Json(info(&s))))
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScribbleRequest {
    pub strokes: Vec<Stroke>,
    /// Replace the stroke list instead of appending.
    #[serde(default)]
    pub replace: bool,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ScribbleResponse {
    pub revision: u64,
    pub strokes: usize,
}

async fn post_scribbles(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<ScribbleRequest>,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let mut s = slot.session.lock().expect("session");
    let before = s.revision();
    let revision = s.add_strokes(req.strokes, req.replace).map_err(|e| ApiError::from(e).at(before))?;
    let body = ScribbleResponse {
        revision,
        strokes: s.scribbles().strokes.len(),
    };
    Ok(with_revision(revision, Json(body)))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SegmentResponse {
    pub revision: u64,
    pub selected_voxels: usize,
    pub lifted_fg: usize,
    pub lifted_bg: usize,
    pub epochs: usize,
}

async fn post_segment(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let _serial = slot.segment.lock().await;
    let plan = {
        let mut s = slot.session.lock().expect("session");
        let rev = s.revision();
        s.prepare_segment().map_err(|e| ApiError::from(e).at(rev))?
    };
    let result = match plan {
        SegmentPlan::Cached(r) => r,
        SegmentPlan::Run(job) => {
            let (job, seg) = blocking(move || {
                let seg = job.run();
                (job, seg)
            })
            .await?;
            let mut s = slot.session.lock().expect("session");
            let rev = s.revision();
            let seg = seg.map_err(|e| ApiError::from(e).at(rev))?;
            s.commit(&job, seg).ok_or_else(|| {
                ApiError::new(StatusCode::CONFLICT, "scribbles changed during segmentation; segment again").at(rev)
            })?
        }
    };
    let seg = &result.segmentation;
    let body = SegmentResponse {
        revision: result.revision,
        selected_voxels: seg.labels.iter().filter(|&&l| l).count(),
        lifted_fg: seg.lifted.count(true),
        lifted_bg: seg.lifted.count(false),
        epochs: seg.history.selected_epochs,
    };
    Ok(with_revision(result.revision, Json(body)))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchQuery {
    /// Revision the client expects; a mismatch is a conflict.
    pub revision: Option<u64>,
}

fn check_expected(s: &Session, expected: Option<u64>) -> Result<(), ApiError> {
    match expected {
        Some(r) if r != s.revision() => Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("stale revision {r}, session is at {}", s.revision()),
        )
        .at(s.revision())),
        _ => Ok(()),
    }
}

fn bad_view(s: &Session, view: usize) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, format!("view {view} of {}", s.num_views())).at(s.revision())
}

async fn view_image(
    State(state): State<Arc<AppState>>,
    Path((id, view)): Path<(String, usize)>,
    Query(q): Query<FetchQuery>,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let s = slot.session.lock().expect("session");
    check_expected(&s, q.revision)?;
    let img = s.view_image(view).ok_or_else(|| bad_view(&s, view))?;
    Ok(png(s.revision(), None, img.to_png_bytes()))
}

async fn view_mask(
    State(state): State<Arc<AppState>>,
    Path((id, view)): Path<(String, usize)>,
    Query(q): Query<FetchQuery>,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let s = slot.session.lock().expect("session");
    check_expected(&s, q.revision)?;
    if view >= s.num_views() {
        return Err(bad_view(&s, view));
    }
    let seg_rev = s
        .result()
        .map(|r| r.revision)
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no segmentation yet").at(s.revision()))?;
    let mask = s
        .view_mask(view)
        .map_err(|e| ApiError::from(e).at(s.revision()))?
        .expect("segmented session has a mask");
    Ok(png(s.revision(), Some(seg_rev), mask.to_png_bytes()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderQuery {
    /// Comma-separated camera pose: `cx,cy,cz` (reference orientation) or
    /// `r00,…,r22,cx,cy,cz` (camera-to-world rotation, row-major, then the
    /// center). Intrinsics and size follow the reference camera.
    pub pose: String,
    #[serde(default)]
    pub selected: bool,
    pub revision: Option<u64>,
}

/// Parses a [`RenderQuery::pose`] against the reference camera.
pub fn parse_pose(text: &str, reference: &Camera) -> Result<Camera, String> {
    let nums = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("pose: not a number: {t:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    let (r, c) = match nums.len() {
        3 => (*reference.rotation(), Vector3::new(nums[0], nums[1], nums[2])),
        12 => (
            Matrix3::from_row_slice(&nums[..9]),
            Vector3::new(nums[9], nums[10], nums[11]),
        ),
        n => return Err(format!("pose: expected 3 or 12 numbers, got {n}")),
    };
    Camera::new(*reference.k(), r, c, reference.width, reference.height).map_err(|e| format!("pose: {e}"))
}

async fn render(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<RenderQuery>,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let (rev, seg_rev, session_scene, labels) = {
        let s = slot.session.lock().expect("session");
        check_expected(&s, q.revision)?;
        let labels = if q.selected {
            let r = s
                .result()
                .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no segmentation yet").at(s.revision()))?;
            Some((r.revision, r.segmentation.clone()))
        } else {
            None
        };
        (s.revision(), labels.as_ref().map(|l| l.0), s.scene.clone(), labels.map(|l| l.1))
    };
    let cam = parse_pose(&q.pose, &session_scene.volume.ref_cam)
        .map_err(|m| ApiError::new(StatusCode::BAD_REQUEST, m).at(rev))?;
    let bytes = blocking(move || {
        let sel = labels.as_ref().map(|seg| seg.labels.as_slice());
        voxsel::volume::render_view(&session_scene.volume, &cam, sel).map(|r| r.rgb.to_png_bytes())
    })
    .await?
    .map_err(|e| ApiError::from(PipelineError::from(e)).at(rev))?;
    Ok(png(rev, seg_rev, bytes))
}
