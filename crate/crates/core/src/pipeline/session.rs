//! Interactive sessions: one scene, its cached features, a growing scribble
//! set, and the latest segmentation tagged with the revision it came from.
//!
//! Segmentation runs outside the session lock: [`Session::prepare_segment`]
//! snapshots the inputs into a [`SegmentJob`], the job runs on its own, and
//! [`Session::commit`] stores the result only if no newer scribbles arrived.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use super::{render_selection, segment, PipelineError, Scene, SegmentOptions, Segmentation};
use crate::features::FeatureVolume;
use crate::geometry::Camera;
use crate::raster::{Mask, RgbImage};
use crate::scribbles::{ScribbleError, ScribbleSet, Stroke};
use crate::volume::render_view;

/// Feature volumes shared across sessions, keyed by [`Scene::feature_key`].
#[derive(Debug, Default)]
pub struct FeatureCache {
    map: Mutex<HashMap<String, Arc<FeatureVolume>>>,
}

impl FeatureCache {
    pub fn get_or_compute(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<FeatureVolume, PipelineError>,
    ) -> Result<Arc<FeatureVolume>, PipelineError> {
        if let Some(fv) = self.map.lock().expect("cache lock").get(key) {
            return Ok(fv.clone());
        }
        let fv = Arc::new(compute()?);
        Ok(self
            .map
            .lock()
            .expect("cache lock")
            .entry(key.to_string())
            .or_insert(fv)
            .clone())
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct SessionResult {
    pub revision: u64,
    pub segmentation: Arc<Segmentation>,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub scene: Arc<Scene>,
    pub features: Arc<FeatureVolume>,
    pub options: SegmentOptions,
    scribbles: ScribbleSet,
    revision: u64,
    result: Option<SessionResult>,
    in_flight: Option<Arc<AtomicBool>>,
}

/// Inputs of one segmentation, detached from the session.
#[derive(Debug)]
pub struct SegmentJob {
    pub revision: u64,
    pub scene: Arc<Scene>,
    pub features: Arc<FeatureVolume>,
    pub scribbles: ScribbleSet,
    pub options: SegmentOptions,
    pub cancel: Arc<AtomicBool>,
}

impl SegmentJob {
    pub fn run(&self) -> Result<Segmentation, PipelineError> {
        segment(
            &self.scene.volume,
            &self.features,
            &self.scribbles,
            &self.options,
            Some(&self.cancel),
        )
    }
}

/// What a segment request needs to do.
#[derive(Debug)]
pub enum SegmentPlan {
    /// The stored result already matches the current revision.
    Cached(SessionResult),
    Run(SegmentJob),
}

impl Session {
    pub fn new(
        id: String,
        scene: Arc<Scene>,
        options: SegmentOptions,
        with_mvs: bool,
        cache: &FeatureCache,
    ) -> Result<Self, PipelineError> {
        let key = scene.feature_key(with_mvs, options.seed);
        let features = cache.get_or_compute(&key, || scene.features(with_mvs, options.seed))?;
        Ok(Self {
            id,
            scene,
            features,
            options,
            scribbles: ScribbleSet::default(),
            revision: 0,
            result: None,
            in_flight: None,
        })
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn scribbles(&self) -> &ScribbleSet {
        &self.scribbles
    }

    pub fn result(&self) -> Option<&SessionResult> {
        self.result.as_ref()
    }

    /// Appends (or with `replace`, replaces) strokes. Strokes are checked
    /// against the reference view first; on error nothing changes. Bumps
    /// the revision and cancels any running segmentation.
    pub fn add_strokes(&mut self, strokes: Vec<Stroke>, replace: bool) -> Result<u64, ScribbleError> {
        let cam = &self.scene.volume.ref_cam;
        let mut next = if replace { ScribbleSet::default() } else { self.scribbles.clone() };
        next.strokes.extend(strokes);
        crate::scribbles::rasterize_scribbles(&next, cam.width, cam.height, crate::scribbles::DEFAULT_BRUSH_RADIUS)?;
        self.scribbles = next;
        self.revision += 1;
        if let Some(c) = self.in_flight.take() {
            c.store(true, Ordering::Relaxed);
        }
        Ok(self.revision)
    }

    /// Validates the scribbles and either returns the cached result or a job
    /// for the current revision.
    pub fn prepare_segment(&mut self) -> Result<SegmentPlan, PipelineError> {
        self.scribbles.check_complete()?;
        if let Some(r) = &self.result {
            if r.revision == self.revision {
                return Ok(SegmentPlan::Cached(r.clone()));
            }
        }
        let cancel = Arc::new(AtomicBool::new(false));
        self.in_flight = Some(cancel.clone());
        Ok(SegmentPlan::Run(SegmentJob {
            revision: self.revision,
            scene: self.scene.clone(),
            features: self.features.clone(),
            scribbles: self.scribbles.clone(),
            options: self.options.clone(),
            cancel,
        }))
    }

    /// Stores a finished job's result unless the scribbles changed since it
    /// started. Returns the stored result, or `None` when stale.
    pub fn commit(&mut self, job: &SegmentJob, seg: Segmentation) -> Option<SessionResult> {
        if job.revision != self.revision {
            return None;
        }
        self.in_flight = None;
        let r = SessionResult {
            revision: job.revision,
            segmentation: Arc::new(seg),
        };
        self.result = Some(r.clone());
        Some(r)
    }

    /// Runs a segmentation synchronously.
    pub fn segment_now(&mut self) -> Result<SessionResult, PipelineError> {
        match self.prepare_segment()? {
            SegmentPlan::Cached(r) => Ok(r),
            SegmentPlan::Run(job) => {
                let seg = job.run()?;
                self.commit(&job, seg).ok_or(PipelineError::Cancelled)
            }
        }
    }

    pub fn num_views(&self) -> usize {
        self.scene.cameras.len()
    }

    pub fn view_image(&self, view: usize) -> Option<&RgbImage> {
        self.scene.views.get(view)
    }

    /// Mask of the latest selection in rig view `view`.
    pub fn view_mask(&self, view: usize) -> Result<Option<Mask>, PipelineError> {
        let (Some(cam), Some(r)) = (self.scene.cameras.get(view), &self.result) else {
            return Ok(None);
        };
        Ok(Some(render_selection(&self.scene.volume, cam, &r.segmentation.labels)?.0))
    }

    /// Render from an arbitrary camera, optionally restricted to the latest
    /// selection (falls back to the full volume before any segmentation).
    pub fn render(&self, cam: &Camera, selected: bool) -> Result<RgbImage, PipelineError> {
        let sel = if selected {
            self.result.as_ref().map(|r| r.segmentation.labels.as_slice())
        } else {
            None
        };
        Ok(render_view(&self.scene.volume, cam, sel)?.rgb)
    }
}
