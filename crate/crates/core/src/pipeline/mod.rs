//! End-to-end runs: load a scene, lift scribbles, train, predict, refine,
//! render the validation view and score it. The HTTP service drives the
//! same [`segment`] entry point through [`session`].

mod config;
pub mod session;

pub use config::{AutoScribbleConfig, BaselineKind, InputConfig, PipelineConfig, StageConfig};
pub use session::{FeatureCache, SegmentJob, SegmentPlan, Session, SessionResult};

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{
    feature_rows, init_model, model_to_bytes, predict_volume, train, ClassifierError, MlpModel, TrainConfig,
    TrainHistory,
};
use crate::eval::{format_report, mask_metrics, parse_report, render_metrics, EvalError, MetricRecord};
use crate::features::{compute_features, FeatureError, FeatureVolume};
use crate::geometry::{parse_cameras, Camera};
use crate::graphcut::{graphcut2d_baseline, graphcut3d_baseline, postprocess, GraphCutError, GraphCutParams, Refinement};
use crate::raster::{to_u8, Mask, RgbImage};
use crate::scribbles::{lift_scribbles, project_labeled_voxels, LabeledVoxels, ScribbleError, ScribbleSet};
use crate::synth::{
    auto_scribbles_from, labels_from_bytes, labels_to_bytes, make_scene, read_scene, selection_mask, SceneSpec,
    SynthError, SyntheticScene,
};
use crate::volume::{read_volume, render_view, volume_to_bytes, PlaneVolume, VolumeError};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pipeline failure, tagged with the stage that raised it.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("[config] {0}")]
    Config(String),
    #[error("[input] {0}")]
    Input(String),
    #[error("[io] {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("[scene] {0}")]
    Scene(#[from] SynthError),
    #[error("[features] {0}")]
    Features(#[from] FeatureError),
    #[error("[scribbles] {0}")]
    Scribbles(#[from] ScribbleError),
    #[error("[train] {0}")]
    Train(#[from] ClassifierError),
    #[error("[graphcut] {0}")]
    GraphCut(#[from] GraphCutError),
    #[error("[render] {0}")]
    Render(#[from] VolumeError),
    #[error("[eval] {0}")]
    Eval(#[from] EvalError),
    #[error("[artifacts] {0}")]
    Artifact(String),
    #[error("cancelled by a newer request")]
    Cancelled,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io(path.to_path_buf(), e)
}

/// A loaded scene: volume, calibrated views and optional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub id: String,
    pub volume: PlaneVolume,
    /// Reference camera first.
    pub cameras: Vec<Camera>,
    pub views: Vec<RgbImage>,
    /// Held-out camera used for scoring; excluded from the cost volume.
    pub validation: Option<usize>,
    pub gt_labels: Option<Vec<bool>>,
    /// Per-voxel object ids of synthetic scenes, used to spread automatic
    /// scribbles over distinct objects.
    pub object_ids: Option<Vec<u32>>,
}

impl Scene {
    pub fn from_synthetic(id: impl Into<String>, s: SyntheticScene) -> Self {
        let validation = Some(s.validation_index());
        let object_ids = Some(s.object_ids());
        Self {
            id: id.into(),
            volume: s.volume,
            cameras: s.cameras,
            views: s.views,
            validation,
            gt_labels: Some(s.gt_labels),
            object_ids,
        }
    }

    pub fn load(input: &InputConfig) -> Result<Self, PipelineError> {
        let scene = if let Some(seed) = input.synthetic_seed {
            let id = input.scene_id.clone().unwrap_or_else(|| format!("synthetic-{seed}"));
            Self::from_synthetic(id, make_scene(&SceneSpec::desk(seed))?)
        } else if let Some(dir) = &input.scene_dir {
            let id = input.scene_id.clone().unwrap_or_else(|| {
                dir.file_name().map_or("scene".into(), |n| n.to_string_lossy().into_owned())
            });
            Self::from_synthetic(id, read_scene(dir)?)
        } else {
            let vpath = input.volume.as_ref().ok_or_else(|| PipelineError::Config("input.volume: missing".into()))?;
            let cpath = input.cameras.as_ref().ok_or_else(|| PipelineError::Config("input.cameras: missing".into()))?;
            let volume = read_volume(vpath)?;
            let cameras = parse_cameras(&std::fs::read_to_string(cpath).map_err(io_err(cpath))?)
                .map_err(|e| PipelineError::Input(format!("input.cameras: {e}")))?;
            let views = input
                .views
                .iter()
                .map(|p| RgbImage::from_png(p).map_err(|e| PipelineError::Input(format!("{}: {e}", p.display()))))
                .collect::<Result<Vec<_>, _>>()?;
            let gt_labels = match &input.gt_labels {
                Some(p) => Some(labels_from_bytes(&std::fs::read(p).map_err(io_err(p))?)?),
                None => None,
            };
            Self {
                id: input.scene_id.clone().unwrap_or_else(|| "scene".into()),
                volume,
                cameras,
                views,
                validation: input.validation_view,
                gt_labels,
                object_ids: None,
            }
        };
        scene.check()?;
        Ok(scene)
    }

    fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Input(m));
        if self.cameras.is_empty() || self.cameras.len() != self.views.len() {
            return bad(format!("{} cameras but {} views", self.cameras.len(), self.views.len()));
        }
        for (i, (c, v)) in self.cameras.iter().zip(&self.views).enumerate() {
            if (c.width, c.height) != (v.width, v.height) {
                return bad(format!("view {i} is {}x{}, camera expects {}x{}", v.width, v.height, c.width, c.height));
            }
        }
        let r = &self.cameras[0];
        if (r.width, r.height) != (self.volume.ref_cam.width, self.volume.ref_cam.height) {
            return bad("reference camera size differs from the volume grid".into());
        }
        if let Some(v) = self.validation {
            if v == 0 || v >= self.cameras.len() {
                return bad(format!("validation view {v} must be a non-reference camera"));
            }
        }
        if self.gt_labels.as_ref().is_some_and(|l| l.len() != self.volume.dims().len()) {
            return bad("ground-truth label count does not match the volume".into());
        }
        Ok(())
    }

    /// Reference and source views: every camera except the validation one.
    pub fn cost_views(&self) -> Vec<(&RgbImage, &Camera)> {
        self.views
            .iter()
            .zip(&self.cameras)
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.validation)
            .map(|(_, v)| v)
            .collect()
    }

    /// Key identifying the feature volume of this scene.
    pub fn feature_key(&self, with_mvs: bool, seed: u64) -> String {
        let mut h = Sha256::new();
        h.update(volume_to_bytes(&self.volume));
        for (img, cam) in self.cost_views() {
            h.update(img.to_png_bytes());
            h.update(crate::geometry::format_cameras(std::slice::from_ref(cam)).as_bytes());
        }
        h.update([u8::from(with_mvs)]);
        h.update(seed.to_le_bytes());
        hex::encode(h.finalize())
    }

    pub fn features(&self, with_mvs: bool, seed: u64) -> Result<FeatureVolume, PipelineError> {
        Ok(compute_features(&self.volume, &self.cost_views(), with_mvs, seed)?)
    }

    /// Strokes from the scribble file, or drawn from the ground truth.
    pub fn scribbles(&self, input: &InputConfig, auto: &AutoScribbleConfig) -> Result<ScribbleSet, PipelineError> {
        if let Some(p) = &input.scribbles {
            return Ok(ScribbleSet::read(p)?);
        }
        let labels = self
            .gt_labels
            .as_ref()
            .ok_or_else(|| PipelineError::Config("input.scribbles: required without ground truth".into()))?;
        let ref_mask = selection_mask(&self.volume, &self.volume.ref_cam, labels)?;
        Ok(auto_scribbles_from(
            &self.volume,
            labels,
            self.object_ids.as_deref(),
            &ref_mask,
            auto.fg_strokes,
            auto.bg_strokes,
            auto.seed,
        )?)
    }
}

/// Settings of one segmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentOptions {
    pub gamma: f64,
    pub seed: u64,
    pub train: TrainConfig,
    pub graphcut: GraphCutParams,
    pub postprocess: bool,
}

impl SegmentOptions {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        Self {
            gamma: cfg.gamma,
            seed: cfg.seed,
            train: cfg.train.clone(),
            graphcut: cfg.graphcut.clone(),
            postprocess: cfg.stages.postprocess,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub lifted: LabeledVoxels,
    pub model: MlpModel,
    pub history: TrainHistory,
    /// Foreground probability per voxel.
    pub probabilities: Vec<f64>,
    /// Classifier output thresholded at 1/2.
    pub raw_labels: Vec<bool>,
    pub refinement: Option<Refinement>,
    /// Final per-voxel selection.
    pub labels: Vec<bool>,
}

fn check_cancel(cancel: Option<&AtomicBool>) -> Result<(), PipelineError> {
    if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
        return Err(PipelineError::Cancelled);
    }
    Ok(())
}

/// Lift → train → predict → (optionally) refine. `cancel` is polled
/// between stages.
pub fn segment(
    vol: &PlaneVolume,
    fv: &FeatureVolume,
    scribbles: &ScribbleSet,
    opts: &SegmentOptions,
    cancel: Option<&AtomicBool>,
) -> Result<Segmentation, PipelineError> {
    let lifted = lift_scribbles(vol, scribbles, opts.gamma)?;
    check_cancel(cancel)?;
    let voxels: Vec<usize> = lifted.entries.iter().map(|e| e.voxel).collect();
    let y: Vec<bool> = lifted.entries.iter().map(|e| e.fg).collect();
    let x = feature_rows(fv, &voxels);
    let (model, history) = train(&init_model(fv.channels(), opts.seed), x.view(), &y, &opts.train)?;
    log::info!(
        "trained on {} fg / {} bg voxels for {} epochs",
        lifted.count(true),
        lifted.count(false),
        history.selected_epochs
    );
    check_cancel(cancel)?;
    let probabilities = predict_volume(&model, fv)?;
    check_cancel(cancel)?;
    let raw_labels: Vec<bool> = probabilities.iter().map(|&p| p >= 0.5).collect();
    let refinement = if opts.postprocess {
        Some(postprocess(vol, &probabilities, fv, &lifted, &opts.graphcut)?)
    } else {
        None
    };
    let labels = refinement.as_ref().map_or_else(|| raw_labels.clone(), |r| r.labels.clone());
    Ok(Segmentation {
        lifted,
        model,
        history,
        probabilities,
        raw_labels,
        refinement,
        labels,
    })
}

fn quantize(img: RgbImage) -> RgbImage {
    RgbImage {
        data: img.data.iter().map(|&v| to_u8(v) as f32 / 255.0).collect(),
        ..img
    }
}

/// Mask (alpha > 1/2) and 8-bit color render of a selection seen from `cam`.
pub fn render_selection(vol: &PlaneVolume, cam: &Camera, labels: &[bool]) -> Result<(Mask, RgbImage), VolumeError> {
    let r = render_view(vol, cam, Some(labels))?;
    Ok((r.alpha_mask(0.5), quantize(r.rgb)))
}

/// Everything scored on the validation view. Masks are keyed by the prefix
/// of their metric names (`""` for the full method).
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationOutputs {
    pub gt_mask: Mask,
    /// Rendered ground-truth object and rendered selection; PSNR and SSIM
    /// are reported only when both exist.
    pub gt_fg: Option<RgbImage>,
    pub fg: Option<RgbImage>,
    pub masks: Vec<(String, Mask)>,
}

/// Mask files of the validation outputs, in scoring order.
pub const MASK_FILES: [(&str, &str); 5] = [
    ("", "mask.png"),
    ("raw_", "raw_mask.png"),
    ("nomvs_", "nomvs_mask.png"),
    ("gc3d_", "gc3d_mask.png"),
    ("gc2d_", "gc2d_mask.png"),
];

pub fn score_outputs(scene_id: &str, out: &ValidationOutputs) -> Result<Vec<MetricRecord>, PipelineError> {
    let rec = |metric: String, value: f64| MetricRecord {
        scene: scene_id.into(),
        metric,
        value,
    };
    let mut records = Vec::new();
    for (prefix, _) in MASK_FILES {
        if let Some((_, m)) = out.masks.iter().find(|(p, _)| p == prefix) {
            let mm = mask_metrics(m, &out.gt_mask)?;
            records.push(rec(format!("{prefix}acc"), mm.accuracy));
            records.push(rec(format!("{prefix}iou"), mm.iou));
        }
    }
    if let (Some(fg), Some(gt_fg), true) = (&out.fg, &out.gt_fg, out.gt_mask.count() > 0) {
        let rm = render_metrics(fg, gt_fg, &out.gt_mask)?;
        records.push(rec("psnr".into(), rm.psnr));
        records.push(rec("ssim".into(), rm.ssim));
    }
    Ok(records)
}

/// Collects output files and their hashes.
struct ArtifactWriter {
    dir: PathBuf,
    entries: Vec<(String, String)>,
}

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const VALIDATION_DIR: &str = "validation";

impl ArtifactWriter {
    fn new(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir.join(VALIDATION_DIR)).map_err(io_err(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        self.entries.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn finish(mut self) -> Result<Vec<(String, String)>, PipelineError> {
        self.entries.sort();
        let text: String = self.entries.iter().map(|(n, h)| format!("{h}  {n}\n")).collect();
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(io_err(&path))?;
        Ok(self.entries)
    }
}

pub fn f32_bytes(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(|v| (v as f32).to_le_bytes()).collect()
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub scene: Scene,
    pub scribbles: ScribbleSet,
    pub segmentation: Segmentation,
    pub validation: Option<ValidationOutputs>,
    pub records: Vec<MetricRecord>,
    /// `(file, sha256)` for every artifact, sorted by file name.
    pub manifest: Vec<(String, String)>,
}

/// Runs `f` on a pool of `workers` threads (rayon's default when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| PipelineError::Config(format!("workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Full run as configured, writing artifacts under `cfg.output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    with_workers(cfg.workers, || run_inner(cfg))?
}

fn run_inner(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    let scene = Scene::load(&cfg.input)?;
    let scribbles = scene.scribbles(&cfg.input, &cfg.auto_scribbles)?;
    let fv = scene.features(cfg.stages.mvs_features, cfg.seed)?;
    let opts = SegmentOptions::from_config(cfg);
    let seg = segment(&scene.volume, &fv, &scribbles, &opts, None)?;
    let vol = &scene.volume;

    let mut art = ArtifactWriter::new(&cfg.output_dir)?;
    art.write("scene.txt", format!("{}\n", scene.id).as_bytes())?;
    art.write("scribbles.txt", scribbles.to_text().as_bytes())?;
    art.write("model.bin", &model_to_bytes(&seg.model, &opts.train))?;
    art.write("probabilities.f32", &f32_bytes(seg.probabilities.iter().copied()))?;
    art.write("labels.bin", &labels_to_bytes(&seg.labels))?;
    art.write("raw_labels.bin", &labels_to_bytes(&seg.raw_labels))?;
    art.write("segmentation.vxv", &volume_to_bytes(&vol.with_selection(&seg.labels)?))?;

    let mut validation = None;
    let mut records = Vec::new();
    if let Some(vi) = scene.validation {
        let cam = &scene.cameras[vi];
        let (mask, fg) = render_selection(vol, cam, &seg.labels)?;
        let mut masks = vec![(String::new(), mask)];
        if seg.refinement.is_some() {
            masks.push(("raw_".into(), render_selection(vol, cam, &seg.raw_labels)?.0));
        }
        if cfg.stages.ablate_mvs && cfg.stages.mvs_features {
            let fv_plain = scene.features(false, cfg.seed)?;
            let plain = segment(vol, &fv_plain, &scribbles, &opts, None)?;
            masks.push(("nomvs_".into(), render_selection(vol, cam, &plain.labels)?.0));
        }
        for b in &cfg.stages.baselines {
            match b {
                BaselineKind::Graphcut3d => {
                    let r = graphcut3d_baseline(vol, &fv, &seg.lifted, &cfg.graphcut)?;
                    masks.push(("gc3d_".into(), render_selection(vol, cam, &r.labels)?.0));
                }
                BaselineKind::Graphcut2d => {
                    let px = project_labeled_voxels(&seg.lifted, vol, cam);
                    let m = graphcut2d_baseline(&scene.views[vi], &px.fg, &px.bg, cfg.stages.baseline_2d_clusters, cfg.seed)?;
                    masks.push(("gc2d_".into(), m));
                }
            }
        }
        for (prefix, m) in &masks {
            let file = MASK_FILES.iter().find(|(p, _)| p == prefix).expect("known prefix").1;
            art.write(&format!("{VALIDATION_DIR}/{file}"), &m.to_png_bytes())?;
        }
        art.write(&format!("{VALIDATION_DIR}/fg.png"), &fg.to_png_bytes())?;
        if let Some(gt) = &scene.gt_labels {
            let (gt_mask, gt_fg) = render_selection(vol, cam, gt)?;
            art.write(&format!("{VALIDATION_DIR}/gt_mask.png"), &gt_mask.to_png_bytes())?;
            art.write(&format!("{VALIDATION_DIR}/gt_fg.png"), &gt_fg.to_png_bytes())?;
            let out = ValidationOutputs {
                gt_mask,
                gt_fg: Some(gt_fg),
                fg: Some(fg),
                masks,
            };
            records = score_outputs(&scene.id, &out)?;
            validation = Some(out);
        }
    }
    art.write(METRICS_FILE, format_report(&records).as_bytes())?;
    let manifest = art.finish()?;
    Ok(RunOutput {
        scene,
        scribbles,
        segmentation: seg,
        validation,
        records,
        manifest,
    })
}

fn read_mask(path: &Path) -> Result<Mask, PipelineError> {
    Mask::from_png(path).map_err(|e| PipelineError::Artifact(format!("{}: {e}", path.display())))
}

/// Recomputes the metrics of a finished run from its saved artifacts.
pub fn evaluate_run(dir: &Path) -> Result<Vec<MetricRecord>, PipelineError> {
    let scene_file = dir.join("scene.txt");
    let id = std::fs::read_to_string(&scene_file).map_err(io_err(&scene_file))?;
    let v = dir.join(VALIDATION_DIR);
    let gt_path = v.join("gt_mask.png");
    if !gt_path.exists() {
        return Ok(Vec::new());
    }
    let img = |name: &str| {
        let p = v.join(name);
        if !p.exists() {
            return Ok(None);
        }
        RgbImage::from_png(&p)
            .map(Some)
            .map_err(|e| PipelineError::Artifact(format!("{}: {e}", p.display())))
    };
    let mut masks = Vec::new();
    for (prefix, file) in MASK_FILES {
        let p = v.join(file);
        if p.exists() {
            masks.push((prefix.to_string(), read_mask(&p)?));
        }
    }
    let out = ValidationOutputs {
        gt_mask: read_mask(&gt_path)?,
        gt_fg: img("gt_fg.png")?,
        fg: img("fg.png")?,
        masks,
    };
    score_outputs(id.trim(), &out)
}

/// Runs one baseline as configured and writes its labels (3D baseline),
/// validation mask and metrics under `cfg.output_dir`. Metric names carry
/// the baseline's prefix (`gc3d_`, `gc2d_`).
pub fn run_baseline(cfg: &PipelineConfig, kind: BaselineKind) -> Result<Vec<MetricRecord>, PipelineError> {
    cfg.validate()?;
    with_workers(cfg.workers, || baseline_inner(cfg, kind))?
}

fn baseline_inner(cfg: &PipelineConfig, kind: BaselineKind) -> Result<Vec<MetricRecord>, PipelineError> {
    let scene = Scene::load(&cfg.input)?;
    let scribbles = scene.scribbles(&cfg.input, &cfg.auto_scribbles)?;
    let vol = &scene.volume;
    let lifted = lift_scribbles(vol, &scribbles, cfg.gamma)?;
    // Scored on the validation view when there is one, else the reference.
    let vi = scene.validation.unwrap_or(0);
    let cam = &scene.cameras[vi];
    let mut art = ArtifactWriter::new(&cfg.output_dir)?;
    art.write("scene.txt", format!("{}\n", scene.id).as_bytes())?;
    art.write("scribbles.txt", scribbles.to_text().as_bytes())?;
    let (prefix, mask, fg) = match kind {
        BaselineKind::Graphcut3d => {
            let fv = scene.features(cfg.stages.mvs_features, cfg.seed)?;
            let r = graphcut3d_baseline(vol, &fv, &lifted, &cfg.graphcut)?;
            art.write("labels.bin", &labels_to_bytes(&r.labels))?;
            art.write("segmentation.vxv", &volume_to_bytes(&vol.with_selection(&r.labels)?))?;
            let (mask, fg) = render_selection(vol, cam, &r.labels)?;
            ("gc3d_", mask, Some(fg))
        }
        BaselineKind::Graphcut2d => {
            let px = project_labeled_voxels(&lifted, vol, cam);
            let m = graphcut2d_baseline(&scene.views[vi], &px.fg, &px.bg, cfg.stages.baseline_2d_clusters, cfg.seed)?;
            ("gc2d_", m, None)
        }
    };
    let file = MASK_FILES.iter().find(|(p, _)| *p == prefix).expect("known prefix").1;
    art.write(&format!("{VALIDATION_DIR}/{file}"), &mask.to_png_bytes())?;
    if let Some(fg) = &fg {
        art.write(&format!("{VALIDATION_DIR}/fg.png"), &fg.to_png_bytes())?;
    }
    let mut records = Vec::new();
    if let Some(gt) = &scene.gt_labels {
        let (gt_mask, gt_fg) = render_selection(vol, cam, gt)?;
        art.write(&format!("{VALIDATION_DIR}/gt_mask.png"), &gt_mask.to_png_bytes())?;
        art.write(&format!("{VALIDATION_DIR}/gt_fg.png"), &gt_fg.to_png_bytes())?;
        let out = ValidationOutputs {
            gt_mask,
            gt_fg: Some(gt_fg),
            fg,
            masks: vec![(prefix.to_string(), mask)],
        };
        records = score_outputs(&scene.id, &out)?;
    }
    art.write(METRICS_FILE, format_report(&records).as_bytes())?;
    art.finish()?;
    Ok(records)
}

/// Reads a run's `metrics.tsv`.
pub fn read_metrics(dir: &Path) -> Result<Vec<MetricRecord>, PipelineError> {
    let p = dir.join(METRICS_FILE);
    Ok(parse_report(&std::fs::read_to_string(&p).map_err(io_err(&p))?)?)
}

/// Checks every file listed in a run's manifest against its hash.
pub fn verify_manifest(dir: &Path) -> Result<(), PipelineError> {
    let p = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&p).map_err(io_err(&p))?;
    for line in text.lines() {
        let (hash, name) = line
            .split_once("  ")
            .ok_or_else(|| PipelineError::Artifact(format!("bad manifest line {line:?}")))?;
        let f = dir.join(name);
        let got = sha256_hex(&std::fs::read(&f).map_err(io_err(&f))?);
        if got != hash {
            return Err(PipelineError::Artifact(format!("{name}: hash mismatch")));
        }
    }
    Ok(())
}
