//! Procedural scenes with exact ground truth.
//!
//! A scene is a plane volume voxelized from a few analytic shapes (one or
//! more foreground objects, background clutter and an opaque textured
//! backdrop on the far plane), a small camera rig around the reference view,
//! and the images the volume renders into each rig camera. Because the
//! per-voxel labels are known, masks in any view follow by rendering the
//! foreground selection.

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{format_cameras, parse_cameras, Camera, DepthPlaneSet, GeometryError, SpacingKind};
use crate::raster::{to_u8, Mask, RasterError, RgbImage};
use crate::scribbles::{Class, ScribbleSet, Stroke, DEFAULT_BRUSH_RADIUS};
use crate::volume::{read_volume, render_view, surface_voxel, write_volume, BasisKind, PlaneVolume, VolumeError};
use crate::DEFAULT_GAMMA;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("foreground object {0} is not visible in every rig camera")]
    OutOfFrustum(usize),
    #[error("{0} region too small for scribbles after erosion")]
    MaskTooSmall(&'static str),
    #[error("scene spec: {0}")]
    Spec(String),
    #[error("labels: {0}")]
    Labels(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("scene i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Ellipsoid,
    /// Axis-aligned box; `radii` are half extents.
    Box,
}

/// Smooth trigonometric color field with optional hard stripes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureSpec {
    pub base: [f32; 3],
    pub amplitude: f32,
    /// Spatial frequency in radians per world unit.
    pub frequency: f64,
    pub phase: [f64; 3],
    #[serde(default)]
    pub stripes: f32,
}

impl TextureSpec {
    pub fn flat(base: [f32; 3]) -> Self {
        Self {
            base,
            amplitude: 0.0,
            frequency: 1.0,
            phase: [0.0; 3],
            stripes: 0.0,
        }
    }

    pub fn color(&self, p: &Vector3<f64>) -> [f32; 3] {
        let f = self.frequency;
        let [a, b, c] = self.phase;
        let stripe = if self.stripes != 0.0 {
            self.stripes * (3.0 * f * (p.x + 0.7 * p.y) + c).sin().signum() as f32
        } else {
            0.0
        };
        std::array::from_fn(|ch| {
            let k = ch as f64;
            let smooth = (f * p.x + a + 2.1 * k).sin() * (f * p.y + b + 1.3 * k).cos() * 0.6
                + (f * p.z + c + 0.7 * k).sin() * 0.4;
            (self.base[ch] + self.amplitude * smooth as f32 + stripe).clamp(0.0, 1.0)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub center: [f64; 3],
    pub radii: [f64; 3],
    /// Opacity of every voxel inside the shape.
    pub opacity: f32,
    pub texture: TextureSpec,
    pub foreground: bool,
}

impl ObjectSpec {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let q: [f64; 3] = std::array::from_fn(|i| (p[i] - self.center[i]) / self.radii[i]);
        match self.shape {
            Shape::Ellipsoid => q.iter().map(|v| v * v).sum::<f64>() <= 1.0,
            Shape::Box => q.iter().all(|v| v.abs() <= 1.0),
        }
    }
}

/// Camera rig around the reference view. All rig cameras share the
/// reference intrinsics and look at the first foreground object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigSpec {
    /// Source camera centers (the reference sits at the origin).
    pub sources: Vec<[f64; 3]>,
    /// Held-out validation camera center.
    pub validation: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub planes: usize,
    pub spacing: SpacingKind,
    pub z_near: f64,
    pub z_far: f64,
    pub focal: f64,
    pub basis: BasisKind,
    pub objects: Vec<ObjectSpec>,
    /// Opaque texture painted on the far plane, labeled background.
    pub backdrop: Option<TextureSpec>,
    pub rig: RigSpec,
}

fn jitter(rng: &mut ChaCha8Rng, amount: f64) -> f64 {
    rng.random_range(-amount..=amount)
}

fn random_texture(rng: &mut ChaCha8Rng, base: [f32; 3], amplitude: f32, stripes: f32) -> TextureSpec {
    TextureSpec {
        base: base.map(|c| (c + rng.random_range(-0.06..=0.06f32)).clamp(0.05, 0.95)),
        amplitude,
        frequency: rng.random_range(4.0..8.0),
        phase: std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU)),
        stripes,
    }
}

impl SceneSpec {
    /// The default desk-scale scene: a 128×96×32 grid, a textured
    /// foreground ellipsoid, background boxes, a textured backdrop, three
    /// source views and one validation view. `seed` perturbs placement and
    /// textures.
    pub fn desk(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = [jitter(&mut rng, 0.15), 0.1 + jitter(&mut rng, 0.1), 3.6 + jitter(&mut rng, 0.15)];
        let radii = [0.8, 0.7, 0.6].map(|r: f64| r * (1.0 + jitter(&mut rng, 0.1)));
        let fg_base = [[0.85, 0.4, 0.2], [0.25, 0.7, 0.3], [0.8, 0.75, 0.2]][rng.random_range(0..3)];
        let mut objects = vec![ObjectSpec {
            shape: Shape::Ellipsoid,
            center,
            radii,
            opacity: 0.95,
            texture: random_texture(&mut rng, fg_base, 0.15, 0.06),
            foreground: true,
        }];
        // Clutter in the four corners of the frame, clear of the object.
        let corners = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)];
        for (sx, sy) in corners.into_iter().take(3) {
            let z = rng.random_range(2.6..5.2);
            let half_w = 64.0 / 110.0 * z;
            let half_h = 48.0 / 110.0 * z;
            let r = [0.25, 0.25, 0.25].map(|r: f64| r * (1.0 + jitter(&mut rng, 0.2)));
            let grey = rng.random_range(0.3..0.6f32);
            let base = [grey, grey + rng.random_range(-0.1..0.1f32), grey + rng.random_range(0.0..0.25f32)];
            objects.push(ObjectSpec {
                shape: if rng.random_bool(0.5) { Shape::Box } else { Shape::Ellipsoid },
                center: [sx * (half_w - r[0] - 0.1), sy * (half_h - r[1] - 0.1), z],
                radii: r,
                // Thick and dense enough that scribbles lift onto the
                // object rather than the backdrop behind it.
                opacity: 0.95,
                texture: random_texture(&mut rng, base, 0.2, 0.1),
                foreground: false,
            });
        }
        let backdrop = Some(random_texture(&mut rng, [0.3, 0.4, 0.6], 0.25, 0.08));
        Self {
            width: 128,
            height: 96,
            planes: 32,
            spacing: SpacingKind::InverseDepth,
            z_near: 2.0,
            z_far: 6.0,
            focal: 110.0,
            basis: BasisKind::Constant,
            objects,
            backdrop,
            rig: RigSpec {
                sources: vec![[-0.3, 0.0, 0.0], [0.3, 0.0, 0.0], [0.0, -0.2, 0.0]],
                validation: [0.18, 0.12, -0.05],
            },
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if !self.objects.iter().any(|o| o.foreground) {
            return bad("no foreground object".into());
        }
        if self.width == 0 || self.height == 0 || self.planes == 0 {
            return bad("empty grid".into());
        }
        if !(self.focal > 0.0) {
            return bad(format!("focal length {}", self.focal));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.radii.iter().any(|&r| !(r > 0.0)) || !(0.0..=1.0).contains(&o.opacity) {
                return bad(format!("object {i} needs positive radii and opacity in [0, 1]"));
            }
        }
        if self.rig.sources.is_empty() {
            return bad("rig needs at least one source view".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Spec(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    fn reference_camera(&self) -> Result<Camera, GeometryError> {
        Camera::new(
            Camera::intrinsics(self.focal, self.width, self.height),
            nalgebra::Matrix3::identity(),
            Vector3::zeros(),
            self.width,
            self.height,
        )
    }

    /// `[reference, sources…, validation]`.
    pub fn rig_cameras(&self) -> Result<Vec<Camera>, SynthError> {
        let reference = self.reference_camera()?;
        let target = Vector3::from(self.objects.iter().find(|o| o.foreground).expect("validated").center);
        let k = *reference.k();
        let mut cams = vec![reference];
        for eye in self.rig.sources.iter().chain([&self.rig.validation]) {
            cams.push(Camera::look_at(
                k,
                Vector3::from(*eye),
                target,
                Vector3::y(),
                self.width,
                self.height,
            )?);
        }
        Ok(cams)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub volume: PlaneVolume,
    /// Per-voxel ground truth, `true` = foreground.
    pub gt_labels: Vec<bool>,
    /// `[reference, sources…, validation]`.
    pub cameras: Vec<Camera>,
    /// Rendered image per camera, quantized to 8 bits.
    pub views: Vec<RgbImage>,
    pub gt_mask_reference: Mask,
    pub gt_mask_validation: Mask,
}

impl SyntheticScene {
    /// Per-voxel object index; see [`object_ids`].
    pub fn object_ids(&self) -> Vec<u32> {
        object_ids(&self.spec, &self.volume)
    }

    pub fn validation_index(&self) -> usize {
        self.cameras.len() - 1
    }

    /// Reference plus source views: the inputs of the cost volume.
    pub fn cost_views(&self) -> Vec<(&RgbImage, &Camera)> {
        let n = self.validation_index();
        self.views[..n].iter().zip(&self.cameras[..n]).collect()
    }
}

fn quantize(img: RgbImage) -> RgbImage {
    RgbImage {
        data: img.data.iter().map(|&v| to_u8(v) as f32 / 255.0).collect(),
        ..img
    }
}

/// Ground-truth mask of a voxel selection seen from `cam`.
pub fn selection_mask(vol: &PlaneVolume, cam: &Camera, labels: &[bool]) -> Result<Mask, VolumeError> {
    Ok(render_view(vol, cam, Some(labels))?.alpha_mask(0.5))
}

/// Voxelizes `spec` and renders its rig. Deterministic.
/// Object id of voxels painted by nothing.
pub const NO_OBJECT: u32 = u32::MAX;

/// Which scene element painted each voxel: the object's index in
/// `spec.objects` (later objects win, as in [`make_scene`]), `objects.len()`
/// for the backdrop, or [`NO_OBJECT`].
pub fn object_ids(spec: &SceneSpec, vol: &PlaneVolume) -> Vec<u32> {
    let dims = vol.dims();
    (0..dims.len())
        .map(|i| {
            let p = vol.world_position_of(i);
            let hit = spec.objects.iter().rposition(|o| o.contains(&p));
            match hit {
                Some(j) => j as u32,
                None if spec.backdrop.is_some() && dims.coords(i).2 + 1 == dims.depth => spec.objects.len() as u32,
                None => NO_OBJECT,
            }
        })
        .collect()
}

pub fn make_scene(spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let cameras = spec.rig_cameras()?;
    let planes = DepthPlaneSet::spaced(spec.z_near, spec.z_far, spec.planes, spec.spacing)?;
    let mut vol = PlaneVolume::new(cameras[0].clone(), planes, spec.basis);
    let dims = vol.dims();
    let mut gt = vec![false; dims.len()];

    for i in 0..dims.len() {
        let (_, _, d) = dims.coords(i);
        let p = vol.world_position_of(i);
        let mut paint: Option<(f32, [f32; 3], bool)> = None;
        if d + 1 == dims.depth {
            if let Some(tex) = &spec.backdrop {
                paint = Some((1.0, tex.color(&p), false));
            }
        }
        for o in &spec.objects {
            if o.contains(&p) {
                paint = Some((o.opacity, o.texture.color(&p), o.foreground));
            }
        }
        if let Some((xi, rgb, fg)) = paint {
            vol.set_xi(i, xi);
            vol.coeffs_mut(i)[..3].copy_from_slice(&rgb);
            gt[i] = fg;
        }
    }

    for (j, o) in spec.objects.iter().enumerate().filter(|(_, o)| o.foreground) {
        let c = Vector3::from(o.center);
        let visible = cameras
            .iter()
            .all(|cam| cam.project_point(&c).is_ok_and(|(u, v, _)| cam.contains_pixel(u, v)));
        let has_voxels = (0..dims.len()).any(|i| gt[i] && o.contains(&vol.world_position_of(i)));
        if !visible || !has_voxels {
            return Err(SynthError::OutOfFrustum(j));
        }
    }

    let views = cameras
        .iter()
        .map(|cam| Ok(quantize(render_view(&vol, cam, None)?.rgb)))
        .collect::<Result<Vec<_>, VolumeError>>()?;
    let gt_mask_reference = selection_mask(&vol, &cameras[0], &gt)?;
    let gt_mask_validation = selection_mask(&vol, cameras.last().expect("rig"), &gt)?;
    Ok(SyntheticScene {
        spec: spec.clone(),
        volume: vol,
        gt_labels: gt,
        cameras,
        views,
        gt_mask_reference,
        gt_mask_validation,
    })
}

const STROKE_SEGMENTS: usize = 4;
const STROKE_STEP: f64 = 5.0;
/// Minimum distance of every painted stroke pixel from the region border.
pub const SCRIBBLE_MARGIN: usize = 1;

/// Candidate start pixels examined per stroke.
const START_CANDIDATES: usize = 64;

/// Surface voxel hit by every reference-view pixel ray.
fn reference_surface(vol: &PlaneVolume) -> Vec<Option<usize>> {
    let cam = &vol.ref_cam;
    (0..cam.width * cam.height)
        .map(|i| {
            let ray = cam.ray_unchecked((i % cam.width) as f64, (i / cam.width) as f64);
            surface_voxel(vol, &ray, DEFAULT_GAMMA)
        })
        .collect()
}

/// Reference pixels where a stroke of `class` may be painted: the surface
/// voxel has that label and the ground-truth mask agrees, eroded so the
/// whole brush footprint stays `SCRIBBLE_MARGIN` px inside.
/// With `groups`, the region is split by the group of each pixel's surface
/// voxel (largest first, empty groups dropped).
fn scribble_regions(
    surface: &[Option<usize>],
    labels: &[bool],
    groups: Option<&[u32]>,
    reference_mask: &Mask,
    fg: bool,
) -> Vec<Mask> {
    let (w, h) = (reference_mask.width, reference_mask.height);
    let group_of = |i: usize| match (surface[i], groups) {
        (Some(v), Some(g)) => g[v],
        _ => NO_OBJECT,
    };
    let mut ids: Vec<u32> = (0..surface.len()).map(group_of).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut regions: Vec<Mask> = ids
        .into_iter()
        .map(|g| {
            let mut m = Mask::new(w, h);
            for (i, hit) in surface.iter().enumerate() {
                let ok = match hit {
                    Some(v) => labels[*v] == fg,
                    None => !fg,
                };
                m.data[i] = ok && reference_mask.data[i] == fg && group_of(i) == g;
            }
            m.erode(SCRIBBLE_MARGIN + DEFAULT_BRUSH_RADIUS as usize)
        })
        .filter(|m| m.count() > 0)
        .collect();
    // Stable sort keeps group order among equal sizes.
    regions.sort_by_key(|r| std::cmp::Reverse(r.count()));
    regions
}

fn segment_inside(m: &Mask, a: [f64; 2], b: [f64; 2]) -> bool {
    let n = ((b[0] - a[0]).abs().max((b[1] - a[1]).abs()) * 2.0).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let t = k as f64 / n as f64;
        let (x, y) = ((a[0] + t * (b[0] - a[0])).round(), (a[1] + t * (b[1] - a[1])).round());
        x >= 0.0 && y >= 0.0 && (x as usize) < m.width && (y as usize) < m.height && m.get(x as usize, y as usize)
    })
}

/// Random walk of `STROKE_SEGMENTS` steps inside `m` starting at pixel `s`.
fn random_stroke(m: &Mask, s: usize, class: Class, rng: &mut ChaCha8Rng) -> Stroke {
    let mut points = vec![[(s % m.width) as f64, (s / m.width) as f64]];
    let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
    for _ in 0..STROKE_SEGMENTS {
        let last = *points.last().expect("start point");
        for _ in 0..24 {
            let h = heading + rng.random_range(-0.9..0.9);
            let next = [(last[0] + STROKE_STEP * h.cos()).round(), (last[1] + STROKE_STEP * h.sin()).round()];
            if segment_inside(m, last, next) {
                points.push(next);
                heading = h;
                break;
            }
        }
    }
    Stroke {
        class,
        points,
        radius: Some(DEFAULT_BRUSH_RADIUS),
    }
}

/// Random polyline strokes on the reference view: foreground strokes stay
/// inside the visible object and background strokes outside it, both at
/// least [`SCRIBBLE_MARGIN`] px from the boundary. Strokes of a class are
/// dealt round-robin over the visible scene objects of that class, largest
/// first, the way a user marks each distinct object. Foreground strokes
/// come first. Each stroke starts at the candidate pixel whose surface point is
/// worst served by the strokes so far: farthest from its own class relative
/// to the other class in 3D. This mimics a user correcting the region a
/// nearest-scribble labeling would get wrong.
pub fn auto_scribbles(scene: &SyntheticScene, n_fg: usize, n_bg: usize, seed: u64) -> Result<ScribbleSet, SynthError> {
    let groups = scene.object_ids();
    auto_scribbles_from(
        &scene.volume,
        &scene.gt_labels,
        Some(&groups),
        &scene.gt_mask_reference,
        n_fg,
        n_bg,
        seed,
    )
}

/// [`auto_scribbles`] from a bare volume, its labels, optional per-voxel
/// object ids (without them each class is one region) and the
/// reference-view ground-truth mask.
pub fn auto_scribbles_from(
    vol: &PlaneVolume,
    labels: &[bool],
    groups: Option<&[u32]>,
    reference_mask: &Mask,
    n_fg: usize,
    n_bg: usize,
    seed: u64,
) -> Result<ScribbleSet, SynthError> {
    if labels.len() != vol.dims().len() || groups.is_some_and(|g| g.len() != labels.len()) {
        return Err(SynthError::Labels("label count does not match the volume".into()));
    }
    let surface = reference_surface(vol);
    let position = |i: usize| surface[i].map(|v| vol.world_position_of(v));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7363_7269_6262_6c65);
    let mut strokes = Vec::new();
    // Surface points already covered, per class (fg, bg).
    let mut placed: [Vec<Vector3<f64>>; 2] = [Vec::new(), Vec::new()];
    let nearest = |pts: &[Vector3<f64>], p: &Vector3<f64>| pts.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
    for (class, n, name) in [(Class::Fg, n_fg, "foreground"), (Class::Bg, n_bg, "background")] {
        let regions = scribble_regions(&surface, labels, groups, reference_mask, class.is_fg());
        if regions.is_empty() {
            return Err(SynthError::MaskTooSmall(name));
        }
        let (same, other) = if class.is_fg() { (0, 1) } else { (1, 0) };
        for k in 0..n {
            let region = &regions[k % regions.len()];
            let inside: Vec<usize> = (0..region.data.len()).filter(|&i| region.data[i]).collect();
            // How badly a nearest-scribble partition currently mislabels the
            // candidate's surface point.
            let need = |i: usize| match position(i) {
                Some(p) => {
                    let d_same = nearest(&placed[same], &p);
                    let d_other = nearest(&placed[other], &p);
                    match (d_same.is_finite(), d_other.is_finite()) {
                        (true, _) => d_same - d_other.min(f64::MAX),
                        (false, true) => -d_other,
                        (false, false) => 0.0,
                    }
                }
                None => f64::NEG_INFINITY,
            };
            let mut best = (f64::NEG_INFINITY, inside[rng.random_range(0..inside.len())]);
            for _ in 0..START_CANDIDATES {
                let c = inside[rng.random_range(0..inside.len())];
                let d = need(c);
                if d > best.0 {
                    best = (d, c);
                }
            }
            let stroke = random_stroke(region, best.1, class, &mut rng);
            let w = region.width;
            placed[same].extend(
                stroke
                    .points
                    .iter()
                    .filter_map(|p| position(p[1] as usize * w + p[0] as usize)),
            );
            strokes.push(stroke);
        }
    }
    Ok(ScribbleSet::new(strokes))
}

const LABELS_MAGIC: &[u8; 8] = b"VXSELLAB";

/// Bit-packed label sidecar: magic, `u64` count, LSB-first bits.
pub fn labels_to_bytes(labels: &[bool]) -> Vec<u8> {
    let mut out = LABELS_MAGIC.to_vec();
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    for chunk in labels.chunks(8) {
        out.push(chunk.iter().enumerate().fold(0u8, |b, (i, &l)| b | (u8::from(l) << i)));
    }
    out
}

pub fn labels_from_bytes(buf: &[u8]) -> Result<Vec<bool>, SynthError> {
    let bad = |m: &str| SynthError::Labels(m.into());
    if buf.len() < 16 || &buf[..8] != LABELS_MAGIC {
        return Err(bad("missing header"));
    }
    let n = u64::from_le_bytes(buf[8..16].try_into().expect("8 bytes")) as usize;
    let body = &buf[16..];
    if body.len() != n.div_ceil(8) {
        return Err(bad("length does not match count"));
    }
    Ok((0..n).map(|i| body[i / 8] >> (i % 8) & 1 == 1).collect())
}

pub const SCENE_SPEC_FILE: &str = "scene.toml";
pub const SCENE_VOLUME_FILE: &str = "volume.vxv";
pub const SCENE_LABELS_FILE: &str = "labels.bin";
pub const SCENE_CAMERAS_FILE: &str = "cameras.txt";
pub const SCENE_GT_VALIDATION_FILE: &str = "gt_validation.png";
pub const SCENE_GT_REFERENCE_FILE: &str = "gt_reference.png";

pub fn view_file_name(i: usize) -> String {
    format!("view_{i:02}.png")
}

/// Writes the scene into `dir` (created if needed).
pub fn write_scene(scene: &SyntheticScene, dir: &Path) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(SCENE_SPEC_FILE), scene.spec.to_toml())?;
    write_volume(&dir.join(SCENE_VOLUME_FILE), &scene.volume)?;
    std::fs::write(dir.join(SCENE_LABELS_FILE), labels_to_bytes(&scene.gt_labels))?;
    std::fs::write(dir.join(SCENE_CAMERAS_FILE), format_cameras(&scene.cameras))?;
    for (i, v) in scene.views.iter().enumerate() {
        v.to_png(&dir.join(view_file_name(i)))?;
    }
    scene.gt_mask_reference.to_png(&dir.join(SCENE_GT_REFERENCE_FILE))?;
    scene.gt_mask_validation.to_png(&dir.join(SCENE_GT_VALIDATION_FILE))?;
    Ok(())
}

/// Reads a scene written by [`write_scene`].
pub fn read_scene(dir: &Path) -> Result<SyntheticScene, SynthError> {
    let spec = SceneSpec::from_toml(&std::fs::read_to_string(dir.join(SCENE_SPEC_FILE))?)?;
    let volume = read_volume(&dir.join(SCENE_VOLUME_FILE))?;
    let gt_labels = labels_from_bytes(&std::fs::read(dir.join(SCENE_LABELS_FILE))?)?;
    if gt_labels.len() != volume.dims().len() {
        return Err(SynthError::Labels("label count does not match the volume".into()));
    }
    let cameras = parse_cameras(&std::fs::read_to_string(dir.join(SCENE_CAMERAS_FILE))?)?;
    let views = (0..cameras.len())
        .map(|i| RgbImage::from_png(&dir.join(view_file_name(i))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SyntheticScene {
        spec,
        volume,
        gt_labels,
        cameras,
        views,
        gt_mask_reference: Mask::from_png(&dir.join(SCENE_GT_REFERENCE_FILE))?,
        gt_mask_validation: Mask::from_png(&dir.join(SCENE_GT_VALIDATION_FILE))?,
    })
}
