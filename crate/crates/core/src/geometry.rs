//! Pinhole cameras, depth planes, plane-induced homographies and rays.
//!
//! Conventions used everywhere in the crate:
//!
//! * `R` is the camera-to-world rotation and `t` the camera center, so a world
//!   point `X` has camera coordinates `Rᵀ (X − t)`.
//! * Camera axes are x right, y down, z forward; the principal axis `n` is the
//!   third column of `R`.
//! * Pixel `(u, v)` covers the continuous square `[u, u+1) × [v, v+1)`; its
//!   center is `(u + 0.5, v + 0.5)`. `K` maps camera coordinates to continuous
//!   image coordinates. [`Camera::pixel_ray`] and [`Camera::project_point`]
//!   both speak pixel-index coordinates, so they are exact inverses.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMap2D;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid depth {0}: must be positive")]
    InvalidDepth(f64),
    #[error("invalid depth planes: {0}")]
    InvalidPlanes(String),
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    OutOfImage { u: f64, v: f64, width: usize, height: usize },
    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),
    #[error("homography is not invertible")]
    SingularHomography,
    #[error("camera file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("camera file i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    k: Matrix3<f64>,
    k_inv: Matrix3<f64>,
    r: Matrix3<f64>,
    t: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit length.
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn at(&self, s: f64) -> Vector3<f64> {
        self.origin + self.direction * s
    }
}

impl Camera {
    /// Validates `K` (upper triangular, positive focal lengths) and `R`
    /// (orthonormal, determinant +1).
    pub fn new(
        k: Matrix3<f64>,
        r: Matrix3<f64>,
        t: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidCamera(format!(
                "image size {width}x{height}"
            )));
        }
        if k.iter().chain(r.iter()).chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidCamera("non-finite entry".into()));
        }
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] <= 0.0 {
            return Err(GeometryError::InvalidCamera(
                "intrinsics must be upper triangular with positive K[2][2]".into(),
            ));
        }
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
            return Err(GeometryError::InvalidCamera(
                "focal lengths must be positive".into(),
            ));
        }
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        if ortho >= 1e-9 || (r.determinant() - 1.0).abs() >= 1e-9 {
            return Err(GeometryError::InvalidCamera(format!(
                "rotation is not proper orthonormal (|RᵀR − I|∞ = {ortho:e})"
            )));
        }
        let k_inv = k
            .try_inverse()
            .ok_or_else(|| GeometryError::InvalidCamera("singular intrinsics".into()))?;
        Ok(Self {
            k,
            k_inv,
            r,
            t,
            width,
            height,
        })
    }

    /// Simple intrinsics with square pixels and the principal point at the
    /// image center.
    pub fn intrinsics(focal: f64, width: usize, height: usize) -> Matrix3<f64> {
        Matrix3::new(
            focal,
            0.0,
            width as f64 / 2.0,
            0.0,
            focal,
            height as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Camera at `eye` looking at `target`; `down_hint` picks the image y axis.
    pub fn look_at(
        k: Matrix3<f64>,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        down_hint: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| GeometryError::InvalidCamera("eye equals target".into()))?;
        let right = down_hint
            .cross(&forward)
            .try_normalize(1e-12)
            .ok_or_else(|| GeometryError::InvalidCamera("down hint parallel to view".into()))?;
        let down = forward.cross(&right);
        let r = Matrix3::from_columns(&[right, down, forward]);
        Self::new(k, r, eye, width, height)
    }

    pub fn k(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn k_inv(&self) -> &Matrix3<f64> {
        &self.k_inv
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn center(&self) -> &Vector3<f64> {
        &self.t
    }

    /// Unit principal axis in world coordinates.
    pub fn principal_axis(&self) -> Vector3<f64> {
        self.r.column(2).into_owned()
    }

    /// Same pose, image coordinates scaled by `s` (e.g. `0.25` for a
    /// stride-4 feature map). The new size is `ceil(size * s)`.
    pub fn scaled(&self, s: f64) -> Camera {
        let scale = Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0);
        let k = scale * self.k;
        Camera {
            k,
            k_inv: k.try_inverse().expect("scaled intrinsics stay invertible"),
            r: self.r,
            t: self.t,
            width: ((self.width as f64 * s - 1e-9).ceil() as usize).max(1),
            height: ((self.height as f64 * s - 1e-9).ceil() as usize).max(1),
        }
    }

    /// Ray through pixel `(u, v)` (pixel-index coordinates, center at +0.5).
    pub fn pixel_ray(&self, u: f64, v: f64) -> Result<Ray, GeometryError> {
        if !(u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64) {
            return Err(GeometryError::OutOfImage {
                u,
                v,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.ray_unchecked(u, v))
    }

    /// [`Camera::pixel_ray`] without the bounds check.
    #[inline]
    pub fn ray_unchecked(&self, u: f64, v: f64) -> Ray {
        let dir = self.r * (self.k_inv * Vector3::new(u + 0.5, v + 0.5, 1.0));
        Ray {
            origin: self.t,
            direction: dir.normalize(),
        }
    }

    /// World point on the ray of pixel `(u, v)` whose depth along the
    /// principal axis is `z`.
    #[inline]
    pub fn point_at_depth(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        // K⁻¹ [u, v, 1] has unit z in camera coordinates.
        let cam = self.k_inv * Vector3::new(u + 0.5, v + 0.5, 1.0);
        self.t + self.r * (cam * (z / cam.z))
    }

    /// Projects a world point; returns pixel-index coordinates and the depth
    /// along the principal axis.
    pub fn project_point(&self, x: &Vector3<f64>) -> Result<(f64, f64, f64), GeometryError> {
        let (u, v, depth) = self.project_unchecked(x);
        if depth <= 0.0 {
            return Err(GeometryError::BehindCamera(depth));
        }
        Ok((u, v, depth))
    }

    #[inline]
    pub fn project_unchecked(&self, x: &Vector3<f64>) -> (f64, f64, f64) {
        let cam = self.r.transpose() * (x - self.t);
        let p = self.k * cam;
        (p.x / p.z - 0.5, p.y / p.z - 0.5, cam.z)
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }
}

/// Homography `H_{i→r}(z)` mapping continuous image coordinates of view `i`
/// to those of the reference view `r`, for the plane at depth `z` along the
/// reference principal axis. Warping uses its inverse, which takes a
/// reference pixel to the view-`i` pixel observing the same plane point:
///
/// `H⁻¹ = K_i R_iᵀ (I + (t_r − t_i) n_rᵀ / z) R_r K_r⁻¹`
pub fn homography_matrix(
    cam_i: &Camera,
    cam_r: &Camera,
    z: f64,
) -> Result<Matrix3<f64>, GeometryError> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(GeometryError::InvalidDepth(z));
    }
    let ref_to_i = ref_to_view_homography(cam_i, cam_r, z);
    ref_to_i
        .try_inverse()
        .ok_or(GeometryError::SingularHomography)
}

pub(crate) fn ref_to_view_homography(cam_i: &Camera, cam_r: &Camera, z: f64) -> Matrix3<f64> {
    let n = cam_r.principal_axis();
    let plane = Matrix3::identity() + (cam_r.t - cam_i.t) * n.transpose() / z;
    cam_i.k * cam_i.r.transpose() * plane * cam_r.r * cam_r.k_inv
}

/// Bilinear sample of a feature map at continuous image coordinates, zero
/// outside the map. `out` receives one value per channel.
#[inline]
pub fn sample_bilinear_zero(map: &FeatureMap2D, cx: f64, cy: f64, out: &mut [f32]) {
    out.fill(0.0);
    let x = cx - 0.5;
    let y = cy - 0.5;
    if !(x > -1.0 && y > -1.0 && x < map.width as f64 && y < map.height as f64) {
        return;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1, y0, fx * (1.0 - fy)),
        (x0, y0 + 1, (1.0 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    ];
    for (tx, ty, w) in taps {
        if w == 0.0 || tx < 0 || ty < 0 || tx >= map.width as i64 || ty >= map.height as i64 {
            continue;
        }
        let w = w as f32;
        for (o, &v) in out.iter_mut().zip(map.pixel(tx as usize, ty as usize)) {
            *o += w * v;
        }
    }
}

/// Warps `map` with `output(u, v) = map(H⁻¹ [u, v, 1]ᵀ)`; samples outside
/// `map` are zero.
pub fn warp_feature_map(
    map: &FeatureMap2D,
    h: &Matrix3<f64>,
    out_width: usize,
    out_height: usize,
) -> Result<FeatureMap2D, GeometryError> {
    let det = h.determinant();
    if !det.is_finite() || det.abs() < 1e-300 {
        return Err(GeometryError::SingularHomography);
    }
    let h_inv = h.try_inverse().ok_or(GeometryError::SingularHomography)?;
    Ok(warp_with_inverse(map, &h_inv, out_width, out_height))
}

pub(crate) fn warp_with_inverse(
    map: &FeatureMap2D,
    h_inv: &Matrix3<f64>,
    out_width: usize,
    out_height: usize,
) -> FeatureMap2D {
    let mut out = FeatureMap2D::zeros(out_width, out_height, map.channels);
    let c = map.channels;
    for v in 0..out_height {
        for u in 0..out_width {
            let p = h_inv * Vector3::new(u as f64 + 0.5, v as f64 + 0.5, 1.0);
            if p.z <= 1e-12 {
                continue;
            }
            let i = (v * out_width + u) * c;
            sample_bilinear_zero(map, p.x / p.z, p.y / p.z, &mut out.data[i..i + c]);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpacingKind {
    Linear,
    InverseDepth,
}

/// Strictly increasing positive plane depths along the reference axis.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthPlaneSet {
    depths: Vec<f64>,
    pub spacing: SpacingKind,
}

impl DepthPlaneSet {
    pub fn new(depths: Vec<f64>, spacing: SpacingKind) -> Result<Self, GeometryError> {
        if depths.is_empty() {
            return Err(GeometryError::InvalidPlanes("no planes".into()));
        }
        if depths.iter().any(|&z| !(z > 0.0) || !z.is_finite()) {
            return Err(GeometryError::InvalidPlanes("depths must be positive".into()));
        }
        if depths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeometryError::InvalidPlanes(
                "depths must be strictly increasing".into(),
            ));
        }
        Ok(Self { depths, spacing })
    }

    /// `count` planes between `near` and `far` inclusive.
    pub fn spaced(near: f64, far: f64, count: usize, spacing: SpacingKind) -> Result<Self, GeometryError> {
        if !(near > 0.0 && far > near) || count == 0 {
            return Err(GeometryError::InvalidPlanes(format!(
                "need 0 < near < far and count > 0 (got {near}, {far}, {count})"
            )));
        }
        if count == 1 {
            return Self::new(vec![near], spacing);
        }
        let n = (count - 1) as f64;
        let depths = (0..count)
            .map(|i| {
                let s = i as f64 / n;
                match spacing {
                    SpacingKind::Linear => near + (far - near) * s,
                    SpacingKind::InverseDepth => 1.0 / (1.0 / near + (1.0 / far - 1.0 / near) * s),
                }
            })
            .collect();
        Self::new(depths, spacing)
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn near(&self) -> f64 {
        self.depths[0]
    }

    pub fn far(&self) -> f64 {
        *self.depths.last().expect("nonempty")
    }
}

// Camera text format: one view per non-comment line, 23 whitespace separated
// numbers in this order:
//   k00 k01 k02 k10 k11 k12 k20 k21 k22
//   r00 r01 r02 r10 r11 r12 r20 r21 r22    (camera-to-world, row-major)
//   tx ty tz                              (camera center)
//   width height
// Lines starting with '#' and blank lines are ignored.

pub const CAMERA_FILE_HEADER: &str = "# voxsel cameras v1: K(9, row-major) R(9, row-major, camera-to-world) t(3, center) width height";

pub fn parse_cameras(text: &str) -> Result<Vec<Camera>, GeometryError> {
    let mut cams = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 23 {
            return Err(GeometryError::Parse {
                line: line_no,
                msg: format!("expected 23 fields, found {}", fields.len()),
            });
        }
        let mut nums = [0.0f64; 21];
        for (slot, tok) in nums.iter_mut().zip(&fields[..21]) {
            *slot = tok.parse().map_err(|_| GeometryError::Parse {
                line: line_no,
                msg: format!("not a number: {tok:?}"),
            })?;
        }
        let dim = |tok: &str| {
            tok.parse::<usize>().map_err(|_| GeometryError::Parse {
                line: line_no,
                msg: format!("bad image size: {tok:?}"),
            })
        };
        let (w, h) = (dim(fields[21])?, dim(fields[22])?);
        let k = Matrix3::from_row_slice(&nums[0..9]);
        let r = Matrix3::from_row_slice(&nums[9..18]);
        let t = Vector3::new(nums[18], nums[19], nums[20]);
        let cam = Camera::new(k, r, t, w, h).map_err(|e| GeometryError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        cams.push(cam);
    }
    Ok(cams)
}

pub fn format_cameras(cams: &[Camera]) -> String {
    let mut s = String::new();
    s.push_str(CAMERA_FILE_HEADER);
    s.push('\n');
    for cam in cams {
        let k = cam.k.transpose();
        let r = cam.r.transpose();
        let nums: Vec<String> = k
            .iter()
            .chain(r.iter())
            .chain(cam.t.iter())
            .map(|v| format!("{v:?}"))
            .collect();
        let _ = writeln!(s, "{} {} {}", nums.join(" "), cam.width, cam.height);
    }
    s
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>, GeometryError> {
    parse_cameras(&std::fs::read_to_string(path)?)
}

pub fn write_cameras(path: &Path, cams: &[Camera]) -> Result<(), GeometryError> {
    std::fs::write(path, format_cameras(cams))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_camera(rng: &mut ChaCha8Rng) -> Camera {
        let f = rng.random_range(50.0..400.0);
        let (w, h) = (rng.random_range(16..200), rng.random_range(16..200));
        let k = Matrix3::new(
            f,
            rng.random_range(-0.5..0.5),
            w as f64 / 2.0 + rng.random_range(-3.0..3.0),
            0.0,
            f * rng.random_range(0.9..1.1),
            h as f64 / 2.0 + rng.random_range(-3.0..3.0),
            0.0,
            0.0,
            1.0,
        );
        let r = Rotation3::from_euler_angles(
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
            rng.random_range(-3.1..3.1),
        )
        .into_inner();
        let t = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        Camera::new(k, r, t, w, h).unwrap()
    }

    #[test]
    fn same_view_homography_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let cam = random_camera(&mut rng);
            let z = rng.random_range(0.1..100.0);
            let h = homography_matrix(&cam, &cam, z).unwrap();
            assert!((h - Matrix3::identity()).amax() < 1e-9);
        }
    }

    #[test]
    fn homography_rejects_bad_depth() {
        let cam = Camera::new(Matrix3::identity(), Matrix3::identity(), Vector3::zeros(), 4, 4).unwrap();
        assert!(matches!(
            homography_matrix(&cam, &cam, 0.0),
            Err(GeometryError::InvalidDepth(_))
        ));
        assert!(homography_matrix(&cam, &cam, -1.0).is_err());
    }

    #[test]
    fn translated_view_matches_direct_projection() {
        // K = I, R = I, t_i = (0.1, 0, 0), t_r = 0, z = 1.
        let cam_r = Camera::new(Matrix3::identity(), Matrix3::identity(), Vector3::zeros(), 4, 4).unwrap();
        let cam_i = Camera::new(
            Matrix3::identity(),
            Matrix3::identity(),
            Vector3::new(0.1, 0.0, 0.0),
            4,
            4,
        )
        .unwrap();
        let h_inv = homography_matrix(&cam_i, &cam_r, 1.0).unwrap().try_inverse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 1.0);
            let (ur, vr, _) = cam_r.project_point(&p).unwrap();
            let (ui, vi, _) = cam_i.project_point(&p).unwrap();
            let q = h_inv * Vector3::new(ur + 0.5, vr + 0.5, 1.0);
            assert!((q.x / q.z - 0.5 - ui).abs() < 1e-12);
            assert!((q.y / q.z - 0.5 - vi).abs() < 1e-12);
        }
    }

    #[test]
    fn principal_ray_is_principal_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let cam = random_camera(&mut rng);
            let k = cam.k();
            // Principal point in pixel-index coordinates; skew is irrelevant there.
            let ray = cam.pixel_ray(k[(0, 2)] - 0.5, k[(1, 2)] - 0.5).unwrap();
            assert!((ray.direction - cam.principal_axis()).amax() < 1e-9);
            assert!((ray.direction.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pixel_ray_rejects_outside() {
        let cam = Camera::new(Camera::intrinsics(10.0, 8, 6), Matrix3::identity(), Vector3::zeros(), 8, 6).unwrap();
        assert!(cam.pixel_ray(8.0, 0.0).is_err());
        assert!(cam.pixel_ray(-0.1, 0.0).is_err());
        assert!(cam.pixel_ray(7.9, 5.9).is_ok());
    }

    #[test]
    fn project_center_along_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cam = random_camera(&mut rng);
        let x = cam.center() + cam.principal_axis() * 2.5;
        let (u, v, d) = cam.project_point(&x).unwrap();
        assert!((u - (cam.k()[(0, 2)] - 0.5)).abs() < 1e-9);
        assert!((v - (cam.k()[(1, 2)] - 0.5)).abs() < 1e-9);
        assert!((d - 2.5).abs() < 1e-12);
        let behind = cam.center() - cam.principal_axis();
        assert!(matches!(cam.project_point(&behind), Err(GeometryError::BehindCamera(_))));
    }

    #[test]
    fn ray_depth_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let cam = random_camera(&mut rng);
            let u = rng.random_range(0.0..cam.width as f64);
            let v = rng.random_range(0.0..cam.height as f64);
            let z = rng.random_range(0.5..20.0);
            let ray = cam.pixel_ray(u, v).unwrap();
            let s = z / ray.direction.dot(&cam.principal_axis());
            let x = ray.at(s);
            let (pu, pv, pd) = cam.project_point(&x).unwrap();
            assert!((pu - u).abs() < 1e-7 && (pv - v).abs() < 1e-7 && (pd - z).abs() < 1e-9);
            assert!((cam.point_at_depth(u, v, z) - x).amax() < 1e-7);
        }
    }

    #[test]
    fn random_points_reproject() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cam = random_camera(&mut rng);
        for _ in 0..100 {
            let u = rng.random_range(0.0..cam.width as f64);
            let v = rng.random_range(0.0..cam.height as f64);
            let z = rng.random_range(0.5..20.0);
            let x = cam.point_at_depth(u, v, z);
            let (pu, pv, _) = cam.project_point(&x).unwrap();
            assert!((pu - u).hypot(pv - v) < 1e-7);
        }
    }

    #[test]
    fn identity_warp_is_bitwise() {
        let mut map = FeatureMap2D::zeros(6, 5, 3);
        for (i, v) in map.data.iter_mut().enumerate() {
            *v = (i as f32 * 0.37).sin();
        }
        let out = warp_feature_map(&map, &Matrix3::identity(), 6, 5).unwrap();
        assert_eq!(out.data, map.data);
    }

    #[test]
    fn integer_translation_shifts_columns() {
        let mut map = FeatureMap2D::zeros(8, 4, 2);
        for (i, v) in map.data.iter_mut().enumerate() {
            *v = i as f32 + 1.0;
        }
        let h = Matrix3::new(1.0, 0.0, 3.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let out = warp_feature_map(&map, &h, 8, 4).unwrap();
        for y in 0..4 {
            for x in 0..8 {
                let expect: Vec<f32> = if x < 3 {
                    vec![0.0, 0.0]
                } else {
                    map.pixel(x - 3, y).to_vec()
                };
                assert_eq!(out.pixel(x, y), &expect[..]);
            }
        }
    }

    #[test]
    fn warp_outside_domain_is_zero() {
        let mut map = FeatureMap2D::zeros(5, 5, 1);
        map.data.fill(1.0);
        let h = Matrix3::new(1.0, 0.0, 100.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let out = warp_feature_map(&map, &h, 5, 5).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_warp_rejected() {
        let map = FeatureMap2D::zeros(2, 2, 1);
        assert!(matches!(
            warp_feature_map(&map, &Matrix3::zeros(), 2, 2),
            Err(GeometryError::SingularHomography)
        ));
    }

    #[test]
    fn plane_sets() {
        let lin = DepthPlaneSet::spaced(1.0, 5.0, 5, SpacingKind::Linear).unwrap();
        assert_eq!(lin.depths(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let inv = DepthPlaneSet::spaced(1.0, 4.0, 4, SpacingKind::InverseDepth).unwrap();
        let inv_d: Vec<f64> = inv.depths().iter().map(|z| 1.0 / z).collect();
        for w in inv_d.windows(3) {
            assert!(((w[0] - w[1]) - (w[1] - w[2])).abs() < 1e-12);
        }
        assert!(DepthPlaneSet::new(vec![1.0, 1.0], SpacingKind::Linear).is_err());
        assert!(DepthPlaneSet::new(vec![-1.0, 1.0], SpacingKind::Linear).is_err());
        assert!(DepthPlaneSet::new(vec![], SpacingKind::Linear).is_err());
    }

    #[test]
    fn camera_validation() {
        let bad_r = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Camera::new(Matrix3::identity(), bad_r, Vector3::zeros(), 4, 4).is_err());
        let reflection = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Camera::new(Matrix3::identity(), reflection, Vector3::zeros(), 4, 4).is_err());
        let mut k = Matrix3::identity();
        k[(0, 0)] = -1.0;
        assert!(Camera::new(k, Matrix3::identity(), Vector3::zeros(), 4, 4).is_err());
        let mut k = Matrix3::identity();
        k[(1, 0)] = 0.5;
        assert!(Camera::new(k, Matrix3::identity(), Vector3::zeros(), 4, 4).is_err());
    }

    #[test]
    fn camera_file_round_trip_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cams: Vec<Camera> = (0..3).map(|_| random_camera(&mut rng)).collect();
        let text = format_cameras(&cams);
        assert_eq!(parse_cameras(&text).unwrap(), cams);

        let err = parse_cameras("# c\n1 2 3\n").unwrap_err();
        assert!(matches!(err, GeometryError::Parse { line: 2, .. }), "{err}");
        let mut fields = vec!["1"; 23];
        fields[4] = "x";
        let err = parse_cameras(&fields.join(" ")).unwrap_err();
        assert!(matches!(err, GeometryError::Parse { line: 1, .. }));
    }
}
