//! Plane-sweep variance cost volume and its fixed multi-scale refinement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{extract_2d_features, FeatureError, FeatureMap2D, FEATURE_STRIDE};
use crate::geometry::{ref_to_view_homography, warp_with_inverse, Camera, DepthPlaneSet};
use crate::grid::Dims3;
use crate::raster::RgbImage;

/// Width of the refined multi-view feature.
pub const MVS_CHANNELS: usize = 8;
const OCTAVE_RADII: [usize; 3] = [1, 2, 4];

/// Per-channel feature variance across views, sampled on the reference
/// view's stride-4 grid at every depth plane.
#[derive(Clone, Debug, PartialEq)]
pub struct CostVolume {
    /// Reference camera at cost-volume resolution.
    pub ref_cam: Camera,
    pub planes: DepthPlaneSet,
    pub dims: Dims3,
    pub channels: usize,
    /// Plane-major cells, `channels` values each.
    pub data: Vec<f32>,
    pub num_views: usize,
}

impl CostVolume {
    #[inline]
    pub fn cell(&self, x: usize, y: usize, d: usize) -> &[f32] {
        let i = self.dims.index(x, y, d) * self.channels;
        &self.data[i..i + self.channels]
    }
}

/// Population variance, summed in sorted order so the result does not
/// depend on the order of `values` and is exactly zero when they agree.
pub fn variance(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Warps every view's 2D features onto each depth plane of the reference
/// view and takes the per-channel variance across views.
pub fn build_cost_volume(
    ref_cam: &Camera,
    views: &[(&RgbImage, &Camera)],
    planes: &DepthPlaneSet,
) -> Result<CostVolume, FeatureError> {
    if views.len() < 2 {
        return Err(FeatureError::TooFewViews(views.len()));
    }
    if planes.is_empty() {
        return Err(FeatureError::NoPlanes);
    }
    let maps = views
        .iter()
        .map(|(img, _)| extract_2d_features(img))
        .collect::<Result<Vec<_>, _>>()?;
    let cams: Vec<Camera> = views
        .iter()
        .zip(&maps)
        .map(|((_, cam), m)| feature_camera(cam, m))
        .collect();
    let cw = ref_cam.width.div_ceil(FEATURE_STRIDE);
    let ch = ref_cam.height.div_ceil(FEATURE_STRIDE);
    let mut cref = ref_cam.scaled(1.0 / FEATURE_STRIDE as f64);
    cref.width = cw;
    cref.height = ch;
    let channels = maps[0].channels;
    let dims = Dims3::new(cw, ch, planes.len());

    let per_plane: Vec<Vec<f32>> = planes
        .depths()
        .par_iter()
        .map(|&z| {
            let warped: Vec<FeatureMap2D> = maps
                .iter()
                .zip(&cams)
                .map(|(m, cam)| {
                    let h_inv = ref_to_view_homography(cam, &cref, z);
                    warp_with_inverse(m, &h_inv, cw, ch)
                })
                .collect();
            let mut out = vec![0.0f32; cw * ch * channels];
            let mut vals = vec![0.0f64; warped.len()];
            for (i, o) in out.iter_mut().enumerate() {
                for (v, w) in vals.iter_mut().zip(&warped) {
                    *v = w.data[i] as f64;
                }
                *o = variance(&mut vals) as f32;
            }
            out
        })
        .collect();
    Ok(CostVolume {
        ref_cam: cref,
        planes: planes.clone(),
        dims,
        channels,
        data: per_plane.concat(),
        num_views: views.len(),
    })
}

/// Camera whose pixel grid is the feature map's cell grid.
fn feature_camera(cam: &Camera, map: &FeatureMap2D) -> Camera {
    let mut c = cam.scaled(1.0 / FEATURE_STRIDE as f64);
    c.width = map.width;
    c.height = map.height;
    c
}

/// Fixed `MVS_CHANNELS × channels` projection: the first row averages all
/// channels, the others are seeded uniform weights scaled by `1/sqrt(F)`.
pub(crate) fn projection(channels: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d76_735f_7072_6f6a);
    let scale = 1.0 / (channels as f64).sqrt();
    let mut p = vec![1.0 / channels as f64; channels];
    for _ in 1..MVS_CHANNELS {
        p.extend((0..channels).map(|_| rng.random_range(-1.0..1.0) * scale));
    }
    p
}

/// Normalized box filter of radius `r` along one axis of a channels-last
/// grid; each output is the mean over the in-grid part of the window.
fn box_axis(data: &[f64], dims: Dims3, channels: usize, axis: usize, r: usize) -> Vec<f64> {
    let len = [dims.width, dims.height, dims.depth][axis];
    let stride = [1, dims.width, dims.plane_len()][axis] * channels;
    let mut out = vec![0.0; data.len()];
    for cell in 0..dims.len() {
        let (x, y, d) = dims.coords(cell);
        let pos = [x, y, d][axis];
        let lo = pos.saturating_sub(r);
        let hi = (pos + r).min(len - 1);
        let base = cell * channels - pos * stride;
        let n = (hi - lo + 1) as f64;
        for c in 0..channels {
            let mut s = 0.0;
            for k in lo..=hi {
                s += data[base + k * stride + c];
            }
            out[cell * channels + c] = s / n;
        }
    }
    out
}

fn box3(data: &[f64], dims: Dims3, channels: usize, r: usize) -> Vec<f64> {
    let a = box_axis(data, dims, channels, 0, r);
    let b = box_axis(&a, dims, channels, 1, r);
    box_axis(&b, dims, channels, 2, r)
}

/// Projects the cost volume to [`MVS_CHANNELS`] channels, smooths it with
/// cascaded box filters of radius 1, 2 and 4 (averaging the three octaves),
/// and resamples the result onto the target voxel grid: bilinear in XY,
/// linear in depth (which reduces to the identity when the plane sets match).
pub fn refine_cost_volume(
    cv: &CostVolume,
    target: Dims3,
    target_planes: &DepthPlaneSet,
    seed: u64,
) -> Vec<f32> {
    let p = projection(cv.channels, seed);
    let projected: Vec<f64> = cv
        .data
        .par_chunks_exact(cv.channels)
        .flat_map_iter(|cell| {
            p.chunks_exact(cv.channels)
                .map(|row| row.iter().zip(cell).map(|(w, &v)| w * v as f64).sum::<f64>())
                .collect::<Vec<_>>()
        })
        .collect();
    let smoothed = smooth_octaves(&projected, cv.dims);
    resample(&smoothed, cv, target, target_planes)
}

pub(crate) fn smooth_octaves(data: &[f64], dims: Dims3) -> Vec<f64> {
    let mut level = data.to_vec();
    let mut acc = vec![0.0; data.len()];
    for r in OCTAVE_RADII {
        level = box3(&level, dims, MVS_CHANNELS, r);
        for (a, v) in acc.iter_mut().zip(&level) {
            *a += v;
        }
    }
    let n = OCTAVE_RADII.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Continuous plane index of `z` within `depths` (clamped to the ends).
fn plane_position(depths: &[f64], z: f64) -> f64 {
    if z <= depths[0] {
        return 0.0;
    }
    let last = depths.len() - 1;
    if z >= depths[last] {
        return last as f64;
    }
    let i = depths.partition_point(|&d| d <= z) - 1;
    if depths[i] == z {
        return i as f64;
    }
    i as f64 + (z - depths[i]) / (depths[i + 1] - depths[i])
}

fn resample(data: &[f64], cv: &CostVolume, target: Dims3, target_planes: &DepthPlaneSet) -> Vec<f32> {
    let c = MVS_CHANNELS;
    let src = cv.dims;
    let sx = src.width as f64 / target.width as f64;
    let sy = src.height as f64 / target.height as f64;
    let axis = |t: usize, scale: f64, n: usize| {
        let p = ((t as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = (p.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, p - i0 as f64)
    };
    let zpos: Vec<(usize, usize, f64)> = target_planes
        .depths()
        .iter()
        .map(|&z| {
            let p = plane_position(cv.planes.depths(), z);
            let i0 = p.floor() as usize;
            let i1 = (i0 + 1).min(src.depth - 1);
            (i0, i1, p - i0 as f64)
        })
        .collect();
    let mut out = vec![0.0f32; target.len() * c];
    out.par_chunks_mut(target.plane_len() * c)
        .enumerate()
        .for_each(|(d, plane)| {
            let (z0, z1, fz) = zpos[d];
            for y in 0..target.height {
                let (y0, y1, fy) = axis(y, sy, src.height);
                for x in 0..target.width {
                    let (x0, x1, fx) = axis(x, sx, src.width);
                    let o = &mut plane[(y * target.width + x) * c..][..c];
                    let taps = [
                        (x0, y0, z0, (1.0 - fx) * (1.0 - fy) * (1.0 - fz)),
                        (x1, y0, z0, fx * (1.0 - fy) * (1.0 - fz)),
                        (x0, y1, z0, (1.0 - fx) * fy * (1.0 - fz)),
                        (x1, y1, z0, fx * fy * (1.0 - fz)),
                        (x0, y0, z1, (1.0 - fx) * (1.0 - fy) * fz),
                        (x1, y0, z1, fx * (1.0 - fy) * fz),
                        (x0, y1, z1, (1.0 - fx) * fy * fz),
                        (x1, y1, z1, fx * fy * fz),
                    ];
                    let mut acc = [0.0f64; MVS_CHANNELS];
                    for (tx, ty, tz, w) in taps {
                        if w == 0.0 {
                            continue;
                        }
                        let i = src.index(tx, ty, tz) * c;
                        for k in 0..c {
                            acc[k] += w * data[i + k];
                        }
                    }
                    for k in 0..c {
                        o[k] = acc[k] as f32;
                    }
                }
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SpacingKind;
    use nalgebra::{Matrix3, Vector3};
    use proptest::prelude::*;

    fn textured(w: usize, h: usize, phase: f32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as f32, y as f32);
            [
                0.5 + 0.4 * (0.5 * x + phase).sin(),
                0.5 + 0.3 * (0.4 * y - phase).cos(),
                0.5 + 0.2 * (0.3 * (x + y)).sin(),
            ]
        })
    }

    fn cam_at(tx: f64) -> Camera {
        Camera::new(Camera::intrinsics(40.0, 32, 24), Matrix3::identity(), Vector3::new(tx, 0.0, 0.0), 32, 24).unwrap()
    }

    #[test]
    fn variance_formula() {
        assert_eq!(variance(&mut [1.0, 2.0, 3.0]), 2.0 / 3.0);
        assert_eq!(variance(&mut [0.3, 0.3, 0.3, 0.3]), 0.0);
    }

    proptest! {
        #[test]
        fn variance_permutation_invariant(mut v in prop::collection::vec(-10.0f64..10.0, 2..8), k in 0usize..8) {
            let a = variance(&mut v.clone());
            let n = v.len();
            v.rotate_left(k % n);
            v.reverse();
            prop_assert_eq!(a, variance(&mut v));
            prop_assert!(a >= 0.0);
        }
    }

    #[test]
    fn identical_views_have_zero_variance() {
        let img = textured(32, 24, 0.0);
        let cam = cam_at(0.0);
        let planes = DepthPlaneSet::spaced(1.0, 5.0, 6, SpacingKind::InverseDepth).unwrap();
        let cv = build_cost_volume(&cam, &[(&img, &cam), (&img, &cam), (&img, &cam)], &planes).unwrap();
        assert_eq!((cv.dims.width, cv.dims.height, cv.dims.depth, cv.channels), (8, 6, 6, 32));
        assert!(cv.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn view_order_does_not_matter() {
        let imgs = [textured(32, 24, 0.0), textured(32, 24, 0.7), textured(32, 24, 1.9)];
        let cams = [cam_at(0.0), cam_at(0.1), cam_at(-0.15)];
        let planes = DepthPlaneSet::spaced(1.0, 5.0, 4, SpacingKind::InverseDepth).unwrap();
        let views: Vec<_> = imgs.iter().zip(&cams).collect();
        let a = build_cost_volume(&cams[0], &views, &planes).unwrap();
        let rev: Vec<_> = views.iter().rev().copied().collect();
        let b = build_cost_volume(&cams[0], &rev, &planes).unwrap();
        assert_eq!(a.data, b.data);
        assert!(a.data.iter().all(|&v| v >= 0.0));
        assert!(a.data.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn too_few_views() {
        let img = textured(8, 8, 0.0);
        let cam = cam_at(0.0);
        let planes = DepthPlaneSet::spaced(1.0, 2.0, 2, SpacingKind::Linear).unwrap();
        assert!(matches!(
            build_cost_volume(&cam, &[(&img, &cam)], &planes),
            Err(FeatureError::TooFewViews(1))
        ));
    }

    fn synthetic_cv(dims: Dims3, channels: usize, f: impl Fn(usize, usize) -> f32) -> CostVolume {
        let planes = DepthPlaneSet::spaced(1.0, 3.0, dims.depth, SpacingKind::Linear).unwrap();
        let mut cam = cam_at(0.0).scaled(0.25);
        cam.width = dims.width;
        cam.height = dims.height;
        CostVolume {
            ref_cam: cam,
            planes,
            dims,
            channels,
            data: (0..dims.len() * channels).map(|i| f(i / channels, i % channels)).collect(),
            num_views: 3,
        }
    }

    #[test]
    fn constant_input_gives_projected_constant() {
        let dims = Dims3::new(8, 6, 5);
        let cv = synthetic_cv(dims, 32, |_, c| 0.1 + c as f32 * 0.01);
        let p = projection(32, 7);
        let expect: Vec<f64> = p
            .chunks_exact(32)
            .map(|row| row.iter().enumerate().map(|(c, w)| w * (0.1 + c as f32 * 0.01) as f64).sum())
            .collect();
        let full = Dims3::new(32, 24, 5);
        let out = refine_cost_volume(&cv, full, &cv.planes, 7);
        assert_eq!(out.len(), full.len() * MVS_CHANNELS);
        for v in out.chunks_exact(MVS_CHANNELS) {
            for (a, b) in v.iter().zip(&expect) {
                assert!((*a as f64 - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn impulse_support_is_seven_cells() {
        let dims = Dims3::new(20, 20, 20);
        let center = dims.index(10, 10, 10);
        let data: Vec<f64> = (0..dims.len() * MVS_CHANNELS)
            .map(|i| if i / MVS_CHANNELS == center { 1.0 } else { 0.0 })
            .collect();
        let out = smooth_octaves(&data, dims);
        for cell in 0..dims.len() {
            let (x, y, d) = dims.coords(cell);
            let dist = [x, y, d].iter().map(|&a| (a as i64 - 10).abs()).max().unwrap();
            let v = out[cell * MVS_CHANNELS];
            if dist > 7 {
                assert_eq!(v, 0.0);
            } else if dist == 7 {
                assert!(v > 0.0);
            }
        }
    }

    #[test]
    fn refinement_is_deterministic() {
        let dims = Dims3::new(6, 5, 4);
        let cv = synthetic_cv(dims, 32, |i, c| ((i * 31 + c * 7) % 17) as f32 / 17.0);
        let full = Dims3::new(24, 20, 4);
        assert_eq!(
            refine_cost_volume(&cv, full, &cv.planes, 3),
            refine_cost_volume(&cv, full, &cv.planes, 3)
        );
    }

    #[test]
    fn plane_positions() {
        let d = [1.0, 2.0, 4.0];
        assert_eq!(plane_position(&d, 0.5), 0.0);
        assert_eq!(plane_position(&d, 2.0), 1.0);
        assert_eq!(plane_position(&d, 3.0), 1.5);
        assert_eq!(plane_position(&d, 9.0), 2.0);
    }
}
