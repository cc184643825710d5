use nalgebra::Vector3;
use rayon::prelude::*;

use super::{basis_color_unclamped, PlaneVolume, VolumeError};
use crate::geometry::{Camera, Ray};
use crate::raster::{Mask, RgbImage};

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub rgb: RgbImage,
    /// Accumulated opacity per pixel, row-major.
    pub alpha: Vec<f32>,
}

impl RenderedView {
    pub fn alpha_mask(&self, threshold: f32) -> Mask {
        Mask {
            width: self.rgb.width,
            height: self.rgb.height,
            data: self.alpha.iter().map(|&a| a > threshold).collect(),
        }
    }

    pub fn alpha_image(&self) -> RgbImage {
        RgbImage {
            width: self.rgb.width,
            height: self.rgb.height,
            data: self.alpha.iter().flat_map(|&a| [a, a, a]).collect(),
        }
    }
}

/// Plane crossings of a ray in near-to-far order: `(plane, ray parameter)`.
fn plane_crossings<'a>(vol: &'a PlaneVolume, ray: &Ray) -> impl Iterator<Item = (usize, f64)> + 'a {
    let n = vol.ref_cam.principal_axis();
    let denom = ray.direction.dot(&n);
    let offset = (ray.origin - vol.ref_cam.center()).dot(&n);
    let depth = vol.planes.len();
    let forward = denom > 0.0;
    let valid = denom.abs() > 1e-12;
    (0..if valid { depth } else { 0 })
        .map(move |i| if forward { i } else { depth - 1 - i })
        .filter_map(move |d| {
            let s = (vol.planes.depths()[d] - offset) / denom;
            (s > 0.0).then_some((d, s))
        })
}

/// Bilinear sample on plane `d` at continuous pixel-index coordinates
/// `(u, v)`: returns opacity and opacity-weighted mean coefficients.
fn sample_plane(
    vol: &PlaneVolume,
    selection: Option<&[bool]>,
    d: usize,
    u: f64,
    v: f64,
    coeffs: &mut [f64],
) -> f64 {
    coeffs.fill(0.0);
    let dims = vol.dims();
    let (u, v) = (snap(u), snap(v));
    if !(u > -1.0 && v > -1.0 && u < dims.width as f64 && v < dims.height as f64) {
        return 0.0;
    }
    let x0 = u.floor();
    let y0 = v.floor();
    let fx = u - x0;
    let fy = v - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1, y0, fx * (1.0 - fy)),
        (x0, y0 + 1, (1.0 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    ];
    let mut xi = 0.0;
    for (tx, ty, w) in taps {
        if w == 0.0 || tx < 0 || ty < 0 || tx >= dims.width as i64 || ty >= dims.height as i64 {
            continue;
        }
        let idx = dims.index(tx as usize, ty as usize, d);
        if let Some(sel) = selection {
            if !sel[idx] {
                continue;
            }
        }
        let a = w * vol.xi(idx) as f64;
        if a == 0.0 {
            continue;
        }
        xi += a;
        for (c, &k) in coeffs.iter_mut().zip(vol.coeffs(idx)) {
            *c += a * k as f64;
        }
    }
    if xi > 0.0 {
        for c in coeffs.iter_mut() {
            *c /= xi;
        }
    }
    xi.min(1.0)
}

/// Rounds coordinates within 1e-9 of an integer so rays through the
/// reference pixels sample exactly one voxel.
#[inline]
fn snap(c: f64) -> f64 {
    let r = c.round();
    if (c - r).abs() < 1e-9 {
        r
    } else {
        c
    }
}

/// Result of compositing one ray, in full precision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayComposite {
    pub rgb: [f64; 3],
    /// `Σ_k ξ_k Π_{j<k} (1 − ξ_j)`.
    pub absorbed: f64,
    /// `Π_k (1 − ξ_k)`.
    pub transmittance: f64,
}

impl RayComposite {
    pub fn alpha(&self) -> f64 {
        1.0 - self.transmittance
    }
}

/// Composites a single ray through the volume near to far.
pub fn composite_ray(vol: &PlaneVolume, ray: &Ray, selection: Option<&[bool]>) -> RayComposite {
    let stride = vol.coeff_stride();
    let mut scratch = [0.0f64; 12];
    let mut kf = [0.0f32; 12];
    let (scratch, kf) = (&mut scratch[..stride], &mut kf[..stride]);
    let mut rgb = [0.0f64; 3];
    let mut absorbed = 0.0;
    let mut trans = 1.0f64;
    for (d, s) in plane_crossings(vol, ray) {
        let p = ray.at(s);
        let (pu, pv, _) = vol.ref_cam.project_unchecked(&p);
        let xi = sample_plane(vol, selection, d, pu, pv, scratch);
        if xi <= 0.0 {
            continue;
        }
        for (k, &c) in kf.iter_mut().zip(scratch.iter()) {
            *k = c as f32;
        }
        let c = basis_color_unclamped(vol.basis, kf, &ray.direction);
        let w = trans * xi;
        for ch in 0..3 {
            rgb[ch] += w * c[ch].clamp(0.0, 1.0);
        }
        absorbed += w;
        trans *= 1.0 - xi;
        if trans == 0.0 {
            break;
        }
    }
    RayComposite {
        rgb,
        absorbed,
        transmittance: trans,
    }
}

/// Near-to-far over-compositing of the volume seen from `cam`.
///
/// Every output pixel's ray is intersected with each depth plane; opacity and
/// coefficients are sampled bilinearly in the plane, and
/// `C = Σ_k c_k ξ_k Π_{j<k} (1 − ξ_j)`, `alpha = 1 − Π_k (1 − ξ_k)`.
/// Voxels outside `selection` contribute zero opacity.
pub fn render_view(
    vol: &PlaneVolume,
    cam: &Camera,
    selection: Option<&[bool]>,
) -> Result<RenderedView, VolumeError> {
    if let Some(sel) = selection {
        if sel.len() != vol.dims().len() {
            return Err(VolumeError::SelectionShape {
                got: sel.len(),
                expected: vol.dims().len(),
            });
        }
    }
    let (w, h) = (cam.width, cam.height);
    let rows: Vec<(Vec<f32>, Vec<f32>)> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut rgb = Vec::with_capacity(w * 3);
            let mut alpha = Vec::with_capacity(w);
            for u in 0..w {
                let ray = cam.ray_unchecked(u as f64, v as f64);
                let out = composite_ray(vol, &ray, selection);
                rgb.extend(out.rgb.map(|c| c.clamp(0.0, 1.0) as f32));
                alpha.push(out.alpha().clamp(0.0, 1.0) as f32);
            }
            (rgb, alpha)
        })
        .collect();
    let mut rgb = RgbImage::new(w, h);
    let mut alpha = Vec::with_capacity(w * h);
    for (v, (row_rgb, row_alpha)) in rows.into_iter().enumerate() {
        rgb.data[v * w * 3..(v + 1) * w * 3].copy_from_slice(&row_rgb);
        alpha.extend(row_alpha);
    }
    Ok(RenderedView { rgb, alpha })
}

/// Nearest-voxel walk along a ray: `(voxel index or None, T_k)` per plane
/// crossing, with the inclusive transmittance `T_k = Π_{j≤k} (1 − ξ_j)`.
pub fn transmittance_walk(vol: &PlaneVolume, ray: &Ray) -> Vec<(Option<usize>, f64)> {
    let dims = vol.dims();
    let mut trans = 1.0f64;
    plane_crossings(vol, ray)
        .map(|(d, s)| {
            let p: Vector3<f64> = ray.at(s);
            let (u, v, _) = vol.ref_cam.project_unchecked(&p);
            let (x, y) = ((u + 0.5).floor() as i64, (v + 0.5).floor() as i64);
            let idx = dims
                .contains(x, y, d as i64)
                .then(|| dims.index(x as usize, y as usize, d));
            if let Some(i) = idx {
                trans *= 1.0 - vol.xi(i) as f64;
            }
            (idx, trans)
        })
        .collect()
}

/// First voxel along the ray whose inclusive accumulated transmittance drops
/// below `gamma`.
pub fn surface_voxel(vol: &PlaneVolume, ray: &Ray, gamma: f64) -> Option<usize> {
    transmittance_walk(vol, ray)
        .into_iter()
        .find(|&(idx, t)| idx.is_some() && t < gamma)
        .and_then(|(idx, _)| idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DepthPlaneSet, SpacingKind};
    use crate::volume::BasisKind;
    use nalgebra::Matrix3;
    use proptest::prelude::*;

    fn cam(w: usize, h: usize) -> Camera {
        Camera::new(Camera::intrinsics(20.0, w, h), Matrix3::identity(), Vector3::zeros(), w, h).unwrap()
    }

    fn volume(depth: usize) -> PlaneVolume {
        let planes = DepthPlaneSet::spaced(1.0, 4.0, depth, SpacingKind::Linear).unwrap();
        PlaneVolume::new(cam(12, 10), planes, BasisKind::Constant)
    }

    fn fill_plane(vol: &mut PlaneVolume, d: usize, xi: f32, rgb: [f32; 3]) {
        let dims = vol.dims();
        for y in 0..dims.height {
            for x in 0..dims.width {
                let i = dims.index(x, y, d);
                vol.set_xi(i, xi);
                vol.coeffs_mut(i).copy_from_slice(&rgb);
            }
        }
    }

    #[test]
    fn opaque_front_plane() {
        let mut vol = volume(4);
        fill_plane(&mut vol, 0, 1.0, [0.25, 0.5, 0.75]);
        fill_plane(&mut vol, 2, 1.0, [1.0, 1.0, 1.0]);
        let out = render_view(&vol, &vol.ref_cam.clone(), None).unwrap();
        for (px, a) in out.rgb.data.chunks(3).zip(&out.alpha) {
            assert_eq!(px, &[0.25, 0.5, 0.75]);
            assert_eq!(*a, 1.0);
        }
    }

    #[test]
    fn empty_volume_is_black() {
        let vol = volume(3);
        let out = render_view(&vol, &vol.ref_cam.clone(), None).unwrap();
        assert!(out.rgb.data.iter().all(|&v| v == 0.0));
        assert!(out.alpha.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_plane_composite() {
        let mut vol = volume(2);
        fill_plane(&mut vol, 0, 0.5, [1.0, 0.0, 0.0]);
        fill_plane(&mut vol, 1, 1.0, [0.0, 0.0, 1.0]);
        let out = render_view(&vol, &vol.ref_cam.clone(), None).unwrap();
        assert_eq!(out.rgb.get(3, 4), [0.5, 0.0, 0.5]);
        assert_eq!(out.alpha[0], 1.0);
    }

    #[test]
    fn full_selection_is_bitwise_identical() {
        let mut vol = volume(5);
        for i in 0..vol.dims().len() {
            vol.set_xi(i, ((i * 37) % 11) as f32 / 10.0);
            vol.coeffs_mut(i).copy_from_slice(&[0.1, (i % 7) as f32 / 7.0, 0.9]);
        }
        let other = Camera::look_at(
            Camera::intrinsics(18.0, 9, 7),
            Vector3::new(0.3, -0.1, 0.0),
            Vector3::new(0.0, 0.0, 2.5),
            Vector3::y(),
            9,
            7,
        )
        .unwrap();
        let sel = vec![true; vol.dims().len()];
        for c in [vol.ref_cam.clone(), other] {
            assert_eq!(
                render_view(&vol, &c, None).unwrap(),
                render_view(&vol, &c, Some(&sel)).unwrap()
            );
        }
        assert!(render_view(&vol, &vol.ref_cam.clone(), Some(&[true])).is_err());
    }

    #[test]
    fn uniform_transmittance_surface_index() {
        let mut vol = volume(32);
        for d in 0..32 {
            fill_plane(&mut vol, d, 0.2, [0.5; 3]);
        }
        let ray = vol.ref_cam.pixel_ray(5.0, 5.0).unwrap();
        let hit = surface_voxel(&vol, &ray, 0.01).unwrap();
        assert_eq!(vol.dims().coords(hit), (5, 5, 20));
        // Direct product oracle.
        let oracle = (0..32).find(|&k| 0.8f64.powi(k + 1) < 0.01).unwrap();
        assert_eq!(oracle, 20);
    }

    #[test]
    fn opaque_voxel_is_its_own_surface() {
        let mut vol = volume(10);
        fill_plane(&mut vol, 5, 1.0, [1.0; 3]);
        let ray = vol.ref_cam.pixel_ray(2.0, 3.0).unwrap();
        let hit = surface_voxel(&vol, &ray, 0.01).unwrap();
        assert_eq!(vol.dims().coords(hit), (2, 3, 5));
        let empty = volume(10);
        assert_eq!(surface_voxel(&empty, &ray, 0.01), None);
    }

    fn random_volume(seed: u64, depth: usize) -> PlaneVolume {
        let mut vol = volume(depth);
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        for i in 0..vol.dims().len() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = (s >> 40) as f32 / (1u64 << 24) as f32;
            vol.set_xi(i, a);
            vol.coeffs_mut(i).copy_from_slice(&[a * 1.7, 1.0 - a, a * a * 3.0 - 0.5]);
        }
        vol
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn render_stays_in_unit_range(seed in any::<u64>(), depth in 1usize..8, ex in -0.4f64..0.4) {
            let vol = random_volume(seed, depth);
            let c = Camera::look_at(
                Camera::intrinsics(15.0, 8, 8),
                Vector3::new(ex, 0.1, -0.2),
                Vector3::new(0.0, 0.0, 3.0),
                Vector3::y(),
                8,
                8,
            )
            .unwrap();
            let out = render_view(&vol, &c, None).unwrap();
            prop_assert!(out.rgb.data.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(out.alpha.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn transmittance_is_non_increasing(seed in any::<u64>(), u in 0.0f64..12.0, v in 0.0f64..10.0) {
            let vol = random_volume(seed, 6);
            let ray = vol.ref_cam.pixel_ray(u, v).unwrap();
            let walk = transmittance_walk(&vol, &ray);
            prop_assert!(walk.windows(2).all(|w| w[1].1 <= w[0].1));
        }

        #[test]
        fn single_ray_energy_conservation(seed in any::<u64>(), depth in 1usize..40) {
            let vol = random_volume(seed, depth);
            let ray = vol.ref_cam.pixel_ray(4.0, 6.0).unwrap();
            let out = composite_ray(&vol, &ray, None);
            prop_assert!((out.absorbed + out.transmittance - 1.0).abs() < 1e-9);
        }
    }
}
