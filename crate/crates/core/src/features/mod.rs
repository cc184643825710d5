//! Per-voxel embedding `v_p = [v_mvs; v_ibr; v_xyz]`.
//!
//! * `v_mvs`: 8 channels from a plane-sweep variance cost volume over 2D
//!   image features, smoothed by a fixed multi-scale 3D filter ([`cost`]).
//! * `v_ibr`: the voxel's stored opacity and basis coefficients.
//! * `v_xyz`: sinusoidal encoding of the normalized grid position
//!   (20 + 20 values for x and y, 16 for the plane index).

mod cost;
mod image;
mod store;

pub use cost::{build_cost_volume, refine_cost_volume, variance, CostVolume, MVS_CHANNELS};
pub use image::{extract_2d_features, FEATURE_CHANNELS, FEATURE_STRIDE};
pub use store::{feature_volume_from_bytes, feature_volume_to_bytes, FEATURE_MAGIC};

use std::ops::Range;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Camera, GeometryError};
use crate::raster::RgbImage;
use crate::grid::Dims3;
use crate::volume::{PlaneVolume, VolumeError};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("empty image")]
    EmptyImage,
    #[error("cost volume needs at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error("no depth planes")]
    NoPlanes,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("feature cache: {0}")]
    Format(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl From<VolumeError> for FeatureError {
    fn from(e: VolumeError) -> Self {
        FeatureError::Format(e.to_string())
    }
}

/// Dense 2D feature map, row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap2D {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FeatureMap2D {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }
}

/// Positional segment width for x and y (10 frequency pairs each).
pub const XY_FREQUENCIES: usize = 10;
/// Frequency pairs for the plane index.
pub const Z_FREQUENCIES: usize = 8;
pub const POSITIONAL_CHANNELS: usize = 4 * XY_FREQUENCIES + 2 * Z_FREQUENCIES;

/// Widths of the three embedding segments, stored in that order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    pub mvs: usize,
    pub ibr: usize,
    pub pos: usize,
}

impl FeatureLayout {
    pub fn for_volume(vol: &PlaneVolume, with_mvs: bool) -> Self {
        Self {
            mvs: if with_mvs { MVS_CHANNELS } else { 0 },
            ibr: 1 + vol.coeff_stride(),
            pos: POSITIONAL_CHANNELS,
        }
    }

    pub fn channels(&self) -> usize {
        self.mvs + self.ibr + self.pos
    }

    pub fn mvs_range(&self) -> Range<usize> {
        0..self.mvs
    }

    pub fn ibr_range(&self) -> Range<usize> {
        self.mvs..self.mvs + self.ibr
    }

    pub fn pos_range(&self) -> Range<usize> {
        self.mvs + self.ibr..self.channels()
    }

    /// Appearance channels used by the pairwise term: `[v_mvs; v_ibr]`.
    pub fn appearance_range(&self) -> Range<usize> {
        0..self.mvs + self.ibr
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVolume {
    pub dims: Dims3,
    pub layout: FeatureLayout,
    /// Voxel-major, `layout.channels()` values per voxel.
    pub data: Vec<f32>,
}

impl FeatureVolume {
    pub fn channels(&self) -> usize {
        self.layout.channels()
    }

    #[inline]
    pub fn voxel(&self, index: usize) -> &[f32] {
        let c = self.channels();
        &self.data[index * c..(index + 1) * c]
    }

    /// Copy of one segment over all voxels.
    pub fn segment(&self, range: Range<usize>) -> Vec<f32> {
        self.data
            .chunks_exact(self.channels())
            .flat_map(|v| v[range.clone()].iter().copied())
            .collect()
    }
}

/// `[ξ_p, k_p^1, …, k_p^N]`.
pub fn ibr_feature(vol: &PlaneVolume, index: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(1 + vol.coeff_stride());
    out.push(vol.xi(index));
    out.extend_from_slice(vol.coeffs(index));
    out
}

/// Maps grid index `i ∈ [0, n)` to `[-1, 1]`; a single cell maps to 0.
#[inline]
fn normalize_index(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        2.0 * i as f64 / (n - 1) as f64 - 1.0
    }
}

/// Writes `(sin 2^j π u, cos 2^j π u)` for `j = 0..out.len()/2`.
fn encode(u: f64, out: &mut [f32]) {
    for (j, pair) in out.chunks_exact_mut(2).enumerate() {
        let a = (1u64 << j) as f64 * std::f64::consts::PI * u;
        pair[0] = a.sin() as f32;
        pair[1] = a.cos() as f32;
    }
}

/// 56-dimensional positional encoding of voxel `(x, y, d)`.
pub fn positional_feature(dims: Dims3, x: usize, y: usize, d: usize) -> [f32; POSITIONAL_CHANNELS] {
    let mut out = [0.0f32; POSITIONAL_CHANNELS];
    let xy = 2 * XY_FREQUENCIES;
    encode(normalize_index(x, dims.width), &mut out[..xy]);
    encode(normalize_index(y, dims.height), &mut out[xy..2 * xy]);
    encode(normalize_index(d, dims.depth), &mut out[2 * xy..]);
    out
}

/// Concatenates `[v_mvs; v_ibr; v_xyz]` per voxel. `mvs` holds
/// [`MVS_CHANNELS`] values per voxel, or is `None` to drop the segment.
pub fn assemble_features(vol: &PlaneVolume, mvs: Option<&[f32]>) -> Result<FeatureVolume, FeatureError> {
    let dims = vol.dims();
    if let Some(m) = mvs {
        if m.len() != dims.len() * MVS_CHANNELS {
            return Err(FeatureError::GridMismatch(format!(
                "{} multi-view values for {} voxels",
                m.len(),
                dims.len()
            )));
        }
    }
    let layout = FeatureLayout::for_volume(vol, mvs.is_some());
    let c = layout.channels();
    let mut data = vec![0.0f32; dims.len() * c];
    data.par_chunks_mut(dims.plane_len() * c)
        .enumerate()
        .for_each(|(d, plane)| {
            for (j, out) in plane.chunks_exact_mut(c).enumerate() {
                let (x, y) = (j % dims.width, j / dims.width);
                let i = dims.index(x, y, d);
                if let Some(m) = mvs {
                    out[layout.mvs_range()].copy_from_slice(&m[i * MVS_CHANNELS..(i + 1) * MVS_CHANNELS]);
                }
                let ibr = &mut out[layout.ibr_range()];
                ibr[0] = vol.xi(i);
                ibr[1..].copy_from_slice(vol.coeffs(i));
                out[layout.pos_range()].copy_from_slice(&positional_feature(dims, x, y, d));
            }
        });
    Ok(FeatureVolume { dims, layout, data })
}

/// Full embedding of `vol`: the refined cost volume over `views`
/// (reference first) plus stored appearance and position. With `with_mvs`
/// false the multi-view segment is left out and `views` is unused.
pub fn compute_features(
    vol: &PlaneVolume,
    views: &[(&RgbImage, &Camera)],
    with_mvs: bool,
    seed: u64,
) -> Result<FeatureVolume, FeatureError> {
    if !with_mvs {
        return assemble_features(vol, None);
    }
    let cv = build_cost_volume(&vol.ref_cam, views, &vol.planes)?;
    let mvs = refine_cost_volume(&cv, vol.dims(), &vol.planes, seed);
    assemble_features(vol, Some(&mvs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Camera, DepthPlaneSet, SpacingKind};
    use crate::volume::BasisKind;
    use nalgebra::{Matrix3, Vector3};

    fn vol(basis: BasisKind) -> PlaneVolume {
        let cam = Camera::new(Camera::intrinsics(10.0, 5, 4), Matrix3::identity(), Vector3::zeros(), 5, 4).unwrap();
        let planes = DepthPlaneSet::spaced(1.0, 2.0, 3, SpacingKind::Linear).unwrap();
        let mut v = PlaneVolume::new(cam, planes, basis);
        for i in 0..v.dims().len() {
            v.set_xi(i, (i % 7) as f32 / 7.0);
            for (j, k) in v.coeffs_mut(i).iter_mut().enumerate() {
                *k = (i + j) as f32 * 0.01;
            }
        }
        v
    }

    #[test]
    fn ibr_reads_stored_values() {
        let mut v = vol(BasisKind::Constant);
        v.set_xi(3, 0.5);
        v.coeffs_mut(3).copy_from_slice(&[0.1, 0.2, 0.3]);
        assert_eq!(ibr_feature(&v, 3), vec![0.5, 0.1, 0.2, 0.3]);
        assert_eq!(ibr_feature(&vol(BasisKind::ShDegree1), 0).len(), 13);
    }

    #[test]
    fn positional_origin_and_half() {
        let dims = Dims3::new(3, 3, 3);
        let p = positional_feature(dims, 1, 1, 1);
        assert_eq!(p.len(), 56);
        for pair in p.chunks_exact(2) {
            assert_eq!(pair, &[0.0, 1.0]);
        }
        // x = 3 of 0..5 normalizes to 0.5; the j = 1 pair is (sin π, cos π).
        let q = positional_feature(Dims3::new(5, 3, 3), 3, 1, 1);
        assert!(q[2].abs() < 1e-7);
        assert_eq!(q[3], -1.0);
    }

    #[test]
    fn layout_widths() {
        let v = vol(BasisKind::Constant);
        let mvs = vec![1.0f32; v.dims().len() * MVS_CHANNELS];
        let fv = assemble_features(&v, Some(&mvs)).unwrap();
        assert_eq!(fv.channels(), 68);
        assert_eq!(fv.layout.mvs_range(), 0..8);
        let zero = vec![0.0f32; mvs.len()];
        let fz = assemble_features(&v, Some(&zero)).unwrap();
        for (a, b) in fv.data.chunks_exact(68).zip(fz.data.chunks_exact(68)) {
            assert!(b[..8].iter().all(|&x| x == 0.0));
            assert_eq!(a[8..], b[8..]);
        }
        assert_eq!(assemble_features(&v, None).unwrap().channels(), 60);
        assert!(assemble_features(&v, Some(&mvs[1..])).is_err());
    }

    #[test]
    fn segments_round_trip() {
        let v = vol(BasisKind::ShDegree1);
        let mvs: Vec<f32> = (0..v.dims().len() * MVS_CHANNELS).map(|i| i as f32 * 0.5).collect();
        let fv = assemble_features(&v, Some(&mvs)).unwrap();
        assert_eq!(fv.segment(fv.layout.mvs_range()), mvs);
        let ibr: Vec<f32> = (0..v.dims().len()).flat_map(|i| ibr_feature(&v, i)).collect();
        assert_eq!(fv.segment(fv.layout.ibr_range()), ibr);
    }

    #[test]
    fn planes_differ_in_z_slots_only() {
        let mut v = vol(BasisKind::Constant);
        let dims = v.dims();
        for d in 0..dims.depth {
            let i = dims.index(2, 1, d);
            v.set_xi(i, 0.25);
            v.coeffs_mut(i).copy_from_slice(&[0.5; 3]);
        }
        let fv = assemble_features(&v, None).unwrap();
        let a = fv.voxel(dims.index(2, 1, 0));
        let b = fv.voxel(dims.index(2, 1, 2));
        let z = fv.layout.pos_range().end - 16;
        assert_eq!(a[..z], b[..z]);
        assert_ne!(a[z..], b[z..]);
    }
}
