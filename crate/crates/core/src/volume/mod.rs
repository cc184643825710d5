//! Plane-structured voxel volumes aligned with a reference camera.
//!
//! Voxel `(x, y, d)` sits on the ray of reference pixel `(x, y)` at depth
//! `planes[d]` along the reference principal axis. Each voxel stores a
//! transparency-like opacity `xi ∈ [0, 1]` and `N` RGB basis coefficients.

mod downsample;
pub(crate) mod format;
mod render;

pub use downsample::{downsample_volume, CellMap};
pub use format::{read_volume, volume_from_bytes, volume_to_bytes, write_volume, VOLUME_MAGIC};
pub use render::{
    composite_ray, render_view, surface_voxel, transmittance_walk, RayComposite, RenderedView,
};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Camera, DepthPlaneSet, GeometryError};
use crate::grid::Dims3;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("view direction is not unit length (norm {0})")]
    NonUnitDirection(f64),
    #[error("invalid volume: {0}")]
    Invalid(String),
    #[error("selection mask has {got} entries, volume has {expected}")]
    SelectionShape { got: usize, expected: usize },
    #[error("downsample: {0}")]
    Downsample(String),
    #[error("volume format: {0}")]
    Format(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("volume i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// One view-independent RGB coefficient.
    Constant,
    /// Constant plus the three degree-1 real spherical harmonics.
    ShDegree1,
}

impl BasisKind {
    pub const fn num_coeffs(self) -> usize {
        match self {
            BasisKind::Constant => 1,
            BasisKind::ShDegree1 => 4,
        }
    }

    pub(crate) const fn code(self) -> u8 {
        match self {
            BasisKind::Constant => 0,
            BasisKind::ShDegree1 => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(BasisKind::Constant),
            1 => Some(BasisKind::ShDegree1),
            _ => None,
        }
    }
}

/// `sqrt(3 / 4π)`, the degree-1 real SH normalization.
pub const SH1_NORM: f64 = 0.488_602_511_902_919_9;

/// Basis function values `H^l(d)` for a unit direction.
#[inline]
pub fn basis_values(basis: BasisKind, d: &Vector3<f64>) -> [f64; 4] {
    match basis {
        BasisKind::Constant => [1.0, 0.0, 0.0, 0.0],
        // Real SH order m = -1, 0, 1 → (y, z, x).
        BasisKind::ShDegree1 => [1.0, SH1_NORM * d.y, SH1_NORM * d.z, SH1_NORM * d.x],
    }
}

/// `c = Σ_l k^l H^l(d)`, unclamped.
#[inline]
pub fn basis_color_unclamped(basis: BasisKind, coeffs: &[f32], d: &Vector3<f64>) -> [f64; 3] {
    let h = basis_values(basis, d);
    let mut c = [0.0; 3];
    for (l, k) in coeffs.chunks_exact(3).enumerate() {
        for ch in 0..3 {
            c[ch] += k[ch] as f64 * h[l];
        }
    }
    c
}

/// View-dependent voxel color, clamped to `[0, 1]`.
pub fn basis_color(basis: BasisKind, coeffs: &[f32], d: &Vector3<f64>) -> Result<[f64; 3], VolumeError> {
    let norm = d.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(VolumeError::NonUnitDirection(norm));
    }
    if coeffs.len() != 3 * basis.num_coeffs() {
        return Err(VolumeError::Invalid(format!(
            "{} coefficients for {:?}",
            coeffs.len(),
            basis
        )));
    }
    Ok(basis_color_unclamped(basis, coeffs, d).map(|v| v.clamp(0.0, 1.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneVolume {
    pub ref_cam: Camera,
    pub planes: DepthPlaneSet,
    pub basis: BasisKind,
    dims: Dims3,
    xi: Vec<f32>,
    coeffs: Vec<f32>,
}

impl PlaneVolume {
    /// Empty volume (all opacities and coefficients zero). The grid is
    /// `ref_cam.width × ref_cam.height × planes.len()`.
    pub fn new(ref_cam: Camera, planes: DepthPlaneSet, basis: BasisKind) -> Self {
        let dims = Dims3::new(ref_cam.width, ref_cam.height, planes.len());
        let n = dims.len();
        Self {
            ref_cam,
            planes,
            basis,
            dims,
            xi: vec![0.0; n],
            coeffs: vec![0.0; n * 3 * basis.num_coeffs()],
        }
    }

    pub fn from_parts(
        ref_cam: Camera,
        planes: DepthPlaneSet,
        basis: BasisKind,
        xi: Vec<f32>,
        coeffs: Vec<f32>,
    ) -> Result<Self, VolumeError> {
        let mut vol = Self::new(ref_cam, planes, basis);
        if xi.len() != vol.xi.len() || coeffs.len() != vol.coeffs.len() {
            return Err(VolumeError::Invalid(format!(
                "payload sizes ({}, {}) do not match grid ({}, {})",
                xi.len(),
                coeffs.len(),
                vol.xi.len(),
                vol.coeffs.len()
            )));
        }
        if let Some(bad) = xi.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(VolumeError::Invalid(format!("opacity {bad} outside [0, 1]")));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(VolumeError::Invalid("non-finite coefficient".into()));
        }
        vol.xi = xi;
        vol.coeffs = coeffs;
        Ok(vol)
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn num_coeffs(&self) -> usize {
        self.basis.num_coeffs()
    }

    /// Floats per voxel in the coefficient array (`3N`).
    pub fn coeff_stride(&self) -> usize {
        3 * self.basis.num_coeffs()
    }

    #[inline]
    pub fn xi(&self, index: usize) -> f32 {
        self.xi[index]
    }

    pub fn xi_slice(&self) -> &[f32] {
        &self.xi
    }

    /// Stores `clamp(v, 0, 1)`.
    #[inline]
    pub fn set_xi(&mut self, index: usize, v: f32) {
        self.xi[index] = v.clamp(0.0, 1.0);
    }

    #[inline]
    pub fn coeffs(&self, index: usize) -> &[f32] {
        let s = self.coeff_stride();
        &self.coeffs[index * s..(index + 1) * s]
    }

    pub fn coeff_slice(&self) -> &[f32] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self, index: usize) -> &mut [f32] {
        let s = self.coeff_stride();
        &mut self.coeffs[index * s..(index + 1) * s]
    }

    /// World position of voxel `(x, y, d)`.
    #[inline]
    pub fn world_position(&self, x: usize, y: usize, d: usize) -> Vector3<f64> {
        self.ref_cam
            .point_at_depth(x as f64, y as f64, self.planes.depths()[d])
    }

    pub fn world_position_of(&self, index: usize) -> Vector3<f64> {
        let (x, y, d) = self.dims.coords(index);
        self.world_position(x, y, d)
    }

    /// Diagonal of the world-space bounding box of all voxel positions. The
    /// grid is a frustum, so the extremes sit at its corner voxels.
    pub fn world_diagonal(&self) -> f64 {
        let Dims3 { width, height, depth } = self.dims;
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &x in &[0, width - 1] {
            for &y in &[0, height - 1] {
                for &d in &[0, depth - 1] {
                    let p = self.world_position(x, y, d);
                    lo = lo.inf(&p);
                    hi = hi.sup(&p);
                }
            }
        }
        (hi - lo).norm()
    }

    /// Content hash over geometry and payload (hex SHA-256).
    pub fn content_hash(&self) -> String {
        crate::pipeline::sha256_hex(&volume_to_bytes(self))
    }

    pub fn with_selection(&self, selection: &[bool]) -> Result<PlaneVolume, VolumeError> {
        if selection.len() != self.dims.len() {
            return Err(VolumeError::SelectionShape {
                got: selection.len(),
                expected: self.dims.len(),
            });
        }
        let mut out = self.clone();
        for (x, &keep) in out.xi.iter_mut().zip(selection) {
            if !keep {
                *x = 0.0;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_basis_ignores_direction() {
        let k = [0.2f32, 0.4, 0.6];
        for d in [Vector3::z(), Vector3::new(0.6, 0.0, 0.8), -Vector3::x()] {
            let c = basis_color(BasisKind::Constant, &k, &d).unwrap();
            for (a, b) in c.iter().zip(&k) {
                assert_eq!(*a, *b as f64);
            }
        }
    }

    #[test]
    fn degenerate_sh_matches_constant() {
        let mut k = [0.0f32; 12];
        k[..3].copy_from_slice(&[0.3, 0.5, 0.7]);
        let d = Vector3::new(0.36, 0.48, 0.8);
        assert_eq!(
            basis_color(BasisKind::ShDegree1, &k, &d).unwrap(),
            basis_color(BasisKind::Constant, &k[..3], &d).unwrap()
        );
    }

    #[test]
    fn sh_antipodal_difference() {
        let mut k = [0.0f32; 12];
        k[..3].copy_from_slice(&[0.5, 0.5, 0.5]);
        k[3..6].copy_from_slice(&[0.2, -0.1, 0.05]);
        let d = Vector3::new(0.36, 0.48, 0.8);
        let a = basis_color_unclamped(BasisKind::ShDegree1, &k, &d);
        let b = basis_color_unclamped(BasisKind::ShDegree1, &k, &-d);
        let h2 = SH1_NORM * d.y;
        for ch in 0..3 {
            let expect = 2.0 * k[3 + ch] as f64 * h2;
            assert!((a[ch] - b[ch] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn non_unit_direction_rejected() {
        let k = [0.0f32; 3];
        assert!(matches!(
            basis_color(BasisKind::Constant, &k, &Vector3::new(0.0, 0.0, 2.0)),
            Err(VolumeError::NonUnitDirection(_))
        ));
    }
}
