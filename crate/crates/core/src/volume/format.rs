//! Little-endian binary volume envelope.
//!
//! ```text
//! magic        8 bytes  "VXSELVOL"
//! version      u32      1
//! W, H, D, N   u32 × 4
//! basis_kind   u8       0 = constant, 1 = sh-degree1
//! spacing_kind u8       0 = linear, 1 = inverse-depth
//! reserved     u16      0
//! z_near       f64
//! z_far        f64
//! camera       f64 × 21 K (row-major), R (row-major, camera-to-world), t
//! depths       f64 × D  plane depths, ascending
//! payload      f32 × W·H·D·(1 + 3N)
//! ```
//!
//! The payload is voxel-major in `(plane, row, column)` order; each voxel is
//! `ξ` followed by `k¹ … k^N` (RGB each).

use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::{BasisKind, PlaneVolume, VolumeError};
use crate::geometry::{Camera, DepthPlaneSet, SpacingKind};

pub const VOLUME_MAGIC: &[u8; 8] = b"VXSELVOL";
const VERSION: u32 = 1;

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], VolumeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            VolumeError::Format(format!("truncated at byte {} (need {n} more)", self.pos))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, VolumeError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, VolumeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, VolumeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, VolumeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, VolumeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>, VolumeError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| VolumeError::Format("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<(), VolumeError> {
        if self.pos != self.buf.len() {
            return Err(VolumeError::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn put_camera(out: &mut Vec<u8>, cam: &Camera) {
    let k = cam.k().transpose();
    let r = cam.rotation().transpose();
    for v in k.iter().chain(r.iter()).chain(cam.center().iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn get_camera(r: &mut Reader<'_>, width: usize, height: usize) -> Result<Camera, VolumeError> {
    let mut nums = [0.0; 21];
    for v in nums.iter_mut() {
        *v = r.f64()?;
    }
    Ok(Camera::new(
        Matrix3::from_row_slice(&nums[..9]),
        Matrix3::from_row_slice(&nums[9..18]),
        Vector3::new(nums[18], nums[19], nums[20]),
        width,
        height,
    )?)
}

pub fn volume_to_bytes(vol: &PlaneVolume) -> Vec<u8> {
    let dims = vol.dims();
    let stride = vol.coeff_stride();
    let mut out = Vec::with_capacity(128 + dims.len() * (1 + stride) * 4);
    out.extend_from_slice(VOLUME_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [dims.width, dims.height, dims.depth, vol.num_coeffs()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(vol.basis.code());
    out.push(match vol.planes.spacing {
        SpacingKind::Linear => 0,
        SpacingKind::InverseDepth => 1,
    });
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&vol.planes.near().to_le_bytes());
    out.extend_from_slice(&vol.planes.far().to_le_bytes());
    put_camera(&mut out, &vol.ref_cam);
    for z in vol.planes.depths() {
        out.extend_from_slice(&z.to_le_bytes());
    }
    for i in 0..dims.len() {
        out.extend_from_slice(&vol.xi(i).to_le_bytes());
        for c in vol.coeffs(i) {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn volume_from_bytes(buf: &[u8]) -> Result<PlaneVolume, VolumeError> {
    let mut r = Reader::new(buf);
    if r.take(8)? != VOLUME_MAGIC {
        return Err(VolumeError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(VolumeError::Format(format!("unsupported version {version}")));
    }
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    let d = r.u32()? as usize;
    let n = r.u32()? as usize;
    let basis = BasisKind::from_code(r.u8()?)
        .ok_or_else(|| VolumeError::Format("unknown basis kind".into()))?;
    if basis.num_coeffs() != n {
        return Err(VolumeError::Format(format!(
            "basis {basis:?} expects {} coefficients, header says {n}",
            basis.num_coeffs()
        )));
    }
    let spacing = match r.u8()? {
        0 => SpacingKind::Linear,
        1 => SpacingKind::InverseDepth,
        k => return Err(VolumeError::Format(format!("unknown spacing kind {k}"))),
    };
    let _reserved = r.u16()?;
    let z_near = r.f64()?;
    let z_far = r.f64()?;
    let cam = get_camera(&mut r, w, h)?;
    let depths = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    if depths.first() != Some(&z_near) || depths.last() != Some(&z_far) {
        return Err(VolumeError::Format("plane table disagrees with z_near/z_far".into()));
    }
    let planes = DepthPlaneSet::new(depths, spacing)?;
    let count = w * h * d;
    let stride = 3 * n;
    let payload = r.f32_vec(count * (1 + stride))?;
    r.finish()?;
    let mut xi = Vec::with_capacity(count);
    let mut coeffs = Vec::with_capacity(count * stride);
    for voxel in payload.chunks_exact(1 + stride) {
        xi.push(voxel[0]);
        coeffs.extend_from_slice(&voxel[1..]);
    }
    PlaneVolume::from_parts(cam, planes, basis, xi, coeffs)
}

pub fn write_volume(path: &Path, vol: &PlaneVolume) -> Result<(), VolumeError> {
    std::fs::write(path, volume_to_bytes(vol))?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<PlaneVolume, VolumeError> {
    volume_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(basis: BasisKind, seed: u32) -> PlaneVolume {
        let cam = Camera::look_at(
            Camera::intrinsics(12.5, 5, 4),
            Vector3::new(0.1, 0.2, -0.3),
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::y(),
            5,
            4,
        )
        .unwrap();
        let planes = DepthPlaneSet::spaced(1.0, 3.0, 3, SpacingKind::InverseDepth).unwrap();
        let mut v = PlaneVolume::new(cam, planes, basis);
        for i in 0..v.dims().len() {
            let a = ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 / u32::MAX as f32;
            v.set_xi(i, a);
            for (j, c) in v.coeffs_mut(i).iter_mut().enumerate() {
                *c = a * j as f32 - 0.3;
            }
        }
        v
    }

    proptest! {
        #[test]
        fn round_trip(seed in any::<u32>(), sh in any::<bool>()) {
            let basis = if sh { BasisKind::ShDegree1 } else { BasisKind::Constant };
            let v = sample(basis, seed);
            prop_assert_eq!(volume_from_bytes(&volume_to_bytes(&v)).unwrap(), v);
        }
    }

    #[test]
    fn rejects_corruption() {
        let bytes = volume_to_bytes(&sample(BasisKind::Constant, 1));
        assert!(volume_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(volume_from_bytes(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(volume_from_bytes(&extra).is_err());
        let mut wrong_n = bytes;
        wrong_n[24] = 4; // N field
        assert!(volume_from_bytes(&wrong_n).is_err());
    }
}
