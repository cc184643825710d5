use super::{PlaneVolume, VolumeError};
use crate::geometry::{Camera, DepthPlaneSet};
use crate::grid::Dims3;

/// Correspondence between a full-resolution grid and its downsampled,
/// plane-truncated version.
///
/// XY is reduced by `factor_xy` (partial blocks at the border average what
/// they cover). The kept planes are resampled to `coarse.depth` planes by
/// linear interpolation along the kept-plane index.
#[derive(Clone, Debug, PartialEq)]
pub struct CellMap {
    pub full: Dims3,
    pub coarse: Dims3,
    pub factor_xy: usize,
    /// Full-resolution plane indices that survive truncation, ascending.
    pub kept: Vec<usize>,
    /// Per coarse plane: lower kept-list position and interpolation weight
    /// of the next one.
    pub plane_samples: Vec<(usize, f64)>,
    /// Per full plane: the nearest coarse plane, `None` if truncated.
    pub plane_to_cell: Vec<Option<usize>>,
}

impl CellMap {
    pub fn new(
        full: Dims3,
        factor_xy: usize,
        out_planes: usize,
        plane_keep: &[usize],
    ) -> Result<Self, VolumeError> {
        if factor_xy == 0 {
            return Err(VolumeError::Downsample("factor must be at least 1".into()));
        }
        let mut kept = plane_keep.to_vec();
        kept.sort_unstable();
        kept.dedup();
        if kept.is_empty() {
            return Err(VolumeError::Downsample("no planes kept".into()));
        }
        if let Some(&bad) = kept.iter().find(|&&d| d >= full.depth) {
            return Err(VolumeError::Downsample(format!("plane {bad} out of range")));
        }
        if out_planes == 0 || out_planes > kept.len() {
            return Err(VolumeError::Downsample(format!(
                "cannot resample {} kept planes to {out_planes}",
                kept.len()
            )));
        }
        let k = kept.len();
        let plane_samples = (0..out_planes)
            .map(|j| {
                let s = if out_planes == 1 {
                    (k - 1) as f64 / 2.0
                } else {
                    j as f64 * (k - 1) as f64 / (out_planes - 1) as f64
                };
                let i0 = (s.floor() as usize).min(k - 1);
                let frac = if i0 + 1 >= k { 0.0 } else { s - i0 as f64 };
                (i0, frac)
            })
            .collect();
        let mut plane_to_cell = vec![None; full.depth];
        for (pos, &d) in kept.iter().enumerate() {
            let j = if out_planes == 1 {
                0
            } else {
                (pos as f64 * (out_planes - 1) as f64 / (k - 1) as f64).round() as usize
            };
            plane_to_cell[d] = Some(j.min(out_planes - 1));
        }
        let coarse = Dims3::new(
            full.width.div_ceil(factor_xy),
            full.height.div_ceil(factor_xy),
            out_planes,
        );
        Ok(Self {
            full,
            coarse,
            factor_xy,
            kept,
            plane_samples,
            plane_to_cell,
        })
    }

    /// Coarse cell of a full-resolution voxel, `None` on truncated planes.
    #[inline]
    pub fn cell_of(&self, x: usize, y: usize, d: usize) -> Option<usize> {
        self.plane_to_cell[d].map(|j| self.coarse.index(x / self.factor_xy, y / self.factor_xy, j))
    }

    pub fn cell_of_index(&self, index: usize) -> Option<usize> {
        let (x, y, d) = self.full.coords(index);
        self.cell_of(x, y, d)
    }

    /// Interpolated value of a per-plane quantity at every coarse plane.
    pub fn resample_planes(&self, per_plane: &[f64]) -> Vec<f64> {
        self.plane_samples
            .iter()
            .map(|&(i0, f)| lerp(per_plane[self.kept[i0]], self.next(per_plane, i0), f))
            .collect()
    }

    fn next(&self, per_plane: &[f64], i0: usize) -> f64 {
        self.kept
            .get(i0 + 1)
            .map_or(per_plane[self.kept[i0]], |&d| per_plane[d])
    }

    /// Box mean in XY, then linear interpolation across kept planes.
    /// `data` holds `channels` values per full-resolution voxel.
    pub fn downsample_mean<T: Copy + Into<f64>>(&self, data: &[T], channels: usize) -> Vec<f64> {
        self.downsample_with(data, channels, |block| {
            let n = block.len() as f64;
            block.iter().sum::<f64>() / n
        })
    }

    /// Box minimum in XY, then linear interpolation across kept planes.
    pub fn downsample_min<T: Copy + Into<f64>>(&self, data: &[T], channels: usize) -> Vec<f64> {
        self.downsample_with(data, channels, |block| {
            block.iter().copied().fold(f64::INFINITY, f64::min)
        })
    }

    fn downsample_with<T: Copy + Into<f64>>(
        &self,
        data: &[T],
        channels: usize,
        reduce: impl Fn(&[f64]) -> f64,
    ) -> Vec<f64> {
        assert_eq!(data.len(), self.full.len() * channels, "data does not match grid");
        let f = self.factor_xy;
        let (cw, ch) = (self.coarse.width, self.coarse.height);
        // XY reduction for every kept plane.
        let mut reduced = vec![Vec::new(); self.full.depth];
        let mut block = Vec::with_capacity(f * f);
        for &d in &self.kept {
            let mut plane = vec![0.0; cw * ch * channels];
            for cy in 0..ch {
                for cx in 0..cw {
                    for c in 0..channels {
                        block.clear();
                        for y in cy * f..((cy + 1) * f).min(self.full.height) {
                            for x in cx * f..((cx + 1) * f).min(self.full.width) {
                                block.push(data[self.full.index(x, y, d) * channels + c].into());
                            }
                        }
                        plane[(cy * cw + cx) * channels + c] = reduce(&block);
                    }
                }
            }
            reduced[d] = plane;
        }
        let mut out = Vec::with_capacity(self.coarse.len() * channels);
        for &(i0, frac) in &self.plane_samples {
            let lo = &reduced[self.kept[i0]];
            let hi = self.kept.get(i0 + 1).map_or(lo, |&d| &reduced[d]);
            out.extend(lo.iter().zip(hi).map(|(&a, &b)| lerp(a, b, frac)));
        }
        out
    }

    /// Reference camera and plane depths of the coarse grid. Coarse cell
    /// `(cx, cy)` sits at the center of its full-resolution block.
    pub fn coarse_geometry(&self, ref_cam: &Camera, depths: &[f64]) -> (Camera, Vec<f64>) {
        let mut cam = ref_cam.scaled(1.0 / self.factor_xy as f64);
        cam.width = self.coarse.width;
        cam.height = self.coarse.height;
        (cam, self.resample_planes(depths))
    }

    /// Nearest-cell upsampling of coarse labels; truncated planes get `false`.
    pub fn upsample_labels(&self, coarse_labels: &[bool]) -> Vec<bool> {
        assert_eq!(coarse_labels.len(), self.coarse.len());
        (0..self.full.len())
            .map(|i| self.cell_of_index(i).is_some_and(|c| coarse_labels[c]))
            .collect()
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        (1.0 - t) * a + t * b
    }
}

/// Downsamples opacity and coefficients by `factor_xy` in XY and resamples
/// the kept planes to `out_planes`. Returns the coarse volume and the
/// mapping used to bring labels back to full resolution.
pub fn downsample_volume(
    vol: &PlaneVolume,
    factor_xy: usize,
    out_planes: usize,
    plane_keep: &[usize],
) -> Result<(PlaneVolume, CellMap), VolumeError> {
    let map = CellMap::new(vol.dims(), factor_xy, out_planes, plane_keep)?;
    let xi: Vec<f32> = map
        .downsample_mean(vol.xi_slice(), 1)
        .into_iter()
        .map(|v| (v as f32).clamp(0.0, 1.0))
        .collect();
    let coeffs: Vec<f32> = map
        .downsample_mean(vol.coeff_slice(), vol.coeff_stride())
        .into_iter()
        .map(|v| v as f32)
        .collect();
    let (cam, depths) = map.coarse_geometry(&vol.ref_cam, vol.planes.depths());
    let planes = DepthPlaneSet::new(depths, vol.planes.spacing)?;
    let coarse = PlaneVolume::from_parts(cam, planes, vol.basis, xi, coeffs)?;
    Ok((coarse, map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SpacingKind;
    use crate::volume::BasisKind;
    use nalgebra::{Matrix3, Vector3};

    fn vol(w: usize, h: usize, d: usize) -> PlaneVolume {
        let cam = Camera::new(Camera::intrinsics(30.0, w, h), Matrix3::identity(), Vector3::zeros(), w, h).unwrap();
        let planes = DepthPlaneSet::spaced(1.0, 3.0, d, SpacingKind::InverseDepth).unwrap();
        let mut v = PlaneVolume::new(cam, planes, BasisKind::Constant);
        for i in 0..v.dims().len() {
            v.set_xi(i, ((i * 7919) % 101) as f32 / 100.0);
            v.coeffs_mut(i).copy_from_slice(&[(i % 13) as f32 / 13.0, 0.5, -(i as f32) / 1000.0]);
        }
        v
    }

    #[test]
    fn identity_downsample_is_bitwise() {
        let v = vol(9, 7, 6);
        let all: Vec<usize> = (0..6).collect();
        let (out, map) = downsample_volume(&v, 1, 6, &all).unwrap();
        assert_eq!(out.xi_slice(), v.xi_slice());
        assert_eq!(out.coeff_slice(), v.coeff_slice());
        assert_eq!(out.planes.depths(), v.planes.depths());
        assert_eq!(out.ref_cam, v.ref_cam.scaled(1.0));
        let labels: Vec<bool> = (0..v.dims().len()).map(|i| i % 3 == 0).collect();
        assert_eq!(map.upsample_labels(&labels), labels);
    }

    #[test]
    fn constant_volume_stays_constant() {
        let mut v = vol(10, 9, 8);
        for i in 0..v.dims().len() {
            v.set_xi(i, 0.375);
            v.coeffs_mut(i).copy_from_slice(&[0.25, 0.5, 0.125]);
        }
        let (out, map) = downsample_volume(&v, 4, 3, &[1, 2, 4, 6]).unwrap();
        assert_eq!(map.coarse, Dims3::new(3, 3, 3));
        assert!(out.xi_slice().iter().all(|&x| x == 0.375));
        for i in 0..out.dims().len() {
            assert_eq!(out.coeffs(i), &[0.25, 0.5, 0.125]);
        }
    }

    #[test]
    fn errors() {
        let v = vol(4, 4, 4);
        assert!(downsample_volume(&v, 2, 1, &[]).is_err());
        assert!(downsample_volume(&v, 0, 1, &[0]).is_err());
        assert!(downsample_volume(&v, 2, 3, &[0, 1]).is_err());
        assert!(downsample_volume(&v, 2, 1, &[9]).is_err());
    }

    #[test]
    fn truncated_planes_upsample_to_background() {
        let full = Dims3::new(4, 4, 5);
        let map = CellMap::new(full, 2, 2, &[1, 2, 3]).unwrap();
        let up = map.upsample_labels(&vec![true; map.coarse.len()]);
        for (i, &l) in up.iter().enumerate() {
            let (_, _, d) = full.coords(i);
            assert_eq!(l, (1..=3).contains(&d));
        }
        assert_eq!(map.plane_to_cell[1], Some(0));
        assert_eq!(map.plane_to_cell[3], Some(1));
    }

    #[test]
    fn coarse_cells_sit_at_block_centers() {
        let v = vol(8, 8, 3);
        let (out, _) = downsample_volume(&v, 4, 3, &[0, 1, 2]).unwrap();
        // Coarse cell (0, 0) is the center of pixels 0..4, i.e. full coordinate 1.5.
        let a = out.world_position(0, 0, 1);
        let b = v.ref_cam.point_at_depth(1.5, 1.5, v.planes.depths()[1]);
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn min_and_mean_reductions() {
        let full = Dims3::new(2, 2, 1);
        let map = CellMap::new(full, 2, 1, &[0]).unwrap();
        let data = [1.0f64, 4.0, 3.0, 0.5];
        assert_eq!(map.downsample_mean(&data, 1), vec![2.125]);
        assert_eq!(map.downsample_min(&data, 1), vec![0.5]);
    }
}
