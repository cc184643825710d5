//! Segmentation energy on a (downsampled) voxel grid and the
//! downsample → solve → upsample refinement.

use serde::{Deserialize, Serialize};

use super::{min_cut, CutResult, GraphCutError, GraphCutProblem};
use crate::features::FeatureVolume;
use crate::grid::Dims3;
use crate::scribbles::{distance_field, LabeledVoxels};
use crate::volume::{CellMap, PlaneVolume};

/// XY reduction factor of the refinement grid.
pub const REFINE_FACTOR: usize = 4;
/// Upper bound on the planes kept for refinement.
pub const MAX_REFINE_PLANES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphCutParams {
    /// Weight of the per-voxel appearance cost.
    pub w1: f64,
    /// Weight of the scribble distance cost.
    pub w2: f64,
    /// Weight of the pairwise term.
    pub alpha: f64,
    /// Appearance bandwidth of the pairwise term.
    pub sigma: f64,
    pub downsample: usize,
    pub planes: usize,
}

impl Default for GraphCutParams {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 10.0,
            alpha: 0.1,
            sigma: 1.0,
            downsample: REFINE_FACTOR,
            planes: MAX_REFINE_PLANES,
        }
    }
}

impl GraphCutParams {
    pub fn validate(&self) -> Result<(), GraphCutError> {
        if !(self.sigma > 0.0) || !(self.alpha >= 0.0) || !(self.w1 >= 0.0) || !(self.w2 >= 0.0) {
            return Err(GraphCutError::Invalid(
                "need sigma > 0 and non-negative alpha, w1, w2".into(),
            ));
        }
        if self.downsample == 0 || self.planes == 0 {
            return Err(GraphCutError::Invalid("downsample and planes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything the energy needs, laid out on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyGrid {
    pub dims: Dims3,
    /// Appearance cost of labeling a cell foreground (`1 − p` for the
    /// classifier).
    pub cost_fg: Vec<f64>,
    /// Appearance cost of labeling a cell background (`p`).
    pub cost_bg: Vec<f64>,
    /// Normalized distance to the nearest foreground scribble voxel.
    pub dist_fg: Vec<f64>,
    pub dist_bg: Vec<f64>,
    /// Per-cell appearance vectors compared by the pairwise term.
    pub appearance: Vec<f64>,
    pub appearance_channels: usize,
    /// World position of every cell.
    pub positions: Vec<[f64; 3]>,
    /// Cells holding foreground / background scribble voxels.
    pub fg: Vec<usize>,
    pub bg: Vec<usize>,
}

impl EnergyGrid {
    fn check(&self) -> Result<(), GraphCutError> {
        let n = self.dims.len();
        let lens = [
            self.cost_fg.len(),
            self.cost_bg.len(),
            self.dist_fg.len(),
            self.dist_bg.len(),
            self.positions.len(),
            self.appearance.len() / self.appearance_channels.max(1),
        ];
        if lens.iter().any(|&l| l != n) || self.appearance.len() != n * self.appearance_channels {
            return Err(GraphCutError::GridMismatch(format!("inputs {lens:?} for {n} cells")));
        }
        if let Some(&i) = self.fg.iter().chain(&self.bg).find(|&&i| i >= n) {
            return Err(GraphCutError::GridMismatch(format!("constraint cell {i} outside grid")));
        }
        Ok(())
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Builds `E = Σ φ_p + α Σ ψ_pq` on the 6-connected grid.
///
/// * `φ_p(1) = w1·cost_fg + w2·dist_fg`, `φ_p(0) = w1·cost_bg + w2·dist_bg`.
/// * `ψ_pq = Dist(p,q)⁻¹ · exp(−‖a_p − a_q‖² / σ)` for differing labels,
///   where `Dist` is the world distance between cell centers in units of
///   the grid's mean neighbor spacing.
/// * Scribble cells become hard constraints; cells claimed by both classes
///   are left free.
pub fn build_energy(grid: &EnergyGrid, params: &GraphCutParams) -> Result<GraphCutProblem, GraphCutError> {
    params.validate()?;
    grid.check()?;
    let n = grid.dims.len();
    let cost1: Vec<f64> = (0..n).map(|i| params.w1 * grid.cost_fg[i] + params.w2 * grid.dist_fg[i]).collect();
    let cost0: Vec<f64> = (0..n).map(|i| params.w1 * grid.cost_bg[i] + params.w2 * grid.dist_bg[i]).collect();

    let pairs = grid.dims.six_neighbor_pairs();
    let lengths: Vec<f64> = pairs
        .iter()
        .map(|&(p, q)| dist(&grid.positions[p], &grid.positions[q]))
        .collect();
    let mean_spacing = lengths.iter().sum::<f64>() / lengths.len().max(1) as f64;
    let a = grid.appearance_channels;
    let edges = pairs
        .iter()
        .zip(&lengths)
        .map(|(&(p, q), &len)| {
            let ap = &grid.appearance[p * a..(p + 1) * a];
            let aq = &grid.appearance[q * a..(q + 1) * a];
            let d2: f64 = ap.iter().zip(aq).map(|(x, y)| (x - y) * (x - y)).sum();
            let rel = if mean_spacing > 0.0 { len / mean_spacing } else { 1.0 };
            (p, q, params.alpha / rel * (-d2 / params.sigma).exp())
        })
        .collect();

    let mut problem = GraphCutProblem::new(cost0, cost1, edges);
    let mut mark = vec![0u8; n];
    for &i in &grid.fg {
        mark[i] |= 1;
    }
    for &i in &grid.bg {
        mark[i] |= 2;
    }
    let fg: Vec<usize> = (0..n).filter(|&i| mark[i] == 1).collect();
    let bg: Vec<usize> = (0..n).filter(|&i| mark[i] == 2).collect();
    problem.constrain(&fg, &bg)?;
    Ok(problem)
}

/// Planes worth keeping: those holding a foreground scribble voxel or a
/// voxel whose appearance cost favors foreground (`cost_fg ≤ cost_bg`).
pub fn select_planes(dims: Dims3, cost_fg: &[f64], cost_bg: &[f64], fg_voxels: &[usize]) -> Vec<usize> {
    let mut keep = vec![false; dims.depth];
    for &v in fg_voxels {
        keep[dims.coords(v).2] = true;
    }
    for (d, k) in keep.iter_mut().enumerate() {
        if !*k {
            let plane = d * dims.plane_len()..(d + 1) * dims.plane_len();
            *k = plane.into_iter().any(|i| cost_fg[i] <= cost_bg[i]);
        }
    }
    (0..dims.depth).filter(|&d| keep[d]).collect()
}

/// Result of one refinement: the coarse problem, its solution and the
/// upsampled full-resolution labels.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub map: CellMap,
    pub grid: EnergyGrid,
    pub problem: GraphCutProblem,
    pub cut: CutResult,
    pub labels: Vec<bool>,
}

impl Refinement {
    /// Coarse labeling that follows the appearance cost alone.
    pub fn thresholded_labels(&self) -> Vec<bool> {
        self.grid
            .cost_fg
            .iter()
            .zip(&self.grid.cost_bg)
            .map(|(f, b)| f <= b)
            .collect()
    }
}

/// Cells with less total opacity than this fall back to the plain mean.
const EMPTY_CELL_OPACITY: f64 = 1e-6;

/// Per-cell mean of `values` weighted by voxel opacity, so a cell's cost
/// reflects the matter it contains rather than the empty space around it.
fn opacity_weighted_mean(map: &CellMap, xi: &[f32], values: &[f64]) -> Vec<f64> {
    let weighted: Vec<f64> = values.iter().zip(xi).map(|(v, &x)| v * x as f64).collect();
    let num = map.downsample_mean(&weighted, 1);
    let den = map.downsample_mean(xi, 1);
    let plain = map.downsample_mean(values, 1);
    num.iter()
        .zip(&den)
        .zip(&plain)
        .map(|((n, d), p)| if *d > EMPTY_CELL_OPACITY { n / d } else { *p })
        .collect()
}

/// Downsamples the appearance costs (opacity-weighted), distance fields
/// (minimum) and appearance features (mean) to the refinement grid, solves the min-cut there and upsamples the labels.
/// Truncated planes come back as background.
pub fn refine(
    vol: &PlaneVolume,
    cost_fg: &[f64],
    cost_bg: &[f64],
    fv: &FeatureVolume,
    lifted: &LabeledVoxels,
    params: &GraphCutParams,
) -> Result<Refinement, GraphCutError> {
    params.validate()?;
    let dims = vol.dims();
    if cost_fg.len() != dims.len() || cost_bg.len() != dims.len() || fv.dims != dims {
        return Err(GraphCutError::GridMismatch("inputs do not match the volume".into()));
    }
    let fg_vox = lifted.voxels(true);
    let bg_vox = lifted.voxels(false);
    if bg_vox.is_empty() {
        return Err(GraphCutError::EmptyClass("background scribble"));
    }
    let kept = select_planes(dims, cost_fg, cost_bg, &fg_vox);
    if kept.is_empty() {
        return Err(GraphCutError::NoForeground);
    }
    if fg_vox.is_empty() {
        return Err(GraphCutError::EmptyClass("foreground scribble"));
    }
    let map = CellMap::new(dims, params.downsample, params.planes.min(kept.len()), &kept)?;

    let dist_fg = distance_field(vol, &fg_vox).expect("nonempty set");
    let dist_bg = distance_field(vol, &bg_vox).expect("nonempty set");
    let appearance_range = fv.layout.appearance_range();
    let appearance_full = fv.segment(appearance_range.clone());
    let (cam, depths) = map.coarse_geometry(&vol.ref_cam, vol.planes.depths());
    let coarse = map.coarse;
    let positions = (0..coarse.len())
        .map(|i| {
            let (x, y, d) = coarse.coords(i);
            cam.point_at_depth(x as f64, y as f64, depths[d]).into()
        })
        .collect();
    let cells = |voxels: &[usize]| -> Vec<usize> {
        let mut c: Vec<usize> = voxels.iter().filter_map(|&v| map.cell_of_index(v)).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let grid = EnergyGrid {
        dims: coarse,
        cost_fg: opacity_weighted_mean(&map, vol.xi_slice(), cost_fg),
        cost_bg: opacity_weighted_mean(&map, vol.xi_slice(), cost_bg),
        dist_fg: map.downsample_min(&dist_fg, 1),
        dist_bg: map.downsample_min(&dist_bg, 1),
        appearance: map.downsample_mean(&appearance_full, appearance_range.len()),
        appearance_channels: appearance_range.len(),
        positions,
        fg: cells(&fg_vox),
        bg: cells(&bg_vox),
    };
    let problem = build_energy(&grid, params)?;
    let cut = min_cut(&problem)?;
    let labels = map.upsample_labels(&cut.labels);
    Ok(Refinement {
        map,
        grid,
        problem,
        cut,
        labels,
    })
}

/// Refines classifier probabilities: appearance costs are `1 − p` for
/// foreground and `p` for background.
pub fn postprocess(
    vol: &PlaneVolume,
    probs: &[f64],
    fv: &FeatureVolume,
    lifted: &LabeledVoxels,
    params: &GraphCutParams,
) -> Result<Refinement, GraphCutError> {
    let cost_fg: Vec<f64> = probs.iter().map(|p| 1.0 - p).collect();
    refine(vol, &cost_fg, probs, fv, lifted, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_grid(n: usize) -> EnergyGrid {
        EnergyGrid {
            dims: Dims3::new(n, 1, 1),
            cost_fg: vec![0.5; n],
            cost_bg: vec![0.5; n],
            dist_fg: vec![0.0; n],
            dist_bg: vec![0.0; n],
            appearance: vec![0.0; n],
            appearance_channels: 1,
            positions: (0..n).map(|i| [i as f64, 0.0, 0.0]).collect(),
            fg: vec![],
            bg: vec![],
        }
    }

    #[test]
    fn unary_example() {
        let mut g = line_grid(1);
        g.cost_fg = vec![1.0 - 0.9];
        g.cost_bg = vec![0.9];
        g.dist_fg = vec![0.05];
        g.dist_bg = vec![0.4];
        let p = build_energy(&g, &GraphCutParams::default()).unwrap();
        assert!((p.cost1[0] - 0.6).abs() < 1e-12);
        assert!((p.cost0[0] - 4.9).abs() < 1e-12);
    }

    #[test]
    fn identical_neighbors_get_alpha_over_distance() {
        let mut g = line_grid(3);
        g.positions = vec![[0.0; 3], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]];
        let p = build_energy(&g, &GraphCutParams::default()).unwrap();
        // Mean spacing is 1.5, so the gaps are 2/3 and 4/3 in grid units.
        assert!((p.edges[0].2 - 0.1 / (2.0 / 3.0)).abs() < 1e-12);
        assert!((p.edges[1].2 - 0.1 / (4.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn appearance_difference_attenuates() {
        let mut g = line_grid(2);
        g.appearance = vec![0.0, 1.0];
        let p = build_energy(&g, &GraphCutParams::default()).unwrap();
        assert!((p.edges[0].2 - 0.1 * (-1.0f64).exp()).abs() < 1e-15);
        let zero = build_energy(&g, &GraphCutParams { alpha: 0.0, ..Default::default() }).unwrap();
        assert_eq!(zero.edges[0].2, 0.0);
    }

    #[test]
    fn conflicting_cells_are_free() {
        let mut g = line_grid(3);
        g.fg = vec![0, 1];
        g.bg = vec![1, 2];
        let p = build_energy(&g, &GraphCutParams::default()).unwrap();
        assert_eq!(p.fixed, vec![Some(true), None, Some(false)]);
    }

    #[test]
    fn plane_selection() {
        let dims = Dims3::new(2, 1, 4);
        let mut fg = vec![1.0; 8];
        let bg = vec![0.0; 8];
        fg[dims.index(1, 0, 2)] = 0.0;
        assert_eq!(select_planes(dims, &fg, &bg, &[dims.index(0, 0, 0)]), vec![0, 2]);
    }

    #[test]
    fn grid_mismatch() {
        let mut g = line_grid(3);
        g.dist_bg.pop();
        assert!(matches!(
            build_energy(&g, &GraphCutParams::default()),
            Err(GraphCutError::GridMismatch(_))
        ));
    }
}
