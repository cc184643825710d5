//! Reference segmenters: a 3D graph cut driven by nearest scribble colors
//! and a 2D color graph cut on single images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{min_cut, GraphCutError, GraphCutParams, GraphCutProblem, Refinement};
use crate::features::FeatureVolume;
use crate::kdtree::KdTree;
use crate::raster::{Mask, RgbImage};
use crate::scribbles::LabeledVoxels;
use crate::volume::PlaneVolume;

/// Pairwise bandwidth of the 2D baseline on 0–255 colors.
pub const BASELINE_2D_SIGMA: f64 = 10.0;
const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITERS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub centers: Vec<[f64; 3]>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centers.
    pub inertia: f64,
}

fn d2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn nearest_center(p: &[f64; 3], centers: &[[f64; 3]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = d2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn lloyd(points: &[[f64; 3]], k: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    // k-means++ seeding.
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut dist: Vec<f64> = points.iter().map(|p| d2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut pick = points.len() - 1;
            for (i, &d) in dist.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[next]);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(d2(p, &points[next]));
        }
    }

    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (a, p) in assignments.iter_mut().zip(points) {
            let j = nearest_center(p, &centers).0;
            changed |= *a != j;
            *a = j;
        }
        if !changed {
            break;
        }
        let mut sums = vec![([0.0; 3], 0usize); k];
        for (p, &a) in points.iter().zip(&assignments) {
            for c in 0..3 {
                sums[a].0[c] += p[c];
            }
            sums[a].1 += 1;
        }
        for (center, (sum, n)) in centers.iter_mut().zip(sums) {
            // Empty clusters keep their previous center.
            if n > 0 {
                *center = sum.map(|s| s / n as f64);
            }
        }
    }
    let inertia = points.iter().zip(&assignments).map(|(p, &a)| d2(p, &centers[a])).sum();
    KMeansResult {
        centers,
        assignments,
        inertia,
    }
}

/// Seeded k-means++ with restarts; returns the lowest-inertia run. `k` is
/// capped at the number of points.
pub fn kmeans(points: &[[f64; 3]], k: usize, seed: u64) -> Result<KMeansResult, GraphCutError> {
    if points.is_empty() || k == 0 {
        return Err(GraphCutError::Invalid("k-means needs points and k >= 1".into()));
    }
    let k = k.min(points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..KMEANS_RESTARTS {
        let run = lloyd(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn color255(img: &RgbImage, x: usize, y: usize) -> [f64; 3] {
    img.get(x, y).map(|c| c as f64 * 255.0)
}

/// Interactive 2D graph cut on one image.
///
/// Scribbled pixels are fixed. Elsewhere, with `dF`/`dB` the distance to the
/// nearest foreground/background cluster center, the costs are
/// `dF/(dF+dB)` for foreground and `dB/(dF+dB)` for background (1/2 each
/// when both vanish). Neighboring pixels with different labels pay
/// `exp(−‖c_p − c_q‖² / 10)` on 0–255 colors, 4-connected.
pub fn graphcut2d_baseline(
    image: &RgbImage,
    fg_pixels: &[(usize, usize)],
    bg_pixels: &[(usize, usize)],
    k: usize,
    seed: u64,
) -> Result<Mask, GraphCutError> {
    if fg_pixels.is_empty() {
        return Err(GraphCutError::EmptyClass("foreground scribble"));
    }
    if bg_pixels.is_empty() {
        return Err(GraphCutError::EmptyClass("background scribble"));
    }
    let (w, h) = (image.width, image.height);
    if let Some(&(x, y)) = fg_pixels.iter().chain(bg_pixels).find(|&&(x, y)| x >= w || y >= h) {
        return Err(GraphCutError::GridMismatch(format!("scribble pixel ({x}, {y}) outside {w}x{h} image")));
    }
    let colors = |px: &[(usize, usize)]| -> Vec<[f64; 3]> { px.iter().map(|&(x, y)| color255(image, x, y)).collect() };
    let fg_centers = kmeans(&colors(fg_pixels), k, seed)?.centers;
    let bg_centers = kmeans(&colors(bg_pixels), k, seed.wrapping_add(1))?.centers;

    let n = w * h;
    let mut cost0 = vec![0.0; n];
    let mut cost1 = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let c = color255(image, x, y);
            let df = nearest_center(&c, &fg_centers).1.sqrt();
            let db = nearest_center(&c, &bg_centers).1.sqrt();
            let (c1, c0) = if df + db > 0.0 {
                (df / (df + db), db / (df + db))
            } else {
                (0.5, 0.5)
            };
            cost1[y * w + x] = c1;
            cost0[y * w + x] = c0;
        }
    }
    let mut edges = Vec::with_capacity(2 * n);
    let weight = |a: [f64; 3], b: [f64; 3]| (-d2(&a, &b) / BASELINE_2D_SIGMA).exp();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let c = color255(image, x, y);
            if x + 1 < w {
                edges.push((p, p + 1, weight(c, color255(image, x + 1, y))));
            }
            if y + 1 < h {
                edges.push((p, p + w, weight(c, color255(image, x, y + 1))));
            }
        }
    }
    let mut problem = GraphCutProblem::new(cost0, cost1, edges);
    let idx = |px: &[(usize, usize)]| -> Vec<usize> { px.iter().map(|&(x, y)| y * w + x).collect() };
    let fg_idx = idx(fg_pixels);
    let mut bg_idx = idx(bg_pixels);
    // A pixel scribbled with both classes stays foreground-fixed only if
    // it is not also background; such pixels are left free.
    let fg_set: std::collections::HashSet<usize> = fg_idx.iter().copied().collect();
    let bg_set: std::collections::HashSet<usize> = bg_idx.iter().copied().collect();
    let fg_idx: Vec<usize> = fg_idx.into_iter().filter(|i| !bg_set.contains(i)).collect();
    bg_idx.retain(|i| !fg_set.contains(i));
    problem.constrain(&fg_idx, &bg_idx)?;
    let cut = min_cut(&problem)?;
    Ok(Mask {
        width: w,
        height: h,
        data: cut.labels,
    })
}

fn nearest_distances<const K: usize>(queries: &[f32], refs: &[f32]) -> Vec<f64> {
    let to_arr = |s: &[f32]| -> [f64; K] { std::array::from_fn(|i| s[i] as f64) };
    let pts: Vec<[f64; K]> = refs.chunks_exact(K).map(to_arr).collect();
    let tree = KdTree::new(&pts);
    queries
        .par_chunks_exact(K)
        .map(|q| tree.nearest(&to_arr(q)).map_or(f64::INFINITY, |(_, d)| d))
        .collect()
}

fn nearest_distances_brute(queries: &[f32], refs: &[f32], k: usize) -> Vec<f64> {
    queries
        .par_chunks_exact(k)
        .map(|q| {
            refs.chunks_exact(k)
                .map(|r| q.iter().zip(r).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// Appearance costs of the 3D baseline: distance from every voxel's IBR
/// feature to the nearest foreground (resp. background) scribble voxel's,
/// both divided by the largest value observed over the two fields.
/// Returns `(cost_fg, cost_bg)`.
pub fn ibr_color_costs(fv: &FeatureVolume, lifted: &LabeledVoxels) -> Result<(Vec<f64>, Vec<f64>), GraphCutError> {
    let range = fv.layout.ibr_range();
    let k = range.len();
    let ibr = fv.segment(range);
    let gather = |fg: bool| -> Vec<f32> {
        let mut rows: Vec<&[f32]> = lifted
            .voxels(fg)
            .into_iter()
            .map(|v| &ibr[v * k..(v + 1) * k])
            .collect();
        rows.sort_by(|a, b| a.iter().zip(*b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
        rows.dedup();
        rows.concat()
    };
    let (fg, bg) = (gather(true), gather(false));
    if fg.is_empty() {
        return Err(GraphCutError::EmptyClass("foreground scribble"));
    }
    if bg.is_empty() {
        return Err(GraphCutError::EmptyClass("background scribble"));
    }
    let field = |refs: &[f32]| match k {
        4 => nearest_distances::<4>(&ibr, refs),
        13 => nearest_distances::<13>(&ibr, refs),
        _ => nearest_distances_brute(&ibr, refs, k),
    };
    let (mut df, mut db) = (field(&fg), field(&bg));
    let max = df.iter().chain(&db).copied().fold(0.0, f64::max);
    if max > 0.0 {
        df.iter_mut().chain(db.iter_mut()).for_each(|v| *v /= max);
    }
    Ok((df, db))
}

/// 3D graph cut whose appearance term is the nearest scribble color
/// distance instead of the classifier; otherwise identical to
/// [`super::postprocess`].
pub fn graphcut3d_baseline(
    vol: &PlaneVolume,
    fv: &FeatureVolume,
    lifted: &LabeledVoxels,
    params: &GraphCutParams,
) -> Result<Refinement, GraphCutError> {
    let (cost_fg, cost_bg) = ibr_color_costs(fv, lifted)?;
    super::refine(vol, &cost_fg, &cost_bg, fv, lifted, params)
}
