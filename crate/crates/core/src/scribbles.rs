//! Scribble strokes on the reference view, their lifting into the volume,
//! and distance fields to the lifted voxels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Camera;
use crate::kdtree::KdTree;
use crate::volume::{surface_voxel, PlaneVolume};

pub const DEFAULT_BRUSH_RADIUS: u32 = 2;

#[derive(Debug, Error)]
pub enum ScribbleError {
    #[error("scribble line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("stroke point ({x}, {y}) outside the {width}x{height} image")]
    OutOfBounds { x: f64, y: f64, width: usize, height: usize },
    #[error("{} pixels marked both foreground and background, first at {:?}", .0.len(), .0.first())]
    Overlap(Vec<(usize, usize)>),
    #[error("no {0} strokes")]
    MissingClass(Class),
    #[error("no scribble pixel hit a surface voxel")]
    EmptyLift,
    #[error("distance field needs a nonempty voxel set")]
    EmptySet,
    #[error("scribble raster: {0}")]
    Raster(String),
    #[error("scribble i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Fg,
    Bg,
}

impl Class {
    pub fn is_fg(self) -> bool {
        self == Class::Fg
    }

    fn tag(self) -> &'static str {
        match self {
            Class::Fg => "fg",
            Class::Bg => "bg",
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Polyline in reference-view pixel-index coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub class: Class,
    pub points: Vec<[f64; 2]>,
    /// Brush radius in pixels; `None` uses the rasterizer default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScribbleSet {
    pub strokes: Vec<Stroke>,
}

impl ScribbleSet {
    pub fn new(strokes: Vec<Stroke>) -> Self {
        Self { strokes }
    }

    pub fn count(&self, class: Class) -> usize {
        self.strokes.iter().filter(|s| s.class == class).count()
    }

    /// Both classes must be present before lifting.
    pub fn check_complete(&self) -> Result<(), ScribbleError> {
        for class in [Class::Fg, Class::Bg] {
            if self.count(class) == 0 {
                return Err(ScribbleError::MissingClass(class));
            }
        }
        Ok(())
    }

    /// Text form: one stroke per line, `fg|bg [r=<radius>] x,y x,y …`.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, ScribbleError> {
        let mut strokes = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ScribbleError::Parse { line: line_no, msg };
            let mut tokens = line.split_whitespace();
            let class = match tokens.next() {
                Some("fg") => Class::Fg,
                Some("bg") => Class::Bg,
                Some(t) => return Err(err(format!("unknown class tag {t:?}"))),
                None => unreachable!(),
            };
            let mut radius = None;
            let mut points = Vec::new();
            for tok in tokens {
                if let Some(r) = tok.strip_prefix("r=") {
                    if radius.is_some() || !points.is_empty() {
                        return Err(err("radius must come once, before the points".into()));
                    }
                    radius = Some(r.parse().map_err(|_| err(format!("bad radius {r:?}")))?);
                    continue;
                }
                let (x, y) = tok
                    .split_once(',')
                    .ok_or_else(|| err(format!("expected x,y, got {tok:?}")))?;
                let parse = |s: &str| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| err(format!("bad coordinate {s:?}")))
                };
                points.push([parse(x)?, parse(y)?]);
            }
            if points.is_empty() {
                return Err(err("stroke has no points".into()));
            }
            strokes.push(Stroke { class, points, radius });
        }
        Ok(Self { strokes })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# class [r=radius] x,y ...\n");
        for s in &self.strokes {
            out.push_str(s.class.tag());
            if let Some(r) = s.radius {
                let _ = write!(out, " r={r}");
            }
            for p in &s.points {
                let _ = write!(out, " {},{}", p[0], p[1]);
            }
            out.push('\n');
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self, ScribbleError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), ScribbleError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Label raster: 8-bit gray PNG with 0 = none, 1 = fg, 2 = bg. Every
    /// labeled pixel becomes a single-point stroke with radius 0.
    pub fn from_label_png(bytes: &[u8]) -> Result<Self, ScribbleError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| ScribbleError::Raster(e.to_string()))?;
        let gray = match img {
            image::DynamicImage::ImageLuma8(g) => g,
            _ => return Err(ScribbleError::Raster("expected an 8-bit gray image".into())),
        };
        let mut strokes = Vec::new();
        for (x, y, p) in gray.enumerate_pixels() {
            let class = match p.0[0] {
                0 => continue,
                1 => Class::Fg,
                2 => Class::Bg,
                v => return Err(ScribbleError::Raster(format!("unknown label {v} at ({x}, {y})"))),
            };
            strokes.push(Stroke {
                class,
                points: vec![[x as f64, y as f64]],
                radius: Some(0),
            });
        }
        Ok(Self { strokes })
    }
}

/// Rasterized scribble pixels, sorted and deduplicated.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScribblePixels {
    pub fg: Vec<(usize, usize)>,
    pub bg: Vec<(usize, usize)>,
}

/// Integer Bresenham line including both endpoints.
fn bresenham(a: (i64, i64), b: (i64, i64), mut visit: impl FnMut(i64, i64)) {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        visit(x, y);
        if x == b.0 && y == b.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Rasterizes every stroke as a Bresenham polyline dilated by a discrete
/// disk (`dx² + dy² ≤ r²`), clipped to the image.
pub fn rasterize_scribbles(
    s: &ScribbleSet,
    width: usize,
    height: usize,
    default_radius: u32,
) -> Result<ScribblePixels, ScribbleError> {
    let mut sets: [BTreeSet<(usize, usize)>; 2] = Default::default();
    for stroke in &s.strokes {
        let r = stroke.radius.unwrap_or(default_radius) as i64;
        let mut centers = Vec::new();
        let pts: Vec<(i64, i64)> = stroke
            .points
            .iter()
            .map(|&[x, y]| {
                if !(x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64) {
                    return Err(ScribbleError::OutOfBounds { x, y, width, height });
                }
                Ok((x.floor() as i64, y.floor() as i64))
            })
            .collect::<Result<_, _>>()?;
        if pts.len() == 1 {
            centers.push(pts[0]);
        }
        for w in pts.windows(2) {
            bresenham(w[0], w[1], |x, y| centers.push((x, y)));
        }
        let set = &mut sets[usize::from(!stroke.class.is_fg())];
        for (cx, cy) in centers {
            for dy in -r..=r {
                for dx in -r..=r {
                    let (x, y) = (cx + dx, cy + dy);
                    if dx * dx + dy * dy <= r * r && x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                        set.insert((x as usize, y as usize));
                    }
                }
            }
        }
    }
    let [fg, bg] = sets;
    let overlap: Vec<(usize, usize)> = fg.intersection(&bg).copied().collect();
    if !overlap.is_empty() {
        return Err(ScribbleError::Overlap(overlap));
    }
    Ok(ScribblePixels {
        fg: fg.into_iter().collect(),
        bg: bg.into_iter().collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabeledVoxel {
    pub voxel: usize,
    pub fg: bool,
    /// Reference pixel whose ray produced this voxel.
    pub pixel: (usize, usize),
}

/// Scribble supervision lifted into the volume, sorted by voxel index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledVoxels {
    pub entries: Vec<LabeledVoxel>,
    /// Pixels whose ray never reached the transmittance threshold.
    pub dropped_empty: usize,
    /// Voxels hit by both classes.
    pub dropped_conflict: usize,
}

impl LabeledVoxels {
    pub fn voxels(&self, fg: bool) -> Vec<usize> {
        self.entries.iter().filter(|e| e.fg == fg).map(|e| e.voxel).collect()
    }

    pub fn count(&self, fg: bool) -> usize {
        self.entries.iter().filter(|e| e.fg == fg).count()
    }
}

/// Lifts rasterized scribbles: each pixel maps to the surface voxel on its
/// reference ray. Duplicates keep the first pixel; voxels claimed by both
/// classes are dropped.
pub fn lift_pixels(vol: &PlaneVolume, pixels: &ScribblePixels, gamma: f64) -> Result<LabeledVoxels, ScribbleError> {
    let tagged: Vec<((usize, usize), bool)> = pixels
        .fg
        .iter()
        .map(|&p| (p, true))
        .chain(pixels.bg.iter().map(|&p| (p, false)))
        .collect();
    let hits: Vec<Option<usize>> = tagged
        .par_iter()
        .map(|&((x, y), _)| {
            let ray = vol.ref_cam.ray_unchecked(x as f64, y as f64);
            surface_voxel(vol, &ray, gamma)
        })
        .collect();
    let mut dropped_empty = 0;
    let mut by_voxel: BTreeMap<usize, (LabeledVoxel, bool)> = BTreeMap::new();
    for (&(pixel, fg), hit) in tagged.iter().zip(hits) {
        let Some(voxel) = hit else {
            dropped_empty += 1;
            continue;
        };
        by_voxel
            .entry(voxel)
            .and_modify(|(e, conflict)| *conflict |= e.fg != fg)
            .or_insert((LabeledVoxel { voxel, fg, pixel }, false));
    }
    let dropped_conflict = by_voxel.values().filter(|(_, c)| *c).count();
    let entries: Vec<LabeledVoxel> = by_voxel.into_values().filter(|(_, c)| !c).map(|(e, _)| e).collect();
    if entries.is_empty() {
        return Err(ScribbleError::EmptyLift);
    }
    if dropped_empty > 0 || dropped_conflict > 0 {
        log::warn!("lifting dropped {dropped_empty} empty rays and {dropped_conflict} conflicting voxels");
    }
    Ok(LabeledVoxels {
        entries,
        dropped_empty,
        dropped_conflict,
    })
}

/// Rasterizes and lifts a scribble set drawn on the volume's reference view.
pub fn lift_scribbles(vol: &PlaneVolume, s: &ScribbleSet, gamma: f64) -> Result<LabeledVoxels, ScribbleError> {
    s.check_complete()?;
    let px = rasterize_scribbles(s, vol.ref_cam.width, vol.ref_cam.height, DEFAULT_BRUSH_RADIUS)?;
    lift_pixels(vol, &px, gamma)
}

/// Projects lifted voxels into another view, dropping points behind the
/// camera or outside the frame. Occlusion is not tested.
pub fn project_labeled_voxels(lv: &LabeledVoxels, vol: &PlaneVolume, cam: &Camera) -> ScribblePixels {
    let mut sets: [BTreeSet<(usize, usize)>; 2] = Default::default();
    for e in &lv.entries {
        let Ok((u, v, _)) = cam.project_point(&vol.world_position_of(e.voxel)) else {
            continue;
        };
        let (x, y) = (u.round(), v.round());
        if x >= 0.0 && y >= 0.0 && x < cam.width as f64 && y < cam.height as f64 {
            sets[usize::from(!e.fg)].insert((x as usize, y as usize));
        }
    }
    let [fg, bg] = sets;
    ScribblePixels {
        fg: fg.into_iter().collect(),
        bg: bg.into_iter().collect(),
    }
}

/// Distance from every voxel's world position to the nearest voxel of `set`,
/// divided by the volume's world-space bounding-box diagonal.
pub fn distance_field(vol: &PlaneVolume, set: &[usize]) -> Result<Vec<f64>, ScribbleError> {
    if set.is_empty() {
        return Err(ScribbleError::EmptySet);
    }
    let pts: Vec<[f64; 3]> = set.iter().map(|&i| vol.world_position_of(i).into()).collect();
    let tree = KdTree::new(&pts);
    let diag = vol.world_diagonal();
    let scale = if diag > 0.0 { 1.0 / diag } else { 1.0 };
    let mut members = vec![false; vol.dims().len()];
    for &i in set {
        members[i] = true;
    }
    Ok((0..vol.dims().len())
        .into_par_iter()
        .map(|i| {
            if members[i] {
                return 0.0;
            }
            let p: [f64; 3] = vol.world_position_of(i).into();
            tree.nearest(&p).map_or(f64::INFINITY, |(_, d)| d * scale)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stroke(class: Class, pts: &[[f64; 2]], r: Option<u32>) -> Stroke {
        Stroke {
            class,
            points: pts.to_vec(),
            radius: r,
        }
    }

    #[test]
    fn raster_sizes() {
        let one = ScribbleSet::new(vec![stroke(Class::Fg, &[[5.0, 5.0]], Some(0))]);
        assert_eq!(rasterize_scribbles(&one, 20, 20, 2).unwrap().fg, vec![(5, 5)]);
        let line = ScribbleSet::new(vec![stroke(Class::Fg, &[[2.0, 4.0], [11.0, 4.0]], Some(0))]);
        assert_eq!(rasterize_scribbles(&line, 20, 20, 2).unwrap().fg.len(), 10);
        let disk = ScribbleSet::new(vec![stroke(Class::Bg, &[[10.0, 10.0]], None)]);
        let oracle = (-2i32..=2)
            .flat_map(|dy| (-2i32..=2).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= 4)
            .count();
        assert_eq!(rasterize_scribbles(&disk, 20, 20, 2).unwrap().bg.len(), oracle);
        assert_eq!(oracle, 13);
    }

    #[test]
    fn diagonal_bresenham_is_connected() {
        let s = ScribbleSet::new(vec![stroke(Class::Fg, &[[0.0, 0.0], [7.0, 3.0]], Some(0))]);
        let px = rasterize_scribbles(&s, 10, 10, 0).unwrap().fg;
        assert_eq!(px.len(), 8);
        assert!(px.contains(&(0, 0)) && px.contains(&(7, 3)));
    }

    #[test]
    fn overlap_and_bounds_errors() {
        let s = ScribbleSet::new(vec![
            stroke(Class::Fg, &[[3.0, 3.0]], Some(1)),
            stroke(Class::Bg, &[[4.0, 3.0]], Some(0)),
        ]);
        match rasterize_scribbles(&s, 10, 10, 2) {
            Err(ScribbleError::Overlap(px)) => assert_eq!(px, vec![(4, 3)]),
            other => panic!("{other:?}"),
        }
        let out = ScribbleSet::new(vec![stroke(Class::Fg, &[[10.0, 3.0]], None)]);
        assert!(matches!(
            rasterize_scribbles(&out, 10, 10, 2),
            Err(ScribbleError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn text_round_trip_and_errors() {
        let s = ScribbleSet::new(vec![
            stroke(Class::Fg, &[[1.5, 2.0], [3.0, 4.25]], Some(3)),
            stroke(Class::Bg, &[[7.0, 8.0]], None),
        ]);
        assert_eq!(ScribbleSet::parse(&s.to_text()).unwrap(), s);
        assert!(matches!(
            ScribbleSet::parse("fg 1,2\nxx 3,4"),
            Err(ScribbleError::Parse { line: 2, .. })
        ));
        assert!(ScribbleSet::parse("bg").is_err());
        assert!(ScribbleSet::parse("fg 1;2").is_err());
        assert!(ScribbleSet::parse("fg 1,2 r=3").is_err());
    }

    #[test]
    fn label_raster() {
        let mut img = image::GrayImage::new(4, 3);
        img.put_pixel(1, 1, image::Luma([1]));
        img.put_pixel(3, 2, image::Luma([2]));
        let mut bytes = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png).unwrap();
        let s = ScribbleSet::from_label_png(&bytes).unwrap();
        assert_eq!(s.count(Class::Fg), 1);
        assert_eq!(s.strokes[1].points, vec![[3.0, 2.0]]);
        img.put_pixel(0, 0, image::Luma([7]));
        let mut bad = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut bad), image::ImageFormat::Png).unwrap();
        assert!(ScribbleSet::from_label_png(&bad).is_err());
    }

    #[test]
    fn missing_class() {
        let s = ScribbleSet::new(vec![stroke(Class::Fg, &[[1.0, 1.0]], None)]);
        assert!(matches!(s.check_complete(), Err(ScribbleError::MissingClass(Class::Bg))));
    }
}
