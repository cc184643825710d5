//! Mask accuracy/IoU and foreground rendering PSNR/SSIM.

use std::fmt::Write as _;

use thiserror::Error;

use crate::raster::{Mask, RgbImage};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("ground-truth mask is empty")]
    EmptyMask,
    #[error("report line {0}: {1}")]
    Report(usize, String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskMetrics {
    pub accuracy: f64,
    pub iou: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    /// Both masks empty; `iou` is reported as 1.
    pub degenerate: bool,
}

fn same_size(a: (usize, usize), b: (usize, usize)) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::SizeMismatch(a.0, a.1, b.0, b.1));
    }
    Ok(())
}

pub fn mask_metrics(pred: &Mask, gt: &Mask) -> Result<MaskMetrics, EvalError> {
    same_size((pred.width, pred.height), (gt.width, gt.height))?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let total = pred.data.len();
    let union = tp + fp + fn_;
    Ok(MaskMetrics {
        accuracy: if total == 0 { 1.0 } else { (tp + tn) as f64 / total as f64 },
        iou: if union == 0 { 1.0 } else { tp as f64 / union as f64 },
        tp,
        fp,
        fn_,
        tn,
        degenerate: union == 0,
    })
}

/// Inclusive pixel box `(x0, y0, x1, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CropBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

/// Tight box around the true pixels of `gt`, grown by `pad` and clamped.
pub fn gt_bbox(gt: &Mask, pad: usize) -> Result<CropBox, EvalError> {
    let mut b: Option<CropBox> = None;
    for y in 0..gt.height {
        for x in 0..gt.width {
            if gt.get(x, y) {
                b = Some(match b {
                    None => CropBox { x0: x, y0: y, x1: x, y1: y },
                    Some(c) => CropBox {
                        x0: c.x0.min(x),
                        y0: c.y0.min(y),
                        x1: c.x1.max(x),
                        y1: c.y1.max(y),
                    },
                });
            }
        }
    }
    let b = b.ok_or(EvalError::EmptyMask)?;
    Ok(CropBox {
        x0: b.x0.saturating_sub(pad),
        y0: b.y0.saturating_sub(pad),
        x1: (b.x1 + pad).min(gt.width - 1),
        y1: (b.y1 + pad).min(gt.height - 1),
    })
}

pub fn crop_to_gt_bbox(image: &RgbImage, gt: &Mask, pad: usize) -> Result<(RgbImage, CropBox), EvalError> {
    same_size((image.width, image.height), (gt.width, gt.height))?;
    let b = gt_bbox(gt, pad)?;
    Ok((image.crop(b.x0, b.y0, b.width(), b.height()), b))
}

pub const PSNR_CAP: f64 = 99.0;

pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64, EvalError> {
    same_size((a.width, a.height), (b.width, b.height))?;
    let n = a.data.len().max(1) as f64;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>() / n;
    Ok(if mse < 1e-10 { PSNR_CAP } else { (10.0 * (1.0 / mse).log10()).min(PSNR_CAP) })
}

const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_kernel() -> [f64; 2 * SSIM_RADIUS + 1] {
    let mut k: [f64; 2 * SSIM_RADIUS + 1] =
        std::array::from_fn(|i| (-((i as f64 - SSIM_RADIUS as f64).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter over the "valid" region (windows fully inside).
fn filter_valid(img: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean SSIM of the luma channels over all 11×11 Gaussian windows
/// (σ = 1.5, `C1 = 0.01²`, `C2 = 0.03²`). Images smaller than a window use
/// a single window covering the whole image.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64, EvalError> {
    same_size((a.width, a.height), (b.width, b.height))?;
    let (w, h) = (a.width, a.height);
    let la = a.luminance();
    let lb = b.luminance();
    let win = 2 * SSIM_RADIUS + 1;
    let stats = |x: &[f64], y: &[f64], k: &[f64], kw: usize, kh: usize| -> Vec<[f64; 5]> {
        let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { x.iter().zip(y).map(|(&p, &q)| f(p, q)).collect() };
        if kw == 0 {
            // Uniform weights over the whole image.
            let n = x.len() as f64;
            let m = |v: Vec<f64>| v.iter().sum::<f64>() / n;
            return vec![[
                m(x.to_vec()),
                m(y.to_vec()),
                m(prod(&|p, _| p * p)),
                m(prod(&|_, q| q * q)),
                m(prod(&|p, q| p * q)),
            ]];
        }
        let f = |v: Vec<f64>| filter_valid(&v, kw, kh, k).0;
        let (mx, my) = (f(x.to_vec()), f(y.to_vec()));
        let (xx, yy, xy) = (f(prod(&|p, _| p * p)), f(prod(&|_, q| q * q)), f(prod(&|p, q| p * q)));
        (0..mx.len()).map(|i| [mx[i], my[i], xx[i], yy[i], xy[i]]).collect()
    };
    let windows = if w >= win && h >= win {
        stats(&la, &lb, &gaussian_kernel(), w, h)
    } else {
        stats(&la, &lb, &[], 0, 0)
    };
    let total: f64 = windows
        .iter()
        .map(|&[mx, my, xx, yy, xy]| {
            let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
            ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
        })
        .sum();
    Ok(total / windows.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderMetrics {
    pub psnr: f64,
    pub ssim: f64,
    pub crop: CropBox,
}

/// PSNR/SSIM of two renders inside the ground-truth mask's bounding box.
pub fn render_metrics(pred: &RgbImage, gt_image: &RgbImage, gt_mask: &Mask) -> Result<RenderMetrics, EvalError> {
    let (a, crop) = crop_to_gt_bbox(pred, gt_mask, 0)?;
    let (b, _) = crop_to_gt_bbox(gt_image, gt_mask, 0)?;
    Ok(RenderMetrics {
        psnr: psnr(&a, &b)?,
        ssim: ssim(&a, &b)?,
        crop,
    })
}

/// One metric of one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub scene: String,
    pub metric: String,
    pub value: f64,
}

/// Tab-separated `scene  metric  value` lines. Values print with the
/// shortest round-tripping representation so a report reparses bitwise.
pub fn format_report(records: &[MetricRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{}\t{}\t{:?}", r.scene, r.metric, r.value);
    }
    out
}

pub fn parse_report(text: &str) -> Result<Vec<MetricRecord>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            let [scene, metric, value] = f[..] else {
                return Err(EvalError::Report(i + 1, "expected three tab-separated fields".into()));
            };
            let value = value
                .parse()
                .map_err(|_| EvalError::Report(i + 1, format!("bad value {value:?}")))?;
            Ok(MetricRecord {
                scene: scene.into(),
                metric: metric.into(),
                value,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn half_mask(w: usize, h: usize) -> Mask {
        let mut m = Mask::new(w, h);
        for y in 0..h {
            for x in 0..w / 2 {
                m.set(x, y, true);
            }
        }
        m
    }

    #[test]
    fn mask_metric_extremes() {
        let gt = half_mask(8, 4);
        let same = mask_metrics(&gt, &gt).unwrap();
        assert_eq!((same.accuracy, same.iou), (1.0, 1.0));
        let inv = mask_metrics(&gt.invert(), &gt).unwrap();
        assert_eq!((inv.accuracy, inv.iou), (0.0, 0.0));
        let empty = Mask::new(3, 3);
        let e = mask_metrics(&empty, &empty).unwrap();
        assert!(e.degenerate && e.iou == 1.0);
        assert!(mask_metrics(&empty, &gt).is_err());
    }

    #[test]
    fn crops() {
        let full = Mask { width: 4, height: 3, data: vec![true; 12] };
        assert_eq!(gt_bbox(&full, 0).unwrap(), CropBox { x0: 0, y0: 0, x1: 3, y1: 2 });
        let mut one = Mask::new(5, 5);
        one.set(2, 3, true);
        let img = RgbImage::from_fn(5, 5, |x, y| [x as f32 / 4.0, y as f32 / 4.0, 0.0]);
        let (c, _) = crop_to_gt_bbox(&img, &one, 0).unwrap();
        assert_eq!((c.width, c.height, c.get(0, 0)), (1, 1, img.get(2, 3)));
        // L shape: column x=1 for y in 1..=4 and row y=4 for x in 1..=3.
        let mut l = Mask::new(6, 6);
        for y in 1..=4 {
            l.set(1, y, true);
        }
        for x in 1..=3 {
            l.set(x, 4, true);
        }
        assert_eq!(gt_bbox(&l, 0).unwrap(), CropBox { x0: 1, y0: 1, x1: 3, y1: 4 });
        assert_eq!(gt_bbox(&l, 2).unwrap(), CropBox { x0: 0, y0: 0, x1: 5, y1: 5 });
        assert!(matches!(gt_bbox(&Mask::new(2, 2), 0), Err(EvalError::EmptyMask)));
    }

    #[test]
    fn psnr_values() {
        let a = RgbImage::from_fn(16, 16, |_, _| [0.5; 3]);
        let b = RgbImage::from_fn(16, 16, |_, _| [0.6; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        let mut last = f64::INFINITY;
        for k in 1..10 {
            let c = RgbImage::from_fn(16, 16, |x, y| [0.5 + 0.01 * k as f32 * (((x + y) % 2) as f32 * 2.0 - 1.0); 3]);
            let p = psnr(&a, &c).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    fn mean_luma(img: &RgbImage) -> f64 {
        let l = img.luminance();
        l.iter().sum::<f64>() / l.len() as f64
    }

    fn noise(seed: u64, w: usize, h: usize) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbImage::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    #[test]
    fn ssim_properties() {
        let a = noise(1, 24, 20);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let m = mean_luma(&a) as f32;
        let flat = RgbImage::from_fn(24, 20, |_, _| [m; 3]);
        assert!(ssim(&a, &flat).unwrap() < 0.5);
        let tiny = noise(2, 5, 4);
        assert!((ssim(&tiny, &tiny).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_golden() {
        // Two fixed gradients; frozen value guards window and constants.
        let a = RgbImage::from_fn(20, 16, |x, y| [x as f32 / 19.0, y as f32 / 15.0, 0.5]);
        let b = RgbImage::from_fn(20, 16, |x, y| [(x as f32 / 19.0).powi(2), y as f32 / 15.0, 0.4]);
        let v = ssim(&a, &b).unwrap();
        assert!((v - 0.978_189_561_837_861_5).abs() < 1e-12, "{v:?}");
    }

    /// Window-by-window SSIM with the 2D Gaussian written out directly.
    fn ssim_direct(a: &RgbImage, b: &RgbImage) -> f64 {
        let (la, lb) = (a.luminance(), b.luminance());
        let g = |i: i64, j: i64| (-((i * i + j * j) as f64) / (2.0 * 1.5 * 1.5)).exp();
        let norm: f64 = (-5..=5).flat_map(|i| (-5..=5).map(move |j| g(i, j))).sum();
        let mut total = 0.0;
        let mut count = 0;
        for cy in 5..a.height - 5 {
            for cx in 5..a.width - 5 {
                let mut m = [0.0; 5];
                for dy in -5i64..=5 {
                    for dx in -5i64..=5 {
                        let i = (cy as i64 + dy) as usize * a.width + (cx as i64 + dx) as usize;
                        let wgt = g(dx, dy) / norm;
                        let (p, q) = (la[i], lb[i]);
                        for (acc, v) in m.iter_mut().zip([p, q, p * p, q * q, p * q]) {
                            *acc += wgt * v;
                        }
                    }
                }
                let [mx, my, xx, yy, xy] = m;
                let c1 = 1e-4;
                let c2 = 9e-4;
                total += ((2.0 * mx * my + c1) * (2.0 * (xy - mx * my) + c2))
                    / ((mx * mx + my * my + c1) * (xx - mx * mx + yy - my * my + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn ssim_matches_direct_windows() {
        let (a, b) = (noise(7, 23, 17), noise(8, 23, 17));
        assert!((ssim(&a, &b).unwrap() - ssim_direct(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn report_round_trip() {
        let recs = vec![
            MetricRecord { scene: "s0".into(), metric: "iou".into(), value: 0.1 + 0.2 },
            MetricRecord { scene: "s1".into(), metric: "psnr".into(), value: 1.0 / 3.0 },
        ];
        let back = parse_report(&format_report(&recs)).unwrap();
        assert_eq!(back, recs);
        assert!(parse_report("a\tb").is_err());
    }

    proptest! {
        #[test]
        fn ssim_is_symmetric(s1 in 0u64..1000, s2 in 0u64..1000) {
            let (a, b) = (noise(s1, 14, 12), noise(s2, 14, 12));
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn counts_are_permutation_invariant(bits in proptest::collection::vec(any::<(bool, bool)>(), 1..200), seed in 0u64..100) {
            let n = bits.len();
            let p = Mask { width: n, height: 1, data: bits.iter().map(|b| b.0).collect() };
            let g = Mask { width: n, height: 1, data: bits.iter().map(|b| b.1).collect() };
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
            let p2 = Mask { width: n, height: 1, data: order.iter().map(|&i| p.data[i]).collect() };
            let g2 = Mask { width: n, height: 1, data: order.iter().map(|&i| g.data[i]).collect() };
            prop_assert_eq!(mask_metrics(&p, &g).unwrap(), mask_metrics(&p2, &g2).unwrap());
            let m = mask_metrics(&p, &g).unwrap();
            prop_assert_eq!(m.tp + m.fp + m.fn_ + m.tn, n);
        }
    }
}
