//! Float RGB images and binary masks, with PNG I/O.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image is empty ({width}x{height})")]
    Empty { width: usize, height: usize },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimMismatch(usize, usize, usize, usize),
    #[error("image i/o: {0}")]
    Io(#[from] image::ImageError),
}

/// RGB image with channels interleaved, values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    /// Rec. 601 luma per pixel.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|c| luma(c[0] as f64, c[1] as f64, c[2] as f64))
            .collect()
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }

    pub fn to_png(&self, path: &Path) -> Result<(), RasterError> {
        let buf: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer size matches dims")
            .save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn to_png_bytes(&self) -> Vec<u8> {
        let buf: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        encode_png(image::DynamicImage::ImageRgb8(
            image::RgbImage::from_raw(self.width as u32, self.height as u32, buf).expect("dims"),
        ))
    }

    pub fn from_png(path: &Path) -> Result<RgbImage, RasterError> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Ok(RgbImage {
            width: w as usize,
            height: h as usize,
            data: img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        })
    }
}

/// Luma with an exact pass-through for gray pixels.
#[inline]
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    if r == g && g == b {
        r
    } else {
        0.299 * r + 0.587 * g + 0.114 * b
    }
}

#[inline]
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode_png(img: image::DynamicImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("png encoding into memory");
    out.into_inner()
}

/// Binary 2D mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Erosion with a square structuring element of half-size `radius`;
    /// pixels outside the image count as unset.
    pub fn erode(&self, radius: usize) -> Mask {
        let r = radius as i64;
        let mut out = Mask::new(self.width, self.height);
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                let keep = (-r..=r).all(|dy| {
                    (-r..=r).all(|dx| {
                        let (xx, yy) = (x + dx, y + dy);
                        xx >= 0
                            && yy >= 0
                            && (xx as usize) < self.width
                            && (yy as usize) < self.height
                            && self.get(xx as usize, yy as usize)
                    })
                });
                out.set(x as usize, y as usize, keep);
            }
        }
        out
    }

    pub fn invert(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }

    pub fn to_png_bytes(&self) -> Vec<u8> {
        let buf: Vec<u8> = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        encode_png(image::DynamicImage::ImageLuma8(
            image::GrayImage::from_raw(self.width as u32, self.height as u32, buf).expect("dims"),
        ))
    }

    pub fn to_png(&self, path: &Path) -> Result<(), RasterError> {
        std::fs::write(path, self.to_png_bytes()).map_err(|e| RasterError::Io(e.into()))
    }

    pub fn from_png(path: &Path) -> Result<Mask, RasterError> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        Ok(Mask {
            width: w as usize,
            height: h as usize,
            data: img.into_raw().into_iter().map(|v| v >= 128).collect(),
        })
    }
}
