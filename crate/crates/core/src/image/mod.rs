//! Planar RGB rasters, face regions and masks.

mod blur;
pub mod io;
mod metrics;

use std::ops::Deref;

pub use blur::{blur_sigma_for_bbox, gaussian_blur_masked, gaussian_kernel};
pub use metrics::{mse, psnr, psnr_region, ssim, PSNR_CAP};

pub const MIN_FRAME_DIM: usize = 16;
pub const MAX_FRAME_DIM: usize = 8192;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImageError {
    #[error("frame dimensions {0}x{1} outside [16, 8192]")]
    FrameSize(usize, usize),
    #[error("raster dimensions {0}x{1} must be non-zero")]
    EmptyRaster(usize, usize),
    #[error("plane length {got} does not match {width}x{height}")]
    PlaneLength { width: usize, height: usize, got: usize },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("bbox {0:?} does not fit inside {1}x{2}")]
    BoxOutOfBounds(BBox, usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("image i/o: {0}")]
    Io(String),
}

/// Three 8-bit planes (R, G, B), row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    width: usize,
    height: usize,
    planes: [Vec<u8>; 3],
}

impl Raster {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyRaster(width, height));
        }
        let n = width * height;
        Ok(Raster {
            width,
            height,
            planes: rgb.map(|v| vec![v; n]),
        })
    }

    pub fn from_planes(width: usize, height: usize, planes: [Vec<u8>; 3]) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyRaster(width, height));
        }
        for p in &planes {
            if p.len() != width * height {
                return Err(ImageError::PlaneLength {
                    width,
                    height,
                    got: p.len(),
                });
            }
        }
        Ok(Raster { width, height, planes })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn plane(&self, c: usize) -> &[u8] {
        &self.planes[c]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [u8] {
        &mut self.planes[c]
    }

    pub fn planes(&self) -> &[Vec<u8>; 3] {
        &self.planes
    }

    pub fn into_planes(self) -> [Vec<u8>; 3] {
        self.planes
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> u8 {
        self.planes[c][y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: u8) {
        self.planes[c][y * self.width + x] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = y * self.width + x;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = y * self.width + x;
        for c in 0..3 {
            self.planes[c][i] = rgb[c];
        }
    }

    pub fn same_size(&self, other: &Raster) -> Result<(), ImageError> {
        if self.width != other.width || self.height != other.height {
            return Err(ImageError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn crop(&self, bbox: BBox) -> Result<Raster, ImageError> {
        bbox.check_within(self.width, self.height)?;
        let mut planes: [Vec<u8>; 3] = Default::default();
        for (c, out) in planes.iter_mut().enumerate() {
            out.reserve(bbox.area());
            for y in bbox.y..bbox.y + bbox.h {
                let row = y * self.width;
                out.extend_from_slice(&self.planes[c][row + bbox.x..row + bbox.x + bbox.w]);
            }
        }
        Raster::from_planes(bbox.w, bbox.h, planes)
    }

    /// BT.601 luma, unrounded.
    #[inline]
    pub fn luma(&self, x: usize, y: usize) -> f64 {
        let i = y * self.width + x;
        0.299 * self.planes[0][i] as f64 + 0.587 * self.planes[1][i] as f64 + 0.114 * self.planes[2][i] as f64
    }
}

/// Nearest byte, halves away from zero, saturating; NaN maps to 0.
///
/// Equal to `v.round().clamp(0.0, 255.0) as u8` without a libm call.
#[inline]
pub fn round_to_u8(v: f64) -> u8 {
    let v = v.clamp(0.0, 255.0);
    let t = v as u8;
    if v - t as f64 >= 0.5 {
        t + 1
    } else {
        t
    }
}

/// A video frame: a raster whose sides lie in `[16, 8192]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame(Raster);

impl Frame {
    pub fn new(raster: Raster) -> Result<Self, ImageError> {
        let (w, h) = (raster.width, raster.height);
        if !(MIN_FRAME_DIM..=MAX_FRAME_DIM).contains(&w) || !(MIN_FRAME_DIM..=MAX_FRAME_DIM).contains(&h) {
            return Err(ImageError::FrameSize(w, h));
        }
        Ok(Frame(raster))
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImageError> {
        if !(MIN_FRAME_DIM..=MAX_FRAME_DIM).contains(&width) || !(MIN_FRAME_DIM..=MAX_FRAME_DIM).contains(&height) {
            return Err(ImageError::FrameSize(width, height));
        }
        Frame::new(Raster::filled(width, height, rgb)?)
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn raster_mut(&mut self) -> &mut Raster {
        &mut self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }
}

impl Deref for Frame {
    type Target = Raster;

    fn deref(&self) -> &Raster {
        &self.0
    }
}

/// Axis-aligned pixel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        BBox { x, y, w, h }
    }

    /// The "no face" sentinel.
    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        (self.w as f64).hypot(self.h as f64)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w && y < self.y + self.h
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<(), ImageError> {
        if self.is_empty() || self.x + self.w > width || self.y + self.h > height {
            return Err(ImageError::BoxOutOfBounds(*self, width, height));
        }
        Ok(())
    }

    /// Grown by `fraction` of its size on every side, clipped to the frame.
    pub fn inflate(&self, fraction: f64, width: usize, height: usize) -> BBox {
        let dx = (self.w as f64 * fraction).ceil() as usize;
        let dy = (self.h as f64 * fraction).ceil() as usize;
        let x0 = self.x.saturating_sub(dx);
        let y0 = self.y.saturating_sub(dy);
        let x1 = (self.x + self.w + dx).min(width);
        let y1 = (self.y + self.h + dy).min(height);
        BBox::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Continuous-coordinate variant of [`contains`](Self::contains), inflated by `fraction`.
    pub fn contains_point_inflated(&self, x: f64, y: f64, fraction: f64) -> bool {
        let dx = self.w as f64 * fraction;
        let dy = self.h as f64 * fraction;
        x >= self.x as f64 - 0.5 - dx
            && y >= self.y as f64 - 0.5 - dy
            && x <= (self.x + self.w) as f64 - 0.5 + dx
            && y <= (self.y + self.h) as f64 - 0.5 + dy
    }
}

/// Per-pixel face coverage, 0 (background) to 255 (face).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    coverage: Vec<u8>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            coverage: vec![0; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            coverage: vec![255; width * height],
        }
    }

    pub fn from_coverage(width: usize, height: usize, coverage: Vec<u8>) -> Result<Self, ImageError> {
        if coverage.len() != width * height {
            return Err(ImageError::PlaneLength {
                width,
                height,
                got: coverage.len(),
            });
        }
        Ok(Mask {
            width,
            height,
            coverage,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coverage(&self) -> &[u8] {
        &self.coverage
    }

    pub fn coverage_mut(&mut self) -> &mut [u8] {
        &mut self.coverage
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.coverage[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.coverage[y * self.width + x] = v;
    }

    /// Sum of coverage in pixel units.
    pub fn area(&self) -> f64 {
        self.coverage.iter().map(|&c| c as u64).sum::<u64>() as f64 / 255.0
    }

    pub fn is_empty(&self) -> bool {
        self.coverage.iter().all(|&c| c == 0)
    }

    pub fn crop(&self, bbox: BBox) -> Result<Mask, ImageError> {
        bbox.check_within(self.width, self.height)?;
        let mut coverage = Vec::with_capacity(bbox.area());
        for y in bbox.y..bbox.y + bbox.h {
            let row = y * self.width;
            coverage.extend_from_slice(&self.coverage[row + bbox.x..row + bbox.x + bbox.w]);
        }
        Ok(Mask {
            width: bbox.w,
            height: bbox.h,
            coverage,
        })
    }

    /// Smallest box holding every non-zero coverage value.
    pub fn bounds(&self) -> Option<BBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.coverage[y * self.width + x] != 0 {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }
}

/// A face-sized raster with its coverage mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FacePatch {
    pixels: Raster,
    mask: Mask,
}

impl FacePatch {
    pub fn new(pixels: Raster, mask: Mask) -> Result<Self, ImageError> {
        if pixels.width != mask.width || pixels.height != mask.height {
            return Err(ImageError::DimensionMismatch(
                pixels.width,
                pixels.height,
                mask.width,
                mask.height,
            ));
        }
        Ok(FacePatch { pixels, mask })
    }

    /// Cuts the `bbox` region out of a frame and its frame-sized mask.
    pub fn from_frame(frame: &Raster, mask: &Mask, bbox: BBox) -> Result<Self, ImageError> {
        if frame.width != mask.width || frame.height != mask.height {
            return Err(ImageError::DimensionMismatch(
                frame.width,
                frame.height,
                mask.width,
                mask.height,
            ));
        }
        FacePatch::new(frame.crop(bbox)?, mask.crop(bbox)?)
    }

    pub fn width(&self) -> usize {
        self.pixels.width
    }

    pub fn height(&self) -> usize {
        self.pixels.height
    }

    pub fn pixels(&self) -> &Raster {
        &self.pixels
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn into_parts(self) -> (Raster, Mask) {
        (self.pixels, self.mask)
    }
}
