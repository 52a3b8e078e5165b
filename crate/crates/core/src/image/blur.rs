use super::{BBox, ImageError, Mask, Raster};

/// Normalized discrete Gaussian of radius `⌈3σ⌉`; `[1.0]` for σ = 0.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Default blur strength for a face box: diagonal / 64, clamped to [2, 8].
pub fn blur_sigma_for_bbox(bbox: BBox) -> f64 {
    (bbox.diagonal() / 64.0).clamp(2.0, 8.0)
}

/// Separable Gaussian blur (edge clamp) blended into `frame` by `mask` coverage.
///
/// Coverage 0 leaves a pixel untouched, 255 replaces it with the blurred value,
/// anything in between interpolates linearly.
pub fn gaussian_blur_masked(frame: &Raster, mask: &Mask, sigma: f64) -> Result<Raster, ImageError> {
    if frame.width() != mask.width() || frame.height() != mask.height() {
        return Err(ImageError::DimensionMismatch(
            frame.width(),
            frame.height(),
            mask.width(),
            mask.height(),
        ));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(ImageError::InvalidParameter(format!("blur sigma {sigma}")));
    }
    let mut out = frame.clone();
    let Some(bounds) = mask.bounds() else {
        return Ok(out);
    };
    if sigma == 0.0 {
        return Ok(out);
    }
    let kernel: Vec<f32> = gaussian_kernel(sigma).iter().map(|&k| k as f32).collect();
    let radius = kernel.len() / 2;
    let (w, h) = (frame.width(), frame.height());

    // horizontal pass over the rows the vertical pass will read
    let row0 = bounds.y.saturating_sub(radius);
    let row1 = (bounds.y + bounds.h + radius).min(h);
    let bw = bounds.w;
    let mut tmp = vec![0f32; bw * (row1 - row0)];
    let mut padded = vec![0f32; bw + 2 * radius];
    let mut acc = vec![0f32; bw];

    for c in 0..3 {
        let src = frame.plane(c);
        for y in row0..row1 {
            let line = &src[y * w..(y + 1) * w];
            for (j, p) in padded.iter_mut().enumerate() {
                let sx = (bounds.x + j).saturating_sub(radius).min(w - 1);
                *p = line[sx] as f32;
            }
            let dst = &mut tmp[(y - row0) * bw..(y - row0 + 1) * bw];
            dst.iter_mut().for_each(|d| *d = 0.0);
            for (k, kv) in kernel.iter().enumerate() {
                for (d, v) in dst.iter_mut().zip(&padded[k..k + bw]) {
                    *d += kv * v;
                }
            }
        }
        let dst = out.plane_mut(c);
        for y in bounds.y..bounds.y + bounds.h {
            let row = |k: usize| {
                let sy = (y + k).saturating_sub(radius).min(h - 1);
                &tmp[(sy - row0) * bw..(sy - row0 + 1) * bw]
            };
            for (a, v) in acc.iter_mut().zip(row(radius)) {
                *a = kernel[radius] * v;
            }
            for (k, kv) in kernel[..radius].iter().enumerate() {
                let (lo, hi) = (row(k), row(2 * radius - k));
                for j in 0..bw {
                    acc[j] += kv * (lo[j] + hi[j]);
                }
            }
            for (i, &blurred) in acc.iter().enumerate() {
                let x = bounds.x + i;
                let cov = mask.get(x, y);
                if cov == 0 {
                    continue;
                }
                let orig = src[y * w + x] as f64;
                let v = orig + (blurred as f64 - orig) * cov as f64 / 255.0;
                dst[y * w + x] = (v + 0.5).clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(out)
}
