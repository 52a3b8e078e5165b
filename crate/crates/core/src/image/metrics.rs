use super::{BBox, ImageError, Raster};

/// PSNR reported for identical inputs.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Mean squared error over all three channels.
pub fn mse(a: &Raster, b: &Raster) -> Result<f64, ImageError> {
    a.same_size(b)?;
    let mut acc = 0u64;
    for c in 0..3 {
        for (&x, &y) in a.plane(c).iter().zip(b.plane(c)) {
            let d = x as i64 - y as i64;
            acc += (d * d) as u64;
        }
    }
    Ok(acc as f64 / (3 * a.width() * a.height()) as f64)
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// PSNR with peak 255, capped at [`PSNR_CAP`].
pub fn psnr(a: &Raster, b: &Raster) -> Result<f64, ImageError> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// PSNR restricted to `bbox`.
pub fn psnr_region(a: &Raster, b: &Raster, bbox: BBox) -> Result<f64, ImageError> {
    a.same_size(b)?;
    psnr(&a.crop(bbox)?, &b.crop(bbox)?)
}

fn ssim_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0f64; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

const HALF: usize = SSIM_WINDOW / 2;

/// `dst[j] = sum_k win[k] * src[j + k]`, folding the symmetric taps.
fn filter_row(src: &[f64], win: &[f64; SSIM_WINDOW], dst: &mut [f64]) {
    let n = dst.len();
    for (d, &v) in dst.iter_mut().zip(&src[HALF..HALF + n]) {
        *d = win[HALF] * v;
    }
    for k in 0..HALF {
        let lo = &src[k..k + n];
        let hi = &src[SSIM_WINDOW - 1 - k..SSIM_WINDOW - 1 - k + n];
        for ((d, &a), &b) in dst.iter_mut().zip(lo).zip(hi) {
            *d += win[k] * (a + b);
        }
    }
}

/// Statistics filtered along one row: means, second moments and cross term.
struct RowStats([Vec<f64>; 5]);

impl RowStats {
    fn new(n: usize) -> Self {
        RowStats(std::array::from_fn(|_| vec![0.0; n]))
    }
}

/// BT.601 luma, unrounded.
fn luma_plane(r: &Raster) -> Vec<f64> {
    let (p0, p1, p2) = (r.plane(0), r.plane(1), r.plane(2));
    p0.iter()
        .zip(p1)
        .zip(p2)
        .map(|((&a, &b), &c)| 0.299 * a as f64 + 0.587 * b as f64 + 0.114 * c as f64)
        .collect()
}

/// Mean SSIM of the luma planes (11×11 Gaussian window, σ = 1.5,
/// K1 = 0.01, K2 = 0.03, no padding).
pub fn ssim(a: &Raster, b: &Raster) -> Result<f64, ImageError> {
    a.same_size(b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(ImageError::InvalidParameter(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let win = ssim_window();
    let c1 = (SSIM_K1 * 255.0) * (SSIM_K1 * 255.0);
    let c2 = (SSIM_K2 * 255.0) * (SSIM_K2 * 255.0);
    let x = luma_plane(a);
    let y = luma_plane(b);
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);

    // Horizontally filtered rows kept in a ring of the window height.
    let mut ring: Vec<RowStats> = (0..SSIM_WINDOW).map(|_| RowStats::new(ow)).collect();
    let mut sq = [vec![0f64; w], vec![0f64; w], vec![0f64; w]];
    let mut col = RowStats::new(ow);
    let mut acc = 0.0;
    for row in 0..h {
        let (xr, yr) = (&x[row * w..(row + 1) * w], &y[row * w..(row + 1) * w]);
        for (i, (&p, &q)) in xr.iter().zip(yr).enumerate() {
            sq[0][i] = p * p;
            sq[1][i] = q * q;
            sq[2][i] = p * q;
        }
        let slot = &mut ring[row % SSIM_WINDOW].0;
        for (src, dst) in [xr, yr, &sq[0], &sq[1], &sq[2]].into_iter().zip(slot.iter_mut()) {
            filter_row(src, &win, dst);
        }
        if row + 1 < SSIM_WINDOW {
            continue;
        }
        let top = row + 1 - SSIM_WINDOW;
        for (s, out) in col.0.iter_mut().enumerate() {
            let mid = &ring[(top + HALF) % SSIM_WINDOW].0[s];
            for (o, &v) in out.iter_mut().zip(mid) {
                *o = win[HALF] * v;
            }
            for k in 0..HALF {
                let lo = &ring[(top + k) % SSIM_WINDOW].0[s];
                let hi = &ring[(top + SSIM_WINDOW - 1 - k) % SSIM_WINDOW].0[s];
                for ((o, &a), &b) in out.iter_mut().zip(lo).zip(hi) {
                    *o += win[k] * (a + b);
                }
            }
        }
        let [mx, my, sxx, syy, sxy] = &col.0;
        for i in 0..ow {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            acc += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
    }
    Ok(acc / (ow * oh) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_frames() {
        let f = Raster::filled(32, 32, [10, 20, 30]).unwrap();
        assert_eq!(psnr(&f, &f).unwrap(), PSNR_CAP);
        assert!((ssim(&f, &f).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_offset_psnr() {
        let a = Raster::filled(32, 32, [100, 50, 7]).unwrap();
        let b = Raster::filled(32, 32, [110, 60, 17]).unwrap();
        let expected = 20.0 * (255.0f64 / 10.0).log10();
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 28.13).abs() < 0.01);
    }

    #[test]
    fn black_vs_white_ssim_near_zero() {
        let a = Raster::filled(32, 32, [0; 3]).unwrap();
        let b = Raster::filled(32, 32, [255; 3]).unwrap();
        let c1 = (0.01f64 * 255.0).powi(2);
        let closed_form = c1 / (255.0f64 * 255.0 + c1);
        let s = ssim(&a, &b).unwrap();
        assert!((s - closed_form).abs() < 1e-9);
        assert!(s < 1e-3);
    }

    #[test]
    fn mismatched_sizes_error() {
        let a = Raster::filled(32, 32, [0; 3]).unwrap();
        let b = Raster::filled(32, 31, [0; 3]).unwrap();
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
    }
}
