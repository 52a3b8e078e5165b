use std::fmt::Write as _;

use crate::rate::{bits_per_pixel, RateStats};
use crate::session::FaceSource;
use crate::wire::MessageKind;

/// Column order of [`Report::to_csv`].
pub const CSV_HEADER: &str = "frame,type,bytes,quality,cum_bpp,psnr,ssim,face_psnr,base_face_psnr,pool_size,face";

/// Metrics for one simulated frame. Quality figures compare against the
/// pristine rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRow {
    pub frame: u32,
    pub kind: MessageKind,
    /// Serialized message size.
    pub bytes: usize,
    /// Base-codec tier; `None` for an empty payload.
    pub quality: Option<u8>,
    /// Session bpp over frames `0..=frame`.
    pub cum_bpp: f64,
    pub psnr: f64,
    pub ssim: f64,
    /// PSNR inside the true face box.
    pub face_psnr: f64,
    /// Face-box PSNR of the base-codec frame alone, before reenactment.
    pub base_face_psnr: f64,
    pub pool_size: usize,
    pub face: FaceSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<FrameRow>,
    pub stats: RateStats,
}

fn kind_name(kind: MessageKind) -> &'static str {
    match kind {
        MessageKind::Source => "source",
        MessageKind::Driving => "driving",
    }
}

fn face_name(face: FaceSource) -> &'static str {
    match face {
        FaceSource::Decoded => "decoded",
        FaceSource::Detected => "detected",
        FaceSource::PosePrior => "pose-prior",
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl Report {
    pub fn bpp(&self) -> f64 {
        bits_per_pixel(&self.stats)
    }

    pub fn mean_psnr(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.psnr))
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.ssim))
    }

    pub fn mean_face_psnr(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.face_psnr))
    }

    pub fn driving_rows(&self) -> impl Iterator<Item = &FrameRow> {
        self.rows.iter().filter(|r| r.kind == MessageKind::Driving)
    }

    pub fn source_count(&self) -> usize {
        self.rows.len() - self.driving_rows().count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let q = r.quality.map_or_else(String::new, |q| q.to_string());
            writeln!(
                out,
                "{},{},{},{},{:.9},{:.4},{:.6},{:.4},{:.4},{},{}",
                r.frame,
                kind_name(r.kind),
                r.bytes,
                q,
                r.cum_bpp,
                r.psnr,
                r.ssim,
                r.face_psnr,
                r.base_face_psnr,
                r.pool_size,
                face_name(r.face)
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}
