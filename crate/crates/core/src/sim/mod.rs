//! Session simulator and file-level commands.
//!
//! Synthetic avatar frames are rendered along a pose trajectory, pushed
//! through an encoder and a decoder session, and scored against the pristine
//! renders.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

pub use config::{CodecChoice, SimConfig, Trajectory, MAX_FRAMES, MAX_WALK_STEP, WALK_LIMIT};
pub use report::{FrameRow, Report, CSV_HEADER};

use crate::codec::Quality;
use crate::geometry::EulerPose;
use crate::image::io::{load_frame, save_png};
use crate::image::{psnr, psnr_region, ssim, Frame, ImageError};
use crate::kv::KvError;
use crate::rate::{bits_per_pixel, RateStats};
use crate::session::{DecodedFrame, DecoderSession, EncoderSession, SessionError};
use crate::vision::{render_avatar, RenderedAvatar, VisionError};
use crate::wire::{self, Preamble, WireError, HEADER_LEN};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("config: {0}")]
    Kv(#[from] KvError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("rendering frame {frame}: {error}")]
    Render { frame: usize, error: VisionError },
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("budget: {0}")]
    Budget(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_owned(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SimError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Renders the trajectory, reusing the previous render when the pose repeats.
struct Renderer<'a> {
    cfg: &'a SimConfig,
    last: Option<(EulerPose, RenderedAvatar)>,
}

impl<'a> Renderer<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        Renderer { cfg, last: None }
    }

    fn render(&mut self, frame: usize, pose: EulerPose) -> Result<&RenderedAvatar, SimError> {
        if self.last.as_ref().is_none_or(|(p, _)| *p != pose) {
            let img = render_avatar(&pose, &self.cfg.avatar, self.cfg.width(), self.cfg.height())
                .map_err(|error| SimError::Render { frame, error })?;
            self.last = Some((pose, img));
        }
        Ok(&self.last.as_ref().expect("just rendered").1)
    }
}

/// Bitstream and per-frame report of a simulated session.
#[derive(Debug, Clone)]
pub struct SimOutput {
    /// `.fvc` file contents.
    pub bitstream: Vec<u8>,
    pub report: Report,
}

/// Runs encoder and decoder over the configured trajectory. `on_frame` sees
/// every decoded frame in order.
pub fn simulate_with(
    cfg: &SimConfig,
    mut on_frame: impl FnMut(&DecodedFrame) -> Result<(), SimError>,
) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let poses = cfg.poses()?;
    let backend = cfg.backend()?;
    let codec = cfg.codec.build()?;
    let mut enc = EncoderSession::new(cfg.session.clone(), backend.clone(), codec.clone())?;
    let mut dec = DecoderSession::new(cfg.session.clone(), backend, codec)?;
    let mut renderer = Renderer::new(cfg);
    let mut bitstream = Preamble::new(cfg.width(), cfg.height()).to_bytes().to_vec();
    let mut rows = Vec::with_capacity(poses.len());

    for (i, pose) in poses.into_iter().enumerate() {
        let truth = renderer.render(i, pose)?;
        let encoded = enc.encode(&truth.frame)?;
        let decoded = dec.decode(&encoded.bytes)?;
        if decoded.pool_digest != encoded.pool_digest {
            return Err(SessionError::ProtocolDesync {
                frame_index: decoded.frame_index,
                reason: "pool digests differ".into(),
            }
            .into());
        }
        bitstream.extend_from_slice(&encoded.bytes);

        let (pristine, out) = (truth.frame.raster(), decoded.frame.raster());
        let ((p, s), (fp, bfp)) = rayon::join(
            || (psnr(pristine, out), ssim(pristine, out)),
            || {
                (
                    psnr_region(pristine, out, truth.bbox),
                    psnr_region(pristine, decoded.base.raster(), truth.bbox),
                )
            },
        );
        let stats = dec.stats();
        rows.push(FrameRow {
            frame: decoded.frame_index,
            kind: decoded.kind,
            bytes: encoded.bytes.len(),
            quality: encoded.quality.map(Quality::get),
            cum_bpp: bits_per_pixel(stats),
            psnr: p?,
            ssim: s?,
            face_psnr: fp?,
            base_face_psnr: bfp?,
            pool_size: dec.pool().len(),
            face: decoded.face,
        });
        log::debug!("frame {i}: {:?} {} bytes", decoded.kind, encoded.bytes.len());
        on_frame(&decoded)?;
    }
    debug_assert_eq!(enc.stats(), dec.stats());
    Ok(SimOutput {
        bitstream,
        report: Report {
            rows,
            stats: *dec.stats(),
        },
    })
}

/// Runs a session; with `out_dir`, writes `session.fvc`, `report.csv` and,
/// if configured, decoded frames under `frames/`.
pub fn simulate(cfg: &SimConfig, out_dir: Option<&Path>) -> Result<SimOutput, SimError> {
    let frames_dir = match out_dir {
        Some(dir) if cfg.save_frames => {
            let d = dir.join("frames");
            fs::create_dir_all(&d).map_err(io_err(&d))?;
            Some(d)
        }
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            None
        }
        None => None,
    };
    let out = simulate_with(cfg, |d| {
        if let Some(dir) = &frames_dir {
            save_png(d.frame.raster(), &dir.join(frame_name(d.frame_index)))?;
        }
        Ok(())
    })?;
    if let Some(dir) = out_dir {
        write_file(&dir.join("session.fvc"), &out.bitstream)?;
        write_file(&dir.join("report.csv"), out.report.to_csv().as_bytes())?;
    }
    Ok(out)
}

fn frame_name(index: u32) -> String {
    format!("frame_{index:05}.png")
}

/// Image files (`.png`, `.raw`) in `dir`, sorted by name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, SimError> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "raw")) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Encodes frames into a `.fvc` bitstream.
pub fn encode_frames(
    cfg: &SimConfig,
    frames: impl IntoIterator<Item = Result<Frame, SimError>>,
) -> Result<(Vec<u8>, RateStats), SimError> {
    cfg.session.validate()?;
    let mut enc = EncoderSession::new(cfg.session.clone(), cfg.backend()?, cfg.codec.build()?)?;
    let mut out = Preamble::new(cfg.width(), cfg.height()).to_bytes().to_vec();
    for frame in frames {
        out.extend_from_slice(&enc.encode(&frame?)?.bytes);
    }
    Ok((out, *enc.stats()))
}

/// Encodes every image in `dir` in name order.
pub fn encode_dir(cfg: &SimConfig, dir: &Path) -> Result<(Vec<u8>, RateStats), SimError> {
    let paths = list_frames(dir)?;
    if paths.is_empty() {
        return Err(SimError::Config(format!("no .png or .raw frames in {}", dir.display())));
    }
    encode_frames(cfg, paths.iter().map(|p| Ok(load_frame(p)?)))
}

/// Decodes a `.fvc` bitstream, handing each frame to `on_frame`.
pub fn decode_stream(
    cfg: &SimConfig,
    bytes: &[u8],
    mut on_frame: impl FnMut(DecodedFrame) -> Result<(), SimError>,
) -> Result<RateStats, SimError> {
    let (pre, messages) = wire::split_stream(bytes)?;
    if (pre.width as usize, pre.height as usize) != (cfg.width(), cfg.height()) {
        return Err(SimError::Config(format!(
            "stream is {}x{} but the config says {}x{}",
            pre.width,
            pre.height,
            cfg.width(),
            cfg.height()
        )));
    }
    let mut dec = DecoderSession::new(cfg.session.clone(), cfg.backend()?, cfg.codec.build()?)?;
    for (msg, raw) in messages {
        on_frame(dec.decode_message(&msg, raw.len())?)?;
    }
    Ok(*dec.stats())
}

/// Decodes a `.fvc` file into PNG frames under `out_dir`; returns the frame count.
pub fn decode_file(cfg: Option<&SimConfig>, input: &Path, out_dir: &Path) -> Result<usize, SimError> {
    let bytes = fs::read(input).map_err(io_err(input))?;
    let default;
    let cfg = match cfg {
        Some(c) => c,
        None => {
            let pre = Preamble::parse(&bytes)?;
            default = SimConfig::new(pre.width as usize, pre.height as usize);
            &default
        }
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut n = 0;
    decode_stream(cfg, &bytes, |d| {
        save_png(d.frame.raster(), &out_dir.join(frame_name(d.frame_index)))?;
        n += 1;
        Ok(())
    })?;
    Ok(n)
}

/// Byte totals of a bitstream, read from the headers only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamSummary {
    pub preamble: Preamble,
    pub stats: RateStats,
}

impl StreamSummary {
    pub fn bpp(&self) -> f64 {
        bits_per_pixel(&self.stats)
    }

    pub fn render(&self) -> String {
        let s = &self.stats;
        crate::kv::render(&[
            ("width", s.width.to_string()),
            ("height", s.height.to_string()),
            ("frames", s.frames().to_string()),
            ("source_messages", s.source.messages.to_string()),
            ("source_bytes", s.source.bytes.to_string()),
            ("driving_messages", s.driving.messages.to_string()),
            ("driving_bytes", s.driving.bytes.to_string()),
            ("header_bytes", s.header_bytes().to_string()),
            ("total_bytes", s.total_bytes().to_string()),
            ("bpp", self.bpp().to_string()),
            ("driving_bpp", s.driving_bits_per_pixel().to_string()),
        ])
    }
}

pub fn stream_stats(bytes: &[u8]) -> Result<StreamSummary, SimError> {
    let (preamble, messages) = wire::split_stream(bytes)?;
    let mut stats = RateStats::new(preamble.width as usize, preamble.height as usize);
    for (msg, raw) in messages {
        stats.record(msg.kind(), raw.len(), msg.packet().payload.len());
    }
    Ok(StreamSummary { preamble, stats })
}

/// Per-message byte budget for [`budget_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Unlimited,
    /// Whole driving message, header included.
    Bytes(usize),
}

impl Budget {
    /// Largest driving payload the budget leaves room for.
    pub fn payload_cap(&self) -> Result<Option<usize>, SimError> {
        match *self {
            Budget::Unlimited => Ok(None),
            Budget::Bytes(b) if b <= HEADER_LEN => Err(SimError::Budget(format!(
                "{b} bytes leaves no room for a payload after the {HEADER_LEN}-byte header"
            ))),
            Budget::Bytes(b) => Ok(Some(b - HEADER_LEN)),
        }
    }
}

impl std::fmt::Display for Budget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Budget::Unlimited => f.write_str("unlimited"),
            Budget::Bytes(b) => write!(f, "{b}"),
        }
    }
}

impl FromStr for Budget {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s.trim() {
            "unlimited" => Ok(Budget::Unlimited),
            v => v
                .parse()
                .map(Budget::Bytes)
                .map_err(|_| SimError::Budget(format!("expected a byte count or unlimited, got {v:?}"))),
        }
    }
}

/// Parses a comma-separated, strictly descending budget list.
pub fn parse_budgets(s: &str) -> Result<Vec<Budget>, SimError> {
    let budgets: Vec<Budget> = s.split(',').map(str::parse).collect::<Result<_, _>>()?;
    check_budgets(&budgets)?;
    Ok(budgets)
}

fn check_budgets(budgets: &[Budget]) -> Result<(), SimError> {
    if budgets.is_empty() {
        return Err(SimError::Budget("no budgets".into()));
    }
    let rank = |b: &Budget| match b {
        Budget::Unlimited => usize::MAX,
        Budget::Bytes(n) => *n,
    };
    if budgets.windows(2).any(|w| rank(&w[0]) <= rank(&w[1])) {
        return Err(SimError::Budget("budgets must be strictly descending".into()));
    }
    for b in budgets {
        b.payload_cap()?;
    }
    Ok(())
}

/// One budget's rerun.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub budget: Budget,
    /// Driving tier used for every frame.
    pub tier: Quality,
    /// Frames whose payload did not fit even at the lowest tier.
    pub skipped: usize,
    pub output: SimOutput,
}

pub const SWEEP_CSV_HEADER: &str = "budget,tier,skipped,bpp,driving_bpp,mean_psnr,mean_ssim,mean_face_psnr";

/// Highest driving tier whose payload fits `cap` on every frame, and the
/// number of frames where nothing fits.
fn fitting_tier(cfg: &SimConfig, cap: Option<usize>) -> Result<(Quality, usize), SimError> {
    let mut session = cfg.session.clone();
    session.driving_quality = Quality::MAX;
    session.payload_cap = cap;
    let mut enc = EncoderSession::new(session, cfg.backend()?, cfg.codec.build()?)?;
    let mut renderer = Renderer::new(cfg);
    let (mut tier, mut skipped) = (Quality::MAX, 0);
    for (i, pose) in cfg.poses()?.into_iter().enumerate() {
        let e = enc.encode(&renderer.render(i, pose)?.frame)?;
        if e.message.kind() == wire::MessageKind::Driving {
            match e.quality {
                Some(q) => tier = tier.min(q),
                None => skipped += 1,
            }
        }
    }
    if skipped > 0 {
        tier = Quality::MIN;
    }
    Ok((tier, skipped))
}

/// Reruns the session once per budget at the highest driving tier that fits
/// it on every frame. Budgets must be descending; runs are independent.
pub fn budget_sweep(cfg: &SimConfig, budgets: &[Budget]) -> Result<Vec<SweepRow>, SimError> {
    cfg.validate()?;
    check_budgets(budgets)?;
    budgets
        .par_iter()
        .map(|&budget| {
            let cap = budget.payload_cap()?;
            let (tier, skipped) = fitting_tier(cfg, cap)?;
            let mut run = cfg.clone();
            run.session.driving_quality = tier;
            run.session.payload_cap = cap;
            let output = simulate_with(&run, |_| Ok(()))?;
            Ok(SweepRow {
                budget,
                tier,
                skipped,
                output,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        let rep = &r.output.report;
        out.push_str(&format!(
            "{},{},{},{:.9},{:.9},{:.4},{:.6},{:.4}\n",
            r.budget,
            r.tier.get(),
            r.skipped,
            rep.bpp(),
            rep.stats.driving_bits_per_pixel(),
            rep.mean_psnr(),
            rep.mean_ssim(),
            rep.mean_face_psnr()
        ));
    }
    out
}
