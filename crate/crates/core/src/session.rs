//! Encoder and decoder session state machines.
//!
//! The encoder keeps a shadow copy of the decoder's source pool so both
//! sides make the same new-source decisions from the transmitted, quantized
//! poses. Each step either commits all of its state changes or none.

use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::codec::{BaseCodec, CodecError, Quality};
use crate::geometry::{EulerPose, QuantizedPose};
use crate::image::{blur_sigma_for_bbox, gaussian_blur_masked, BBox, FacePatch, Frame, ImageError, Mask};
use crate::kv::{KvError, KvMap};
use crate::pipeline::{reenact_plan_to_patch, PipelineError};
use crate::pool::{AddOutcome, PoolError, ReenactPlan, SourcePool, DEFAULT_THRESHOLD};
use crate::rate::RateStats;
use crate::vision::{composite, BackendSuite, Landmarks, VisionError};
use crate::wire::{self, MessageKind, Packet, WireError, WireMessage};

/// Blur strength applied to the segmented face of driving frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlurPolicy {
    /// σ from the face box size.
    Auto,
    Fixed(f64),
    Off,
}

impl BlurPolicy {
    pub fn sigma(&self, bbox: BBox) -> f64 {
        match *self {
            BlurPolicy::Auto => blur_sigma_for_bbox(bbox),
            BlurPolicy::Fixed(s) => s,
            BlurPolicy::Off => 0.0,
        }
    }
}

impl fmt::Display for BlurPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlurPolicy::Auto => f.write_str("auto"),
            BlurPolicy::Fixed(s) => write!(f, "fixed({s})"),
            BlurPolicy::Off => f.write_str("none"),
        }
    }
}

impl std::str::FromStr for BlurPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "auto" => Ok(BlurPolicy::Auto),
            "none" => Ok(BlurPolicy::Off),
            other => {
                let inner = other
                    .strip_prefix("fixed(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| format!("expected auto, none or fixed(<sigma>), got {other:?}"))?;
                let sigma: f64 = inner.trim().parse().map_err(|_| format!("bad sigma {inner:?}"))?;
                if !(sigma > 0.0 && sigma <= 64.0) {
                    return Err(format!("sigma {sigma} outside (0, 64]"));
                }
                Ok(BlurPolicy::Fixed(sigma))
            }
        }
    }
}

/// Where the decoder gets drive landmarks for a driving frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandmarkMode {
    /// Detect on the decoded, face-blurred frame.
    Detect,
    /// Predict from the transmitted pose and box with the backend's face model.
    PosePrior,
}

/// What the decoder does when landmark detection fails in [`LandmarkMode::Detect`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandmarkFallback {
    /// Use the pose-predicted landmarks when the backend has a face model.
    PosePrior,
    /// Output the decoded frame without reenactment.
    PassThrough,
}

macro_rules! keyword_enum {
    ($ty:ty, $($variant:path => $word:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $word),+ })
            }
        }

        impl std::str::FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim() {
                    $($word => Ok($variant),)+
                    other => Err(format!("unknown value {other:?}")),
                }
            }
        }
    };
}

keyword_enum!(LandmarkMode, LandmarkMode::Detect => "detect", LandmarkMode::PosePrior => "pose-prior");
keyword_enum!(LandmarkFallback, LandmarkFallback::PosePrior => "pose-prior", LandmarkFallback::PassThrough => "pass-through");

/// Parameters both session sides must agree on.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub width: usize,
    pub height: usize,
    /// New-source threshold in degrees.
    pub threshold: f64,
    pub source_quality: Quality,
    pub driving_quality: Quality,
    pub blur: BlurPolicy,
    /// Largest driving payload in bytes; tiers are lowered until one fits.
    pub payload_cap: Option<usize>,
    pub landmarks: LandmarkMode,
    pub landmark_fallback: LandmarkFallback,
}

impl SessionConfig {
    pub fn new(width: usize, height: usize) -> Self {
        SessionConfig {
            width,
            height,
            threshold: DEFAULT_THRESHOLD,
            source_quality: Quality::new(8).expect("valid tier"),
            driving_quality: Quality::new(2).expect("valid tier"),
            blur: BlurPolicy::Auto,
            payload_cap: None,
            landmarks: LandmarkMode::Detect,
            landmark_fallback: LandmarkFallback::PosePrior,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        Frame::filled(self.width, self.height, [0; 3]).map_err(|e| SessionError::Config(format!("frame size: {e}")))?;
        if self.width > u16::MAX as usize || self.height > u16::MAX as usize {
            return Err(SessionError::Config("frame size exceeds 16-bit fields".into()));
        }
        SourcePool::new(self.threshold).map_err(|e| SessionError::Config(e.to_string()))?;
        if let BlurPolicy::Fixed(s) = self.blur {
            if !(s > 0.0 && s.is_finite()) {
                return Err(SessionError::Config(format!("blur sigma {s}")));
            }
        }
        Ok(())
    }

    /// Key-value form; also the input of [`SessionConfig::digest`].
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("threshold", self.threshold.to_string()),
            ("source_quality", self.source_quality.get().to_string()),
            ("driving_quality", self.driving_quality.get().to_string()),
            ("blur", self.blur.to_string()),
            (
                "payload_cap",
                self.payload_cap.map_or_else(|| "none".to_owned(), |c| c.to_string()),
            ),
            ("landmarks", self.landmarks.to_string()),
            ("landmark_fallback", self.landmark_fallback.to_string()),
        ]
    }

    /// Reads the session keys from `kv`, defaulting absent ones.
    pub fn take_from(kv: &mut KvMap, width: usize, height: usize) -> Result<Self, KvError> {
        let d = SessionConfig::new(width, height);
        let quality = |kv: &mut KvMap, key: &str, default: Quality| -> Result<Quality, KvError> {
            let q: u8 = kv.take_or(key, default.get())?;
            Quality::new(q).map_err(|e| KvError::Invalid {
                key: key.to_owned(),
                value: q.to_string(),
                reason: e.to_string(),
            })
        };
        let source_quality = quality(kv, "source_quality", d.source_quality)?;
        let driving_quality = quality(kv, "driving_quality", d.driving_quality)?;
        let cap: String = kv.take_or("payload_cap", "none".to_owned())?;
        let payload_cap = match cap.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|_| KvError::Invalid {
                key: "payload_cap".into(),
                value: s.to_owned(),
                reason: "expected a byte count or none".into(),
            })?),
        };
        Ok(SessionConfig {
            width,
            height,
            threshold: kv.take_or("threshold", d.threshold)?,
            source_quality,
            driving_quality,
            blur: kv.take_or("blur", d.blur)?,
            payload_cap,
            landmarks: kv.take_or("landmarks", d.landmarks)?,
            landmark_fallback: kv.take_or("landmark_fallback", d.landmark_fallback)?,
        })
    }

    /// First 8 bytes of SHA-256 over the key-value rendering.
    pub fn digest(&self) -> u64 {
        let text = crate::kv::render(&self.to_kv());
        let out = Sha256::digest(text.as_bytes());
        u64::from_be_bytes(out[..8].try_into().expect("sha-256 output is 32 bytes"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("frame {frame_index}: expected {expected:?} pixels, got {got:?}")]
    FrameSize {
        frame_index: u32,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("frame {frame_index}: {error}")]
    Vision { frame_index: u32, error: VisionError },
    #[error("frame {frame_index}: {error}")]
    Codec { frame_index: u32, error: CodecError },
    #[error("frame {frame_index}: {error}")]
    Pipeline { frame_index: u32, error: PipelineError },
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("protocol desync at frame {frame_index}: {reason}")]
    ProtocolDesync { frame_index: u32, reason: String },
}

/// Encodes `frame` at the highest tier from `start` down whose payload fits
/// `cap`. Returns an empty payload and no tier when none fits.
pub fn encode_within_cap(
    codec: &dyn BaseCodec,
    frame: &Frame,
    start: Quality,
    cap: Option<usize>,
) -> Result<(Vec<u8>, Option<Quality>), CodecError> {
    for q in Quality::descending().filter(|q| *q <= start) {
        let bytes = codec.encode(frame, q)?;
        if cap.is_none_or(|c| bytes.len() <= c) {
            return Ok((bytes, Some(q)));
        }
    }
    Ok((Vec::new(), None))
}

/// One encoded frame.
#[derive(Debug, Clone)]
pub struct EncodedFrame {
    pub message: WireMessage,
    pub bytes: Vec<u8>,
    /// Base-codec tier used; `None` for an empty payload.
    pub quality: Option<Quality>,
    /// Pool digest after this step.
    pub pool_digest: u64,
}

pub struct EncoderSession {
    config: SessionConfig,
    config_digest: u64,
    backend: BackendSuite,
    codec: Arc<dyn BaseCodec>,
    pool: SourcePool,
    next_frame_index: u32,
    stats: RateStats,
}

impl EncoderSession {
    pub fn new(config: SessionConfig, backend: BackendSuite, codec: Arc<dyn BaseCodec>) -> Result<Self, SessionError> {
        config.validate()?;
        Ok(EncoderSession {
            config_digest: config.digest(),
            pool: SourcePool::new(config.threshold)?,
            stats: RateStats::new(config.width, config.height),
            config,
            backend,
            codec,
            next_frame_index: 0,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn config_digest(&self) -> u64 {
        self.config_digest
    }

    pub fn pool(&self) -> &SourcePool {
        &self.pool
    }

    pub fn stats(&self) -> &RateStats {
        &self.stats
    }

    pub fn next_frame_index(&self) -> u32 {
        self.next_frame_index
    }

    /// Turns one camera frame into a wire message.
    pub fn encode(&mut self, frame: &Frame) -> Result<EncodedFrame, SessionError> {
        let idx = self.next_frame_index;
        let cfg = &self.config;
        if (frame.width(), frame.height()) != (cfg.width, cfg.height) {
            return Err(SessionError::FrameSize {
                frame_index: idx,
                expected: (cfg.width, cfg.height),
                got: (frame.width(), frame.height()),
            });
        }
        let vision = |error| SessionError::Vision {
            frame_index: idx,
            error,
        };
        let codec_err = |error| SessionError::Codec {
            frame_index: idx,
            error,
        };

        let bbox = match self.backend.detector.detect_face(frame) {
            Ok(b) => Some(b),
            Err(VisionError::NoFace) => None,
            Err(e) => return Err(vision(e)),
        };
        let Some(bbox) = bbox else {
            let (payload, quality) =
                encode_within_cap(self.codec.as_ref(), frame, cfg.driving_quality, cfg.payload_cap)
                    .map_err(codec_err)?;
            let msg = WireMessage::Driving(Packet {
                frame_index: idx,
                pose: QuantizedPose::default(),
                bbox: BBox::default(),
                payload,
            });
            return self.commit(msg, quality, None);
        };

        let (pose, mask) = rayon::join(
            || self.backend.pose.estimate_pose(frame, bbox),
            || self.backend.segmenter.segment_face(frame, bbox),
        );
        let quantized = pose.map_err(vision)?.quantize();
        let mask = mask.map_err(vision)?;
        // both sides classify the transmitted value
        let pose = quantized.dequantize();

        match self.pool.classify(&pose) {
            ReenactPlan::NeedNewSource => {
                let payload = self.codec.encode(frame, cfg.source_quality).map_err(codec_err)?;
                let crop = FacePatch::from_frame(frame.raster(), &mask, bbox)?;
                let AddOutcome::Added { pool, .. } = self.pool.add_source(crop, None, pose)? else {
                    unreachable!("classify reported no source within the threshold")
                };
                let msg = WireMessage::Source(Packet {
                    frame_index: idx,
                    pose: quantized,
                    bbox,
                    payload,
                });
                let q = Some(cfg.source_quality);
                self.commit(msg, q, Some(pool))
            }
            _ => {
                let blurred = gaussian_blur_masked(frame.raster(), &mask, cfg.blur.sigma(bbox))?;
                let blurred = Frame::new(blurred)?;
                let (payload, quality) =
                    encode_within_cap(self.codec.as_ref(), &blurred, cfg.driving_quality, cfg.payload_cap)
                        .map_err(codec_err)?;
                let msg = WireMessage::Driving(Packet {
                    frame_index: idx,
                    pose: quantized,
                    bbox,
                    payload,
                });
                self.commit(msg, quality, None)
            }
        }
    }

    fn commit(
        &mut self,
        message: WireMessage,
        quality: Option<Quality>,
        pool: Option<SourcePool>,
    ) -> Result<EncodedFrame, SessionError> {
        let bytes = wire::serialize(&message)?;
        if let Some(pool) = pool {
            self.pool = pool;
        }
        self.stats
            .record(message.kind(), bytes.len(), message.packet().payload.len());
        self.next_frame_index += 1;
        Ok(EncodedFrame {
            message,
            bytes,
            quality,
            pool_digest: self.pool.digest(),
        })
    }
}

/// How the decoder produced the face of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceSource {
    /// The decoded frame was output as-is.
    Decoded,
    /// Reenacted from landmarks detected on the decoded frame.
    Detected,
    /// Reenacted from landmarks predicted from the transmitted pose.
    PosePrior,
}

/// One decoded frame.
#[derive(Debug, Clone)]
pub struct DecodedFrame {
    pub frame_index: u32,
    pub kind: MessageKind,
    /// The reconstruction.
    pub frame: Frame,
    /// The base-codec frame before reenactment.
    pub base: Frame,
    pub bbox: BBox,
    pub plan: Option<ReenactPlan>,
    pub face: FaceSource,
    /// Pool digest after this step.
    pub pool_digest: u64,
}

pub struct DecoderSession {
    config: SessionConfig,
    config_digest: u64,
    backend: BackendSuite,
    codec: Arc<dyn BaseCodec>,
    pool: SourcePool,
    next_frame_index: u32,
    stats: RateStats,
    last_base: Option<Frame>,
}

impl DecoderSession {
    pub fn new(config: SessionConfig, backend: BackendSuite, codec: Arc<dyn BaseCodec>) -> Result<Self, SessionError> {
        config.validate()?;
        Ok(DecoderSession {
            config_digest: config.digest(),
            pool: SourcePool::new(config.threshold)?,
            stats: RateStats::new(config.width, config.height),
            config,
            backend,
            codec,
            next_frame_index: 0,
            last_base: None,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn config_digest(&self) -> u64 {
        self.config_digest
    }

    pub fn pool(&self) -> &SourcePool {
        &self.pool
    }

    pub fn stats(&self) -> &RateStats {
        &self.stats
    }

    pub fn next_frame_index(&self) -> u32 {
        self.next_frame_index
    }

    /// Parses and decodes one serialized message.
    pub fn decode(&mut self, bytes: &[u8]) -> Result<DecodedFrame, SessionError> {
        let msg = wire::deserialize(bytes)?;
        self.decode_message(&msg, bytes.len())
    }

    /// Decodes an already parsed message whose serialized size was `wire_len`.
    pub fn decode_message(&mut self, msg: &WireMessage, wire_len: usize) -> Result<DecodedFrame, SessionError> {
        let p = msg.packet();
        let idx = self.next_frame_index;
        if p.frame_index != idx {
            return Err(self.desync(format!("received frame index {}", p.frame_index)));
        }
        if !p.bbox.is_empty() {
            p.bbox.check_within(self.config.width, self.config.height)?;
        }
        let (frame, base, plan, face, pool) = match msg {
            WireMessage::Source(p) => self.decode_source(p)?,
            WireMessage::Driving(p) => self.decode_driving(p)?,
        };

        if let Some(pool) = pool {
            self.pool = pool;
        }
        self.stats.record(msg.kind(), wire_len, p.payload.len());
        self.next_frame_index += 1;
        self.last_base = Some(base.clone());
        Ok(DecodedFrame {
            frame_index: idx,
            kind: msg.kind(),
            frame,
            base,
            bbox: p.bbox,
            plan,
            face,
            pool_digest: self.pool.digest(),
        })
    }

    fn desync(&self, reason: String) -> SessionError {
        SessionError::ProtocolDesync {
            frame_index: self.next_frame_index,
            reason,
        }
    }

    fn decode_payload(&self, payload: &[u8]) -> Result<Frame, SessionError> {
        let idx = self.next_frame_index;
        let frame = self.codec.decode(payload).map_err(|error| SessionError::Codec {
            frame_index: idx,
            error,
        })?;
        if (frame.width(), frame.height()) != (self.config.width, self.config.height) {
            return Err(SessionError::FrameSize {
                frame_index: idx,
                expected: (self.config.width, self.config.height),
                got: (frame.width(), frame.height()),
            });
        }
        Ok(frame)
    }

    fn prior_landmarks(&self, pose: &EulerPose, bbox: BBox) -> Option<Landmarks> {
        self.backend.landmarks.landmarks_from_pose(pose, bbox)
    }

    #[allow(clippy::type_complexity)]
    fn decode_source(
        &self,
        p: &Packet,
    ) -> Result<(Frame, Frame, Option<ReenactPlan>, FaceSource, Option<SourcePool>), SessionError> {
        let idx = self.next_frame_index;
        if p.bbox.is_empty() {
            return Err(self.desync("source frame without a face box".into()));
        }
        let frame = self.decode_payload(&p.payload)?;
        let pose = p.pose.dequantize();
        let (mask, detected) = rayon::join(
            || self.backend.segmenter.segment_face(&frame, p.bbox),
            || match self.config.landmarks {
                LandmarkMode::Detect => Some(self.backend.landmarks.detect_landmarks(p.bbox, &frame)),
                LandmarkMode::PosePrior => None,
            },
        );
        let mask = mask.map_err(|error| SessionError::Vision {
            frame_index: idx,
            error,
        })?;
        let landmarks = match detected {
            Some(Ok(lm)) => Some(lm),
            Some(Err(e)) => {
                log::warn!("frame {idx}: source landmarks: {e}; using pose prior");
                self.prior_landmarks(&pose, p.bbox)
            }
            None => self.prior_landmarks(&pose, p.bbox),
        };
        let crop = FacePatch::from_frame(frame.raster(), &mask, p.bbox)?;
        let pool = match self
            .pool
            .add_source(crop, landmarks.map(|l| l.relative_to_bbox()), pose)?
        {
            AddOutcome::Added { pool, .. } => pool,
            AddOutcome::Rejected => return Err(self.desync("source pose is within the threshold of the pool".into())),
        };
        Ok((frame.clone(), frame, None, FaceSource::Decoded, Some(pool)))
    }

    #[allow(clippy::type_complexity)]
    fn decode_driving(
        &self,
        p: &Packet,
    ) -> Result<(Frame, Frame, Option<ReenactPlan>, FaceSource, Option<SourcePool>), SessionError> {
        let idx = self.next_frame_index;
        let base = if p.payload.is_empty() {
            self.last_base
                .clone()
                .ok_or_else(|| self.desync("empty payload without a previous frame".into()))?
        } else {
            self.decode_payload(&p.payload)?
        };
        if p.bbox.is_empty() {
            return Ok((base.clone(), base, None, FaceSource::Decoded, None));
        }
        let pose = p.pose.dequantize();
        let plan = self.pool.classify(&pose);
        if plan == ReenactPlan::NeedNewSource {
            return Err(self.desync(format!("no source within the threshold of {pose:?}")));
        }

        let (mask, detected) = rayon::join(
            || self.backend.segmenter.segment_face(&base, p.bbox),
            || match self.config.landmarks {
                LandmarkMode::Detect => Some(self.backend.landmarks.detect_landmarks(p.bbox, &base)),
                LandmarkMode::PosePrior => None,
            },
        );
        let (landmarks, face) = match detected {
            Some(Ok(lm)) => (Some(lm), FaceSource::Detected),
            None => (self.prior_landmarks(&pose, p.bbox), FaceSource::PosePrior),
            Some(Err(e)) => match self.config.landmark_fallback {
                LandmarkFallback::PosePrior => {
                    log::debug!("frame {idx}: landmarks: {e}; using pose prior");
                    (self.prior_landmarks(&pose, p.bbox), FaceSource::PosePrior)
                }
                LandmarkFallback::PassThrough => {
                    log::warn!("frame {idx}: landmarks: {e}; passing the decoded frame through");
                    (None, FaceSource::Decoded)
                }
            },
        };
        let Some(landmarks) = landmarks else {
            if face != FaceSource::Decoded {
                log::warn!("frame {idx}: backend has no face model; passing the decoded frame through");
            }
            return Ok((base.clone(), base, Some(plan), FaceSource::Decoded, None));
        };

        let patch = match reenact_plan_to_patch(&plan, &self.pool, &landmarks, &self.backend) {
            Ok(patch) => patch,
            Err(PipelineError::Reenact { source_id, error }) => {
                log::warn!("frame {idx}: reenacting source {source_id}: {error}; passing the decoded frame through");
                return Ok((base.clone(), base, Some(plan), FaceSource::Decoded, None));
            }
            Err(error) => {
                return Err(SessionError::Pipeline {
                    frame_index: idx,
                    error,
                })
            }
        };
        // replace wherever the received frame shows a face, too
        let patch = match mask {
            Ok(m) => widen_mask(patch, &m.crop(p.bbox)?)?,
            Err(e) => {
                log::debug!("frame {idx}: segmentation: {e}");
                patch
            }
        };
        let out = composite(&patch, &base, p.bbox).map_err(|error| SessionError::Vision {
            frame_index: idx,
            error,
        })?;
        Ok((out, base, Some(plan), face, None))
    }
}

fn widen_mask(patch: FacePatch, other: &Mask) -> Result<FacePatch, ImageError> {
    let (pixels, mut mask) = patch.into_parts();
    for (a, &b) in mask.coverage_mut().iter_mut().zip(other.coverage()) {
        *a = (*a).max(b);
    }
    FacePatch::new(pixels, mask)
}
