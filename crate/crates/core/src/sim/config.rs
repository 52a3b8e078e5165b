use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{BaseCodec, ExternalCodec, ReferenceCodec};
use crate::geometry::EulerPose;
use crate::kv::{KvError, KvMap};
use crate::session::SessionConfig;
use crate::vision::{backend_by_name, AvatarParams, BackendSuite, VisionError};

use super::SimError;

/// Largest random-walk step in degrees.
pub const MAX_WALK_STEP: f64 = 15.0;
/// Random walks stay inside this yaw/pitch box.
pub const WALK_LIMIT: f64 = 45.0;
const WALK_ROLL_LIMIT: f64 = 15.0;
pub const MAX_FRAMES: usize = 100_000;

/// Head motion over a simulated session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trajectory {
    /// Frontal pose throughout.
    Hold,
    /// Yaw moves linearly from the first to the second angle; pitch and roll stay 0.
    Sweep(f64, f64),
    /// Yaw and pitch take uniform steps of at most the given size, roll a
    /// quarter of that; clamped to ±45° and ±15°.
    RandomWalk(f64),
}

impl Trajectory {
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Trajectory::RandomWalk(_))
    }

    pub fn poses(&self, frames: usize, seed: Option<u64>) -> Result<Vec<EulerPose>, SimError> {
        let pose = |y, p, r| EulerPose::new(y, p, r).map_err(|e| SimError::Config(e.to_string()));
        match *self {
            Trajectory::Hold => Ok(vec![EulerPose::default(); frames]),
            Trajectory::Sweep(a, b) => (0..frames)
                .map(|i| {
                    let t = if frames > 1 {
                        i as f64 / (frames - 1) as f64
                    } else {
                        0.0
                    };
                    pose(a + (b - a) * t, 0.0, 0.0)
                })
                .collect(),
            Trajectory::RandomWalk(step) => {
                let seed = seed.ok_or_else(|| SimError::Config("random-walk needs a seed".into()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut cur = [0f64; 3];
                let mut out = Vec::with_capacity(frames);
                for _ in 0..frames {
                    out.push(pose(cur[0], cur[1], cur[2])?);
                    cur[0] = (cur[0] + rng.gen_range(-step..=step)).clamp(-WALK_LIMIT, WALK_LIMIT);
                    cur[1] = (cur[1] + rng.gen_range(-step..=step)).clamp(-WALK_LIMIT, WALK_LIMIT);
                    let r = step / 4.0;
                    cur[2] = (cur[2] + rng.gen_range(-r..=r)).clamp(-WALK_ROLL_LIMIT, WALK_ROLL_LIMIT);
                }
                Ok(out)
            }
        }
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trajectory::Hold => f.write_str("hold"),
            Trajectory::Sweep(a, b) => write!(f, "sweep({a},{b})"),
            Trajectory::RandomWalk(s) => write!(f, "random-walk({s})"),
        }
    }
}

fn call_args<'a>(s: &'a str, name: &str) -> Option<Vec<&'a str>> {
    let inner = s
        .strip_prefix(name)?
        .trim_start()
        .strip_prefix('(')?
        .strip_suffix(')')?;
    Some(inner.split(',').map(str::trim).collect())
}

impl FromStr for Trajectory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad angle {v:?}"));
        if s == "hold" {
            return Ok(Trajectory::Hold);
        }
        if let Some(args) = call_args(s, "sweep") {
            let [a, b] = args[..] else {
                return Err("sweep takes two angles".into());
            };
            let (a, b) = (num(a)?, num(b)?);
            if a.abs() > 60.0 || b.abs() > 60.0 {
                return Err("sweep angles must be within ±60°".into());
            }
            return Ok(Trajectory::Sweep(a, b));
        }
        if let Some(args) = call_args(s, "random-walk") {
            let [step] = args[..] else {
                return Err("random-walk takes one step size".into());
            };
            let step = num(step)?;
            if !(step > 0.0 && step <= MAX_WALK_STEP) {
                return Err(format!("random-walk step must be in (0, {MAX_WALK_STEP}]"));
            }
            return Ok(Trajectory::RandomWalk(step));
        }
        Err(format!(
            "unknown trajectory {s:?}; expected hold, sweep(a,b) or random-walk(step)"
        ))
    }
}

/// Which base codec carries the pixel payloads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodecChoice {
    Reference,
    /// Shell commands that read and write raw frames / bitstreams.
    External {
        encode: String,
        decode: String,
    },
}

impl CodecChoice {
    pub fn build(&self) -> Result<Arc<dyn BaseCodec>, SimError> {
        Ok(match self {
            CodecChoice::Reference => Arc::new(ReferenceCodec),
            CodecChoice::External { encode, decode } => {
                Arc::new(ExternalCodec::new(encode, decode).map_err(|e| SimError::Config(e.to_string()))?)
            }
        })
    }
}

/// Everything a simulated session needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub session: SessionConfig,
    pub frames: usize,
    pub trajectory: Trajectory,
    pub seed: Option<u64>,
    pub backend: String,
    pub avatar: AvatarParams,
    pub codec: CodecChoice,
    /// Write decoded frames as PNG next to the bitstream.
    pub save_frames: bool,
}

impl SimConfig {
    pub fn new(width: usize, height: usize) -> Self {
        SimConfig {
            session: SessionConfig::new(width, height),
            frames: 100,
            trajectory: Trajectory::Hold,
            seed: None,
            backend: "synthetic".into(),
            avatar: AvatarParams::for_size(width.min(height)),
            codec: CodecChoice::Reference,
            save_frames: true,
        }
    }

    pub fn width(&self) -> usize {
        self.session.width
    }

    pub fn height(&self) -> usize {
        self.session.height
    }

    /// Parses a flat `key = value` file. `width` and `height` are required;
    /// avatar parameters use an `avatar.` prefix.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut kv = KvMap::parse(text)?;
        let width: usize = kv.take("width")?.ok_or(KvError::Missing("width".into()))?;
        let height: usize = kv.take("height")?.ok_or(KvError::Missing("height".into()))?;
        let d = SimConfig::new(width, height);
        let session = SessionConfig::take_from(&mut kv, width, height)?;
        let codec = match kv.take_or("codec", "reference".to_owned())?.as_str() {
            "reference" => CodecChoice::Reference,
            "external" => CodecChoice::External {
                encode: kv
                    .take("codec.encode")?
                    .ok_or(KvError::Missing("codec.encode".into()))?,
                decode: kv
                    .take("codec.decode")?
                    .ok_or(KvError::Missing("codec.decode".into()))?,
            },
            other => {
                return Err(KvError::Invalid {
                    key: "codec".into(),
                    value: other.into(),
                    reason: "expected reference or external".into(),
                }
                .into())
            }
        };
        let cfg = SimConfig {
            session,
            frames: kv.take_or("frames", d.frames)?,
            trajectory: kv.take_or("trajectory", d.trajectory)?,
            seed: kv.take("seed")?,
            backend: kv.take_or("backend", d.backend)?,
            avatar: AvatarParams::take_from(&mut kv, "avatar.", width.min(height))?,
            codec,
            save_frames: kv.take_or("save_frames", d.save_frames)?,
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.session.validate()?;
        if self.frames == 0 || self.frames > MAX_FRAMES {
            return Err(SimError::Config(format!("frames must be in 1..={MAX_FRAMES}")));
        }
        if self.trajectory.is_stochastic() && self.seed.is_none() {
            return Err(SimError::Config(format!("trajectory {} needs a seed", self.trajectory)));
        }
        self.avatar.validate().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn backend(&self) -> Result<BackendSuite, VisionError> {
        backend_by_name(&self.backend, &self.avatar)
    }

    pub fn poses(&self) -> Result<Vec<EulerPose>, SimError> {
        self.trajectory.poses(self.frames, self.seed)
    }
}
