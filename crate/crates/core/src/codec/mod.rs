//! Base codec contract and implementations.

pub mod bits;
mod external;
pub mod huffman;
pub mod reference;

use std::fmt;

use crate::image::{Frame, ImageError};

pub use external::ExternalCodec;
pub use reference::ReferenceCodec;

/// Quality tier, 1 (smallest) to 10 (best).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quality(u8);

impl Quality {
    pub const MIN: Quality = Quality(1);
    pub const MAX: Quality = Quality(10);

    pub fn new(q: u8) -> Result<Self, CodecError> {
        if (1..=10).contains(&q) {
            Ok(Quality(q))
        } else {
            Err(CodecError::InvalidQuality(q))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub(crate) fn index(self) -> usize {
        self.0 as usize - 1
    }

    /// All tiers from best to worst.
    pub fn descending() -> impl Iterator<Item = Quality> {
        (1..=10u8).rev().map(Quality)
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

/// Part of a bitstream a decode error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Header,
    Table,
    Coefficients,
    Trailer,
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Segment::Header => "header",
            Segment::Table => "huffman table",
            Segment::Coefficients => "coefficients",
            Segment::Trailer => "trailer",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("quality {0} outside 1..=10")]
    InvalidQuality(u8),
    #[error("bitstream truncated in {segment} at byte {offset}")]
    Truncated { segment: Segment, offset: usize },
    #[error("malformed {segment} at byte {offset}: {reason}")]
    Malformed {
        segment: Segment,
        offset: usize,
        reason: String,
    },
    #[error("external codec: {0}")]
    External(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// A lossy still-frame codec carrying pixel payloads.
pub trait BaseCodec: Send + Sync {
    fn name(&self) -> &str;
    fn encode(&self, frame: &Frame, quality: Quality) -> Result<Vec<u8>, CodecError>;
    fn decode(&self, bytes: &[u8]) -> Result<Frame, CodecError>;
}

/// Encodes with the built-in reference codec.
pub fn encode_base(frame: &Frame, quality: Quality) -> Result<Vec<u8>, CodecError> {
    ReferenceCodec.encode(frame, quality)
}

/// Decodes a reference-codec stream.
pub fn decode_base(bytes: &[u8]) -> Result<Frame, CodecError> {
    ReferenceCodec.decode(bytes)
}
