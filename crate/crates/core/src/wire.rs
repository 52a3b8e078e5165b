//! Message framing.
//!
//! Every message is a fixed header followed by the payload, all integers
//! big-endian:
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0 | 2 | magic `"FV"` |
//! | 2 | 1 | version (1) |
//! | 3 | 1 | type: 0 source, 1 driving |
//! | 4 | 4 | frame index, u32 |
//! | 8 | 6 | pose yaw, pitch, roll: i16 centidegrees |
//! | 14 | 8 | bbox x, y, w, h: u16 |
//! | 22 | 4 | payload length, u32 |
//! | 26 | n | payload |
//!
//! A `.fvc` file is a 16-byte preamble (`"FAIVCONF"`, version u32, width
//! u16, height u16) followed by concatenated messages.

use crate::geometry::QuantizedPose;
use crate::image::BBox;

pub const MAGIC: &[u8; 2] = b"FV";
pub const VERSION: u8 = 1;
/// Bytes before the payload.
pub const HEADER_LEN: usize = 26;

pub const FILE_MAGIC: &[u8; 8] = b"FAIVCONF";
pub const FILE_VERSION: u32 = 1;
pub const PREAMBLE_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Source = 0,
    Driving = 1,
}

/// Fields shared by both message types.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Packet {
    pub frame_index: u32,
    pub pose: QuantizedPose,
    pub bbox: BBox,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum WireMessage {
    /// A full, unblurred frame that becomes a new source.
    Source(Packet),
    /// A face-blurred frame plus the pose and box to reenact.
    Driving(Packet),
}

impl WireMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            WireMessage::Source(_) => MessageKind::Source,
            WireMessage::Driving(_) => MessageKind::Driving,
        }
    }

    pub fn packet(&self) -> &Packet {
        match self {
            WireMessage::Source(p) | WireMessage::Driving(p) => p,
        }
    }

    pub fn serialized_len(&self) -> usize {
        HEADER_LEN + self.packet().payload.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("bad magic at byte {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported version {version} at byte {offset}")]
    BadVersion { offset: usize, version: u32 },
    #[error("unknown message type {value} at byte {offset}")]
    BadType { offset: usize, value: u8 },
    #[error("truncated at byte {offset}: {needed} more bytes needed")]
    Truncated { offset: usize, needed: usize },
    #[error("{count} trailing bytes at byte {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("bbox {0:?} does not fit 16-bit fields")]
    BBoxRange(BBox),
    #[error("payload of {0} bytes exceeds the 32-bit length field")]
    PayloadTooLarge(usize),
}

pub fn serialize(msg: &WireMessage) -> Result<Vec<u8>, WireError> {
    let p = msg.packet();
    let b = p.bbox;
    let fields = [b.x, b.y, b.w, b.h];
    if fields.iter().any(|&v| v > u16::MAX as usize) {
        return Err(WireError::BBoxRange(b));
    }
    let len = u32::try_from(p.payload.len()).map_err(|_| WireError::PayloadTooLarge(p.payload.len()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + p.payload.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(msg.kind() as u8);
    out.extend_from_slice(&p.frame_index.to_be_bytes());
    for v in [p.pose.yaw, p.pose.pitch, p.pose.roll] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for v in fields {
        out.extend_from_slice(&(v as u16).to_be_bytes());
    }
    out.extend_from_slice(&len.to_be_bytes());
    assert_eq!(out.len(), HEADER_LEN, "header layout drifted");
    out.extend_from_slice(&p.payload);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let rest = self.bytes.len() - self.pos;
        if rest < n {
            return Err(WireError::Truncated {
                offset: self.base + self.bytes.len(),
                needed: n - rest,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn offset(&self) -> usize {
        self.base + self.pos
    }
}

/// Parses one message from the front of `bytes`; returns it and its length.
/// Error offsets are reported relative to `base`.
pub fn deserialize_prefix(bytes: &[u8], base: usize) -> Result<(WireMessage, usize), WireError> {
    let mut c = Cursor { bytes, pos: 0, base };
    if c.take(2)? != MAGIC {
        return Err(WireError::BadMagic { offset: base });
    }
    let at = c.offset();
    let version = c.take(1)?[0];
    if version != VERSION {
        return Err(WireError::BadVersion {
            offset: at,
            version: version as u32,
        });
    }
    let at = c.offset();
    let kind = match c.take(1)?[0] {
        0 => MessageKind::Source,
        1 => MessageKind::Driving,
        value => return Err(WireError::BadType { offset: at, value }),
    };
    let frame_index = c.u32()?;
    let pose = QuantizedPose {
        yaw: c.u16()? as i16,
        pitch: c.u16()? as i16,
        roll: c.u16()? as i16,
    };
    let bbox = BBox::new(
        c.u16()? as usize,
        c.u16()? as usize,
        c.u16()? as usize,
        c.u16()? as usize,
    );
    let len = c.u32()? as usize;
    let payload = c.take(len)?.to_vec();
    let packet = Packet {
        frame_index,
        pose,
        bbox,
        payload,
    };
    let msg = match kind {
        MessageKind::Source => WireMessage::Source(packet),
        MessageKind::Driving => WireMessage::Driving(packet),
    };
    Ok((msg, c.pos))
}

/// Parses exactly one message.
pub fn deserialize(bytes: &[u8]) -> Result<WireMessage, WireError> {
    let (msg, used) = deserialize_prefix(bytes, 0)?;
    if used != bytes.len() {
        return Err(WireError::TrailingBytes {
            offset: used,
            count: bytes.len() - used,
        });
    }
    Ok(msg)
}

/// `.fvc` file preamble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preamble {
    pub version: u32,
    pub width: u16,
    pub height: u16,
}

impl Preamble {
    pub fn new(width: usize, height: usize) -> Self {
        Preamble {
            version: FILE_VERSION,
            width: width as u16,
            height: height as u16,
        }
    }

    pub fn to_bytes(&self) -> [u8; PREAMBLE_LEN] {
        let mut out = [0u8; PREAMBLE_LEN];
        out[..8].copy_from_slice(FILE_MAGIC);
        out[8..12].copy_from_slice(&self.version.to_be_bytes());
        out[12..14].copy_from_slice(&self.width.to_be_bytes());
        out[14..16].copy_from_slice(&self.height.to_be_bytes());
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, WireError> {
        let mut c = Cursor { bytes, pos: 0, base: 0 };
        if c.take(8)? != FILE_MAGIC {
            return Err(WireError::BadMagic { offset: 0 });
        }
        let version = c.u32()?;
        if version != FILE_VERSION {
            return Err(WireError::BadVersion { offset: 8, version });
        }
        Ok(Preamble {
            version,
            width: c.u16()?,
            height: c.u16()?,
        })
    }
}

/// A parsed message with the bytes it was read from.
pub type RawMessage<'a> = (WireMessage, &'a [u8]);

/// Splits a `.fvc` file into its preamble and the raw bytes of each message.
pub fn split_stream(bytes: &[u8]) -> Result<(Preamble, Vec<RawMessage<'_>>), WireError> {
    let pre = Preamble::parse(bytes)?;
    let mut pos = PREAMBLE_LEN;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let (msg, used) = deserialize_prefix(&bytes[pos..], pos)?;
        out.push((msg, &bytes[pos..pos + used]));
        pos += used;
    }
    Ok((pre, out))
}
