//! Exact byte accounting per message class.

use crate::wire::MessageKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassStats {
    pub messages: u64,
    /// Serialized bytes including headers.
    pub bytes: u64,
    pub payload_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RateStats {
    pub width: usize,
    pub height: usize,
    pub source: ClassStats,
    pub driving: ClassStats,
}

impl RateStats {
    pub fn new(width: usize, height: usize) -> Self {
        RateStats {
            width,
            height,
            ..Default::default()
        }
    }

    pub fn record(&mut self, kind: MessageKind, serialized_len: usize, payload_len: usize) {
        let class = match kind {
            MessageKind::Source => &mut self.source,
            MessageKind::Driving => &mut self.driving,
        };
        class.messages += 1;
        class.bytes += serialized_len as u64;
        class.payload_bytes += payload_len as u64;
    }

    pub fn frames(&self) -> u64 {
        self.source.messages + self.driving.messages
    }

    pub fn total_bytes(&self) -> u64 {
        self.source.bytes + self.driving.bytes
    }

    pub fn header_bytes(&self) -> u64 {
        self.total_bytes() - self.source.payload_bytes - self.driving.payload_bytes
    }

    fn pixels(&self) -> f64 {
        (self.width * self.height) as f64
    }

    /// Driving-stream rate: bits of driving messages per driving-frame pixel.
    pub fn driving_bits_per_pixel(&self) -> f64 {
        if self.driving.messages == 0 {
            return 0.0;
        }
        self.driving.bytes as f64 * 8.0 / (self.pixels() * self.driving.messages as f64)
    }
}

/// Total bits over `width × height × frames`; 0 for an empty session.
pub fn bits_per_pixel(stats: &RateStats) -> f64 {
    let frames = stats.frames();
    if frames == 0 {
        return 0.0;
    }
    stats.total_bytes() as f64 * 8.0 / (stats.pixels() * frames as f64)
}
