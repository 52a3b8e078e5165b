//! MSB-first bit packing.

pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    nbits: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        BitWriter {
            bytes: Vec::new(),
            acc: 0,
            nbits: 0,
        }
    }

    /// Appends the low `n` bits of `value` (n ≤ 32).
    pub fn put(&mut self, value: u32, n: u32) {
        debug_assert!(n <= 32);
        if n == 0 {
            return;
        }
        self.acc = (self.acc << n) | (value as u64 & ((1u64 << n) - 1));
        self.nbits += n;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.bytes.push((self.acc >> self.nbits) as u8);
        }
        self.acc &= (1u64 << self.nbits) - 1;
    }

    /// Elias-gamma code of `v ≥ 1`.
    pub fn put_gamma(&mut self, v: u32) {
        debug_assert!(v >= 1);
        let n = 32 - v.leading_zeros();
        self.put(0, n - 1);
        self.put(v, n);
    }

    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8 + self.nbits as usize
    }

    /// Pads the final byte with zero bits.
    pub fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            self.bytes.push((self.acc << (8 - self.nbits)) as u8);
        }
        self.bytes
    }
}

impl Default for BitWriter {
    fn default() -> Self {
        Self::new()
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

/// Ran past the end of the buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutOfBits;

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    pub fn bit_pos(&self) -> usize {
        self.pos
    }

    pub fn byte_offset(&self) -> usize {
        self.pos / 8
    }

    pub fn bit(&mut self) -> Result<u32, OutOfBits> {
        let byte = *self.bytes.get(self.pos / 8).ok_or(OutOfBits)?;
        let b = (byte >> (7 - (self.pos % 8))) & 1;
        self.pos += 1;
        Ok(b as u32)
    }

    pub fn get(&mut self, n: u32) -> Result<u32, OutOfBits> {
        let mut v = 0u32;
        for _ in 0..n {
            v = (v << 1) | self.bit()?;
        }
        Ok(v)
    }

    pub fn get_gamma(&mut self) -> Result<u32, OutOfBits> {
        let mut zeros = 0;
        while self.bit()? == 0 {
            zeros += 1;
            if zeros > 31 {
                return Err(OutOfBits);
            }
        }
        let rest = self.get(zeros)?;
        Ok((1 << zeros) | rest)
    }

    /// Bits left before the end of the buffer.
    pub fn remaining(&self) -> usize {
        self.bytes.len() * 8 - self.pos.min(self.bytes.len() * 8)
    }

    /// True when only zero padding bits remain in the current byte and no bytes follow.
    pub fn at_padded_end(&self) -> bool {
        if self.remaining() >= 8 {
            return false;
        }
        let mut probe = BitReader {
            bytes: self.bytes,
            pos: self.pos,
        };
        while probe.remaining() > 0 {
            if probe.bit() != Ok(0) {
                return false;
            }
        }
        true
    }
}
