//! Canonical Huffman codes over a byte alphabet.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::bits::{BitReader, BitWriter, OutOfBits};

pub const MAX_CODE_LEN: u8 = 32;
/// Limit for adaptive tables, which transmit `length - 1` in four bits.
pub const MAX_ADAPTIVE_LEN: u8 = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalCode {
    /// `(symbol, length)` sorted by `(length, symbol)`.
    entries: Vec<(u8, u8)>,
    codes: [(u32, u8); 256],
    first: [u32; MAX_CODE_LEN as usize + 1],
    count: [u32; MAX_CODE_LEN as usize + 1],
    offset: [u32; MAX_CODE_LEN as usize + 1],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TableError {
    OutOfBits,
    BadLength,
    Oversubscribed,
    SymbolOverflow,
}

impl From<OutOfBits> for TableError {
    fn from(_: OutOfBits) -> Self {
        TableError::OutOfBits
    }
}

impl CanonicalCode {
    /// Builds the canonical code for the given `(symbol, length)` pairs.
    pub fn from_lengths(lengths: &[(u8, u8)]) -> Result<Self, TableError> {
        let mut entries: Vec<(u8, u8)> = lengths.to_vec();
        if entries.iter().any(|&(_, l)| l == 0 || l > MAX_CODE_LEN) {
            return Err(TableError::BadLength);
        }
        entries.sort_by_key(|&(s, l)| (l, s));
        // Kraft inequality, in units of 2^-32
        let kraft: u64 = entries.iter().map(|&(_, l)| 1u64 << (MAX_CODE_LEN - l)).sum();
        if kraft > 1u64 << MAX_CODE_LEN {
            return Err(TableError::Oversubscribed);
        }
        let mut codes = [(0u32, 0u8); 256];
        let mut first = [0u32; MAX_CODE_LEN as usize + 1];
        let mut count = [0u32; MAX_CODE_LEN as usize + 1];
        let mut offset = [0u32; MAX_CODE_LEN as usize + 1];
        for &(_, l) in &entries {
            count[l as usize] += 1;
        }
        let mut code = 0u64;
        let mut idx = 0u32;
        for len in 1..=MAX_CODE_LEN as usize {
            code <<= 1;
            first[len] = code as u32;
            offset[len] = idx;
            code += count[len] as u64;
            idx += count[len];
        }
        let mut next = first;
        for &(s, l) in &entries {
            codes[s as usize] = (next[l as usize], l);
            next[l as usize] += 1;
        }
        Ok(CanonicalCode {
            entries,
            codes,
            first,
            count,
            offset,
        })
    }

    /// Length-limited Huffman code for `freqs` (symbols with zero frequency are omitted).
    pub fn from_frequencies(freqs: &[u64; 256], max_len: u8) -> Self {
        let mut f: Vec<(u8, u64)> = (0..256)
            .filter(|&s| freqs[s] > 0)
            .map(|s| (s as u8, freqs[s]))
            .collect();
        if f.is_empty() {
            return CanonicalCode::from_lengths(&[]).expect("empty code");
        }
        if f.len() == 1 {
            return CanonicalCode::from_lengths(&[(f[0].0, 1)]).expect("single symbol");
        }
        loop {
            let lengths = huffman_lengths(&f);
            if lengths.iter().all(|&(_, l)| l <= max_len) {
                return CanonicalCode::from_lengths(&lengths).expect("huffman lengths satisfy Kraft");
            }
            for e in f.iter_mut() {
                e.1 = e.1.div_ceil(2);
            }
        }
    }

    pub fn entries(&self) -> &[(u8, u8)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn length_of(&self, symbol: u8) -> u8 {
        self.codes[symbol as usize].1
    }

    pub fn put(&self, w: &mut BitWriter, symbol: u8) {
        let (code, len) = self.codes[symbol as usize];
        debug_assert!(len > 0, "symbol {symbol} has no code");
        w.put(code, len as u32);
    }

    pub fn get(&self, r: &mut BitReader<'_>) -> Result<Option<u8>, OutOfBits> {
        let mut code = 0u32;
        for len in 1..=MAX_CODE_LEN as usize {
            code = (code << 1) | r.bit()?;
            let c = self.count[len];
            if c > 0 && code >= self.first[len] && code - self.first[len] < c {
                let i = self.offset[len] + code - self.first[len];
                return Ok(Some(self.entries[i as usize].0));
            }
        }
        Ok(None)
    }

    /// Serializes the table: symbol count (8 bits), then per symbol in ascending
    /// order a gamma-coded symbol delta and `length - 1` in four bits.
    pub fn write_table(&self, w: &mut BitWriter) {
        let mut by_symbol = self.entries.clone();
        by_symbol.sort_unstable();
        debug_assert!(by_symbol.len() < 256);
        w.put(by_symbol.len() as u32, 8);
        let mut prev: i32 = -1;
        for (s, l) in by_symbol {
            debug_assert!((1..=MAX_ADAPTIVE_LEN).contains(&l));
            w.put_gamma((s as i32 - prev) as u32);
            w.put(l as u32 - 1, 4);
            prev = s as i32;
        }
    }

    pub fn read_table(r: &mut BitReader<'_>) -> Result<Self, TableError> {
        let n = r.get(8)?;
        let mut lengths = Vec::with_capacity(n as usize);
        let mut prev: i32 = -1;
        for _ in 0..n {
            let s = prev + r.get_gamma()? as i32;
            if s > 255 {
                return Err(TableError::SymbolOverflow);
            }
            let l = r.get(4)? as u8 + 1;
            lengths.push((s as u8, l));
            prev = s;
        }
        CanonicalCode::from_lengths(&lengths)
    }
}

fn huffman_lengths(freqs: &[(u8, u64)]) -> Vec<(u8, u8)> {
    // nodes: leaves first, then internal; ties broken by node index for determinism
    let n = freqs.len();
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        freqs.iter().enumerate().map(|(i, &(_, f))| Reverse((f, i))).collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((fa, a)) = heap.pop().unwrap();
        let Reverse((fb, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((fa + fb, next)));
        next += 1;
    }
    (0..n)
        .map(|i| {
            let mut depth = 0u8;
            let mut k = i;
            while parent[k] != usize::MAX {
                k = parent[k];
                depth = depth.saturating_add(1);
            }
            (freqs[i].0, depth)
        })
        .collect()
}
