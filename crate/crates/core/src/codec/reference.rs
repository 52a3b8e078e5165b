//! Intra-only reference codec: YCbCr, quality-dependent downsampling, 8×8
//! DCT, uniform quantization, zig-zag run-length tokens and canonical Huffman.
//!
//! Stream layout:
//!
//! | bytes | field |
//! |-------|-------|
//! | 1 | format id `0xFC` |
//! | 1 | quality (high nibble), entropy mode (low nibble: 0 static, 1 adaptive) |
//! | 2 | width, u16 BE |
//! | 2 | height, u16 BE |
//! | … | bit-packed: adaptive Huffman table (mode 1 only), then tokens, zero-padded |
//!
//! Coefficients of all blocks of Y, then Cb, then Cr are concatenated; each
//! block contributes its DC difference (against the previous block of the
//! same channel) followed by 63 AC values in zig-zag order. The run of zeros
//! before each non-zero value is folded into one token symbol with the value's
//! magnitude class; an end-of-block-stream symbol closes the list early when
//! only zeros remain.

use std::sync::OnceLock;

use super::bits::{BitReader, BitWriter};
use super::huffman::{CanonicalCode, MAX_ADAPTIVE_LEN};
use super::{BaseCodec, CodecError, Quality, Segment};
use crate::image::{Frame, Raster};

pub const FORMAT_ID: u8 = 0xFC;
pub const HEADER_LEN: usize = 6;

const EOB: u8 = 0x00;
const RUN_ESCAPE: u8 = 15;

/// Downsampling factor, base quantizer step and chroma step multiplier per tier.
const TIERS: [(usize, f64, f64); 10] = [
    (8, 160.0, 4.0),
    (8, 96.0, 3.0),
    (6, 64.0, 2.0),
    (4, 48.0, 2.0),
    (4, 32.0, 2.0),
    (3, 24.0, 1.5),
    (2, 16.0, 1.5),
    (2, 10.0, 1.5),
    (1, 6.0, 1.0),
    (1, 4.0, 1.0),
];

const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21,
    28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54,
    47, 55, 62, 63,
];

fn cosine_table() -> &'static [[f64; 8]; 8] {
    static TABLE: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [[0f64; 8]; 8];
        for (u, row) in t.iter_mut().enumerate() {
            let alpha = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha * (((2 * x + 1) * u) as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        t
    })
}

fn fdct(block: &[f64; 64]) -> [f64; 64] {
    let c = cosine_table();
    let mut tmp = [0f64; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| c[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0f64; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| c[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

fn idct(coef: &[f64; 64]) -> [f64; 64] {
    let c = cosine_table();
    let mut tmp = [0f64; 64];
    for v in 0..8 {
        for x in 0..8 {
            tmp[v * 8 + x] = (0..8).map(|u| c[u][x] * coef[v * 8 + u]).sum();
        }
    }
    let mut out = [0f64; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| c[v][y] * tmp[v * 8 + x]).sum();
        }
    }
    out
}

fn step(q: Quality, chroma: bool, index: usize) -> f64 {
    let (_, base, chroma_mul) = TIERS[q.index()];
    let (u, v) = (index % 8, index / 8);
    let s = base * (1.0 + 0.25 * (u + v) as f64);
    if chroma {
        s * chroma_mul
    } else {
        s
    }
}

pub fn downsample_factor(q: Quality) -> usize {
    TIERS[q.index()].0
}

fn to_ycbcr(rgb: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
    let n = rgb[0].len();
    let mut out = [vec![0f64; n], vec![0f64; n], vec![0f64; n]];
    for i in 0..n {
        let (r, g, b) = (rgb[0][i], rgb[1][i], rgb[2][i]);
        out[0][i] = 0.299 * r + 0.587 * g + 0.114 * b;
        out[1][i] = 128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
        out[2][i] = 128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
    }
    out
}

/// Inverse of [`to_ycbcr`], unclamped.
fn to_rgb(ycc: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
    let n = ycc[0].len();
    let mut out = [vec![0f64; n], vec![0f64; n], vec![0f64; n]];
    for i in 0..n {
        let (y, cb, cr) = (ycc[0][i], ycc[1][i] - 128.0, ycc[2][i] - 128.0);
        out[0][i] = y + 1.402 * cr;
        out[1][i] = y - 0.344_136 * cb - 0.714_136 * cr;
        out[2][i] = y + 1.772 * cb;
    }
    out
}

fn clamp_u8(v: f64) -> u8 {
    // truncation of a clamped non-negative value is floor
    (v + 0.5).clamp(0.0, 255.0) as u8
}

/// Box-average downsampling; partial edge cells average what they cover.
fn downsample(src: &[u8], w: usize, h: usize, f: usize) -> Vec<f64> {
    if f == 1 {
        return src.iter().map(|&v| v as f64).collect();
    }
    let (dw, dh) = (w.div_ceil(f), h.div_ceil(f));
    let mut out = vec![0f64; dw * dh];
    let mut sums = vec![0u32; dw];
    for dy in 0..dh {
        sums.iter_mut().for_each(|s| *s = 0);
        let rows = dy * f..((dy + 1) * f).min(h);
        let nrows = rows.len();
        for y in rows {
            for (cell, sum) in src[y * w..(y + 1) * w].chunks(f).zip(sums.iter_mut()) {
                *sum += cell.iter().map(|&v| v as u32).sum::<u32>();
            }
        }
        for (dx, &sum) in sums.iter().enumerate() {
            let ncols = ((dx + 1) * f).min(w) - dx * f;
            out[dy * dw + dx] = sum as f64 / (nrows * ncols) as f64;
        }
    }
    out
}

/// Bilinear upsampling with pixel centres aligned, rounded to bytes.
fn upsample(src: &[f64], dw: usize, dh: usize, f: usize, w: usize, h: usize) -> Vec<u8> {
    if f == 1 {
        return src.iter().map(|&v| clamp_u8(v)).collect();
    }
    let ff = f as f64;
    let coord = |x: usize, n: usize| {
        let s = ((x as f64 + 0.5) / ff - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - i0 as f64)
    };
    let xs: Vec<_> = (0..w).map(|x| coord(x, dw)).collect();
    let mut out = vec![0u8; w * h];
    let mut column = vec![0f64; dw];
    for (y, dst) in out.chunks_exact_mut(w).enumerate() {
        let (y0, y1, ty) = coord(y, dh);
        let (r0, r1) = (&src[y0 * dw..(y0 + 1) * dw], &src[y1 * dw..(y1 + 1) * dw]);
        for ((c, a), b) in column.iter_mut().zip(r0).zip(r1) {
            *c = a * (1.0 - ty) + b * ty;
        }
        for (d, &(x0, x1, tx)) in dst.iter_mut().zip(&xs) {
            *d = clamp_u8(column[x0] * (1.0 - tx) + column[x1] * tx);
        }
    }
    out
}

fn quantize(v: f64, s: f64) -> i32 {
    // round half away from zero
    let x = v / s;
    let t = x as i32;
    let frac = x - t as f64;
    if frac >= 0.5 {
        t + 1
    } else if frac <= -0.5 {
        t - 1
    } else {
        t
    }
}

fn magnitude_class(v: i32) -> u32 {
    32 - v.unsigned_abs().leading_zeros()
}

fn run_class(run: u32) -> u8 {
    if run == 0 {
        0
    } else {
        let c = 32 - run.leading_zeros();
        if c as u8 >= RUN_ESCAPE {
            RUN_ESCAPE
        } else {
            c as u8
        }
    }
}

/// Static code lengths: short codes for short runs and small magnitudes.
fn static_code() -> &'static CanonicalCode {
    static CODE: OnceLock<CanonicalCode> = OnceLock::new();
    CODE.get_or_init(|| {
        let mut lengths = vec![(EOB, 3u8)];
        for rc in 0..16u8 {
            for size in 1..16u8 {
                lengths.push(((rc << 4) | size, 2 + rc.div_ceil(2) + size));
            }
        }
        CanonicalCode::from_lengths(&lengths).expect("static lengths satisfy Kraft")
    })
}

struct Token {
    symbol: u8,
    run: u32,
    level: i32,
}

fn tokenize(coefs: &[i32]) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut run = 0u32;
    for &c in coefs {
        if c == 0 {
            run += 1;
            continue;
        }
        let size = magnitude_class(c);
        tokens.push(Token {
            symbol: (run_class(run) << 4) | size as u8,
            run,
            level: c,
        });
        run = 0;
    }
    if run > 0 {
        tokens.push(Token {
            symbol: EOB,
            run: 0,
            level: 0,
        });
    }
    tokens
}

fn put_token(w: &mut BitWriter, code: &CanonicalCode, t: &Token) {
    code.put(w, t.symbol);
    if t.symbol == EOB {
        return;
    }
    let rc = t.symbol >> 4;
    match rc {
        0 => {}
        RUN_ESCAPE => w.put(t.run, 32),
        _ => w.put(t.run - (1 << (rc - 1)), rc as u32 - 1),
    }
    let size = (t.symbol & 0x0F) as u32;
    let bits = if t.level < 0 {
        (t.level + (1 << size) - 1) as u32
    } else {
        t.level as u32
    };
    w.put(bits, size);
}

fn token_bits(code: &CanonicalCode, tokens: &[Token]) -> Option<usize> {
    let mut total = 0usize;
    for t in tokens {
        let l = code.length_of(t.symbol) as usize;
        if l == 0 {
            return None;
        }
        total += l;
        if t.symbol != EOB {
            let rc = t.symbol >> 4;
            total += match rc {
                0 => 0,
                RUN_ESCAPE => 32,
                _ => rc as usize - 1,
            };
            total += (t.symbol & 0x0F) as usize;
        }
    }
    Some(total)
}

struct Layout {
    factor: usize,
    dw: usize,
    dh: usize,
    bw: usize,
    bh: usize,
}

impl Layout {
    fn new(w: usize, h: usize, q: Quality) -> Self {
        let factor = downsample_factor(q);
        let (dw, dh) = (w.div_ceil(factor), h.div_ceil(factor));
        Layout {
            factor,
            dw,
            dh,
            bw: dw.div_ceil(8),
            bh: dh.div_ceil(8),
        }
    }

    fn coefficient_count(&self) -> usize {
        3 * self.bw * self.bh * 64
    }
}

/// The built-in stand-in for a production video codec.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceCodec;

impl ReferenceCodec {
    fn quantized_coefficients(frame: &Raster, q: Quality, layout: &Layout) -> Vec<i32> {
        let (w, h) = (frame.width(), frame.height());
        let small = [0, 1, 2].map(|c| downsample(frame.plane(c), w, h, layout.factor));
        let planes = to_ycbcr(&small);
        let (dw, dh) = (layout.dw, layout.dh);
        let mut coefs = Vec::with_capacity(layout.coefficient_count());
        for (c, small) in planes.iter().enumerate() {
            let mut prev_dc = 0i32;
            for by in 0..layout.bh {
                for bx in 0..layout.bw {
                    let mut block = [0f64; 64];
                    for y in 0..8 {
                        let sy = (by * 8 + y).min(dh - 1);
                        for x in 0..8 {
                            let sx = (bx * 8 + x).min(dw - 1);
                            block[y * 8 + x] = small[sy * dw + sx] - 128.0;
                        }
                    }
                    let f = fdct(&block);
                    for (k, &zz) in ZIGZAG.iter().enumerate() {
                        let level = quantize(f[zz], step(q, c > 0, zz));
                        if k == 0 {
                            coefs.push(level - prev_dc);
                            prev_dc = level;
                        } else {
                            coefs.push(level);
                        }
                    }
                }
            }
        }
        coefs
    }

    fn reconstruct(coefs: &[i32], q: Quality, w: usize, h: usize) -> Result<Frame, CodecError> {
        let layout = Layout::new(w, h, q);
        let nblocks = layout.bw * layout.bh;
        let mut planes: [Vec<f64>; 3] = Default::default();
        for (c, out) in planes.iter_mut().enumerate() {
            let mut small = vec![0f64; layout.dw * layout.dh];
            let mut prev_dc = 0i32;
            for b in 0..nblocks {
                let (bx, by) = (b % layout.bw, b / layout.bw);
                let base = (c * nblocks + b) * 64;
                let mut f = [0f64; 64];
                for (k, &zz) in ZIGZAG.iter().enumerate() {
                    let mut level = coefs[base + k];
                    if k == 0 {
                        level += prev_dc;
                        prev_dc = level;
                    }
                    f[zz] = level as f64 * step(q, c > 0, zz);
                }
                let px = idct(&f);
                for y in 0..8 {
                    let sy = by * 8 + y;
                    if sy >= layout.dh {
                        break;
                    }
                    for x in 0..8 {
                        let sx = bx * 8 + x;
                        if sx >= layout.dw {
                            break;
                        }
                        small[sy * layout.dw + sx] = px[y * 8 + x] + 128.0;
                    }
                }
            }
            *out = small;
        }
        let rgb = to_rgb(&planes).map(|p| upsample(&p, layout.dw, layout.dh, layout.factor, w, h));
        Ok(Frame::new(Raster::from_planes(w, h, rgb)?)?)
    }
}

impl BaseCodec for ReferenceCodec {
    fn name(&self) -> &str {
        "reference"
    }

    fn encode(&self, frame: &Frame, quality: Quality) -> Result<Vec<u8>, CodecError> {
        let (w, h) = (frame.width(), frame.height());
        let layout = Layout::new(w, h, quality);
        let coefs = Self::quantized_coefficients(frame, quality, &layout);
        let tokens = tokenize(&coefs);

        let mut freqs = [0u64; 256];
        for t in &tokens {
            freqs[t.symbol as usize] += 1;
        }
        let adaptive = CanonicalCode::from_frequencies(&freqs, MAX_ADAPTIVE_LEN);
        let mut table_bits = BitWriter::new();
        adaptive.write_table(&mut table_bits);
        let adaptive_cost =
            table_bits.bit_len() + token_bits(&adaptive, &tokens).expect("adaptive code covers all symbols");
        let static_cost = token_bits(static_code(), &tokens).unwrap_or(usize::MAX);
        let use_adaptive = adaptive_cost < static_cost;

        let mut out = Vec::with_capacity(HEADER_LEN + adaptive_cost.min(static_cost) / 8 + 1);
        out.push(FORMAT_ID);
        out.push((quality.get() << 4) | use_adaptive as u8);
        out.extend_from_slice(&(w as u16).to_be_bytes());
        out.extend_from_slice(&(h as u16).to_be_bytes());
        let mut bits = BitWriter::new();
        let code = if use_adaptive {
            adaptive.write_table(&mut bits);
            &adaptive
        } else {
            static_code()
        };
        for t in &tokens {
            put_token(&mut bits, code, t);
        }
        out.extend_from_slice(&bits.finish());
        Ok(out)
    }

    fn decode(&self, bytes: &[u8]) -> Result<Frame, CodecError> {
        if bytes.len() < HEADER_LEN {
            return Err(CodecError::Truncated {
                segment: Segment::Header,
                offset: bytes.len(),
            });
        }
        if bytes[0] != FORMAT_ID {
            return Err(CodecError::Malformed {
                segment: Segment::Header,
                offset: 0,
                reason: format!("format id {:#04x}", bytes[0]),
            });
        }
        let quality = Quality::new(bytes[1] >> 4).map_err(|_| CodecError::Malformed {
            segment: Segment::Header,
            offset: 1,
            reason: format!("quality {}", bytes[1] >> 4),
        })?;
        let mode = bytes[1] & 0x0F;
        if mode > 1 {
            return Err(CodecError::Malformed {
                segment: Segment::Header,
                offset: 1,
                reason: format!("entropy mode {mode}"),
            });
        }
        let w = u16::from_be_bytes([bytes[2], bytes[3]]) as usize;
        let h = u16::from_be_bytes([bytes[4], bytes[5]]) as usize;
        if !(crate::image::MIN_FRAME_DIM..=crate::image::MAX_FRAME_DIM).contains(&w)
            || !(crate::image::MIN_FRAME_DIM..=crate::image::MAX_FRAME_DIM).contains(&h)
        {
            return Err(CodecError::Malformed {
                segment: Segment::Header,
                offset: 2,
                reason: format!("dimensions {w}x{h}"),
            });
        }
        let body = &bytes[HEADER_LEN..];
        let mut r = BitReader::new(body);
        let at = |r: &BitReader<'_>| HEADER_LEN + r.byte_offset();

        let table;
        let code = if mode == 1 {
            table = CanonicalCode::read_table(&mut r).map_err(|e| CodecError::Malformed {
                segment: Segment::Table,
                offset: at(&r),
                reason: format!("{e:?}"),
            })?;
            &table
        } else {
            static_code()
        };

        let layout = Layout::new(w, h, quality);
        let total = layout.coefficient_count();
        let mut coefs = vec![0i32; total];
        let mut pos = 0usize;
        let truncated = |r: &BitReader<'_>| CodecError::Truncated {
            segment: Segment::Coefficients,
            offset: at(r),
        };
        while pos < total {
            let sym = code
                .get(&mut r)
                .map_err(|_| truncated(&r))?
                .ok_or_else(|| CodecError::Malformed {
                    segment: Segment::Coefficients,
                    offset: at(&r),
                    reason: "invalid code word".into(),
                })?;
            if sym == EOB {
                break;
            }
            let rc = sym >> 4;
            let size = (sym & 0x0F) as u32;
            let run = match rc {
                0 => 0,
                RUN_ESCAPE => r.get(32).map_err(|_| truncated(&r))?,
                _ => (1 << (rc - 1)) + r.get(rc as u32 - 1).map_err(|_| truncated(&r))?,
            };
            if size == 0 {
                return Err(CodecError::Malformed {
                    segment: Segment::Coefficients,
                    offset: at(&r),
                    reason: "zero magnitude class".into(),
                });
            }
            let bits = r.get(size).map_err(|_| truncated(&r))? as i32;
            let level = if bits < (1 << (size - 1)) {
                bits - (1 << size) + 1
            } else {
                bits
            };
            pos = pos.saturating_add(run as usize);
            if pos >= total {
                return Err(CodecError::Malformed {
                    segment: Segment::Coefficients,
                    offset: at(&r),
                    reason: "run past the last coefficient".into(),
                });
            }
            coefs[pos] = level;
            pos += 1;
        }
        if !r.at_padded_end() {
            return Err(CodecError::Malformed {
                segment: Segment::Trailer,
                offset: at(&r),
                reason: "unconsumed bytes after coefficient data".into(),
            });
        }
        Self::reconstruct(&coefs, quality, w, h)
    }
}
