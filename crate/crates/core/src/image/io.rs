//! Frame import/export: PNG and raw planar RGB.
//!
//! Raw layout: `"FAIVRAW1"`, width (u32 BE), height (u32 BE), then the R, G
//! and B planes, each `width * height` bytes in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use super::{Frame, ImageError, Raster};

pub const RAW_MAGIC: &[u8; 8] = b"FAIVRAW1";
pub const RAW_HEADER_LEN: usize = 16;

pub fn write_raw<W: Write>(frame: &Raster, mut out: W) -> std::io::Result<()> {
    out.write_all(RAW_MAGIC)?;
    out.write_all(&(frame.width() as u32).to_be_bytes())?;
    out.write_all(&(frame.height() as u32).to_be_bytes())?;
    for c in 0..3 {
        out.write_all(frame.plane(c))?;
    }
    Ok(())
}

pub fn encode_raw(frame: &Raster) -> Vec<u8> {
    let mut buf = Vec::with_capacity(RAW_HEADER_LEN + 3 * frame.width() * frame.height());
    write_raw(frame, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn decode_raw(bytes: &[u8]) -> Result<Frame, ImageError> {
    if bytes.len() < RAW_HEADER_LEN || &bytes[..8] != RAW_MAGIC {
        return Err(ImageError::Io("missing FAIVRAW1 header".into()));
    }
    let w = u32::from_be_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let h = u32::from_be_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let n = w
        .checked_mul(h)
        .ok_or_else(|| ImageError::Io("raw dimensions overflow".into()))?;
    let body = &bytes[RAW_HEADER_LEN..];
    if body.len() != 3 * n {
        return Err(ImageError::Io(format!(
            "raw body is {} bytes, expected {}",
            body.len(),
            3 * n
        )));
    }
    let planes = [0, 1, 2].map(|c| body[c * n..(c + 1) * n].to_vec());
    Frame::new(Raster::from_planes(w, h, planes)?)
}

pub fn read_raw<R: Read>(mut input: R) -> Result<Frame, ImageError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf).map_err(|e| ImageError::Io(e.to_string()))?;
    decode_raw(&buf)
}

pub fn save_png(frame: &Raster, path: &Path) -> Result<(), ImageError> {
    let (w, h) = (frame.width(), frame.height());
    let mut interleaved = Vec::with_capacity(3 * w * h);
    for i in 0..w * h {
        for c in 0..3 {
            interleaved.push(frame.plane(c)[i]);
        }
    }
    image::save_buffer(path, &interleaved, w as u32, h as u32, image::ColorType::Rgb8)
        .map_err(|e| ImageError::Io(format!("{}: {e}", path.display())))
}

pub fn load_png(path: &Path) -> Result<Frame, ImageError> {
    let img = image::open(path)
        .map_err(|e| ImageError::Io(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut planes: [Vec<u8>; 3] = [
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
    ];
    for px in img.pixels() {
        for c in 0..3 {
            planes[c].push(px.0[c]);
        }
    }
    Frame::new(Raster::from_planes(w, h, planes)?)
}

/// Loads a `.png` or `.raw` frame by extension.
pub fn load_frame(path: &Path) -> Result<Frame, ImageError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("raw") => {
            let f = std::fs::File::open(path).map_err(|e| ImageError::Io(format!("{}: {e}", path.display())))?;
            read_raw(std::io::BufReader::new(f))
        }
        _ => load_png(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_header_layout() {
        let mut r = Raster::filled(16, 17, [1, 2, 3]).unwrap();
        r.set_pixel(0, 0, [200, 100, 50]);
        let bytes = encode_raw(&r);
        assert_eq!(&bytes[..8], b"FAIVRAW1");
        assert_eq!(&bytes[8..16], &[0, 0, 0, 16, 0, 0, 0, 17]);
        assert_eq!(bytes[16], 200);
        assert_eq!(bytes[16 + 16 * 17], 100);
        assert_eq!(decode_raw(&bytes).unwrap().raster(), &r);
        assert!(decode_raw(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.png");
        let mut r = Raster::filled(20, 16, [9, 8, 7]).unwrap();
        r.set_pixel(19, 15, [255, 0, 128]);
        save_png(&r, &path).unwrap();
        assert_eq!(load_frame(&path).unwrap().raster(), &r);
    }
}
