//! Shows how blurring the face before base coding shrinks the payload.

use facecodec::codec::{decode_base, encode_base, Quality};
use facecodec::geometry::EulerPose;
use facecodec::image::{blur_sigma_for_bbox, gaussian_blur_masked, psnr_region, Frame};
use facecodec::vision::{render_avatar, AvatarParams, FaceSegmenter, SyntheticBackend};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let size = 256;
    let params = AvatarParams::for_size(size);
    let backend = SyntheticBackend::new(params.clone())?;
    let img = render_avatar(&EulerPose::new(10.0, -5.0, 0.0)?, &params, size, size)?;
    let mask = backend.segment_face(&img.frame, img.bbox)?;
    let sigma = blur_sigma_for_bbox(img.bbox);
    let blurred = Frame::new(gaussian_blur_masked(img.frame.raster(), &mask, sigma)?)?;
    println!("face box {:?}, blur sigma {sigma:.2}", img.bbox);
    println!("tier   sharp  blurred  face-psnr(blurred)");
    for q in Quality::descending() {
        let sharp = encode_base(&img.frame, q)?;
        let soft = encode_base(&blurred, q)?;
        let decoded = decode_base(&soft)?;
        let fp = psnr_region(img.frame.raster(), decoded.raster(), img.bbox)?;
        println!("{q:>4} {:>7} {:>8}  {fp:6.2} dB", sharp.len(), soft.len());
    }
    Ok(())
}
