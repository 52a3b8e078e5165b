//! Runs every stage of the synthetic vision backend on one rendered frame.

use facecodec::geometry::EulerPose;
use facecodec::image::{psnr_region, FacePatch};
use facecodec::pool::{AddOutcome, SourcePool};
use facecodec::vision::{
    composite, render_avatar, AvatarParams, FaceDetector, FaceSegmenter, LandmarkDetector, PoseEstimator, Reenactor,
    SyntheticBackend,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let size = 320;
    let params = AvatarParams::for_size(size);
    let backend = SyntheticBackend::new(params.clone())?;

    let source_pose = EulerPose::new(0.0, 0.0, 0.0)?;
    let src = render_avatar(&source_pose, &params, size, size)?;
    let bbox = backend.detect_face(&src.frame)?;
    let mask = backend.segment_face(&src.frame, bbox)?;
    let lm = backend.detect_landmarks(bbox, &src.frame)?;
    println!(
        "source box {bbox:?}, mask area {:.0} px, {} landmarks",
        mask.area(),
        lm.len()
    );

    let crop = FacePatch::from_frame(src.frame.raster(), &mask, bbox)?;
    let AddOutcome::Added { pool, source_id } =
        SourcePool::new(10.0)?.add_source(crop, Some(lm.relative_to_bbox()), source_pose)?
    else {
        unreachable!("an empty pool accepts any pose");
    };

    let drive = render_avatar(&EulerPose::new(6.0, 4.0, 2.0)?, &params, size, size)?;
    let dbox = backend.detect_face(&drive.frame)?;
    let estimated = backend.estimate_pose(&drive.frame, dbox)?;
    println!(
        "estimated pose yaw {:.2} pitch {:.2} roll {:.2}",
        estimated.yaw, estimated.pitch, estimated.roll
    );
    let drive_lm = backend.detect_landmarks(dbox, &drive.frame)?;
    let entry = pool.entry(source_id).expect("just added");
    let patch = backend.reenact(entry, &drive_lm)?;
    let out = composite(&patch, &src.frame, dbox)?;
    println!(
        "face PSNR of the source alone {:.2} dB, after reenactment {:.2} dB",
        psnr_region(drive.frame.raster(), src.frame.raster(), dbox)?,
        psnr_region(drive.frame.raster(), out.raster(), dbox)?
    );
    Ok(())
}
