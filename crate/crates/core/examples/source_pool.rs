//! Grows a source pool along a yaw sweep and prints how each pose is served.

use facecodec::geometry::EulerPose;
use facecodec::image::{FacePatch, Mask, Raster};
use facecodec::pool::{AddOutcome, ReenactPlan, SourcePool};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let crop = FacePatch::new(Raster::filled(8, 8, [180, 140, 120])?, Mask::full(8, 8))?;
    let mut pool = SourcePool::new(10.0)?;
    for step in 0..=12 {
        let pose = EulerPose::new(step as f64 * 4.0, (step % 3) as f64 * 6.0, 0.0)?;
        let plan = pool.classify(&pose);
        let served = match plan {
            ReenactPlan::NeedNewSource => match pool.add_source(crop.clone(), None, pose)? {
                AddOutcome::Added { pool: next, source_id } => {
                    pool = next;
                    format!("new source {source_id}")
                }
                AddOutcome::Rejected => "rejected".to_owned(),
            },
            ReenactPlan::SingleSource { source_id } => format!("reenact source {source_id}"),
            ReenactPlan::Interior { sources } => format!("blend {sources:?}"),
        };
        println!(
            "yaw {:5.1} pitch {:4.1}: {served:<40} pool={} digest={:016x}",
            pose.yaw,
            pose.pitch,
            pool.len(),
            pool.digest()
        );
    }
    Ok(())
}
