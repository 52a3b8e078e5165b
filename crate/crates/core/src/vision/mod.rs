//! Face-analysis components and the compositor.
//!
//! Each learned component of the codec sits behind a trait so that a real
//! detector or generator can replace the built-in synthetic backend.

pub mod avatar;
mod synthetic;

use std::sync::Arc;

use crate::geometry::EulerPose;
use crate::image::{round_to_u8, BBox, FacePatch, Frame, ImageError, Mask};
use crate::pool::SourceEntry;

pub use avatar::{render_avatar, AvatarParams, RenderedAvatar};
pub use synthetic::SyntheticBackend;

/// Landmarks produced by the synthetic backend.
pub const LANDMARK_COUNT: usize = 16;
/// Width of the blending ramp along the bbox border, in pixels.
pub const FEATHER_PX: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VisionError {
    #[error("no face found")]
    NoFace,
    #[error("landmark detection found {0} of the expected points")]
    LandmarkFailure(usize),
    #[error("landmark layout does not fit the face model (rms {0:.2} px)")]
    LandmarkMismatch(f64),
    #[error("reenactment failed: {0}")]
    ReenactFailure(String),
    #[error("pose {0:?} outside the renderable range")]
    OutOfRange(EulerPose),
    #[error("invalid avatar parameters: {0}")]
    InvalidParams(String),
    #[error("unknown vision backend `{0}`")]
    UnknownBackend(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

impl VisionError {
    /// True for errors meaning "landmarks could not be extracted".
    pub fn is_landmark_failure(&self) -> bool {
        matches!(self, VisionError::LandmarkFailure(_) | VisionError::LandmarkMismatch(_))
    }
}

/// Ordered 2D facial landmarks plus the face box they belong to, both in the
/// same pixel coordinate system.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmarks {
    points: Vec<[f64; 2]>,
    bbox: BBox,
}

impl Landmarks {
    pub fn new(points: Vec<[f64; 2]>, bbox: BBox) -> Self {
        Landmarks { points, bbox }
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The same landmarks expressed relative to the bbox origin.
    pub fn relative_to_bbox(&self) -> Landmarks {
        let (ox, oy) = (self.bbox.x as f64, self.bbox.y as f64);
        Landmarks {
            points: self.points.iter().map(|p| [p[0] - ox, p[1] - oy]).collect(),
            bbox: BBox::new(0, 0, self.bbox.w, self.bbox.h),
        }
    }

    /// All points lie inside the bbox inflated by `fraction` of its size.
    pub fn within_inflated_bbox(&self, fraction: f64) -> bool {
        self.points
            .iter()
            .all(|p| self.bbox.contains_point_inflated(p[0], p[1], fraction))
    }
}

pub trait FaceDetector: Send + Sync {
    fn detect_face(&self, frame: &Frame) -> Result<BBox, VisionError>;
}

pub trait PoseEstimator: Send + Sync {
    fn estimate_pose(&self, frame: &Frame, bbox: BBox) -> Result<EulerPose, VisionError>;
}

pub trait FaceSegmenter: Send + Sync {
    /// Face coverage over the whole frame.
    fn segment_face(&self, frame: &Frame, bbox: BBox) -> Result<Mask, VisionError>;
}

pub trait LandmarkDetector: Send + Sync {
    fn landmark_count(&self) -> usize;

    fn detect_landmarks(&self, bbox: BBox, frame: &Frame) -> Result<Landmarks, VisionError>;

    /// Landmarks predicted from a pose and face box alone, for backends with
    /// a face model. Used when detection on the received frame fails.
    fn landmarks_from_pose(&self, _pose: &EulerPose, _bbox: BBox) -> Option<Landmarks> {
        None
    }
}

pub trait Reenactor: Send + Sync {
    /// Animates `source`'s stored face to follow `drive`; the result has the
    /// dimensions of `drive.bbox()`.
    fn reenact(&self, source: &SourceEntry, drive: &Landmarks) -> Result<FacePatch, VisionError>;
}

/// The five components a session needs, from one backend.
#[derive(Clone)]
pub struct BackendSuite {
    pub name: String,
    pub version: String,
    pub detector: Arc<dyn FaceDetector>,
    pub pose: Arc<dyn PoseEstimator>,
    pub segmenter: Arc<dyn FaceSegmenter>,
    pub landmarks: Arc<dyn LandmarkDetector>,
    pub reenactor: Arc<dyn Reenactor>,
}

impl std::fmt::Debug for BackendSuite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendSuite")
            .field("name", &self.name)
            .field("version", &self.version)
            .finish_non_exhaustive()
    }
}

/// Looks up a built-in backend. `"synthetic"` is the only one.
pub fn backend_by_name(name: &str, params: &AvatarParams) -> Result<BackendSuite, VisionError> {
    match name {
        "synthetic" => SyntheticBackend::new(params.clone())?.suite(),
        other => Err(VisionError::UnknownBackend(other.to_owned())),
    }
}

/// Blends `face` into `decoded` inside `bbox`.
///
/// The blend weight is the patch mask times a ramp that rises over the
/// outermost [`FEATHER_PX`] pixels of the box. Pixels outside the box are
/// copied unchanged.
pub fn composite(face: &FacePatch, decoded: &Frame, bbox: BBox) -> Result<Frame, VisionError> {
    bbox.check_within(decoded.width(), decoded.height())?;
    if face.width() != bbox.w || face.height() != bbox.h {
        return Err(ImageError::DimensionMismatch(face.width(), face.height(), bbox.w, bbox.h).into());
    }
    let mut out = decoded.clone();
    let (pixels, coverage) = (face.pixels(), face.mask().coverage());
    let (bw, fw) = (bbox.w, decoded.width());
    let ramp = |k: usize| {
        if k < FEATHER_PX {
            (k + 1) as f64 / (FEATHER_PX + 1) as f64
        } else {
            1.0
        }
    };
    let mut weights = vec![0f64; bw];
    for y in 0..bbox.h {
        let ky = y.min(bbox.h - 1 - y);
        for (x, (wt, &m)) in weights.iter_mut().zip(&coverage[y * bw..(y + 1) * bw]).enumerate() {
            *wt = m as f64 / 255.0 * ramp(x.min(bw - 1 - x).min(ky));
        }
        let off = (bbox.y + y) * fw + bbox.x;
        for c in 0..3 {
            let src = &pixels.plane(c)[y * bw..(y + 1) * bw];
            let dst = &mut out.raster_mut().plane_mut(c)[off..off + bw];
            for ((d, &p), &wt) in dst.iter_mut().zip(src).zip(&weights) {
                if wt != 0.0 {
                    let dv = *d as f64;
                    *d = round_to_u8(dv + (p as f64 - dv) * wt);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Raster;

    fn patch(w: usize, h: usize, v: u8, cov: u8) -> FacePatch {
        let mask = Mask::from_coverage(w, h, vec![cov; w * h]).unwrap();
        FacePatch::new(Raster::filled(w, h, [v; 3]).unwrap(), mask).unwrap()
    }

    #[test]
    fn composite_identity_and_zero_mask() {
        let f = Frame::filled(32, 32, [50; 3]).unwrap();
        let b = BBox::new(4, 6, 20, 16);
        assert_eq!(composite(&patch(20, 16, 50, 255), &f, b).unwrap(), f);
        assert_eq!(composite(&patch(20, 16, 200, 0), &f, b).unwrap(), f);
    }

    #[test]
    fn composite_feather_ramp() {
        let f = Frame::filled(40, 40, [50; 3]).unwrap();
        let b = BBox::new(5, 5, 30, 30);
        let out = composite(&patch(30, 30, 200, 255), &f, b).unwrap();
        let row: Vec<u8> = (0..40).map(|x| out.get(0, x, 20)).collect();
        assert_eq!(&row[..5], &[50; 5]);
        assert!(row[5..10].windows(2).all(|w| w[0] < w[1]));
        assert!(row[5] > 50 && row[8] < 200);
        assert!(row[9..31].iter().all(|&v| v == 200));
        assert!(row[30..35].windows(2).all(|w| w[0] > w[1]));
        assert_eq!(&row[35..], &[50; 5]);
    }

    #[test]
    fn composite_rejects_mismatched_patch() {
        let f = Frame::filled(32, 32, [0; 3]).unwrap();
        assert!(composite(&patch(10, 10, 0, 255), &f, BBox::new(0, 0, 11, 10)).is_err());
        assert!(composite(&patch(10, 10, 0, 255), &f, BBox::new(25, 0, 10, 10)).is_err());
    }

    #[test]
    fn unknown_backend() {
        let p = AvatarParams::for_size(64);
        assert!(matches!(
            backend_by_name("hrnet", &p),
            Err(VisionError::UnknownBackend(_))
        ));
        assert_eq!(backend_by_name("synthetic", &p).unwrap().name, "synthetic");
    }
}
