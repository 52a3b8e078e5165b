//! Face-view interpolation and the reenact-then-blend step.

use rayon::prelude::*;

use crate::image::{round_to_u8, FacePatch, Mask, Raster};
use crate::pool::{ReenactPlan, SourcePool};
use crate::vision::{BackendSuite, Landmarks, VisionError};

/// Tolerance on the weight sum.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("interpolation needs 1 to 3 patches, got {0}")]
    PatchCount(usize),
    #[error("invalid weights {0:?}")]
    InvalidWeights(Vec<f64>),
    #[error("patch {index} is {got:?}, expected {expected:?}")]
    DimensionMismatch {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("plan has no sources")]
    NeedNewSource,
    #[error("source {0} is not in the pool")]
    UnknownSource(u32),
    #[error("reenacting source {source_id}: {error}")]
    Reenact { source_id: u32, error: VisionError },
}

/// Weighted per-pixel sum of patches and of their masks.
///
/// Sums are accumulated in `f64` and rounded once, half away from zero.
pub fn face_view_interpolate(inputs: &[(FacePatch, f64)]) -> Result<FacePatch, PipelineError> {
    if inputs.is_empty() || inputs.len() > 3 {
        return Err(PipelineError::PatchCount(inputs.len()));
    }
    let weights: Vec<f64> = inputs.iter().map(|(_, w)| *w).collect();
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) || (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(PipelineError::InvalidWeights(weights));
    }
    let (w, h) = (inputs[0].0.width(), inputs[0].0.height());
    for (index, (p, _)) in inputs.iter().enumerate() {
        if (p.width(), p.height()) != (w, h) {
            return Err(PipelineError::DimensionMismatch {
                index,
                expected: (w, h),
                got: (p.width(), p.height()),
            });
        }
    }
    if let [(p, _)] = inputs {
        return Ok(p.clone());
    }

    let blend = |get: &dyn Fn(&FacePatch) -> &[u8]| -> Vec<u8> {
        let mut acc = vec![0f64; w * h];
        for (p, wt) in inputs {
            for (a, &v) in acc.iter_mut().zip(get(p)) {
                *a += wt * v as f64;
            }
        }
        acc.into_iter().map(round_to_u8).collect()
    };
    let planes = [0, 1, 2].map(|c| blend(&|p: &FacePatch| p.pixels().plane(c)));
    let cov = blend(&|p: &FacePatch| p.mask().coverage());
    let pixels = Raster::from_planes(w, h, planes).expect("plane sizes match");
    let mask = Mask::from_coverage(w, h, cov).expect("coverage size matches");
    Ok(FacePatch::new(pixels, mask).expect("same dimensions"))
}

/// Reenacts every source the plan references with the same drive landmarks
/// and blends the results with the plan's weights.
///
/// Zero-weight sources are skipped; a single remaining source is returned
/// without interpolation.
pub fn reenact_plan_to_patch(
    plan: &ReenactPlan,
    pool: &SourcePool,
    drive: &Landmarks,
    backend: &BackendSuite,
) -> Result<FacePatch, PipelineError> {
    let used: Vec<(u32, f64)> = plan.weights().into_iter().filter(|&(_, w)| w > 0.0).collect();
    if used.is_empty() {
        return Err(PipelineError::NeedNewSource);
    }
    let patches: Vec<(FacePatch, f64)> = used
        .par_iter()
        .map(|&(source_id, w)| {
            let entry = pool.entry(source_id).ok_or(PipelineError::UnknownSource(source_id))?;
            let patch = backend
                .reenactor
                .reenact(entry, drive)
                .map_err(|error| PipelineError::Reenact { source_id, error })?;
            Ok((patch, w))
        })
        .collect::<Result<_, PipelineError>>()?;
    if let [(p, _)] = patches.as_slice() {
        return Ok(p.clone());
    }
    face_view_interpolate(&patches)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v: u8, cov: u8) -> FacePatch {
        FacePatch::new(
            Raster::filled(6, 5, [v; 3]).unwrap(),
            Mask::from_coverage(6, 5, vec![cov; 30]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn weighted_mean_of_constants() {
        let out = face_view_interpolate(&[
            (constant(100, 255), 0.5),
            (constant(50, 0), 0.25),
            (constant(30, 255), 0.25),
        ])
        .unwrap();
        assert!(out.pixels().plane(1).iter().all(|&v| v == 70));
        // 0.75 * 255 = 191.25
        assert!(out.mask().coverage().iter().all(|&v| v == 191));
    }

    #[test]
    fn rounds_half_away_from_zero() {
        let out = face_view_interpolate(&[(constant(1, 0), 0.5), (constant(2, 0), 0.5)]).unwrap();
        assert!(out.pixels().plane(0).iter().all(|&v| v == 2));
    }

    #[test]
    fn single_and_identical_inputs() {
        let p = constant(42, 17);
        assert_eq!(face_view_interpolate(&[(p.clone(), 1.0)]).unwrap(), p);
        let three = [(p.clone(), 0.2), (p.clone(), 0.3), (p.clone(), 0.5)];
        assert_eq!(face_view_interpolate(&three).unwrap(), p);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = constant(1, 1);
        assert!(matches!(face_view_interpolate(&[]), Err(PipelineError::PatchCount(0))));
        assert!(matches!(
            face_view_interpolate(&[(p.clone(), 0.5), (p.clone(), 0.4)]),
            Err(PipelineError::InvalidWeights(_))
        ));
        assert!(matches!(
            face_view_interpolate(&[(p.clone(), 1.5), (p.clone(), -0.5)]),
            Err(PipelineError::InvalidWeights(_))
        ));
        let q = FacePatch::new(Raster::filled(5, 5, [0; 3]).unwrap(), Mask::full(5, 5)).unwrap();
        assert!(matches!(
            face_view_interpolate(&[(p, 0.5), (q, 0.5)]),
            Err(PipelineError::DimensionMismatch { index: 1, .. })
        ));
    }
}
