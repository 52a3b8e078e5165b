//! The dynamic set of stored source faces and its pose-space mesh.
//!
//! A pool is an immutable value: [`SourcePool::add_source`] returns a new
//! pool and leaves the old one untouched, so encoder and decoder replicas can
//! be compared or rolled back freely. Entries are shared through `Arc`, which
//! keeps copies cheap.

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::geometry::{
    angular_distance, barycentric, delaunay, locate, project_pose, AngularPoint, EulerPose, GeometryError, Location,
    TriMesh,
};
use crate::image::FacePatch;
use crate::vision::Landmarks;

/// Default new-source threshold in degrees.
pub const DEFAULT_THRESHOLD: f64 = 10.0;

const DIGEST_TAG: &[u8] = b"facecodec/source-pool/v1";

/// Digest of a pool with no entries: the first 8 bytes of SHA-256 over the tag.
pub const EMPTY_DIGEST: u64 = 0x6310_a6ed_d2f2_8b47;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoolError {
    #[error("threshold {0} must be positive and finite")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A stored source face.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceEntry {
    pub source_id: u32,
    /// Face area of the source frame with its segmentation mask.
    pub face_crop: FacePatch,
    /// Landmarks relative to the crop origin, when the owner extracted them.
    pub landmarks: Option<Landmarks>,
    pub pose: EulerPose,
    pub point: AngularPoint,
}

/// How to synthesize the face for a driving pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReenactPlan {
    /// Blend three sources with barycentric weights.
    Interior { sources: [(u32, f64); 3] },
    /// Use the nearest source alone (weight 1).
    SingleSource { source_id: u32 },
    /// No source is within the threshold.
    NeedNewSource,
}

impl ReenactPlan {
    /// `(source_id, weight)` pairs; empty for `NeedNewSource`.
    pub fn weights(&self) -> Vec<(u32, f64)> {
        match *self {
            ReenactPlan::Interior { sources } => sources.to_vec(),
            ReenactPlan::SingleSource { source_id } => vec![(source_id, 1.0)],
            ReenactPlan::NeedNewSource => Vec::new(),
        }
    }
}

/// Result of [`SourcePool::add_source`].
#[derive(Debug, Clone)]
pub enum AddOutcome {
    Added {
        pool: SourcePool,
        source_id: u32,
    },
    /// The pose is closer than the threshold to an existing entry.
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourcePool {
    entries: Vec<Arc<SourceEntry>>,
    mesh: TriMesh,
    threshold: f64,
    next_id: u32,
}

impl SourcePool {
    pub fn new(threshold: f64) -> Result<Self, PoolError> {
        if !threshold.is_finite() || threshold <= 0.0 {
            return Err(PoolError::InvalidThreshold(threshold));
        }
        Ok(SourcePool {
            entries: Vec::new(),
            mesh: TriMesh::default(),
            threshold,
            next_id: 0,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &SourceEntry> {
        self.entries.iter().map(|e| e.as_ref())
    }

    pub fn entry(&self, source_id: u32) -> Option<&SourceEntry> {
        // ids are assigned in insertion order
        self.entries
            .binary_search_by_key(&source_id, |e| e.source_id)
            .ok()
            .map(|i| self.entries[i].as_ref())
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    /// Distance from `p` to the closest entry and that entry's id.
    pub fn nearest(&self, p: AngularPoint) -> Option<(u32, f64)> {
        let mut best: Option<(u32, f64)> = None;
        for e in &self.entries {
            let d = angular_distance(p, e.point);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((e.source_id, d));
            }
        }
        best
    }

    /// Decides how the face for `pose` is produced.
    pub fn classify(&self, pose: &EulerPose) -> ReenactPlan {
        let p = AngularPoint::new(pose.yaw, pose.pitch);
        let Some((nearest, dist)) = self.nearest(p) else {
            return ReenactPlan::NeedNewSource;
        };
        if !(dist <= self.threshold) {
            return ReenactPlan::NeedNewSource;
        }
        if let Ok(Location::Interior { triangle }) = locate(&self.mesh, p) {
            if let Ok(w) = barycentric(self.mesh.triangle_points(triangle), p) {
                let ids = self.mesh.triangle_ids(triangle);
                return ReenactPlan::Interior {
                    sources: [(ids[0], w.weights[0]), (ids[1], w.weights[1]), (ids[2], w.weights[2])],
                };
            }
        }
        ReenactPlan::SingleSource { source_id: nearest }
    }

    /// Stores a new source if its pose is at least the threshold away from
    /// every entry, rebuilding the mesh.
    pub fn add_source(
        &self,
        face_crop: FacePatch,
        landmarks: Option<Landmarks>,
        pose: EulerPose,
    ) -> Result<AddOutcome, PoolError> {
        let point = project_pose(&pose)?;
        if let Some((_, d)) = self.nearest(point) {
            if d < self.threshold {
                return Ok(AddOutcome::Rejected);
            }
        }
        let source_id = self.next_id;
        let mut entries = self.entries.clone();
        entries.push(Arc::new(SourceEntry {
            source_id,
            face_crop,
            landmarks,
            pose,
            point,
        }));
        let points: Vec<_> = entries.iter().map(|e| (e.source_id, e.point)).collect();
        let mesh = delaunay(&points)?;
        Ok(AddOutcome::Added {
            pool: SourcePool {
                entries,
                mesh,
                threshold: self.threshold,
                next_id: source_id + 1,
            },
            source_id,
        })
    }

    /// Order-sensitive 64-bit digest of the `(source_id, quantized pose)` sequence.
    pub fn digest(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(DIGEST_TAG);
        for e in &self.entries {
            let q = e.pose.quantize();
            h.update(e.source_id.to_be_bytes());
            h.update(q.yaw.to_be_bytes());
            h.update(q.pitch.to_be_bytes());
            h.update(q.roll.to_be_bytes());
        }
        let out = h.finalize();
        u64::from_be_bytes(out[..8].try_into().expect("sha-256 output is 32 bytes"))
    }
}

/// Free-function form of [`SourcePool::digest`].
pub fn pool_digest(pool: &SourcePool) -> u64 {
    pool.digest()
}
