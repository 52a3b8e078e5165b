//! Head-pose geometry: Euler poses, their (yaw, pitch) projection and the
//! triangulated angular domain used to pick reenactment sources.

mod mesh;
mod pose;

pub use mesh::{
    barycentric, circumcircle, delaunay, in_circumcircle, locate, orient, signed_area, BarycentricWeights, Location,
    TriMesh, VertexId, AREA_EPSILON, CIRCUMCIRCLE_EPSILON, DEGENERACY_EPSILON, WEIGHT_EPSILON,
};
pub use pose::{angular_distance, project_pose, thin_points, AngularPoint, EulerPose, QuantizedPose};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid pose {0:?}: angles must be finite and within ±180°")]
    InvalidPose(EulerPose),
    #[error("distance threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinitePoint(VertexId),
    #[error("duplicate vertex id {0}")]
    DuplicateVertex(VertexId),
    #[error("vertices {0} and {1} are closer than the degeneracy tolerance")]
    PointsTooClose(VertexId, VertexId),
    #[error("degenerate triangle")]
    DegenerateTriangle,
    #[error("triangulation failed on a degenerate configuration")]
    Degenerate,
    #[error("mesh has no vertices")]
    EmptyMesh,
}
