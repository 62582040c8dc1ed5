//! Simulated tactile probing of posed objects buried below the `z = 0` surface.

mod mesh;
mod probe;
mod raycast;
mod scene;
mod vec3;

pub use mesh::{
    build_object_set, ObjectKind, TriangleMesh, CUBOID_HALF_WIDTH, CUBOID_HEIGHT,
    CYLINDER_HALF_LENGTH, CYLINDER_RADIUS, CYLINDER_SEGMENTS, HEMISPHERE_RADIUS,
    PRISM_HALF_WIDTH, PRISM_HEIGHT,
};
pub use probe::{action_to_probe, CollectedPoint, ProbeRequest};
pub use raycast::{intersect_triangle, ray_cast};
pub use scene::{Scene, SimConfig, Simulator, Split};
pub use vec3::{Mat3, Vec3};

/// Number of object categories.
pub const NUM_OBJECTS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("object id {0} out of range")]
    UnknownObject(usize),
    #[error("rotation {axis} = {value} outside [-{limit}, {limit}] degrees")]
    RotationOutOfRange { axis: char, value: f64, limit: f64 },
    #[error("pose leaves the workspace: {0}")]
    PoseOutOfWorkspace(String),
    #[error("no valid pose found after {0} attempts")]
    SamplingExhausted(usize),
    #[error("action component {index} = {value} outside [-1, 1]")]
    InvalidAction { index: usize, value: f64 },
    #[error("probe direction has near-zero length")]
    DegenerateDirection,
    #[error("obj line {line}: {msg}")]
    ObjParse { line: usize, msg: String },
    #[error("scene record: {0}")]
    SceneParse(String),
}
