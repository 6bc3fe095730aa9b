use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("invalid shape parameters: {0}")]
    InvalidShape(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("point {0:?} outside field bounding box")]
    OutOfBounds(crate::math::Vec3),
    #[error("no dominant plane (best inlier fraction {found:.3} < required {required:.3})")]
    NoDominantPlane { found: f64, required: f64 },
    #[error("flat cluster: no extent above the plane")]
    FlatCluster,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("degradation removed every point")]
    DegradedToNothing,
    #[error("optimization diverged: {0}")]
    Diverged(String),
    #[error("partial cloud does not fit the shape prior (mean |sdf| {residual:.4} > tolerance {tolerance:.4})")]
    PriorMismatch { residual: f64, tolerance: f64 },
    #[error("isosurface extraction produced no geometry")]
    EmptyIsosurface,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u32),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
