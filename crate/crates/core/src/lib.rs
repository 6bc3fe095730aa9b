//! Transparent-object grasping pipeline on synthetic desk scenes.
//!
//! The stages, in order: fit a volumetric density field to rays through an
//! analytic scene ([`field`]), extract transparent-band points, find the desk
//! plane and object instances ([`segmentation`]), estimate plane-relative
//! poses and scale ([`pose`]), complete partial shapes with a latent SDF
//! decoder trained on the procedural family ([`completion`]), and score
//! antipodal parallel-jaw grasps before/after completion ([`grasp`]).
//! [`scenegen`] provides ground truth for every stage.

pub mod cloud;
pub mod completion;
pub mod error;
pub mod field;
pub mod grasp;
pub mod math;
pub mod mesh;
pub mod metrics;
pub mod optim;
pub mod ply;
pub mod pose;
pub mod scenegen;
pub mod segmentation;
pub mod shapes;

pub use cloud::{Plane, PointCloud};
pub use error::{Error, Result};
pub use math::{Aabb, Vec2, Vec3};
pub use mesh::TriangleMesh;
pub use pose::ObjectPose;
pub use shapes::{SdfSample, ShapeKind, ShapeSpec};
