//! Projective geometric algebra G(3,0,1): blades, product, grades, embeddings
//! of geometric objects, and the E(3) action through versors.

pub mod blade;
mod cayley;
mod embed;
mod multivector;
mod versor;

pub use cayley::{build_cayley_table, cayley, BladeProduct, CayleyTable, ProductTerm};
pub use embed::{
    direction_to_grade1, embed, embed_point, embed_translation, extract_point, extract_point_with_tolerance,
    grade1_to_direction, GeometricObject, Vec3, POINT_TOLERANCE,
};
pub use multivector::{e0_left, geometric_product, grade_project, inv_inner, inv_norm_sq, reverse, Multivector};
pub use versor::{apply_versor, dot3, matvec3, norm3, quaternion_matrix, random_rigid_motion, RigidMotion, Versor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PgaError {
    #[error("Cayley table construction failed: {0}")]
    TableConstruction(String),
    #[error("grade {0} is outside 0..=4")]
    Grade(usize),
    #[error("plane normal must be nonzero")]
    ZeroNormal,
    #[error("degenerate point: |x123| = {weight:e} is at or below tolerance (point at infinity)")]
    PointAtInfinity { weight: f64 },
    #[error("versor is not invertible")]
    NonInvertibleVersor,
    #[error("expected {expected} values, found {found}")]
    Length { expected: usize, found: usize },
}
