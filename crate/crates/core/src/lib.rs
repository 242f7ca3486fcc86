//! Equivariant geometric-algebra transformer kernel for large surface and
//! volume meshes.

pub mod autodiff;
pub mod layers;
pub mod mesh;
pub mod model;
pub mod pga;
pub mod tokenizer;
pub mod verify;
