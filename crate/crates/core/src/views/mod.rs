//! View construction: aligned augmentation pairs, tripartite patch masks,
//! patch flattening, and assembly of the sparse student and teacher token
//! sequences.

pub mod assemble;
pub mod augment;
pub mod patches;
pub mod trimask;

pub use assemble::{
    assemble_student, assemble_student_backward, assemble_teacher, StudentAssembly,
};
pub use augment::{
    apply_color, apply_spatial, make_view_pair, sample_color, sample_spatial, ColorOp,
    ColorParams, SpatialPair, SpatialParams, ViewPair,
};
pub use patches::{patchify, unpatchify};
pub use trimask::{sample_trimask, MaskRatios, TriMask};
