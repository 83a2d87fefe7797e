//! Networks and their hand-written gradients.
//!
//! Layer primitives live in [`nn`], composed into attention ([`attention`]),
//! pre-norm blocks ([`block`]), the two-phase encoder ([`backbone`]), and the
//! projection head ([`heads`]). [`params`] owns the full parameter set and
//! the named-view listing everything else walks.

pub mod attention;
pub mod backbone;
pub mod block;
pub mod heads;
pub mod nn;
pub mod params;

pub use backbone::{
    cls_attention, embed_full, encode_student, encode_student_backward, encode_tokens,
    sample_drop_plan, DropPlan, StudentCache,
};
pub use heads::{projector_backward, projector_forward, ProjectorCache};
pub use params::{ModelParams, ProjectorParams};
