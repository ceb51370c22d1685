//! Exterior algebra on a single inner-product space: forms, frames,
//! evaluation, Hodge duality and the canonical form of a simple vector.

mod basis;
mod canonical;
mod form;
mod frame;
mod metric;

pub use basis::{binomial, index_basis, shuffle_sign, IndexBasis, MAX_DIM};
pub use canonical::{canonical_frame, CanonicalFrame, ANGLE_CUTOFF};
pub use form::{eval, hodge_star, hodge_star_orthonormal, wedge, AltForm, FORM_EQ_TOL};
pub use frame::{
    gram_norm, is_degenerate_norm, random_frame, random_frame_with, Frame, DEGENERATE_NORM,
};
pub use frame::orthonormal_factor;
pub use metric::MetricPoint;
