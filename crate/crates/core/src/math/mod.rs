//! Numeric building blocks: complex values, the autodiff tape, and Adam.

pub mod adam;
pub mod complex;
pub mod tape;

pub use adam::{adam_step, adam_step_in_place, AdamState};
pub use complex::{hermitian_quadratic, inner_product, CMatrix, Cx};
pub use tape::{min_all, sum, Real, Tape, Var};
