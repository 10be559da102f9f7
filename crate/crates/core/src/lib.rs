// Index loops read closer to the matrix algebra; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod error;
pub mod gp;
pub mod io;
pub mod kernel;
pub(crate) mod linalg;
pub mod pipeline;
pub mod projection;
pub mod rate;
pub mod simdata;
