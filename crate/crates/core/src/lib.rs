// coefficient tables keep their published digits; `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod mixture_oracle;
pub mod predict;
pub mod quadrature;
pub mod randfield;
pub mod rng;
pub mod scenarios;
pub mod specfun;
