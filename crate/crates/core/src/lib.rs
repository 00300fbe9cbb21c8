//! Camera extrinsic calibration by incremental structure from motion:
//! minimal solvers, robust estimation, triangulation, bundle adjustment,
//! ground-truth evaluation and the file formats around them.

// `!(x > 0.0)` is used on purpose so NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ba;
pub mod cli;
pub mod eval;
pub mod five_point;
pub mod formats;
pub mod geom;
pub mod matching;
pub mod p3p;
pub mod pipeline;
pub mod poly;
pub mod robust;
pub mod selftest;
pub mod synth;
pub mod triangulate;
