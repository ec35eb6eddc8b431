//! Matrix-free nonlinear MPC for a multirotor flying among obstacles.
//!
//! The optimal control problem is posed by single shooting over a box of
//! inputs and solved with PANOC, an accelerated proximal-gradient method that
//! only needs cost and gradient evaluations. Obstacles enter the cost through
//! a smooth exterior penalty.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod export;
pub mod obstacle;
pub mod ocp;
pub mod panoc;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
