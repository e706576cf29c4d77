//! Estimation of the difference between two functional graphical models.
//!
//! Curves are projected onto a finite basis, reduced with FPCA on a pooled
//! kernel, and the change in conditional dependence is recovered either
//! directly ([`fudge`]) or through a joint graphical lasso ([`jfgl`]).

pub mod curvefit;
pub mod error;
pub mod fpca;
pub mod fudge;
pub mod funcbasis;
pub mod jfgl;
pub mod linalg;
pub mod simgen;
pub mod tuneval;

pub use error::{Error, Result};
