//! Semi-implicit time stepping for the 2D grade-two MHD system on a staggered
//! rectangular grid, with a running energy ledger that audits the discrete
//! energy identity and a priori bounds step by step.

pub mod cli;
pub mod error;
pub mod estimates;
pub mod fields;
pub mod grid;
pub mod linsolve;
pub mod mms;
pub mod subproblems;
pub mod timestepper;

pub use error::{Error, Result};
pub use fields::{CellField, Field, NodeField, VectorField};
pub use grid::{Grid, Layout};
