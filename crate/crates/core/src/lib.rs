pub mod error;
pub mod fields;
pub mod linalg;
pub mod cell;
pub mod signal;
pub mod fluid;
pub mod diagnostics;
pub mod testfn;
pub mod manufactured;
pub mod io;
pub mod trajectory;
pub mod weak;
pub mod config;
pub mod experiments;
