pub mod attrfeat;
pub mod classify;
pub mod cli;
pub mod error;
pub mod graph;
pub mod posenc;
pub mod sparse;
pub mod structural;
pub mod tabularize;

pub use error::{Error, Result};
