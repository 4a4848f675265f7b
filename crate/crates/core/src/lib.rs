pub mod blocks;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod networks;
pub mod objectives;
pub mod toydata;

pub use error::{Result, SmisError};
