pub mod bitmatrix;
pub mod channel;
pub mod construction;
pub mod decoders;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod gf;
pub mod representation;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
