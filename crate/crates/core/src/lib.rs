pub mod collimation;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod interval;
pub mod logic;
pub mod operator;
pub mod optimize;
pub mod qr;
pub mod state;

pub use error::{QrError, Result};
