pub mod cli;
pub mod config;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod linearize;
pub mod lmi;
pub mod sdp;
pub mod sim;
pub mod synthesis;
pub mod taskspace;
pub mod verify;

pub use error::{Error, Result};
