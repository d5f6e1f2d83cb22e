pub mod error;
pub mod kl;
pub mod numerics;
pub mod process;
pub mod quantizer;
