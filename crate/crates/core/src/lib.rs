pub mod analysis;
pub mod archive;
pub mod cli;
pub mod error;
pub mod forward;
pub mod model;
pub mod quant;
pub mod rans;
pub mod search;
pub mod toy;
