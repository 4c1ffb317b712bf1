pub mod cli;
pub mod harness;
pub mod render;
pub mod report;

pub use cli::cli_main;
