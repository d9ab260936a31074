mod config;
mod eval;
mod run;

pub use config::*;
pub use eval::*;
pub use run::*;
