//! Train a speaker/listener model on a referring-expression game and probe
//! its message vectors with truth-conditional meaning tables.

pub mod cli;
pub mod logic;
pub mod meaning;
pub mod net;
pub mod probe;
pub mod scene;
pub mod seeds;
