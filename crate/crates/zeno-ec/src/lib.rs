//! Goal-directed Event Calculus reasoning over dense rational time.
pub mod corpus;
pub mod engine;
pub mod ground;
pub mod incremental;
pub mod oracle;
pub mod output;
pub mod parser;
pub mod program;
pub mod rational;
pub mod runner;
pub mod store;
pub mod syntax;
pub mod zeno;
