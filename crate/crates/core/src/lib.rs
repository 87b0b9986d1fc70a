pub mod dsl;
pub mod geometry;
pub mod tools;
pub mod executor;
pub mod sandbox;
pub mod registry;
pub mod llm;
pub mod reference;
pub mod harness;
pub mod synthesis;
