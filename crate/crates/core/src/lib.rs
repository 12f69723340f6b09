//! Compiler, reference simulator, engine and runtime for virtualized
//! Verilog programs.

pub mod bisim;
pub mod checkpoint;
pub mod corpus;
pub mod comb;
pub mod engine;
pub mod error;
pub mod frontend;
pub mod fuzz;
pub mod host;
pub mod interp;
pub mod ops;
pub mod program;
pub mod runtime;
pub mod stimulus;
pub mod store;
pub mod transform;
pub mod value;

pub use error::{Error, Result};
pub use frontend::Diagnostic;
pub use program::Program;
pub use value::Value;
