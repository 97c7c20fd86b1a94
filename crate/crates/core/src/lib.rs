pub mod channel;
pub mod coding;
pub mod crng;
pub mod error;
pub mod factor_graph;
pub mod gf;
pub mod hash;
pub mod linear;
pub mod lossy;
pub mod models;
pub mod stats;

pub use error::{Error, Result};
pub use gf::{Field, FieldElement, Symbol};
