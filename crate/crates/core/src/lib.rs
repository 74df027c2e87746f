pub mod context;
pub mod error;
pub mod eval;
pub mod genreform;
pub mod index;
pub mod pipeline;
pub mod prf;
pub mod textproc;
pub mod weak;

pub use error::{Error, Result};
