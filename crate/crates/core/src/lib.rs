pub mod bound;
pub mod density;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod io;
pub mod malliavin;
pub mod mc;
pub mod numerics;
pub mod sde;
pub mod stein;

pub use error::{Error, Result};
