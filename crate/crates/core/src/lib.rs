pub mod bounds;
pub mod cheb;
pub mod density;
pub mod error;
pub mod exponent;
pub mod model;
pub mod presets;
pub mod profile;
pub mod quad;
pub mod radial;
pub mod registry;
pub mod simulate;
pub mod spec_file;
pub mod spectral;

pub use error::{Error, Result};
