pub mod api;
pub mod augment;
pub mod dsp;
pub mod error;
pub mod filters;
pub mod io;
pub mod rng;
pub mod room;
pub mod theory;
pub mod vicinal;

pub use augment::{augment, AugmentConfig, AugmentRecord, Scheme, SnrRange};
pub use dsp::{FirFilter, Signal};
pub use error::{Error, Result};
pub use rng::RngState;
