pub mod copulas;
pub mod error;
pub mod latent;
pub mod likelihood;
pub mod marginals;
pub mod measures;
pub mod mcmc;
pub mod numeric;
pub mod selection;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
