//! Memory models that store object classes as latent Gaussian distributions.
//!
//! The crate has two memory layers. A short-term memory keeps one bounded
//! FIFO queue per object class and samples batches uniformly over classes,
//! which neutralizes class imbalance in the input stream. A long-term memory
//! is a small VAE trained from those batches; it comes in two flavors:
//!
//! * [`long_term::Variant::TypeA`] — a conditional VAE. Class one-hot keys
//!   are fed to both the posterior and the decoder, and recall samples
//!   `z ~ N(0, I)` with the requested class as condition.
//! * [`long_term::Variant::TypeB`] — an unconditional VAE whose posterior is
//!   pulled toward a per-class prior `N(lambda1 * e_i, I)` (a scaled,
//!   zero-padded one-hot mean). Recall samples from the class prior, and the
//!   posterior mean doubles as a recognizer.
//!
//! Everything runs on a self-contained f64 tensor core with a reverse-mode
//! tape, Adam, and a splitmix64 RNG, so results are bit-reproducible across
//! platforms. Data sources (a 16-state corridor gridworld with tabular
//! Q-learning, IDX image files, and synthetic shapes) live in [`envs`];
//! training, evaluation and the binary checkpoint container in [`trainer`]
//! and [`checkpoint`].

pub mod checkpoint;
pub mod envs;
mod error;
pub mod long_term;
pub mod pgm;
pub mod short_term;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Rng, Tensor};
