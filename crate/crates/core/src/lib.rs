//! Learnable spectral probing of contextual embedding sequences.
//!
//! Each embedding dimension is treated as a signal over token positions and
//! moved into the frequency domain with an orthonormal DCT. A per-frequency
//! filter (none, a fixed band, or a learned sigmoid mask) is applied, the
//! result is transformed back, and a linear softmax probe classifies every
//! position. The learned mask is the model's spectral profile, which can be
//! exported and compared across tasks and languages.
//!
//! ```
//! use spectral_probe::spectral::{dct2, idct2};
//!
//! let x = [1.0, 2.0, 3.0, 4.0];
//! let back = idct2(&dct2(&x).unwrap()).unwrap();
//! assert!(x.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-12));
//! ```

pub mod analysis;
pub mod data;
pub mod error;
pub mod filters;
pub mod probe;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};
pub use filters::{FilterBand, SpectralFilter, DEFAULT_FILTER_LEN};
pub use probe::{evaluate, EvalMetrics, LinearProbe, ModelMeta, ProbeMode, ProbeModel};
pub use training::{train, ModeSpec, TrainConfig, TrainReport, DEFAULT_SEEDS};
