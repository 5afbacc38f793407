//! Multiple tensor decomposition for arbitrary-order tensors, its implicit
//! neural-representation variant, and the proximal alternating least squares
//! solver used for robust tensor completion and point-cloud upsampling.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, images and the
//! command-line front end live in the companion `mtensor` crate.
//!
//! Conventions shared by every module:
//!
//! * modes are 0-based (`0..order`);
//! * tensors are linearized first-index-fastest, see [`tensor`];
//! * all arithmetic is `f64`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

mod error;
pub mod imtd;
pub mod linalg;
pub(crate) mod math;
pub mod multiple;
pub mod neural;
pub mod pals;
pub mod pcu;
pub mod rtc;
pub mod tensor;

pub use error::{Error, Result};
pub use imtd::{CoordMap, ImtdGrad, ImtdModel};
pub use multiple::{ContractionEnv, MultipleFactors, RankBounds};
pub use neural::{AdamConfig, AdamState, LipschitzCert, Mlp, MlpConfig, MlpGrad};
pub use pals::{IterationRecord, PalsConfig, PalsOutcome, PalsState, TwoBlockProblem};
pub use tensor::{DenseTensor, Matrix};

/// Seeded generator used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Creates the crate's deterministic generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
