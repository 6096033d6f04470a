//! Linear-attention driving pipeline on RWKV-7 blocks.
//!
//! * [`rwkv7`] — one RWKV-7 block: element projections, the delta-rule state
//!   recurrence in sequential and chunk-parallel form, time and channel mixing.
//! * [`lica`] — linear cross-attention by sequence concatenation.
//! * [`fusion`] — multi-frame camera/LiDAR token fusion with constant-memory
//!   streaming, BEV assembly and feature state dropout.
//! * [`decoder`] — truncated-diffusion trajectory decoder and anchor clustering.
//! * [`pdms`] — planning sub-scores over synthetic scenes and the PDMS aggregate.
//! * [`harness`] — softmax baseline, synthetic generators, scaling benchmark and
//!   the oracle-equivalence suite.

pub mod decoder;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod lica;
pub mod pdms;
pub mod rwkv7;
pub mod tensor;

pub use error::{LadyError, Result};
pub use tensor::Real;
