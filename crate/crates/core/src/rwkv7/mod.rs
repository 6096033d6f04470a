//! RWKV-7 block with a delta-rule recurrent state.

mod block;
mod elements;
mod mixing;
mod ops;
mod params;
mod recurrence;
mod state;

pub use block::{block_forward, BlockRun, Mode, RwkvStack};
pub use elements::{decay_scale, project_elements, ElementSet};
pub use mixing::{channel_mix, time_mix_output};
pub use ops::{lerp, loramlp, Activation, Lora};
pub use params::{BlockConfig, BlockSnapshot, LoraRanks, NamedTensor, ParamSnapshot, RwkvBlockParams, NORM_EPS};
pub use recurrence::{chunk_forward, decay_matrix, state_step, ChunkMatrices, KAPPA_EPS};
pub use state::{LayerSnapshot, LayerState, RecurrentState, StateSnapshot};

/// Lower bound of every decay component, `exp(-exp(-0.5))`.
pub fn decay_floor() -> f64 {
    (-(-0.5f64).exp()).exp()
}
