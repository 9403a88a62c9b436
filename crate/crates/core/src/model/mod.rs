//! Recurrent image-to-trajectory predictors.
//!
//! The encoder input is the stack of observed frames with the per-pixel mean
//! of the `T0` context frames subtracted, which cancels the static bowl and
//! leaves the moving ball. An encoder maps that stack to a latent state `h = (s, p)`: a
//! feature tensor `s` and an incremental vector `p` whose first two entries
//! are the predicted pixel position. The transition updates
//! `s ← φ_s(s)` with two same-padded convolutions and `p ← p + φ_p(s)` with a
//! linear map, and the decoder simply reads `p`.

mod config;
mod network;
mod symmetry;

pub use config::{ModelConfig, Variant, WeightInit};
pub use network::{
    build_covariance, decode_state, encode_frames, encoder_input, interp_encode, loss_and_gradients, predict, rollout,
    stack_frames, transition_step, GaussianBelief, LatentState, Prediction, SequenceTargets, TapeLoss,
    TrainingLoss,
};
pub use symmetry::Symmetry;
pub use network::{init_params, record_encoder, record_loss, record_rollout, record_transition};
