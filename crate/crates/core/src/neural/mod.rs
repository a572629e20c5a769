//! Dense networks, reverse-mode differentiation, Adam and Gaussian policy
//! heads. Everything runs in double precision.

mod adam;
mod checkpoint;
mod gaussian;
mod matrix;
mod mlp;
mod tape;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, NetworkRecord, VectorRecord, CHECKPOINT_VERSION};
pub use gaussian::{
    diag_gaussian_entropy, diag_gaussian_log_prob, log_prob_on_tape, squash_with_noise, squashed_on_tape,
    squashed_sample_and_log_prob, standard_normal, LOG_STD_MAX, LOG_STD_MIN, SQUASH_EPS,
};
pub use matrix::Matrix;
pub use mlp::{mlp_forward, Activation, Grad, LayerLayout, MlpParams, MlpSpec, MlpVars};
pub use tape::{Gradients, Tape, Var};

/// Clips the joint L2 norm of `grads` to `max_norm`; returns the norm before
/// clipping.
pub fn clip_grad_norm(grads: &mut [&mut Grad], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
    if norm > max_norm {
        let c = max_norm / (norm + 1e-6);
        for g in grads.iter_mut() {
            g.scale(c);
        }
    }
    norm
}
