//! Minimal differentiable-computation kernel: dense tensors, a reverse-mode
//! tape, graph-attention and MLP layers, He initialization, Adam, and
//! finite-difference gradient checks. Everything runs in `f64`.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{check_gradient, relative_error, GradCheckReport};
pub use layers::{attention_scores, gat_layer_forward, mlp_forward, HeadSlots, MlpSlots};
pub use params::{he_init, ParamKind, ParamSet, ParamShapes, Slot};
pub use tape::{budget_scale, Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::Result;

/// Runs `forward` on a fresh tape and differentiates the returned scalar
/// with respect to every parameter.
///
/// Returns the loss and a gradient laid out like `params`. Any non-finite
/// intermediate fails with the stage label active when it was produced.
pub fn grad<F>(params: &ParamSet, forward: F) -> Result<(f64, ParamSet)>
where
    F: FnOnce(&mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = forward(&mut tape)?;
    tape.check_finite()?;
    let grads = tape.backward(loss);
    let flat = grads.flatten_params(&tape, params);
    Ok((tape.scalar(loss), params.with_values(flat)?))
}
