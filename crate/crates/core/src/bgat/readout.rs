//! Feasibility readouts: budget scaling, interval-to-position mapping and
//! the two readout heads that turn antenna embeddings into a placement and a
//! power allocation.

use crate::diffkit::layers::MlpVars;
use crate::diffkit::{budget_scale, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{AntennaPlacement, SystemConfig};

/// `v · budget / max(budget, Σv)`. Output sum never exceeds `budget` and the
/// map is the identity when the budget is already met.
pub fn scale_to_budget(v: &[f64], budget: f64) -> Vec<f64> {
    budget_scale(v, budget)
}

/// Antenna coordinates from non-negative intervals:
/// `x_1 = δ_1 - D`, `x_n = x_{n-1} + δ_n + Δ`.
///
/// With `Σδ <= B_max` the result satisfies the spacing and range
/// constraints. Rounding is repaired at the ulp level so the constraints also
/// hold exactly in floating point.
pub fn positions_from_deltas(deltas: &[f64], cfg: &SystemConfig) -> Result<AntennaPlacement> {
    if deltas.len() != cfg.n_antennas {
        return Err(Error::Shape(format!(
            "{} intervals for {} antennas",
            deltas.len(),
            cfg.n_antennas
        )));
    }
    let d = cfg.waveguide_half_length_m;
    let guard = cfg.guard_distance_m;
    let mut x = Vec::with_capacity(deltas.len());
    for (n, &delta) in deltas.iter().enumerate() {
        if n == 0 {
            x.push(delta - d);
            continue;
        }
        let prev = x[n - 1];
        let mut xn = prev + delta + guard;
        while xn - prev < guard {
            xn = xn.next_up();
        }
        x.push(xn);
    }
    if let Some(last) = x.last_mut() {
        if *last > d {
            *last = d;
        }
    }
    for n in (0..x.len().saturating_sub(1)).rev() {
        let next = x[n + 1];
        if next - x[n] < guard {
            x[n] = x[n].min(next - guard);
            while next - x[n] < guard {
                x[n] = x[n].next_down();
            }
        }
    }
    Ok(AntennaPlacement { x })
}

/// Records [`positions_from_deltas`] on a tape. `deltas` is an `N × 1`
/// column in meters; the gradient is that of the exact recurrence.
pub fn positions_on_tape(tape: &mut Tape, deltas: Var, cfg: &SystemConfig) -> Result<Var> {
    let guard = cfg.guard_distance_m;
    let shifted = tape.offset_scalar(deltas, guard);
    let summed = tape.cumsum(shifted);
    let raw = tape.offset_scalar(summed, -cfg.waveguide_half_length_m - guard);
    let exact = positions_from_deltas(&tape.value(deltas).data, cfg)?;
    Ok(tape.pass_through(raw, Tensor::column(exact.x)))
}

/// Interval readout: `δ = scale(ReLU(MLP_δ(col)), B_max / L)` in normalized
/// units, then positions in meters. Returns `(δ normalized, x meters)`.
pub fn delta_readout(
    tape: &mut Tape,
    mlp: Option<&MlpVars>,
    input: Var,
    cfg: &SystemConfig,
    length_scale: f64,
) -> Result<(Var, Var)> {
    let slack = cfg.derived()?.slack_budget;
    let pre = match mlp {
        Some(m) => m.forward_vec(tape, input),
        None => input,
    };
    let nonneg = tape.relu(pre);
    let delta_norm = tape.budget_scale(nonneg, slack / length_scale);
    let delta_m = tape.scale(delta_norm, length_scale);
    let x = positions_on_tape(tape, delta_m, cfg)?;
    Ok((delta_norm, x))
}

/// Power readout: `p = scale(ReLU(MLP_p(col)), P_max / P_scale)` in
/// normalized units. Returns `(p normalized, p watts)`.
pub fn power_readout(
    tape: &mut Tape,
    mlp: Option<&MlpVars>,
    input: Var,
    cfg: &SystemConfig,
    power_scale: f64,
) -> (Var, Var) {
    let pre = match mlp {
        Some(m) => m.forward_vec(tape, input),
        None => input,
    };
    let nonneg = tape.relu(pre);
    let p_norm = tape.budget_scale(nonneg, cfg.power_budget_w / power_scale);
    let p = tape.scale(p_norm, power_scale);
    (p_norm, p)
}
