//! Energy-efficiency objective recorded on a tape.

use std::f64::consts::{LN_2, PI};

use crate::diffkit::{Tape, Tensor, Var};
use crate::error::Result;
use crate::model::{energy_efficiency, Solution, SystemConfig, UserLayout};

/// Distances from one user to every antenna, `N × 1`.
pub fn distances_on_tape(tape: &mut Tape, cfg: &SystemConfig, user: &[f64; 3], x: Var) -> Var {
    let dx = tape.offset_scalar(x, -user[0]);
    let dx2 = tape.square(dx);
    let dz = user[2] - cfg.height_m;
    let d2 = tape.offset_scalar(dx2, user[1] * user[1] + dz * dz);
    tape.sqrt(d2)
}

/// Edge matrix `M × N` of distances divided by `length_scale`.
pub fn edges_on_tape(tape: &mut Tape, cfg: &SystemConfig, layout: &UserLayout, x: Var, length_scale: f64) -> Var {
    let rows: Vec<Var> = layout
        .positions
        .iter()
        .map(|u| {
            let d = distances_on_tape(tape, cfg, u, x);
            tape.transpose(d)
        })
        .collect();
    let e = tape.concat_rows(&rows);
    tape.scale(e, 1.0 / length_scale)
}

fn waveguide_phase_on_tape(tape: &mut Tape, cfg: &SystemConfig, guided_wavelength: f64, x: Var) -> Var {
    let [fx, fy, fz] = cfg.feed_point_m;
    let k = 2.0 * PI / guided_wavelength;
    let dz = cfg.height_m - fz;
    if fy == 0.0 && dz == 0.0 {
        // Antennas never sit behind the feed point, so the distance is x - x_feed.
        let along = tape.offset_scalar(x, -fx);
        tape.scale(along, k)
    } else {
        let dx = tape.offset_scalar(x, -fx);
        let dx2 = tape.square(dx);
        let d2 = tape.offset_scalar(dx2, fy * fy + dz * dz);
        let d = tape.sqrt(d2);
        tape.scale(d, k)
    }
}

/// Sum of per-user rates (bit/s/Hz) for positions `x` (m) and powers `p` (W).
pub fn sum_rate_on_tape(
    tape: &mut Tape,
    cfg: &SystemConfig,
    layout: &UserLayout,
    x: Var,
    p: Var,
) -> Result<Var> {
    let consts = cfg.derived()?;
    let theta = waveguide_phase_on_tape(tape, cfg, consts.guided_wavelength, x);
    let sqrt_p = tape.sqrt(p);
    let amp_num = tape.scale(sqrt_p, consts.eta.sqrt());
    let mut rates = Vec::with_capacity(layout.len());
    for u in &layout.positions {
        let d = distances_on_tape(tape, cfg, u, x);
        let free = tape.scale(d, 2.0 * PI / consts.wavelength);
        let phase = tape.add(free, theta);
        let amp = tape.div(amp_num, d);
        let c = tape.cos(phase);
        let s = tape.sin(phase);
        let re_terms = tape.mul(amp, c);
        let im_terms = tape.mul(amp, s);
        let re = tape.sum(re_terms);
        let im = tape.sum(im_terms);
        let re2 = tape.square(re);
        let im2 = tape.square(im);
        let power = tape.add(re2, im2);
        let snr = tape.scale(power, 1.0 / cfg.noise_power_w);
        let one_plus = tape.offset_scalar(snr, 1.0);
        let ln = tape.ln(one_plus);
        rates.push(tape.scale(ln, 1.0 / LN_2));
    }
    let all = tape.concat_rows(&rates);
    Ok(tape.sum(all))
}

/// Training loss `-(Σ_m R_m) / (Σ_n p_n + P_C)`, i.e. minus the energy
/// efficiency with a unit slot.
pub fn loss_on_tape(tape: &mut Tape, cfg: &SystemConfig, layout: &UserLayout, x: Var, p: Var) -> Result<Var> {
    tape.stage("loss");
    let sum_rate = sum_rate_on_tape(tape, cfg, layout, x, p)?;
    let total_p = tape.sum(p);
    let denom = tape.offset_scalar(total_p, cfg.static_power_w);
    let ee = tape.div(sum_rate, denom);
    Ok(tape.scale(ee, -1.0))
}

/// Unsupervised loss of a concrete solution.
pub fn unsupervised_loss(cfg: &SystemConfig, layout: &UserLayout, sol: &Solution) -> Result<f64> {
    Ok(-energy_efficiency(cfg, layout, sol)? / cfg.slot_length)
}

/// Evaluates [`loss_on_tape`] for a fixed solution (no parameters involved).
pub fn loss_of_solution_on_tape(cfg: &SystemConfig, layout: &UserLayout, sol: &Solution) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::column(sol.placement.x.clone()));
    let p = tape.constant(Tensor::column(sol.power.p.clone()));
    let l = loss_on_tape(&mut tape, cfg, layout, x, p)?;
    Ok(tape.scalar(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AntennaPlacement, PowerAllocation};

    #[test]
    fn tape_loss_matches_model() {
        let cfg = SystemConfig::standard(3, 2);
        let layout = UserLayout::from_xy(&[(12.5, -40.0), (-70.0, 3.0)]);
        let sol = Solution {
            placement: AntennaPlacement { x: vec![-60.0, 0.3, 55.0] },
            power: PowerAllocation { p: vec![0.1, 0.05, 0.4] },
        };
        let a = unsupervised_loss(&cfg, &layout, &sol).unwrap();
        let b = loss_of_solution_on_tape(&cfg, &layout, &sol).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn zero_power_loss_is_zero() {
        let cfg = SystemConfig::standard(2, 1);
        let layout = UserLayout::from_xy(&[(1.0, 2.0)]);
        let sol = Solution {
            placement: AntennaPlacement { x: vec![-1.0, 1.0] },
            power: PowerAllocation { p: vec![0.0, 0.0] },
        };
        assert_eq!(unsupervised_loss(&cfg, &layout, &sol).unwrap(), 0.0);
        assert_eq!(loss_of_solution_on_tape(&cfg, &layout, &sol).unwrap(), 0.0);
    }
}
