//! Physical model of a single-waveguide pinching-antenna downlink.
//!
//! Antennas sit on a waveguide running along the x axis at height `H`, fed
//! from `[-D, 0, H]`. Users sit on the ground plane. Every user is served in
//! its own TDMA slot, so the per-user rate has no interference term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// All physical and problem constants. Lengths in meters, powers in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_antennas: usize,
    pub n_users: usize,
    /// User coordinates are drawn from `[-L, L]` per axis.
    pub half_range_m: f64,
    pub waveguide_half_length_m: f64,
    pub height_m: f64,
    pub carrier_freq_hz: f64,
    pub refractive_index: f64,
    pub noise_power_w: f64,
    pub power_budget_w: f64,
    pub guard_distance_m: f64,
    pub static_power_w: f64,
    pub slot_length: f64,
    pub feed_point_m: [f64; 3],
}

impl SystemConfig {
    /// Simulation defaults: L = D = 100 m, H = 5 m, 6 GHz, n_neff = 1.4,
    /// -90 dBm noise, 30 dBm budget, guard distance of half a wavelength,
    /// P_C = 0.5 W and a unit slot.
    pub fn standard(n_antennas: usize, n_users: usize) -> Self {
        let carrier_freq_hz = 6e9;
        let half_range_m = 100.0;
        let height_m = 5.0;
        let wavelength = SPEED_OF_LIGHT / carrier_freq_hz;
        Self {
            n_antennas,
            n_users,
            half_range_m,
            waveguide_half_length_m: half_range_m,
            height_m,
            carrier_freq_hz,
            refractive_index: 1.4,
            noise_power_w: dbm_to_watts(-90.0),
            power_budget_w: dbm_to_watts(30.0),
            guard_distance_m: wavelength / 2.0,
            static_power_w: 0.5,
            slot_length: 1.0,
            feed_point_m: [-half_range_m, 0.0, height_m],
        }
    }

    /// Same configuration with a different user count.
    pub fn with_users(&self, n_users: usize) -> Self {
        Self {
            n_users,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("half_range_m", self.half_range_m),
            ("waveguide_half_length_m", self.waveguide_half_length_m),
            ("height_m", self.height_m),
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("refractive_index", self.refractive_index),
            ("noise_power_w", self.noise_power_w),
            ("power_budget_w", self.power_budget_w),
            ("guard_distance_m", self.guard_distance_m),
            ("slot_length", self.slot_length),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InfeasibleConfig(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if !(self.static_power_w >= 0.0 && self.static_power_w.is_finite()) {
            return Err(Error::InfeasibleConfig(format!(
                "static_power_w must be non-negative, got {}",
                self.static_power_w
            )));
        }
        if self.n_antennas == 0 {
            return Err(Error::InfeasibleConfig("n_antennas must be at least 1".into()));
        }
        self.derived().map(|_| ())
    }

    /// Wavelengths, path-loss constant and the total interval slack.
    pub fn derived(&self) -> Result<DerivedConstants> {
        let wavelength = SPEED_OF_LIGHT / self.carrier_freq_hz;
        let guided_wavelength = SPEED_OF_LIGHT / (self.carrier_freq_hz * self.refractive_index);
        let four_pi_f = 4.0 * std::f64::consts::PI * self.carrier_freq_hz;
        let eta = (SPEED_OF_LIGHT / four_pi_f).powi(2);
        let slack_budget = 2.0 * self.waveguide_half_length_m
            - (self.n_antennas as f64 - 1.0) * self.guard_distance_m;
        if slack_budget <= 0.0 {
            return Err(Error::InfeasibleConfig(format!(
                "no feasible placement: 2D - (N-1)Δ = {slack_budget:.6e} m"
            )));
        }
        Ok(DerivedConstants {
            wavelength,
            guided_wavelength,
            eta,
            slack_budget,
        })
    }

    /// Antenna position on the waveguide for a given x coordinate.
    pub fn antenna_position(&self, x: f64) -> [f64; 3] {
        [x, 0.0, self.height_m]
    }
}

/// Quantities derived from a [`SystemConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    /// Free-space wavelength λ = c / f_c.
    pub wavelength: f64,
    /// Guided wavelength λ_g = c / (f_c n_neff).
    pub guided_wavelength: f64,
    /// Path-loss constant η = c² / (4π f_c)².
    pub eta: f64,
    /// B_max = 2D - (N-1)Δ, the slack shared by all inter-antenna intervals.
    pub slack_budget: f64,
}

/// Free function form of [`SystemConfig::derived`].
pub fn derived_constants(cfg: &SystemConfig) -> Result<DerivedConstants> {
    cfg.derived()
}

/// Ground-plane user positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserLayout {
    pub positions: Vec<[f64; 3]>,
}

impl UserLayout {
    pub fn from_xy(xy: &[(f64, f64)]) -> Self {
        Self {
            positions: xy.iter().map(|&(x, y)| [x, y, 0.0]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Checks `|x| <= L`, `|y| <= L`, `z = 0` for every user.
    pub fn validate(&self, half_range: f64) -> Result<()> {
        for (m, u) in self.positions.iter().enumerate() {
            if u[0].abs() > half_range || u[1].abs() > half_range || u[2] != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "user {m} at {u:?} outside [-{half_range}, {half_range}]² × {{0}}"
                )));
            }
        }
        Ok(())
    }
}

/// Antenna x-coordinates along the waveguide, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaPlacement {
    pub x: Vec<f64>,
}

/// Per-antenna transmit power, watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p: Vec<f64>,
}

impl PowerAllocation {
    pub fn uniform(cfg: &SystemConfig) -> Self {
        Self {
            p: vec![cfg.power_budget_w / cfg.n_antennas as f64; cfg.n_antennas],
        }
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// Decision variables of the energy-efficiency problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub placement: AntennaPlacement,
    pub power: PowerAllocation,
}

/// In-waveguide phase accumulated from the feed point to an antenna at `x`.
///
/// The feed point shares `y = 0, z = H` with the antenna, so the distance is
/// `x + D`.
pub fn in_waveguide_phase(cfg: &SystemConfig, consts: &DerivedConstants, x: f64) -> f64 {
    let [fx, fy, fz] = cfg.feed_point_m;
    let dist = ((x - fx).powi(2) + fy.powi(2) + (cfg.height_m - fz).powi(2)).sqrt();
    2.0 * std::f64::consts::PI * dist / consts.guided_wavelength
}

/// Euclidean distance between a user and an antenna at `[x, 0, H]`.
pub fn user_antenna_distance(cfg: &SystemConfig, user: &[f64; 3], x: f64) -> f64 {
    let dx = user[0] - x;
    let dz = user[2] - cfg.height_m;
    (dx * dx + user[1] * user[1] + dz * dz).sqrt()
}

/// Error-free `a + b = s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Error-free `a · b = p + e`.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// `‖a - b‖` as an unevaluated sum `hi + lo` good to about 100 bits.
fn distance_dd(a: &[f64; 3], b: &[f64; 3]) -> (f64, f64) {
    let (mut hi, mut lo) = (0.0, 0.0);
    for k in 0..3 {
        let (d, de) = two_sum(a[k], -b[k]);
        let (sq, sqe) = two_prod(d, d);
        let (t, te) = two_sum(hi, sq);
        hi = t;
        lo += te + sqe + 2.0 * d * de;
    }
    let (hi, lo) = two_sum(hi, lo);
    let r = hi.sqrt();
    if r == 0.0 {
        return (0.0, 0.0);
    }
    (r, ((-r).mul_add(r, hi) + lo) / (2.0 * r))
}

/// `(hi + lo) / len` reduced modulo one into `[-1/2, 1/2]`.
fn cycles_mod_one(hi: f64, lo: f64, len: f64) -> f64 {
    let q = hi / len;
    // The remainder of a correctly rounded quotient is exact under FMA.
    let rem = (-q).mul_add(len, hi);
    let frac = q - q.round();
    frac + (rem + lo) / len
}

/// Total phase `2π‖u - ψ_n‖/λ + θ(x)` reduced to `[-π, π]`.
///
/// Raw phases reach ~10⁴ rad, where forming them in plain double precision
/// costs ~10⁻¹² rad; cycles are reduced before scaling by 2π instead.
fn total_phase(cfg: &SystemConfig, consts: &DerivedConstants, user: &[f64; 3], x: f64) -> f64 {
    let ant = cfg.antenna_position(x);
    let (d, dl) = distance_dd(user, &ant);
    let (g, gl) = distance_dd(&ant, &cfg.feed_point_m);
    let c = cycles_mod_one(d, dl, consts.wavelength) + cycles_mod_one(g, gl, consts.guided_wavelength);
    2.0 * std::f64::consts::PI * (c - c.round())
}

/// Free-space channel from an antenna at `x` to a user, as `(re, im)`.
pub fn channel_coefficient(
    cfg: &SystemConfig,
    consts: &DerivedConstants,
    user: &[f64; 3],
    x: f64,
) -> (f64, f64) {
    let ant = cfg.antenna_position(x);
    let (d, dl) = distance_dd(user, &ant);
    let phase = 2.0 * std::f64::consts::PI * cycles_mod_one(d, dl, consts.wavelength);
    let amp = consts.eta.sqrt() / d;
    (amp * phase.cos(), -amp * phase.sin())
}

/// Received signal power `|Σ_n √p_n h_n e^{-jθ_n}|²` for one user.
pub fn received_power(
    cfg: &SystemConfig,
    consts: &DerivedConstants,
    user: &[f64; 3],
    sol: &Solution,
) -> f64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (&x, &p) in sol.placement.x.iter().zip(&sol.power.p) {
        let d = user_antenna_distance(cfg, user, x);
        let phase = total_phase(cfg, consts, user, x);
        let amp = p.max(0.0).sqrt() * consts.eta.sqrt() / d;
        re += amp * phase.cos();
        im -= amp * phase.sin();
    }
    re * re + im * im
}

/// Achievable rate of one user in bit/s/Hz.
pub fn user_rate(
    cfg: &SystemConfig,
    consts: &DerivedConstants,
    user: &[f64; 3],
    sol: &Solution,
) -> f64 {
    (received_power(cfg, consts, user, sol) / cfg.noise_power_w).ln_1p() / std::f64::consts::LN_2
}

/// Sum rate over slots divided by total consumed power, bit/Hz/J.
pub fn energy_efficiency(cfg: &SystemConfig, layout: &UserLayout, sol: &Solution) -> Result<f64> {
    let consts = cfg.derived()?;
    let denom = sol.power.total() + cfg.static_power_w;
    if denom == 0.0 {
        return Err(Error::DivisionByZero("zero transmit power with P_C = 0"));
    }
    let sum_rate: f64 = layout
        .positions
        .iter()
        .map(|u| cfg.slot_length * user_rate(cfg, &consts, u, sol))
        .sum();
    Ok(sum_rate / denom)
}

/// Kind of constraint violated by a [`Solution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    PowerBudget,
    NegativePower,
    Spacing,
    OutOfRange,
    Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Antenna index, when the violation is attached to one.
    pub index: Option<usize>,
    /// How far past the limit the value is.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Checks the power budget, non-negativity, guard spacing and the waveguide
/// range. Boundaries are inclusive.
pub fn check_feasible(cfg: &SystemConfig, sol: &Solution, tol: f64) -> FeasibilityReport {
    let mut violations = Vec::new();
    let x = &sol.placement.x;
    let p = &sol.power.p;
    if x.len() != cfg.n_antennas || p.len() != cfg.n_antennas {
        violations.push(Violation {
            kind: ViolationKind::Shape,
            index: None,
            magnitude: (x.len().abs_diff(cfg.n_antennas) + p.len().abs_diff(cfg.n_antennas)) as f64,
        });
    }
    let total: f64 = p.iter().sum();
    if total > cfg.power_budget_w + tol {
        violations.push(Violation {
            kind: ViolationKind::PowerBudget,
            index: None,
            magnitude: total - cfg.power_budget_w,
        });
    }
    for (n, &pn) in p.iter().enumerate() {
        if pn < -tol || !pn.is_finite() {
            violations.push(Violation {
                kind: ViolationKind::NegativePower,
                index: Some(n),
                magnitude: -pn,
            });
        }
    }
    let d = cfg.waveguide_half_length_m;
    for (n, &xn) in x.iter().enumerate() {
        if xn.abs() > d + tol || !xn.is_finite() {
            violations.push(Violation {
                kind: ViolationKind::OutOfRange,
                index: Some(n),
                magnitude: xn.abs() - d,
            });
        }
        if n > 0 {
            let gap = xn - x[n - 1];
            if gap < cfg.guard_distance_m - tol {
                violations.push(Violation {
                    kind: ViolationKind::Spacing,
                    index: Some(n),
                    magnitude: cfg.guard_distance_m - gap,
                });
            }
        }
    }
    FeasibilityReport {
        ok: violations.is_empty(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg1() -> SystemConfig {
        let mut cfg = SystemConfig::standard(1, 1);
        cfg.noise_power_w = 1e-12;
        cfg
    }

    #[test]
    fn derived_constants_at_six_ghz() {
        let cfg = SystemConfig::standard(4, 2);
        let k = cfg.derived().unwrap();
        assert!((k.wavelength - 0.049_965).abs() < 5e-7);
        assert!((k.guided_wavelength - 0.035_690).abs() < 5e-7);
        assert!((k.eta - 1.580_953_793_65e-5).abs() / 1.58e-5 < 1e-10);
        assert!((k.slack_budget - 199.925).abs() < 1e-3);
        assert_eq!(k.slack_budget, 200.0 - 3.0 * k.wavelength / 2.0);
    }

    #[test]
    fn infeasible_guard_distance_rejected() {
        let mut cfg = SystemConfig::standard(3, 2);
        cfg.guard_distance_m = 100.0;
        assert!(matches!(cfg.derived(), Err(Error::InfeasibleConfig(_))));
    }

    #[test]
    fn waveguide_phase_examples() {
        let cfg = SystemConfig::standard(4, 2);
        let k = cfg.derived().unwrap();
        let d = cfg.waveguide_half_length_m;
        assert_eq!(in_waveguide_phase(&cfg, &k, -d), 0.0);
        let full = in_waveguide_phase(&cfg, &k, -d + k.guided_wavelength);
        assert!((full - 2.0 * PI).abs() < 1e-9);
        let quarter = in_waveguide_phase(&cfg, &k, -d + k.guided_wavelength / 4.0);
        assert!((quarter - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn channel_magnitude_and_distance_law() {
        let cfg = SystemConfig::standard(1, 1);
        let k = cfg.derived().unwrap();
        let (re, im) = channel_coefficient(&cfg, &k, &[3.0, 0.0, 0.0], 3.0);
        let mag = re.hypot(im);
        assert!((mag - k.eta.sqrt() / 5.0).abs() < 1e-15);
        assert!((mag - 7.952_241_932_06e-4).abs() < 1e-14);

        // Distance 10 vs 20: magnitude halves.
        let (r1, i1) = channel_coefficient(&cfg, &k, &[0.0, (100.0f64 - 25.0).sqrt(), 0.0], 0.0);
        let (r2, i2) = channel_coefficient(&cfg, &k, &[0.0, (400.0f64 - 25.0).sqrt(), 0.0], 0.0);
        assert!((r1.hypot(i1) / r2.hypot(i2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn channel_phase_periodic_in_wavelength() {
        let mut cfg = SystemConfig::standard(1, 1);
        // Choose λ so that H = 5 m is exactly 100 wavelengths.
        cfg.carrier_freq_hz = SPEED_OF_LIGHT / 0.05;
        let k = cfg.derived().unwrap();
        let (re, im) = channel_coefficient(&cfg, &k, &[0.0, 0.0, 0.0], 0.0);
        assert!(im.abs() / re.abs() < 1e-9);
        assert!(re > 0.0);
    }

    #[test]
    fn single_antenna_rate_and_ee() {
        let cfg = cfg1();
        let k = cfg.derived().unwrap();
        let sol = Solution {
            placement: AntennaPlacement { x: vec![12.0] },
            power: PowerAllocation { p: vec![1.0] },
        };
        let user = [12.0, 0.0, 0.0];
        let expected = (1.0 + k.eta / 25e-12).log2();
        let r = user_rate(&cfg, &k, &user, &sol);
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 19.27).abs() < 5e-3);
        let layout = UserLayout { positions: vec![user] };
        let ee = energy_efficiency(&cfg, &layout, &sol).unwrap();
        assert!((ee - expected / 1.5).abs() < 1e-12);
        assert!((ee - 12.85).abs() < 5e-3);
    }

    #[test]
    fn cancelling_phases_match_high_precision_value() {
        // Five antennas whose contributions nearly cancel at the user; the
        // reference was evaluated with 50-digit arithmetic from the same
        // double-precision wavelengths and inputs.
        let cfg = SystemConfig::standard(5, 1);
        let k = cfg.derived().unwrap();
        let sol = Solution {
            placement: AntennaPlacement {
                x: vec![-98.13147624432116, -98.08835826508712, -96.43736572850945, -95.12994232080455, -94.0268034325672],
            },
            power: PowerAllocation {
                p: vec![0.19654332757345452, 0.12872536753886818, 0.09982003155312069, 0.02150984170860997, 0.18011036480420772],
            },
        };
        let user = [2.9688416648587065e1, 4.897231037570839e1, 0.0];
        let r = user_rate(&cfg, &k, &user, &sol);
        let want = 0.837_423_039_401_210_2;
        assert!((r - want).abs() / want < 1e-13, "{r}");
    }

    #[test]
    fn zero_power_gives_zero_rate_and_ee() {
        let cfg = SystemConfig::standard(3, 2);
        let k = cfg.derived().unwrap();
        let sol = Solution {
            placement: AntennaPlacement { x: vec![-1.0, 0.0, 1.0] },
            power: PowerAllocation { p: vec![0.0; 3] },
        };
        assert_eq!(user_rate(&cfg, &k, &[5.0, 5.0, 0.0], &sol), 0.0);
        let layout = UserLayout::from_xy(&[(5.0, 5.0), (-3.0, 2.0)]);
        assert_eq!(energy_efficiency(&cfg, &layout, &sol).unwrap(), 0.0);

        let mut no_static = cfg.clone();
        no_static.static_power_w = 0.0;
        assert!(matches!(
            energy_efficiency(&no_static, &layout, &sol),
            Err(Error::DivisionByZero(_))
        ));
    }

    #[test]
    fn ee_linear_in_slot_length() {
        let cfg = SystemConfig::standard(2, 2);
        let layout = UserLayout::from_xy(&[(10.0, -4.0), (-30.0, 20.0)]);
        let sol = Solution {
            placement: AntennaPlacement { x: vec![-20.0, 15.0] },
            power: PowerAllocation { p: vec![0.2, 0.3] },
        };
        let base = energy_efficiency(&cfg, &layout, &sol).unwrap();
        let mut doubled = cfg.clone();
        doubled.slot_length = 2.0;
        let ee2 = energy_efficiency(&doubled, &layout, &sol).unwrap();
        assert!((ee2 - 2.0 * base).abs() < 1e-12 * base);
    }

    #[test]
    fn feasibility_examples() {
        let cfg = SystemConfig::standard(4, 2);
        let gap = 2.0 * cfg.waveguide_half_length_m / 3.0;
        let uniform = Solution {
            placement: AntennaPlacement {
                x: (0..4).map(|n| -100.0 + gap * n as f64).collect(),
            },
            power: PowerAllocation::uniform(&cfg),
        };
        assert!(check_feasible(&cfg, &uniform, 0.0).ok);

        let mut stacked = uniform.clone();
        stacked.placement.x[1] = stacked.placement.x[0];
        let report = check_feasible(&cfg, &stacked, 0.0);
        assert!(!report.ok);
        let v = report
            .violations
            .iter()
            .find(|v| v.kind == ViolationKind::Spacing)
            .unwrap();
        assert_eq!(v.index, Some(1));
        assert_eq!(v.magnitude, cfg.guard_distance_m);

        let mut full = uniform.clone();
        full.power.p = vec![0.25; 4];
        assert_eq!(full.power.total(), cfg.power_budget_w);
        assert!(check_feasible(&cfg, &full, 0.0).ok);

        full.power.p[0] = 0.3;
        assert!(!check_feasible(&cfg, &full, 0.0).ok);
    }
}
