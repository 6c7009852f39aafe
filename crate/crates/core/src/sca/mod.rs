//! Fixed-antenna benchmark: power-only energy-efficiency maximization by
//! successive convex approximation, and an exhaustive grid oracle.
//!
//! Variables of each convex subproblem, in order:
//! `z = (q_1..q_N, α_1..α_M, β, a, b)` where `q` are square-root powers.
//! Constraints (all `>= 0`):
//!
//! ```text
//! c1_m : (2 Re{conj(c_m) h_m^H q} - |c_m|²) / σ² - 2^{α_m} + 1     c_m = h_m^H p̃
//! c2   : Σ α_m - e^{a + b}
//! c3   : e^{ã} (1 + a - ã) - β
//! c4   : e^{b̃} (1 + b - b̃) - ‖q‖² - P_C
//! c5   : P_max - ‖q‖²
//! q_n  : q_n
//! ```

pub mod ipm;

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    channel_coefficient, energy_efficiency, in_waveguide_phase, AntennaPlacement, PowerAllocation,
    Solution, SystemConfig, UserLayout,
};
use ipm::{ConvexProgram, IpmOptions, ConstraintEval};

/// Centered array with spacing exactly `Δ`.
pub fn fixed_placement(cfg: &SystemConfig) -> AntennaPlacement {
    let n = cfg.n_antennas;
    let mid = (n as f64 + 1.0) / 2.0;
    let mut x: Vec<f64> = (1..=n).map(|i| (i as f64 - mid) * cfg.guard_distance_m).collect();
    for i in 1..n {
        while x[i] - x[i - 1] < cfg.guard_distance_m {
            x[i] = x[i].next_up();
        }
    }
    AntennaPlacement { x }
}

/// Effective `M × N` channel of the fixed array, in-waveguide phase included.
pub fn fixed_channel(cfg: &SystemConfig, layout: &UserLayout) -> Result<Vec<Vec<Complex64>>> {
    let consts = cfg.derived()?;
    let placement = fixed_placement(cfg);
    Ok(layout
        .positions
        .iter()
        .map(|u| {
            placement
                .x
                .iter()
                .map(|&x| {
                    let (re, im) = channel_coefficient(cfg, &consts, u, x);
                    Complex64::new(re, im) * Complex64::from_polar(1.0, -in_waveguide_phase(cfg, &consts, x))
                })
                .collect()
        })
        .collect())
}

/// Exact `Σ_m log2(1 + |h_m^H q|² / σ²) / (‖q‖² + P_C)` for sqrt-powers `q`
/// (no slot-length factor).
fn rate_per_power(h: &[Vec<Complex64>], q: &[f64], cfg: &SystemConfig) -> f64 {
    let sum_rate: f64 = h
        .iter()
        .map(|row| {
            let s: Complex64 = row.iter().zip(q).map(|(hn, &qn)| hn.conj() * qn).sum();
            (s.norm_sqr() / cfg.noise_power_w).ln_1p() / std::f64::consts::LN_2
        })
        .sum();
    sum_rate / (q.iter().map(|v| v * v).sum::<f64>() + cfg.static_power_w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaIteration {
    pub iteration: usize,
    pub beta: f64,
    /// Exact EE of the iterate, bit/Hz/J.
    pub ee: f64,
    pub stationarity: f64,
    pub gap: f64,
    pub newton_steps: usize,
}

/// Anchor point of the successive approximation plus its history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaState {
    /// Square-root powers, `‖p̃‖² <= P_max`, `p̃ >= 0`.
    pub anchor: Vec<f64>,
    pub a_anchor: f64,
    pub b_anchor: f64,
    pub iterations: usize,
    pub history: Vec<ScaIteration>,
}

impl ScaState {
    /// Uniform-power anchor.
    pub fn initial(cfg: &SystemConfig, h: &[Vec<Complex64>]) -> Result<Self> {
        let n = cfg.n_antennas;
        let anchor = vec![(cfg.power_budget_w / n as f64).sqrt(); n];
        Self::at(cfg, h, anchor)
    }

    /// Anchor at sqrt-powers `q`.
    pub fn at(cfg: &SystemConfig, h: &[Vec<Complex64>], q: Vec<f64>) -> Result<Self> {
        let power: f64 = q.iter().map(|v| v * v).sum();
        let b_anchor = (power + cfg.static_power_w).ln();
        let ee = rate_per_power(h, &q, cfg);
        if !(ee > 0.0) || !b_anchor.is_finite() {
            return Err(Error::InfeasibleConfig(
                "SCA anchor has zero rate or zero consumed power".into(),
            ));
        }
        Ok(Self {
            anchor: q,
            a_anchor: ee.ln(),
            b_anchor,
            iterations: 0,
            history: Vec::new(),
        })
    }
}

/// Solution of one convex subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub q: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub stationarity: f64,
    pub gap: f64,
    pub newton_steps: usize,
}

impl SubproblemSolution {
    pub fn powers(&self) -> Vec<f64> {
        self.q.iter().map(|v| v * v).collect()
    }
}

/// The convex subproblem linearized at an anchor.
pub struct Subproblem<'a> {
    cfg: &'a SystemConfig,
    n: usize,
    m: usize,
    /// `2 Re{conj(c_m) conj(h_{m,n})} / σ²`.
    w: Vec<Vec<f64>>,
    /// `|c_m|² / σ²`.
    k: Vec<f64>,
    /// `1 + k_m`; rate constraints are divided by it for conditioning.
    scale: Vec<f64>,
    a_anchor: f64,
    b_anchor: f64,
}

impl<'a> Subproblem<'a> {
    pub fn new(h: &[Vec<Complex64>], cfg: &'a SystemConfig, state: &ScaState) -> Self {
        let sigma2 = cfg.noise_power_w;
        let mut w = Vec::with_capacity(h.len());
        let mut k = Vec::with_capacity(h.len());
        for row in h {
            let c: Complex64 = row.iter().zip(&state.anchor).map(|(hn, &p)| hn.conj() * p).sum();
            w.push(row.iter().map(|hn| 2.0 * (c.conj() * hn.conj()).re / sigma2).collect());
            k.push(c.norm_sqr() / sigma2);
        }
        Self {
            cfg,
            n: cfg.n_antennas,
            m: h.len(),
            scale: k.iter().map(|k| 1.0 + k).collect(),
            w,
            k,
            a_anchor: state.a_anchor,
            b_anchor: state.b_anchor,
        }
    }

    fn idx_beta(&self) -> usize {
        self.n + self.m
    }

    /// Linearized SNR `(2 Re{..} - |c|²) / σ²` of user `m` at `q`.
    fn lin_snr(&self, m: usize, q: &[f64]) -> f64 {
        self.w[m].iter().zip(q).map(|(w, q)| w * q).sum::<f64>() - self.k[m]
    }

    /// Strictly feasible start derived from the anchor.
    pub fn interior_start(&self, anchor: &[f64]) -> Result<DVector<f64>> {
        let (n, m) = (self.n, self.m);
        let spread = 0.01 * (self.cfg.power_budget_w / n as f64).sqrt();
        let q: Vec<f64> = anchor.iter().map(|p| 0.98 * p + spread).collect();
        let mut z = DVector::zeros(n + m + 3);
        for (i, v) in q.iter().enumerate() {
            z[i] = *v;
        }
        let mut sum_alpha = 0.0;
        for mm in 0..m {
            let lin = self.lin_snr(mm, &q);
            if !(lin > -1.0) {
                return Err(Error::InfeasibleConfig("SCA start has no interior".into()));
            }
            let alpha = lin.ln_1p() / std::f64::consts::LN_2 - 1e-3;
            z[n + mm] = alpha;
            sum_alpha += alpha;
        }
        if !(sum_alpha > 0.0) {
            return Err(Error::InfeasibleConfig("SCA start has zero sum rate".into()));
        }
        let qq: f64 = q.iter().map(|v| v * v).sum();
        let eb = self.b_anchor.exp();
        let b = self.b_anchor - 1.0 + (qq + self.cfg.static_power_w) / eb + 1e-3;
        let a = sum_alpha.ln() - b - 1e-3;
        let ea = self.a_anchor.exp();
        let beta = ea * (1.0 + a - self.a_anchor) - 1e-3 * ea;
        z[n + m] = beta;
        z[n + m + 1] = a;
        z[n + m + 2] = b;
        Ok(z)
    }

    fn values(&self, z: &DVector<f64>) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let q = &z.as_slice()[..n];
        let qq: f64 = q.iter().map(|v| v * v).sum();
        let (beta, a, b) = (z[n + m], z[n + m + 1], z[n + m + 2]);
        let mut out = Vec::with_capacity(m + 4 + n);
        let mut sum_alpha = 0.0;
        for mm in 0..m {
            let alpha = z[n + mm];
            sum_alpha += alpha;
            out.push((self.lin_snr(mm, q) - (alpha * std::f64::consts::LN_2).exp() + 1.0) / self.scale[mm]);
        }
        out.push(sum_alpha - (a + b).exp());
        out.push(self.a_anchor.exp() * (1.0 + a - self.a_anchor) - beta);
        out.push(self.b_anchor.exp() * (1.0 + b - self.b_anchor) - qq - self.cfg.static_power_w);
        out.push(self.cfg.power_budget_w - qq);
        out.extend_from_slice(q);
        out
    }

    /// Largest constraint violation at a point (0 when feasible).
    pub fn max_violation(&self, sol: &SubproblemSolution) -> f64 {
        let mut z: Vec<f64> = sol.q.clone();
        z.extend(&sol.alpha);
        z.extend([sol.beta, sol.a, sol.b]);
        self.values(&DVector::from_vec(z))
            .into_iter()
            .map(|v| (-v).max(0.0))
            .fold(0.0, f64::max)
    }
}

impl ConvexProgram for Subproblem<'_> {
    fn n_vars(&self) -> usize {
        self.n + self.m + 3
    }

    fn n_constraints(&self) -> usize {
        self.m + 4 + self.n
    }

    fn objective(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.n_vars());
        c[self.idx_beta()] = 1.0;
        c
    }

    fn constraint_values(&self, z: &DVector<f64>) -> Vec<f64> {
        self.values(z)
    }

    fn constraints(&self, z: &DVector<f64>) -> Vec<ConstraintEval> {
        let (n, m) = (self.n, self.m);
        let nv = self.n_vars();
        let vals = self.values(z);
        let (ia, ib) = (n + m + 1, n + m + 2);
        let ln2 = std::f64::consts::LN_2;
        let mut out = Vec::with_capacity(vals.len());
        for mm in 0..m {
            let e = (z[n + mm] * ln2).exp() / self.scale[mm];
            let mut g = DVector::zeros(nv);
            for i in 0..n {
                g[i] = self.w[mm][i] / self.scale[mm];
            }
            g[n + mm] = -ln2 * e;
            let mut h = DMatrix::zeros(nv, nv);
            h[(n + mm, n + mm)] = -ln2 * ln2 * e;
            out.push(ConstraintEval { value: vals[mm], grad: g, hess: Some(h) });
        }
        // Σα - e^{a+b}
        let eab = (z[ia] + z[ib]).exp();
        let mut g = DVector::zeros(nv);
        for mm in 0..m {
            g[n + mm] = 1.0;
        }
        g[ia] = -eab;
        g[ib] = -eab;
        let mut h = DMatrix::zeros(nv, nv);
        for &(r, c) in &[(ia, ia), (ia, ib), (ib, ia), (ib, ib)] {
            h[(r, c)] = -eab;
        }
        out.push(ConstraintEval { value: vals[m], grad: g, hess: Some(h) });
        // e^{ã}(1 + a - ã) - β
        let mut g = DVector::zeros(nv);
        g[ia] = self.a_anchor.exp();
        g[self.idx_beta()] = -1.0;
        out.push(ConstraintEval { value: vals[m + 1], grad: g, hess: None });
        // power linearization and budget share the -‖q‖² curvature
        let mut q_curv = DMatrix::zeros(nv, nv);
        for i in 0..n {
            q_curv[(i, i)] = -2.0;
        }
        let mut g = DVector::zeros(nv);
        for i in 0..n {
            g[i] = -2.0 * z[i];
        }
        g[ib] = self.b_anchor.exp();
        out.push(ConstraintEval { value: vals[m + 2], grad: g, hess: Some(q_curv.clone()) });
        let mut g = DVector::zeros(nv);
        for i in 0..n {
            g[i] = -2.0 * z[i];
        }
        out.push(ConstraintEval { value: vals[m + 3], grad: g, hess: Some(q_curv) });
        for i in 0..n {
            let mut g = DVector::zeros(nv);
            g[i] = 1.0;
            out.push(ConstraintEval { value: vals[m + 4 + i], grad: g, hess: None });
        }
        out
    }
}

/// Solves the convex subproblem linearized at `state` to barrier tolerance.
pub fn solve_subproblem(h: &[Vec<Complex64>], cfg: &SystemConfig, state: &ScaState) -> Result<SubproblemSolution> {
    let sub = Subproblem::new(h, cfg, state);
    let z0 = sub.interior_start(&state.anchor)?;
    let r = ipm::solve(&sub, z0, &IpmOptions::default())?;
    let (n, m) = (sub.n, sub.m);
    Ok(SubproblemSolution {
        q: r.z.as_slice()[..n].to_vec(),
        alpha: r.z.as_slice()[n..n + m].to_vec(),
        beta: r.z[n + m],
        a: r.z[n + m + 1],
        b: r.z[n + m + 2],
        stationarity: r.stationarity,
        gap: r.gap,
        newton_steps: r.newton_steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaResult {
    pub power: PowerAllocation,
    pub placement: AntennaPlacement,
    /// Exact EE of the returned point, bit/Hz/J.
    pub ee: f64,
    pub history: Vec<ScaIteration>,
}

impl ScaResult {
    pub fn solution(&self) -> Solution {
        Solution {
            placement: self.placement.clone(),
            power: self.power.clone(),
        }
    }

    /// Objective values `β` per iteration.
    pub fn betas(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.beta).collect()
    }

    /// Writes the convergence trace as CSV.
    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for it in &self.history {
            w.serialize(it)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Power-only SCA on the fixed array. Stops when the relative change of `β`
/// drops below `tol` or after `max_iter` subproblems.
pub fn sca_solve(cfg: &SystemConfig, layout: &UserLayout, tol: f64, max_iter: usize) -> Result<ScaResult> {
    cfg.validate()?;
    if layout.is_empty() {
        return Err(Error::InvalidInput("layout has no users".into()));
    }
    let h = fixed_channel(cfg, layout)?;
    let placement = fixed_placement(cfg);
    let mut state = ScaState::initial(cfg, &h)?;
    let mut best_q = state.anchor.clone();
    let mut prev_beta: Option<f64> = None;
    for it in 0..max_iter {
        let sol = solve_subproblem(&h, cfg, &state)?;
        // Clip round-off so the power budget holds exactly.
        let mut q: Vec<f64> = sol.q.iter().map(|v| v.max(0.0)).collect();
        let qq: f64 = q.iter().map(|v| v * v).sum();
        if qq > cfg.power_budget_w {
            let s = (cfg.power_budget_w / qq).sqrt();
            q.iter_mut().for_each(|v| *v *= s);
        }
        let ee = cfg.slot_length * rate_per_power(&h, &q, cfg);
        state.history.push(ScaIteration {
            iteration: it,
            beta: sol.beta,
            ee,
            stationarity: sol.stationarity,
            gap: sol.gap,
            newton_steps: sol.newton_steps,
        });
        state.iterations = it + 1;
        best_q = q.clone();
        let history = std::mem::take(&mut state.history);
        let iterations = state.iterations;
        state = ScaState::at(cfg, &h, q)?;
        state.history = history;
        state.iterations = iterations;
        if let Some(pb) = prev_beta {
            if (sol.beta - pb).abs() <= tol * pb.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        prev_beta = Some(sol.beta);
    }
    let power = PowerAllocation {
        p: best_q.iter().map(|v| v * v).collect(),
    };
    let sol = Solution {
        placement: placement.clone(),
        power: power.clone(),
    };
    let ee = energy_efficiency(cfg, layout, &sol)?;
    Ok(ScaResult {
        power,
        placement,
        ee,
        history: state.history,
    })
}

/// Largest antenna count the grid oracle accepts.
pub const GRID_MAX_ANTENNAS: usize = 3;

/// Best exact EE over the powers `P_max k / (r - 1)` with `Σ k <= r - 1`.
pub fn grid_oracle(
    cfg: &SystemConfig,
    layout: &UserLayout,
    placement: &AntennaPlacement,
    resolution: usize,
) -> Result<f64> {
    let n = cfg.n_antennas;
    if n > GRID_MAX_ANTENNAS {
        return Err(Error::InvalidInput(format!(
            "grid oracle supports N <= {GRID_MAX_ANTENNAS}, got {n}"
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidInput("grid resolution must be at least 2".into()));
    }
    if placement.x.len() != n {
        return Err(Error::Shape("placement length differs from N".into()));
    }
    let steps = resolution - 1;
    let unit = cfg.power_budget_w / steps as f64;
    let mut sol = Solution {
        placement: placement.clone(),
        power: PowerAllocation { p: vec![0.0; n] },
    };
    let mut k = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    loop {
        for (p, &ki) in sol.power.p.iter_mut().zip(&k) {
            *p = unit * ki as f64;
        }
        if sol.power.total() + cfg.static_power_w > 0.0 {
            best = best.max(energy_efficiency(cfg, layout, &sol)?);
        }
        // Next composition with Σk <= steps.
        let mut i = 0;
        loop {
            if i == n {
                return Ok(best);
            }
            k[i] += 1;
            if k.iter().sum::<usize>() <= steps {
                break;
            }
            k[i] = 0;
            i += 1;
        }
    }
}

/// Writes a trace to any writer as CSV (header included).
pub fn write_trace<W: Write>(history: &[ScaIteration], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for it in history {
        w.serialize(it)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_pair_is_centered() {
        let mut cfg = SystemConfig::standard(2, 1);
        cfg.guard_distance_m = 0.025;
        let p = fixed_placement(&cfg);
        assert_eq!(p.x, vec![-0.0125, 0.0125]);
    }

    #[test]
    fn fixed_placement_feasible() {
        let cfg = SystemConfig::standard(4, 2);
        let sol = Solution {
            placement: fixed_placement(&cfg),
            power: PowerAllocation::uniform(&cfg),
        };
        assert!(crate::model::check_feasible(&cfg, &sol, 0.0).ok);
        let x = &sol.placement.x;
        assert!((x[0] + x[3]).abs() < 1e-15);
        assert!((x[1] + x[2]).abs() < 1e-15);
    }

    #[test]
    fn channel_magnitude() {
        let cfg = SystemConfig::standard(2, 1);
        let layout = UserLayout::from_xy(&[(10.0, -3.0)]);
        let h = fixed_channel(&cfg, &layout).unwrap();
        let consts = cfg.derived().unwrap();
        for (n, &x) in fixed_placement(&cfg).x.iter().enumerate() {
            let d = crate::model::user_antenna_distance(&cfg, &layout.positions[0], x);
            assert!((h[0][n].norm() - consts.eta.sqrt() / d).abs() < 1e-18);
        }
    }

    #[test]
    fn start_point_is_interior() {
        let cfg = SystemConfig::standard(2, 2);
        let layout = UserLayout::from_xy(&[(10.0, -3.0), (-40.0, 20.0)]);
        let h = fixed_channel(&cfg, &layout).unwrap();
        let state = ScaState::initial(&cfg, &h).unwrap();
        let sub = Subproblem::new(&h, &cfg, &state);
        let z = sub.interior_start(&state.anchor).unwrap();
        assert!(sub.constraint_values(&z).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn linearization_tight_at_anchor() {
        let cfg = SystemConfig::standard(2, 2);
        let layout = UserLayout::from_xy(&[(10.0, -3.0), (-40.0, 20.0)]);
        let h = fixed_channel(&cfg, &layout).unwrap();
        let state = ScaState::initial(&cfg, &h).unwrap();
        let sub = Subproblem::new(&h, &cfg, &state);
        let q = &state.anchor;
        for m in 0..2 {
            let exact: f64 = {
                let s: Complex64 = h[m].iter().zip(q).map(|(hn, &p)| hn.conj() * p).sum();
                s.norm_sqr() / cfg.noise_power_w
            };
            let lin = sub.lin_snr(m, q);
            assert!((lin - exact).abs() <= 1e-9 * exact);
        }
    }

    #[test]
    fn grid_resolution_monotone_on_nested_grids() {
        let cfg = SystemConfig::standard(1, 1);
        let layout = UserLayout::from_xy(&[(5.0, 5.0)]);
        let pl = fixed_placement(&cfg);
        let coarse = grid_oracle(&cfg, &layout, &pl, 11).unwrap();
        let fine = grid_oracle(&cfg, &layout, &pl, 101).unwrap();
        assert!(fine >= coarse);
    }

    #[test]
    fn sca_matches_one_dimensional_scan() {
        let cfg = SystemConfig::standard(1, 1);
        let layout = UserLayout::from_xy(&[(30.0, -12.0)]);
        let r = sca_solve(&cfg, &layout, 1e-6, 100).unwrap();
        let grid = grid_oracle(&cfg, &layout, &fixed_placement(&cfg), 20_001).unwrap();
        assert!(r.ee >= 0.99 * grid, "sca {} grid {}", r.ee, grid);
        assert!(r.ee <= grid * 1.0001);
        for w in r.history.windows(2) {
            assert!(w[1].beta >= w[0].beta - 1e-8);
        }
    }

    #[test]
    fn grid_rejects_large_n() {
        let cfg = SystemConfig::standard(4, 1);
        let layout = UserLayout::from_xy(&[(5.0, 5.0)]);
        assert!(grid_oracle(&cfg, &layout, &fixed_placement(&cfg), 10).is_err());
    }
}
