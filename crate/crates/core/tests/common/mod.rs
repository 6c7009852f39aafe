//! Independent rate oracle shared by the oracle and acceptance tests.
#![allow(dead_code)]

use num_complex::Complex64;
use pinchnet::bgat::positions_from_deltas;
use pinchnet::model::{PowerAllocation, Solution, SystemConfig, UserLayout};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const C: f64 = 299_792_458.0;

/// Double-double value `hi + lo` built from Dekker's splitting, so no fused
/// multiply-add is involved.
#[derive(Clone, Copy)]
pub struct Dd(pub f64, pub f64);

pub fn quick(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

pub fn add(x: Dd, y: Dd) -> Dd {
    let s = x.0 + y.0;
    let v = s - x.0;
    let e = (x.0 - (s - v)) + (y.0 - v);
    quick(s, e + x.1 + y.1)
}

pub fn split(a: f64) -> (f64, f64) {
    let t = 134_217_729.0 * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

pub fn mul(x: Dd, y: Dd) -> Dd {
    let p = x.0 * y.0;
    let (ah, al) = split(x.0);
    let (bh, bl) = split(y.0);
    let e = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    quick(p, e + x.0 * y.1 + x.1 * y.0)
}

pub fn div(x: Dd, y: f64) -> Dd {
    let q1 = x.0 / y;
    let r = add(x, mul(Dd(-q1, 0.0), Dd(y, 0.0)));
    let q2 = r.0 / y;
    let r = add(r, mul(Dd(-q2, 0.0), Dd(y, 0.0)));
    add(quick(q1, q2), Dd(r.0 / y, 0.0))
}

pub fn sqrt(x: Dd) -> Dd {
    let r = x.0.sqrt();
    if r == 0.0 {
        return Dd(0.0, 0.0);
    }
    let resid = add(x, mul(Dd(-r, 0.0), Dd(r, 0.0)));
    quick(r, resid.0 / (2.0 * r))
}

pub fn dist(a: [f64; 3], b: [f64; 3]) -> Dd {
    let mut s = Dd(0.0, 0.0);
    for k in 0..3 {
        let d = add(Dd(a[k], 0.0), Dd(-b[k], 0.0));
        s = add(s, mul(d, d));
    }
    sqrt(s)
}

/// Fractional part of `x` in `[-1/2, 1/2]`.
pub fn frac(x: Dd) -> f64 {
    let n = x.0.round();
    let f = add(x, Dd(-n, 0.0));
    f.0 - f.0.round()
}

/// Written from the physical description only: free-space channel with a
/// guided-wave phase from the feed at `[-D, 0, H]`.
pub fn naive_rate(cfg: &SystemConfig, user: [f64; 3], x: &[f64], p: &[f64]) -> f64 {
    let lambda = C / cfg.carrier_freq_hz;
    let lambda_g = C / (cfg.carrier_freq_hz * cfg.refractive_index);
    let eta = (lambda / (4.0 * std::f64::consts::PI)).powi(2);
    let feed = [-cfg.waveguide_half_length_m, 0.0, cfg.height_m];
    let mut s = Complex64::new(0.0, 0.0);
    for (&xn, &pn) in x.iter().zip(p) {
        let ant = [xn, 0.0, cfg.height_m];
        let r = dist(user, ant);
        let g = dist(ant, feed);
        let h = eta.sqrt() / r.0 * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * frac(div(r, lambda)));
        let theta = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * frac(div(g, lambda_g)));
        s += pn.sqrt() * h * theta;
    }
    (1.0 + s.norm_sqr() / cfg.noise_power_w).log2()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Random feasible instance: Dirichlet-like intervals and powers scaled
/// below their budgets.
pub fn instance(rng: &mut ChaCha8Rng) -> (SystemConfig, UserLayout, Solution) {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(1..=4);
    let cfg = SystemConfig::standard(n, m);
    let slack = cfg.derived().unwrap().slack_budget;
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let frac = rng.random_range(0.0..1.0);
    let total: f64 = raw.iter().sum();
    let deltas: Vec<f64> = raw.iter().map(|v| v / total * slack * frac).collect();
    let placement = positions_from_deltas(&deltas, &cfg).unwrap();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let wt: f64 = w.iter().sum::<f64>().max(1e-12);
    let pfrac = rng.random_range(0.05..1.0);
    let p: Vec<f64> = w.iter().map(|v| v / wt * cfg.power_budget_w * pfrac).collect();
    let l = cfg.half_range_m;
    let layout = UserLayout::from_xy(
        &(0..m)
            .map(|_| (rng.random_range(-l..=l), rng.random_range(-l..=l)))
            .collect::<Vec<_>>(),
    );
    (
        cfg,
        layout,
        Solution {
            placement,
            power: PowerAllocation { p },
        },
    )
}
