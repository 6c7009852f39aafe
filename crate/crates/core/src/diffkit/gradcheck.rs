//! Finite-difference verification of reverse-mode gradients.

use super::params::ParamSet;
use crate::error::Result;

/// `|a - n| / max(|a|, |n|, floor)`. The floor turns the comparison into an
/// absolute one for gradients that are essentially zero.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

#[derive(Debug, Clone)]
pub struct CoordCheck {
    pub index: usize,
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coords: Vec<CoordCheck>,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }

    pub fn worst(&self) -> Option<&CoordCheck> {
        self.coords
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// Central difference `(f(θ + h e_i) - f(θ - h e_i)) / 2h` for one coordinate.
pub fn central_difference<F>(params: &ParamSet, index: usize, h: f64, loss: &F) -> Result<f64>
where
    F: Fn(&ParamSet) -> Result<f64>,
{
    let mut plus = params.clone();
    plus.values[index] += h;
    let mut minus = params.clone();
    minus.values[index] -= h;
    Ok((loss(&plus)? - loss(&minus)?) / (2.0 * h))
}

/// Compares `analytic` against central differences at the given coordinates.
pub fn check_gradient<F>(
    params: &ParamSet,
    analytic: &[f64],
    coords: &[usize],
    h: f64,
    tolerance: f64,
    floor: f64,
    loss: F,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet) -> Result<f64>,
{
    let mut checks = Vec::with_capacity(coords.len());
    for &index in coords {
        let numeric = central_difference(params, index, h, &loss)?;
        let a = analytic[index];
        let name = params
            .locate(index)
            .map(|(n, r, c)| format!("{n}[{r},{c}]"))
            .unwrap_or_default();
        checks.push(CoordCheck {
            index,
            name,
            analytic: a,
            numeric,
            rel_err: relative_error(a, numeric, floor),
        });
    }
    let max_rel_err = checks.iter().map(|c| c.rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport {
        coords: checks,
        max_rel_err,
        tolerance,
    })
}
