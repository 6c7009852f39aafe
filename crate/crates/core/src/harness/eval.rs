use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::bgat::{AnyModel, ModelKind};
use crate::diffkit::ParamSet;
use crate::error::{Error, Result};
use crate::graph::build_graph;
use crate::model::{check_feasible, energy_efficiency, Solution, SystemConfig, UserLayout};
use crate::sca::sca_solve;

/// Feasibility tolerance used by every evaluation.
pub const EVAL_FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub median_ms: f64,
    pub p90_ms: f64,
    pub mean_ms: f64,
    pub samples: usize,
}

impl LatencyStats {
    pub fn from_durations(d: &[Duration]) -> Self {
        let mut ms: Vec<f64> = d.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| {
            if ms.is_empty() {
                return f64::NAN;
            }
            let pos = p * (ms.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            ms[lo] + (ms[hi] - ms[lo]) * (pos - lo as f64)
        };
        Self {
            median_ms: q(0.5),
            p90_ms: q(0.9),
            mean_ms: ms.iter().sum::<f64>() / ms.len().max(1) as f64,
            samples: ms.len(),
        }
    }
}

/// Median-based timing of a single-sample call: `warmup` untimed calls,
/// then `reps` timed calls cycling through `layouts`.
pub fn measure_latency<F>(layouts: &[UserLayout], warmup: usize, reps: usize, mut f: F) -> Result<LatencyStats>
where
    F: FnMut(&UserLayout) -> Result<()>,
{
    if layouts.is_empty() {
        return Err(Error::InvalidInput("latency needs at least one layout".into()));
    }
    for i in 0..warmup {
        f(&layouts[i % layouts.len()])?;
    }
    let mut times = Vec::with_capacity(reps);
    for i in 0..reps {
        let layout = &layouts[i % layouts.len()];
        let t = Instant::now();
        f(layout)?;
        times.push(t.elapsed());
    }
    Ok(LatencyStats::from_durations(&times))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyConfig {
    pub warmup: usize,
    pub reps: usize,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self { warmup: 10, reps: 200 }
    }
}

/// What is being evaluated.
#[derive(Debug, Clone)]
pub enum Method<'a> {
    Learned {
        model: &'a AnyModel,
        params: &'a ParamSet,
        /// User count of the training set, when known.
        trained_users: Option<usize>,
    },
    /// Fixed-antenna SCA.
    Fixed { tol: f64, max_iter: usize },
}

impl Method<'_> {
    pub fn id(&self) -> &'static str {
        match self {
            Method::Learned { model, .. } => model.policy().kind().label(),
            Method::Fixed { .. } => "Fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub n_antennas: usize,
    pub m_train: Option<usize>,
    pub m_test: usize,
    pub mean_ee: f64,
    pub per_sample_ee: Vec<f64>,
    pub feasibility_rate: f64,
    /// Single-sample solve time (for learned models: graph construction plus
    /// forward pass).
    pub latency: LatencyStats,
    /// Graph construction alone (BGAT only).
    pub graph_latency: Option<LatencyStats>,
}

fn score(cfg: &SystemConfig, layout: &UserLayout, sol: &Solution) -> Result<(f64, bool)> {
    let ee = energy_efficiency(cfg, layout, sol)?;
    Ok((ee, check_feasible(cfg, sol, EVAL_FEASIBILITY_TOL).ok))
}

/// Exact EE and feasibility of every sample, recomputed from the emitted
/// solutions, plus latency statistics.
///
/// A learned model that cannot serve `cfg` or the dataset's user count
/// fails with [`Error::NotApplicable`].
pub fn evaluate(method: &Method, cfg: &SystemConfig, dataset: &Dataset, latency: LatencyConfig) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("evaluation set is empty".into()));
    }
    let m_test = dataset.n_users();
    let cfg = cfg.with_users(m_test);
    let (scores, lat, graph_lat, m_train) = match method {
        Method::Learned {
            model,
            params,
            trained_users,
        } => {
            let policy = model.policy();
            policy.check_applicable(&cfg, &dataset.layouts[0])?;
            let scores = dataset
                .layouts
                .par_iter()
                .map(|l| score(&cfg, l, &policy.solve(params, &cfg, l)?))
                .collect::<Result<Vec<_>>>()?;
            let lat = measure_latency(&dataset.layouts, latency.warmup, latency.reps, |l| {
                policy.solve(params, &cfg, l).map(|_| ())
            })?;
            let graph_lat = match policy.kind() {
                ModelKind::Bgat => {
                    let AnyModel::Bgat(b) = model else { unreachable!() };
                    let scaling = b.arch.feature_scaling;
                    Some(measure_latency(&dataset.layouts, latency.warmup, latency.reps, |l| {
                        build_graph(&cfg, l, scaling).map(|_| ())
                    })?)
                }
                _ => None,
            };
            (scores, lat, graph_lat, trained_users.or(policy.fixed_users()))
        }
        Method::Fixed { tol, max_iter } => {
            let mut scores = Vec::with_capacity(dataset.len());
            let mut times = Vec::with_capacity(dataset.len());
            for l in &dataset.layouts {
                let t = Instant::now();
                let r = sca_solve(&cfg, l, *tol, *max_iter)?;
                times.push(t.elapsed());
                scores.push(score(&cfg, l, &r.solution())?);
            }
            (scores, LatencyStats::from_durations(&times), None, None)
        }
    };
    let per_sample_ee: Vec<f64> = scores.iter().map(|s| s.0).collect();
    let feasible = scores.iter().filter(|s| s.1).count();
    Ok(EvalReport {
        model_id: method.id().to_string(),
        n_antennas: cfg.n_antennas,
        m_train,
        m_test,
        mean_ee: per_sample_ee.iter().sum::<f64>() / per_sample_ee.len() as f64,
        feasibility_rate: feasible as f64 / scores.len() as f64,
        per_sample_ee,
        latency: lat,
        graph_latency: graph_lat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset::gen_dataset;

    #[test]
    fn latency_quantiles() {
        let d: Vec<Duration> = [1u64, 2, 3, 4, 5].iter().map(|&v| Duration::from_millis(v)).collect();
        let s = LatencyStats::from_durations(&d);
        assert!((s.median_ms - 3.0).abs() < 1e-9);
        assert!((s.mean_ms - 3.0).abs() < 1e-9);
        assert!((s.p90_ms - 4.6).abs() < 1e-9);
    }

    #[test]
    fn mlp_not_applicable_on_other_user_count() {
        let cfg = SystemConfig::standard(4, 2);
        let model = AnyModel::new(ModelKind::Mlp, 4, 2);
        let params = model.policy().init_params(1);
        let test = gen_dataset(&cfg.with_users(3), 4, 2).unwrap();
        let m = Method::Learned {
            model: &model,
            params: &params,
            trained_users: Some(2),
        };
        let r = evaluate(&m, &cfg, &test, LatencyConfig { warmup: 1, reps: 2 });
        assert!(matches!(r, Err(Error::NotApplicable(_))));
    }

    #[test]
    fn report_mean_matches_samples() {
        let cfg = SystemConfig::standard(4, 3);
        let model = AnyModel::new(ModelKind::Bgat, 4, 3);
        let params = model.policy().init_params(3);
        let test = gen_dataset(&cfg, 6, 2).unwrap();
        let m = Method::Learned {
            model: &model,
            params: &params,
            trained_users: None,
        };
        let r = evaluate(&m, &cfg, &test, LatencyConfig { warmup: 1, reps: 3 }).unwrap();
        let mean = r.per_sample_ee.iter().sum::<f64>() / 6.0;
        assert!((r.mean_ee - mean).abs() <= 1e-12);
        assert_eq!(r.feasibility_rate, 1.0);
        assert!(r.graph_latency.is_some());
    }

    #[test]
    fn fixed_path_is_feasible() {
        let cfg = SystemConfig::standard(2, 2);
        let test = gen_dataset(&cfg, 3, 4).unwrap();
        let r = evaluate(&Method::Fixed { tol: 1e-6, max_iter: 100 }, &cfg, &test, LatencyConfig::default()).unwrap();
        assert_eq!(r.feasibility_rate, 1.0);
        assert_eq!(r.model_id, "Fixed");
    }
}
