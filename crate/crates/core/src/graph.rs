//! Complete bipartite user–antenna graph with normalized features.

use serde::{Deserialize, Serialize};

use crate::bgat::readout::positions_from_deltas;
use crate::diffkit::{budget_scale, Tensor};
use crate::error::{Error, Result};
use crate::model::{user_antenna_distance, AntennaPlacement, PowerAllocation, Solution, SystemConfig, UserLayout};

/// Whether node and edge features are divided by the problem scales.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScaling {
    #[default]
    Normalized,
    Raw,
}

/// Divisors applied to features: lengths by `length`, powers by `power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormScales {
    pub length: f64,
    pub power: f64,
}

impl NormScales {
    pub fn new(cfg: &SystemConfig, scaling: FeatureScaling) -> Self {
        match scaling {
            FeatureScaling::Normalized => Self {
                length: cfg.half_range_m,
                power: cfg.power_budget_w,
            },
            FeatureScaling::Raw => Self {
                length: 1.0,
                power: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    /// `M × 2`: user `(x, y)`.
    pub user_features: Tensor,
    /// `N × 2`: antenna `(δ_n, p_n)`.
    pub antenna_features: Tensor,
    /// `M × N`: user–antenna distances.
    pub edge_features: Tensor,
    pub norm_scales: NormScales,
}

impl BipartiteGraph {
    pub fn n_users(&self) -> usize {
        self.user_features.rows
    }

    pub fn n_antennas(&self) -> usize {
        self.antenna_features.rows
    }

    /// Features converted back to meters and watts.
    pub fn denormalized(&self) -> BipartiteGraph {
        let NormScales { length, power } = self.norm_scales;
        let mut g = self.clone();
        g.user_features.data.iter_mut().for_each(|v| *v *= length);
        g.edge_features.data.iter_mut().for_each(|v| *v *= length);
        for n in 0..g.antenna_features.rows {
            let d = g.antenna_features.get(n, 0);
            let p = g.antenna_features.get(n, 1);
            g.antenna_features.set(n, 0, d * length);
            g.antenna_features.set(n, 1, p * power);
        }
        g.norm_scales = NormScales {
            length: 1.0,
            power: 1.0,
        };
        g
    }

    /// Writes the feature matrices and scales as pretty JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn edge_matrix(cfg: &SystemConfig, layout: &UserLayout, placement: &AntennaPlacement, length: f64) -> Tensor {
    let n = placement.x.len();
    let mut e = Tensor::zeros(layout.len(), n);
    for (m, u) in layout.positions.iter().enumerate() {
        for (j, &x) in placement.x.iter().enumerate() {
            e.set(m, j, user_antenna_distance(cfg, u, x) / length);
        }
    }
    e
}

/// Initial interval per antenna, `B_max / (N - 1)`; a single antenna gets
/// the whole slack.
pub fn initial_interval(cfg: &SystemConfig) -> Result<f64> {
    let slack = cfg.derived()?.slack_budget;
    Ok(slack / (cfg.n_antennas.max(2) - 1) as f64)
}

/// Builds the graph for a user layout together with the initial solution it
/// encodes.
///
/// Intervals start at `B_max / (N - 1)` and powers at `P_max / N`. The
/// initial placement comes from the budget-scaled intervals.
pub fn build_graph(
    cfg: &SystemConfig,
    layout: &UserLayout,
    scaling: FeatureScaling,
) -> Result<(BipartiteGraph, Solution)> {
    cfg.validate()?;
    if layout.is_empty() {
        return Err(Error::InvalidInput("graph needs at least one user".into()));
    }
    let n = cfg.n_antennas;
    let scales = NormScales::new(cfg, scaling);
    let consts = cfg.derived()?;
    let delta0 = vec![initial_interval(cfg)?; n];
    let projected = budget_scale(&delta0, consts.slack_budget);
    let placement = positions_from_deltas(&projected, cfg)?;
    let power = PowerAllocation::uniform(cfg);

    let mut user_features = Tensor::zeros(layout.len(), 2);
    for (m, u) in layout.positions.iter().enumerate() {
        user_features.set(m, 0, u[0] / scales.length);
        user_features.set(m, 1, u[1] / scales.length);
    }
    let mut antenna_features = Tensor::zeros(n, 2);
    for j in 0..n {
        antenna_features.set(j, 0, delta0[j] / scales.length);
        antenna_features.set(j, 1, power.p[j] / scales.power);
    }
    let edge_features = edge_matrix(cfg, layout, &placement, scales.length);
    let graph = BipartiteGraph {
        user_features,
        antenna_features,
        edge_features,
        norm_scales: scales,
    };
    Ok((graph, Solution { placement, power }))
}

/// Recomputes every edge feature for a new placement.
pub fn update_edge_features(
    graph: &BipartiteGraph,
    cfg: &SystemConfig,
    layout: &UserLayout,
    placement: &AntennaPlacement,
) -> BipartiteGraph {
    BipartiteGraph {
        edge_features: edge_matrix(cfg, layout, placement, graph.norm_scales.length),
        ..graph.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> UserLayout {
        UserLayout::from_xy(&[(10.0, -20.0), (-50.0, 35.0), (0.0, 0.0)])
    }

    #[test]
    fn two_antenna_init_is_budget_scaled() {
        let cfg = SystemConfig::standard(2, 3);
        let (g, sol) = build_graph(&cfg, &layout(), FeatureScaling::Raw).unwrap();
        let b = cfg.derived().unwrap().slack_budget;
        // Literal init: δ = B_max per antenna.
        assert_eq!(g.antenna_features.get(0, 0), b);
        // Scaled to B_max/2 each before the positions are derived.
        assert!((sol.placement.x[0] - (b / 2.0 - 100.0)).abs() < 1e-12);
        assert!((sol.placement.x[1] - (b - 100.0 + cfg.guard_distance_m)).abs() < 1e-12);
        assert_eq!(sol.power.p, vec![0.5, 0.5]);
    }

    #[test]
    fn user_under_antenna_has_height_as_distance() {
        let cfg = SystemConfig::standard(2, 1);
        let (_, sol) = build_graph(&cfg, &layout(), FeatureScaling::Raw).unwrap();
        let x0 = sol.placement.x[0];
        let single = UserLayout::from_xy(&[(x0, 0.0)]);
        let (g, _) = build_graph(&cfg, &single, FeatureScaling::Raw).unwrap();
        assert!((g.edge_features.get(0, 0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn empty_layout_rejected() {
        let cfg = SystemConfig::standard(4, 0);
        let empty = UserLayout { positions: vec![] };
        assert!(build_graph(&cfg, &empty, FeatureScaling::Normalized).is_err());
    }

    #[test]
    fn edge_refresh_idempotent_and_local() {
        let cfg = SystemConfig::standard(4, 3);
        let lay = layout();
        let (g, sol) = build_graph(&cfg, &lay, FeatureScaling::Normalized).unwrap();
        let same = update_edge_features(&g, &cfg, &lay, &sol.placement);
        assert_eq!(same, g);

        let mut moved = sol.placement.clone();
        moved.x[2] += 7.0;
        let g2 = update_edge_features(&g, &cfg, &lay, &moved);
        for m in 0..3 {
            for n in 0..4 {
                let changed = g2.edge_features.get(m, n) != g.edge_features.get(m, n);
                assert_eq!(changed, n == 2, "m={m} n={n}");
            }
        }
    }

    #[test]
    fn shared_geometry_at_origin() {
        let cfg = SystemConfig::standard(1, 3);
        let lay = UserLayout::from_xy(&[(0.0, 0.0); 3]);
        let (g, _) = build_graph(&cfg, &lay, FeatureScaling::Normalized).unwrap();
        let x = 42.0;
        let g2 = update_edge_features(&g, &cfg, &lay, &AntennaPlacement { x: vec![x] });
        let expected = (x * x + 25.0f64).sqrt() / 100.0;
        for m in 0..3 {
            assert!((g2.edge_features.get(m, 0) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn denormalization_recovers_raw_features() {
        let cfg = SystemConfig::standard(4, 3);
        let lay = layout();
        let (norm, _) = build_graph(&cfg, &lay, FeatureScaling::Normalized).unwrap();
        let (raw, _) = build_graph(&cfg, &lay, FeatureScaling::Raw).unwrap();
        let back = norm.denormalized();
        for (a, b) in [
            (&back.user_features, &raw.user_features),
            (&back.antenna_features, &raw.antenna_features),
            (&back.edge_features, &raw.edge_features),
        ] {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn user_permutation_permutes_rows_only() {
        let cfg = SystemConfig::standard(4, 3);
        let lay = layout();
        let perm = [2usize, 0, 1];
        let permuted = UserLayout {
            positions: perm.iter().map(|&i| lay.positions[i]).collect(),
        };
        let (g, _) = build_graph(&cfg, &lay, FeatureScaling::Normalized).unwrap();
        let (gp, _) = build_graph(&cfg, &permuted, FeatureScaling::Normalized).unwrap();
        assert_eq!(g.antenna_features, gp.antenna_features);
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(gp.user_features.row(new), g.user_features.row(old));
            assert_eq!(gp.edge_features.row(new), g.edge_features.row(old));
        }
    }
}
