//! Learning baselines sharing the BGAT feasibility readouts: a plain MLP on
//! flattened user coordinates, and a GAT over a user-only graph with global
//! max pooling.

use serde::{Deserialize, Serialize};

use super::readout::{delta_readout, power_readout};
use super::{ModelKind, Policy, SolutionVars};
use crate::diffkit::layers::{gat_layer, HeadSlots, HeadVars, MlpSlots, MlpVars};
use crate::diffkit::{ParamSet, ParamShapes, Slot, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{FeatureScaling, NormScales};
use crate::model::{SystemConfig, UserLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpBaselineArchitecture {
    pub hidden: Vec<usize>,
    pub feature_scaling: FeatureScaling,
}

impl Default for MlpBaselineArchitecture {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            feature_scaling: FeatureScaling::Normalized,
        }
    }
}

/// `2M → hidden → 2N` feed-forward network. The first `N` outputs are the
/// raw intervals, the last `N` the raw powers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "MlpDescriptor", from = "MlpDescriptor")]
pub struct MlpBaselineModel {
    pub arch: MlpBaselineArchitecture,
    pub n_antennas: usize,
    pub n_users: usize,
    pub shapes: ParamShapes,
    pub mlp: MlpSlots,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MlpDescriptor {
    arch: MlpBaselineArchitecture,
    n_antennas: usize,
    n_users: usize,
}

impl From<MlpBaselineModel> for MlpDescriptor {
    fn from(m: MlpBaselineModel) -> Self {
        Self {
            arch: m.arch,
            n_antennas: m.n_antennas,
            n_users: m.n_users,
        }
    }
}

impl From<MlpDescriptor> for MlpBaselineModel {
    fn from(d: MlpDescriptor) -> Self {
        MlpBaselineModel::new(d.arch, d.n_antennas, d.n_users)
    }
}

impl MlpBaselineModel {
    pub fn new(arch: MlpBaselineArchitecture, n_antennas: usize, n_users: usize) -> Self {
        let mut shapes = ParamShapes::new();
        let mut widths = vec![2 * n_users];
        widths.extend(&arch.hidden);
        widths.push(2 * n_antennas);
        let mlp = MlpSlots::register(&mut shapes, "mlp", &widths, false);
        Self {
            arch,
            n_antennas,
            n_users,
            shapes,
            mlp,
        }
    }
}

impl Policy for MlpBaselineModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Mlp
    }

    fn shapes(&self) -> &ParamShapes {
        &self.shapes
    }

    fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    fn fixed_users(&self) -> Option<usize> {
        Some(self.n_users)
    }

    fn forward_tape(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        cfg: &SystemConfig,
        layout: &UserLayout,
    ) -> Result<SolutionVars> {
        if layout.len() != self.n_users {
            return Err(Error::NotApplicable(format!(
                "MLP built for {} users, got {}",
                self.n_users,
                layout.len()
            )));
        }
        let scales = NormScales::new(cfg, self.arch.feature_scaling);
        let input: Vec<f64> = layout
            .positions
            .iter()
            .flat_map(|u| [u[0] / scales.length, u[1] / scales.length])
            .collect();
        tape.stage("mlp");
        let xin = tape.constant(Tensor::column(input));
        let mlp = MlpVars::load(tape, params, &self.mlp);
        let out = mlp.forward_vec(tape, xin);
        let n = self.n_antennas;
        let out_row = tape.transpose(out);
        let (delta_raw, power_raw) = split_halves(tape, out_row, n);
        tape.stage("readout");
        let (_, x) = delta_readout(tape, None, delta_raw, cfg, scales.length)?;
        let (_, p) = power_readout(tape, None, power_raw, cfg, scales.power);
        Ok(SolutionVars { x, p })
    }
}

/// Splits a `1 × 2N` row into two `N × 1` columns.
fn split_halves(tape: &mut Tape, row: Var, n: usize) -> (Var, Var) {
    let col = tape.transpose(row);
    let mut first = Tensor::zeros(n, 2 * n);
    let mut second = Tensor::zeros(n, 2 * n);
    for i in 0..n {
        first.set(i, i, 1.0);
        second.set(i, n + i, 1.0);
    }
    let s1 = tape.constant(first);
    let s2 = tape.constant(second);
    (tape.matmul(s1, col), tape.matmul(s2, col))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatPoolArchitecture {
    pub n_layers: usize,
    pub heads: usize,
    pub head_width: usize,
    /// Hidden widths of the graph-level MLP before the `2N` output.
    pub mlp_hidden: Vec<usize>,
    pub feature_scaling: FeatureScaling,
}

impl Default for GatPoolArchitecture {
    fn default() -> Self {
        Self {
            n_layers: 2,
            heads: 4,
            head_width: 8,
            mlp_hidden: vec![64],
            feature_scaling: FeatureScaling::Normalized,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatPoolLayer {
    pub heads: Vec<HeadSlots>,
    pub residual: Slot,
}

/// GAT over a fully connected user graph (self-loops included, no edge
/// features), max pooling over users, an MLP to `2N` values, and the two
/// readout MLPs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "GatPoolDescriptor", from = "GatPoolDescriptor")]
pub struct GatPoolModel {
    pub arch: GatPoolArchitecture,
    pub n_antennas: usize,
    pub shapes: ParamShapes,
    pub layers: Vec<GatPoolLayer>,
    pub mlp: MlpSlots,
    pub readout_delta: MlpSlots,
    pub readout_power: MlpSlots,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GatPoolDescriptor {
    arch: GatPoolArchitecture,
    n_antennas: usize,
}

impl From<GatPoolModel> for GatPoolDescriptor {
    fn from(m: GatPoolModel) -> Self {
        Self {
            arch: m.arch,
            n_antennas: m.n_antennas,
        }
    }
}

impl From<GatPoolDescriptor> for GatPoolModel {
    fn from(d: GatPoolDescriptor) -> Self {
        GatPoolModel::new(d.arch, d.n_antennas)
    }
}

impl GatPoolModel {
    pub fn new(arch: GatPoolArchitecture, n_antennas: usize) -> Self {
        let mut shapes = ParamShapes::new();
        let width = arch.heads * arch.head_width;
        let n = n_antennas;
        let layers = (0..arch.n_layers)
            .map(|l| {
                let in_dim = if l == 0 { 2 } else { width };
                let heads = (0..arch.heads)
                    .map(|k| HeadSlots::register(&mut shapes, &format!("gat{l}.head{k}"), in_dim, arch.head_width, false))
                    .collect();
                let residual = shapes.weight(format!("gat{l}.w_r"), width, in_dim);
                GatPoolLayer { heads, residual }
            })
            .collect();
        let pooled = if arch.n_layers == 0 { 2 } else { width };
        let mut widths = vec![pooled];
        widths.extend(&arch.mlp_hidden);
        widths.push(2 * n);
        let mlp = MlpSlots::register(&mut shapes, "mlp", &widths, true);
        let readout_delta = MlpSlots::register(&mut shapes, "mlp_delta", &[n, 2 * n, n], false);
        let readout_power = MlpSlots::register(&mut shapes, "mlp_power", &[n, 2 * n, n], false);
        Self {
            arch,
            n_antennas,
            shapes,
            layers,
            mlp,
            readout_delta,
            readout_power,
        }
    }

    /// Pooled graph-level embedding (`1 × F`) for a layout.
    pub fn pooled_embedding(&self, params: &ParamSet, cfg: &SystemConfig, layout: &UserLayout) -> Tensor {
        let mut tape = Tape::new();
        let v = self.embed(&mut tape, params, cfg, layout);
        tape.value(v.1).clone()
    }

    /// Returns `(per-user embeddings, pooled row)`.
    fn embed(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        cfg: &SystemConfig,
        layout: &UserLayout,
    ) -> (Var, Var) {
        let scales = NormScales::new(cfg, self.arch.feature_scaling);
        let feats: Vec<Vec<f64>> = layout
            .positions
            .iter()
            .map(|u| vec![u[0] / scales.length, u[1] / scales.length])
            .collect();
        tape.stage("gat");
        let mut h = tape.constant(Tensor::from_rows(&feats));
        for layer in &self.layers {
            let heads: Vec<HeadVars> = layer.heads.iter().map(|s| HeadVars::load(tape, params, s)).collect();
            let r = tape.param(params, layer.residual);
            h = gat_layer(tape, &heads, r, h, h, None);
        }
        tape.stage("pool");
        let pooled = tape.max_rows(h);
        (h, pooled)
    }
}

impl Policy for GatPoolModel {
    fn kind(&self) -> ModelKind {
        ModelKind::GatPool
    }

    fn shapes(&self) -> &ParamShapes {
        &self.shapes
    }

    fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    fn forward_tape(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        cfg: &SystemConfig,
        layout: &UserLayout,
    ) -> Result<SolutionVars> {
        if layout.is_empty() {
            return Err(Error::InvalidInput("layout has no users".into()));
        }
        let scales = NormScales::new(cfg, self.arch.feature_scaling);
        let (_, pooled) = self.embed(tape, params, cfg, layout);
        tape.stage("mlp");
        let mlp = MlpVars::load(tape, params, &self.mlp);
        let out = mlp.forward_rows(tape, pooled);
        let (delta_in, power_in) = split_halves(tape, out, self.n_antennas);
        tape.stage("readout");
        let mlp_delta = MlpVars::load(tape, params, &self.readout_delta);
        let mlp_power = MlpVars::load(tape, params, &self.readout_power);
        let (_, x) = delta_readout(tape, Some(&mlp_delta), delta_in, cfg, scales.length)?;
        let (_, p) = power_readout(tape, Some(&mlp_power), power_in, cfg, scales.power);
        Ok(SolutionVars { x, p })
    }
}
