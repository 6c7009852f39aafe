use serde::{Deserialize, Serialize};

use super::loss::edges_on_tape;
use super::readout::{delta_readout, power_readout};
use super::{BgatArchitecture, HandOff, ModelKind, Policy, SolutionVars};
use crate::diffkit::layers::{gat_layer, HeadSlots, HeadVars, MlpSlots, MlpVars};
use crate::diffkit::{ParamSet, ParamShapes, Slot, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{build_graph, NormScales};
use crate::model::{Solution, SystemConfig, UserLayout};

/// Parameter slots of one block.
#[derive(Debug, Clone)]
pub struct BlockSlots {
    /// Heads used when users attend over antennas.
    pub user_heads: Vec<HeadSlots>,
    /// Heads used when antennas attend over users; `None` when shared.
    pub antenna_heads: Option<Vec<HeadSlots>>,
    pub residual: Slot,
    pub mlp: MlpSlots,
    pub readout_delta: MlpSlots,
    pub readout_power: MlpSlots,
}

/// Block-wise bipartite graph attention network for a fixed antenna count.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "BgatDescriptor", from = "BgatDescriptor")]
pub struct BgatModel {
    pub arch: BgatArchitecture,
    pub n_antennas: usize,
    pub shapes: ParamShapes,
    pub blocks: Vec<BlockSlots>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BgatDescriptor {
    arch: BgatArchitecture,
    n_antennas: usize,
}

impl From<BgatModel> for BgatDescriptor {
    fn from(m: BgatModel) -> Self {
        Self {
            arch: m.arch,
            n_antennas: m.n_antennas,
        }
    }
}

impl From<BgatDescriptor> for BgatModel {
    fn from(d: BgatDescriptor) -> Self {
        BgatModel::new(d.arch, d.n_antennas)
    }
}

/// Node feature width entering every block.
const NODE_FEATURES: usize = 2;

impl BgatModel {
    /// Registers parameters block by block: attention heads (`a`, `W_s`,
    /// `W_t`, `w_e`) in head order, then the residual, the node MLP and the
    /// two readout MLPs.
    pub fn new(arch: BgatArchitecture, n_antennas: usize) -> Self {
        let mut shapes = ParamShapes::new();
        let width = arch.heads * arch.head_width;
        let n = n_antennas;
        let blocks = (0..arch.n_blocks)
            .map(|d| {
                let heads = |shapes: &mut ParamShapes, tag: &str| {
                    (0..arch.heads)
                        .map(|k| {
                            HeadSlots::register(
                                shapes,
                                &format!("block{d}.{tag}head{k}"),
                                NODE_FEATURES,
                                arch.head_width,
                                true,
                            )
                        })
                        .collect::<Vec<_>>()
                };
                let user_heads = heads(&mut shapes, "");
                let antenna_heads = (!arch.shared_attention).then(|| heads(&mut shapes, "rev_"));
                let residual = shapes.weight(format!("block{d}.w_r"), width, NODE_FEATURES);
                let mut widths = vec![width];
                widths.extend(&arch.mlp_hidden);
                widths.push(NODE_FEATURES);
                let mlp = MlpSlots::register(&mut shapes, &format!("block{d}.mlp"), &widths, true);
                let readout_delta =
                    MlpSlots::register(&mut shapes, &format!("block{d}.mlp_delta"), &[n, 2 * n, n], false);
                let readout_power =
                    MlpSlots::register(&mut shapes, &format!("block{d}.mlp_power"), &[n, 2 * n, n], false);
                BlockSlots {
                    user_heads,
                    antenna_heads,
                    residual,
                    mlp,
                    readout_delta,
                    readout_power,
                }
            })
            .collect();
        Self {
            arch,
            n_antennas,
            shapes,
            blocks,
        }
    }

    /// Runs the network and returns the recorded output together with every
    /// block's intermediate quantities.
    pub fn forward_traced(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        cfg: &SystemConfig,
        layout: &UserLayout,
    ) -> Result<(SolutionVars, Vec<BlockTrace>)> {
        let mut trace = Vec::with_capacity(self.blocks.len());
        let out = self.run(tape, params, cfg, layout, Some(&mut trace))?;
        Ok((out, trace))
    }

    fn run(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        cfg: &SystemConfig,
        layout: &UserLayout,
        mut trace: Option<&mut Vec<BlockTrace>>,
    ) -> Result<SolutionVars> {
        if params.len() != self.shapes.total() {
            return Err(Error::Shape(format!(
                "BGAT expects {} parameters, got {}",
                self.shapes.total(),
                params.len()
            )));
        }
        let scales = NormScales::new(cfg, self.arch.feature_scaling);
        let (graph, init) = build_graph(cfg, layout, self.arch.feature_scaling)?;
        let mut user_x = tape.constant(graph.user_features);
        let mut ant_x = tape.constant(graph.antenna_features);
        let mut edges = tape.constant(graph.edge_features);
        let mut x = tape.constant(Tensor::column(init.placement.x));
        let mut p = tape.constant(Tensor::column(init.power.p));

        for (d, block) in self.blocks.iter().enumerate() {
            tape.stage(format!("block {d} attention"));
            let user_heads: Vec<HeadVars> =
                block.user_heads.iter().map(|h| HeadVars::load(tape, params, h)).collect();
            let antenna_heads: Vec<HeadVars> = match &block.antenna_heads {
                Some(hs) => hs.iter().map(|h| HeadVars::load(tape, params, h)).collect(),
                None => user_heads.clone(),
            };
            let residual = tape.param(params, block.residual);
            let edges_t = tape.transpose(edges);
            let emb_users = gat_layer(tape, &user_heads, residual, user_x, ant_x, Some(edges));
            let emb_ants = gat_layer(tape, &antenna_heads, residual, ant_x, user_x, Some(edges_t));

            tape.stage(format!("block {d} mlp"));
            let mlp = MlpVars::load(tape, params, &block.mlp);
            let h_ants = mlp.forward_rows(tape, emb_ants);
            let h_users = match self.arch.hand_off {
                HandOff::Raw => Some(mlp.forward_rows(tape, emb_users)),
                HandOff::Projected => None,
            };

            tape.stage(format!("block {d} readout"));
            let delta_in = tape.col(h_ants, 0);
            let power_in = tape.col(h_ants, 1);
            let mlp_delta = MlpVars::load(tape, params, &block.readout_delta);
            let mlp_power = MlpVars::load(tape, params, &block.readout_power);
            let (delta_norm, new_x) = delta_readout(tape, Some(&mlp_delta), delta_in, cfg, scales.length)?;
            let (p_norm, new_p) = power_readout(tape, Some(&mlp_power), power_in, cfg, scales.power);
            x = new_x;
            p = new_p;

            tape.stage(format!("block {d} edge refresh"));
            edges = edges_on_tape(tape, cfg, layout, x, scales.length);
            match self.arch.hand_off {
                HandOff::Projected => ant_x = tape.concat_cols(&[delta_norm, p_norm]),
                HandOff::Raw => {
                    ant_x = h_ants;
                    user_x = h_users.expect("raw hand-off computes user outputs");
                }
            }
            let Some(trace) = trace.as_deref_mut() else { continue };
            trace.push(BlockTrace {
                user_embeddings: tape.value(emb_users).clone(),
                antenna_embeddings: tape.value(emb_ants).clone(),
                antenna_outputs: tape.value(h_ants).clone(),
                deltas: tape.value(delta_norm).data.iter().map(|v| v * scales.length).collect(),
                positions: tape.value(x).data.clone(),
                powers: tape.value(p).data.clone(),
                edges: tape.value(edges).clone(),
            });
        }
        Ok(SolutionVars { x, p })
    }

    /// Forward pass returning the final solution and the block trace.
    pub fn forward(
        &self,
        params: &ParamSet,
        cfg: &SystemConfig,
        layout: &UserLayout,
    ) -> Result<(Solution, Vec<BlockTrace>)> {
        self.check_applicable(cfg, layout)?;
        let mut tape = Tape::new();
        let (out, trace) = self.forward_traced(&mut tape, params, cfg, layout)?;
        tape.check_finite()?;
        Ok((out.to_solution(&tape), trace))
    }
}

/// Intermediate quantities of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTrace {
    pub user_embeddings: Tensor,
    pub antenna_embeddings: Tensor,
    /// `N × 2` node-MLP output feeding the two readouts.
    pub antenna_outputs: Tensor,
    /// Budget-scaled intervals, meters.
    pub deltas: Vec<f64>,
    pub positions: Vec<f64>,
    pub powers: Vec<f64>,
    /// Refreshed edge features (normalized).
    pub edges: Tensor,
}

impl Policy for BgatModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Bgat
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
        self.run(tape, params, cfg, layout, None)
    }
}
