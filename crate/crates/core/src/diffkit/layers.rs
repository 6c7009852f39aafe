//! Differentiable layers: multi-head graph attention with optional edge
//! features, residual combination, and fully connected stacks.

use serde::{Deserialize, Serialize};

use super::params::{ParamSet, ParamShapes, Slot};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Negative slope of every LeakyReLU in the attention score.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Parameters of one attention head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadSlots {
    /// `F̃ × 1` attention vector.
    pub attn: Slot,
    /// `F̃ × F` transform of the receiving node.
    pub w_src: Slot,
    /// `F̃ × F` transform of the neighbor.
    pub w_tgt: Slot,
    /// `F̃ × 1` edge-feature transform; absent for graphs without edge features.
    pub w_edge: Option<Slot>,
}

impl HeadSlots {
    pub fn register(
        shapes: &mut ParamShapes,
        prefix: &str,
        in_dim: usize,
        width: usize,
        with_edges: bool,
    ) -> Self {
        let attn = shapes.weight(format!("{prefix}.a"), width, 1);
        let w_src = shapes.weight(format!("{prefix}.w_s"), width, in_dim);
        let w_tgt = shapes.weight(format!("{prefix}.w_t"), width, in_dim);
        let w_edge = with_edges.then(|| shapes.weight(format!("{prefix}.w_e"), width, 1));
        Self {
            attn,
            w_src,
            w_tgt,
            w_edge,
        }
    }
}

/// Head parameters loaded onto a tape.
#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub attn: Var,
    pub w_src: Var,
    pub w_tgt: Var,
    /// Edge transform as a `1 × F̃` row.
    pub w_edge_row: Option<Var>,
}

impl HeadVars {
    pub fn load(tape: &mut Tape, params: &ParamSet, slots: &HeadSlots) -> Self {
        let attn = tape.param(params, slots.attn);
        let w_src = tape.param(params, slots.w_src);
        let w_tgt = tape.param(params, slots.w_tgt);
        let w_edge_row = slots.w_edge.map(|s| {
            let w = tape.param(params, s);
            tape.transpose(w)
        });
        Self {
            attn,
            w_src,
            w_tgt,
            w_edge_row,
        }
    }
}

/// Attention weights of one receiving node over its neighbors.
///
/// `src_row` is `W_s x_i` (`1 × F̃`), `tgt` holds `W_t x_j` for every
/// neighbor (`J × F̃`) and `edge_row` the edge features `l_{i,j}` (`1 × J`).
/// Returns a `J × 1` softmax of `aᵀ LeakyReLU(W_s x_i + W_t x_j + w_e l_ij)`.
pub fn attention_weights(
    tape: &mut Tape,
    head: &HeadVars,
    src_row: Var,
    tgt: Var,
    edge_row: Option<Var>,
) -> Var {
    let mut pre = tape.add_row(tgt, src_row);
    if let (Some(w_e), Some(l)) = (head.w_edge_row, edge_row) {
        let edge_term = tape.matmul_tn(l, w_e);
        pre = tape.add(pre, edge_term);
    }
    let act = tape.leaky_relu(pre, LEAKY_SLOPE);
    let scores = tape.matmul(act, head.attn);
    tape.softmax(scores)
}

/// One multi-head attention layer over a bipartite (or homogeneous) neighbor
/// relation.
///
/// Every row of `receivers` (`I × F`) attends over all rows of `neighbors`
/// (`J × F`); `edges`, when present, is `I × J`. Output is
/// `ReLU(Concat_k Σ_j α_kij W_t,k x_j + W_r x_i)`, `I × F̃K`.
pub fn gat_layer(
    tape: &mut Tape,
    heads: &[HeadVars],
    residual: Var,
    receivers: Var,
    neighbors: Var,
    edges: Option<Var>,
) -> Var {
    let n_recv = tape.value(receivers).rows;
    let mut per_head = Vec::with_capacity(heads.len());
    for head in heads {
        let src = tape.matmul_nt(receivers, head.w_src);
        let tgt = tape.matmul_nt(neighbors, head.w_tgt);
        let mut rows = Vec::with_capacity(n_recv);
        for i in 0..n_recv {
            let src_row = tape.row(src, i);
            let edge_row = edges.map(|e| tape.row(e, i));
            let alpha = attention_weights(tape, head, src_row, tgt, edge_row);
            rows.push(tape.matmul_tn(alpha, tgt));
        }
        per_head.push(tape.concat_rows(&rows));
    }
    let concat = if per_head.len() == 1 {
        per_head[0]
    } else {
        tape.concat_cols(&per_head)
    };
    let res = tape.matmul_nt(receivers, residual);
    let combined = tape.add(concat, res);
    tape.relu(combined)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearSlots {
    /// `out × in`
    pub weight: Slot,
    /// `out × 1`
    pub bias: Slot,
}

/// Fully connected stack with ReLU after every layer except, optionally,
/// the last.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpSlots {
    pub layers: Vec<LinearSlots>,
    pub final_relu: bool,
}

impl MlpSlots {
    pub fn register(shapes: &mut ParamShapes, prefix: &str, widths: &[usize], final_relu: bool) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(t, w)| LinearSlots {
                weight: shapes.weight(format!("{prefix}.{t}.w"), w[1], w[0]),
                bias: shapes.bias(format!("{prefix}.{t}.b"), w[1]),
            })
            .collect();
        Self { layers, final_relu }
    }
}

#[derive(Debug, Clone)]
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
    final_relu: bool,
}

impl MlpVars {
    pub fn load(tape: &mut Tape, params: &ParamSet, slots: &MlpSlots) -> Self {
        let layers = slots
            .layers
            .iter()
            .map(|l| (tape.param(params, l.weight), tape.param(params, l.bias)))
            .collect();
        Self {
            layers,
            final_relu: slots.final_relu,
        }
    }

    /// Applies the stack to every row of `x` (`R × F_in` → `R × F_out`).
    pub fn forward_rows(&self, tape: &mut Tape, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (t, &(w, b)) in self.layers.iter().enumerate() {
            let lin = tape.matmul_nt(h, w);
            h = tape.add_row(lin, b);
            if t < last || self.final_relu {
                h = tape.relu(h);
            }
        }
        h
    }

    /// Applies the stack to a column vector (`F_in × 1` → `F_out × 1`).
    pub fn forward_vec(&self, tape: &mut Tape, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (t, &(w, b)) in self.layers.iter().enumerate() {
            let lin = tape.matmul(w, h);
            h = tape.add(lin, b);
            if t < last || self.final_relu {
                h = tape.relu(h);
            }
        }
        h
    }
}

/// Attention weights of receiver `i` without recording gradients.
pub fn attention_scores(
    params: &ParamSet,
    head: &HeadSlots,
    receivers: &Tensor,
    neighbors: &Tensor,
    edges: Option<&Tensor>,
    i: usize,
) -> Vec<f64> {
    let mut tape = Tape::new();
    let h = HeadVars::load(&mut tape, params, head);
    let x_i = tape.constant(Tensor::from_vec(1, receivers.cols, receivers.row(i).to_vec()));
    let nb = tape.constant(neighbors.clone());
    let src_row = tape.matmul_nt(x_i, h.w_src);
    let tgt = tape.matmul_nt(nb, h.w_tgt);
    let edge_row = edges.map(|e| tape.constant(Tensor::from_vec(1, e.cols, e.row(i).to_vec())));
    let alpha = attention_weights(&mut tape, &h, src_row, tgt, edge_row);
    tape.value(alpha).data.clone()
}

/// Evaluates [`gat_layer`] on plain tensors.
pub fn gat_layer_forward(
    params: &ParamSet,
    heads: &[HeadSlots],
    residual: Slot,
    receivers: &Tensor,
    neighbors: &Tensor,
    edges: Option<&Tensor>,
) -> Tensor {
    let mut tape = Tape::new();
    let hv: Vec<HeadVars> = heads.iter().map(|h| HeadVars::load(&mut tape, params, h)).collect();
    let r = tape.param(params, residual);
    let recv = tape.constant(receivers.clone());
    let nb = tape.constant(neighbors.clone());
    let e = edges.map(|e| tape.constant(e.clone()));
    let out = gat_layer(&mut tape, &hv, r, recv, nb, e);
    tape.value(out).clone()
}

/// Evaluates an MLP on each row of `x`.
pub fn mlp_forward(params: &ParamSet, slots: &MlpSlots, x: &Tensor) -> Result<Tensor> {
    let mut width = x.cols;
    for (t, layer) in slots.layers.iter().enumerate() {
        let spec = params.spec(layer.weight);
        if spec.cols != width {
            return Err(Error::Shape(format!(
                "layer {t} expects {} inputs, got {width}",
                spec.cols
            )));
        }
        width = spec.rows;
    }
    let mut tape = Tape::new();
    let vars = MlpVars::load(&mut tape, params, slots);
    let xv = tape.constant(x.clone());
    let out = vars.forward_rows(&mut tape, xv);
    Ok(tape.value(out).clone())
}
