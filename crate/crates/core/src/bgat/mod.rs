//! Bipartite graph attention policy, its learning baselines, and the
//! unsupervised loss.
//!
//! Every model ends in the same two feasibility readouts, so any parameter
//! setting yields a placement and a power allocation that satisfy the
//! budget, spacing and range constraints.

pub mod baselines;
pub mod checkpoint;
pub mod forward;
pub mod loss;
pub mod readout;

use serde::{Deserialize, Serialize};

use crate::diffkit::{self, ParamSet, ParamShapes, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::FeatureScaling;
use crate::model::{AntennaPlacement, PowerAllocation, Solution, SystemConfig, UserLayout};

pub use baselines::{GatPoolArchitecture, GatPoolModel, MlpBaselineArchitecture, MlpBaselineModel};
pub use checkpoint::Checkpoint;
pub use forward::{BgatModel, BlockTrace};
pub use readout::{positions_from_deltas, scale_to_budget};

/// How antenna and user features are handed to the next block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandOff {
    /// Antennas get the projected `(δ, p)`; users keep their coordinates.
    #[default]
    Projected,
    /// Both node types get their raw MLP outputs.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgatArchitecture {
    pub n_blocks: usize,
    pub heads: usize,
    pub head_width: usize,
    /// Hidden widths of the per-node MLP between the attention output
    /// (`heads × head_width`) and the 2-wide node output.
    pub mlp_hidden: Vec<usize>,
    /// Both message directions use the same attention parameters.
    pub shared_attention: bool,
    pub hand_off: HandOff,
    pub feature_scaling: FeatureScaling,
}

impl Default for BgatArchitecture {
    fn default() -> Self {
        Self {
            n_blocks: 5,
            heads: 4,
            head_width: 8,
            mlp_hidden: vec![16],
            shared_attention: true,
            hand_off: HandOff::Projected,
            feature_scaling: FeatureScaling::Normalized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bgat,
    Mlp,
    GatPool,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Bgat => "BGAT",
            ModelKind::Mlp => "MLP",
            ModelKind::GatPool => "GAT",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bgat" => Ok(ModelKind::Bgat),
            "mlp" => Ok(ModelKind::Mlp),
            "gat" | "gatpool" | "gat_pool" | "gat-pool" => Ok(ModelKind::GatPool),
            other => Err(Error::InvalidInput(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Output of a policy recorded on a tape: positions (m) and powers (W), both
/// `N × 1`.
#[derive(Debug, Clone, Copy)]
pub struct SolutionVars {
    pub x: Var,
    pub p: Var,
}

impl SolutionVars {
    pub fn to_solution(&self, tape: &Tape) -> Solution {
        Solution {
            placement: AntennaPlacement {
                x: tape.value(self.x).data.clone(),
            },
            power: PowerAllocation {
                p: tape.value(self.p).data.clone(),
            },
        }
    }
}

/// A learned map from a user layout to a feasible solution.
pub trait Policy: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn shapes(&self) -> &ParamShapes;

    fn n_antennas(&self) -> usize;

    /// User count the parameters are tied to, if any.
    fn fixed_users(&self) -> Option<usize> {
        None
    }

    fn forward_tape(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        cfg: &SystemConfig,
        layout: &UserLayout,
    ) -> Result<SolutionVars>;

    /// Rejects configurations the parameters cannot serve.
    fn check_applicable(&self, cfg: &SystemConfig, layout: &UserLayout) -> Result<()> {
        if cfg.n_antennas != self.n_antennas() {
            return Err(Error::NotApplicable(format!(
                "{} trained for N = {}, got N = {}",
                self.kind().label(),
                self.n_antennas(),
                cfg.n_antennas
            )));
        }
        if let Some(m) = self.fixed_users() {
            if layout.len() != m {
                return Err(Error::NotApplicable(format!(
                    "{} trained for M = {m}, got M = {}",
                    self.kind().label(),
                    layout.len()
                )));
            }
        }
        if layout.is_empty() {
            return Err(Error::InvalidInput("layout has no users".into()));
        }
        Ok(())
    }

    fn init_params(&self, seed: u64) -> ParamSet {
        diffkit::he_init(self.shapes(), seed)
    }

    /// Forward pass without keeping the tape.
    fn solve(&self, params: &ParamSet, cfg: &SystemConfig, layout: &UserLayout) -> Result<Solution> {
        self.check_applicable(cfg, layout)?;
        let mut tape = Tape::new();
        let out = self.forward_tape(&mut tape, params, cfg, layout)?;
        tape.check_finite()?;
        Ok(out.to_solution(&tape))
    }

    /// Unsupervised loss of one sample and its gradient.
    fn loss_and_grad(&self, params: &ParamSet, cfg: &SystemConfig, layout: &UserLayout) -> Result<(f64, Vec<f64>)> {
        self.check_applicable(cfg, layout)?;
        let (loss, g) = diffkit::grad(params, |tape| {
            let out = self.forward_tape(tape, params, cfg, layout)?;
            loss::loss_on_tape(tape, cfg, layout, out.x, out.p)
        })?;
        Ok((loss, g.values))
    }

    /// Unsupervised loss of one sample (forward only).
    fn loss(&self, params: &ParamSet, cfg: &SystemConfig, layout: &UserLayout) -> Result<f64> {
        self.check_applicable(cfg, layout)?;
        let mut tape = Tape::new();
        let out = self.forward_tape(&mut tape, params, cfg, layout)?;
        let l = loss::loss_on_tape(&mut tape, cfg, layout, out.x, out.p)?;
        tape.check_finite()?;
        Ok(tape.scalar(l))
    }
}

/// Any of the three learned models.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnyModel {
    Bgat(BgatModel),
    Mlp(MlpBaselineModel),
    GatPool(GatPoolModel),
}

impl AnyModel {
    pub fn new(kind: ModelKind, n_antennas: usize, n_users: usize) -> Self {
        match kind {
            ModelKind::Bgat => AnyModel::Bgat(BgatModel::new(BgatArchitecture::default(), n_antennas)),
            ModelKind::Mlp => AnyModel::Mlp(MlpBaselineModel::new(
                MlpBaselineArchitecture::default(),
                n_antennas,
                n_users,
            )),
            ModelKind::GatPool => {
                AnyModel::GatPool(GatPoolModel::new(GatPoolArchitecture::default(), n_antennas))
            }
        }
    }

    pub fn policy(&self) -> &dyn Policy {
        match self {
            AnyModel::Bgat(m) => m,
            AnyModel::Mlp(m) => m,
            AnyModel::GatPool(m) => m,
        }
    }
}
