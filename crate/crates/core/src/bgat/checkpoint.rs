//! JSON model checkpoints.
//!
//! Layout (version 1):
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "model": { "kind": "bgat" | "mlp" | "gat_pool", <architecture fields>, "n_antennas": N, ... },
//!   "params": {
//!     "shapes": { "specs": [ { "name", "rows", "cols", "kind", "offset" }, ... ], "total": T },
//!     "values": [ T floats in flat-index order ],
//!     "seed": <u64 or null>
//!   },
//!   "trained_users": <M or null>
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnyModel;
use crate::diffkit::ParamSet;
use crate::error::{Error, Result};
use crate::model::SystemConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: AnyModel,
    pub params: ParamSet,
    /// User count of the training set.
    pub trained_users: Option<usize>,
}

impl Checkpoint {
    pub fn new(model: AnyModel, params: ParamSet, trained_users: Option<usize>) -> Result<Self> {
        let ck = Self {
            format_version: CHECKPOINT_VERSION,
            model,
            params,
            trained_users,
        };
        ck.validate()?;
        Ok(ck)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        let expected = self.model.policy().shapes();
        if &self.params.shapes != expected || self.params.values.len() != expected.total() {
            return Err(Error::Checkpoint(
                "parameter shapes do not match the model architecture".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let ck: Checkpoint = serde_json::from_reader(f)?;
        ck.validate()?;
        Ok(ck)
    }

    /// Loads a checkpoint and rejects it if it was built for a different
    /// antenna count than `cfg`.
    pub fn load_for(path: impl AsRef<Path>, cfg: &SystemConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        ck.ensure_antennas(cfg)?;
        Ok(ck)
    }

    pub fn ensure_antennas(&self, cfg: &SystemConfig) -> Result<()> {
        let n = self.model.policy().n_antennas();
        if n != cfg.n_antennas {
            return Err(Error::Checkpoint(format!(
                "model was trained for N = {n} antennas but the configuration has N = {}",
                cfg.n_antennas
            )));
        }
        Ok(())
    }
}
