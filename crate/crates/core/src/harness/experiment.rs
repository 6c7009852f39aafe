use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{gen_dataset, Dataset};
use super::eval::{evaluate, EvalReport, LatencyConfig, Method};
use super::report::{compare_table, CompareTable, Outcome, Reference, RowKey};
use super::train::{train_with, EpochRecord, TrainConfig, TrainHistory};
use crate::bgat::{AnyModel, BgatArchitecture, BgatModel, Checkpoint, ModelKind};
use crate::error::{Error, Result};
use crate::model::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ScaConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 100 }
    }
}

/// One JSON file drives every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Physical parameters; `n_antennas` / `n_users` are overridden per run.
    pub system: SystemConfig,
    pub antennas: Vec<usize>,
    pub train_users: usize,
    pub test_users: Vec<usize>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub models: Vec<ModelKind>,
    pub bgat: BgatArchitecture,
    pub train: TrainConfig,
    pub sca: ScaConfig,
    pub latency: LatencyConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub references: Vec<Reference>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::standard(4, 2),
            antennas: vec![4],
            train_users: 2,
            test_users: vec![2, 3],
            train_samples: 10_000,
            test_samples: 200,
            models: vec![ModelKind::Mlp, ModelKind::GatPool, ModelKind::Bgat],
            bgat: BgatArchitecture::default(),
            train: TrainConfig::desk(),
            sca: ScaConfig::default(),
            latency: LatencyConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
            references: Vec::new(),
        }
    }
}

/// Stream tags mixed into the base seed.
#[derive(Debug, Clone, Copy)]
pub enum SeedStream {
    Train { n: usize, m: usize },
    Test { n: usize, m: usize },
    Init,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas.is_empty() || self.test_users.is_empty() {
            return Err(Error::InvalidInput("antenna and test-user grids must be nonempty".into()));
        }
        if self.train_users == 0 || self.test_users.contains(&0) {
            return Err(Error::InvalidInput("user counts must be positive".into()));
        }
        if self.train_samples == 0 || self.test_samples == 0 {
            return Err(Error::InvalidInput("sample counts must be positive".into()));
        }
        for &n in &self.antennas {
            self.system_for(n, self.train_users).validate()?;
        }
        self.train.validate()
    }

    pub fn system_for(&self, n: usize, m: usize) -> SystemConfig {
        SystemConfig {
            n_antennas: n,
            n_users: m,
            ..self.system.clone()
        }
    }

    pub fn derive_seed(&self, stream: SeedStream) -> u64 {
        let (tag, n, m) = match stream {
            SeedStream::Train { n, m } => (1u64, n, m),
            SeedStream::Test { n, m } => (2, n, m),
            SeedStream::Init => (3, 0, 0),
        };
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for v in [tag, n as u64, m as u64] {
            h = (h ^ v).wrapping_mul(0x1000_0000_01b3).rotate_left(29);
        }
        h
    }

    pub fn train_set(&self, n: usize) -> Result<Dataset> {
        let m = self.train_users;
        gen_dataset(&self.system_for(n, m), self.train_samples, self.derive_seed(SeedStream::Train { n, m }))
    }

    pub fn test_set(&self, n: usize, m: usize) -> Result<Dataset> {
        gen_dataset(&self.system_for(n, m), self.test_samples, self.derive_seed(SeedStream::Test { n, m }))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.derive_seed(SeedStream::Init),
            ..self.train.clone()
        }
    }

    pub fn checkpoint_path(&self, kind: ModelKind, n: usize) -> PathBuf {
        self.output_dir
            .join(format!("{}_n{}_m{}.json", kind.label().to_lowercase(), n, self.train_users))
    }
}

/// Trains one model kind for `n` antennas on the configured training set.
pub fn train_model<F: FnMut(&EpochRecord)>(
    exp: &ExperimentConfig,
    kind: ModelKind,
    n: usize,
    on_epoch: F,
) -> Result<(Checkpoint, TrainHistory)> {
    let cfg = exp.system_for(n, exp.train_users);
    let data = exp.train_set(n)?;
    let model = match kind {
        ModelKind::Bgat => AnyModel::Bgat(BgatModel::new(exp.bgat.clone(), n)),
        _ => AnyModel::new(kind, n, exp.train_users),
    };
    let (params, history) = train_with(&model, &cfg, &data, &exp.train_config(), on_epoch)?;
    Ok((Checkpoint::new(model, params, Some(exp.train_users))?, history))
}

/// Evaluates a checkpoint; not-applicable configurations become
/// [`Outcome::NotApplicable`].
pub fn evaluate_checkpoint(exp: &ExperimentConfig, ck: &Checkpoint, n: usize, m_test: usize) -> Result<Outcome> {
    let method = Method::Learned {
        model: &ck.model,
        params: &ck.params,
        trained_users: ck.trained_users,
    };
    outcome(evaluate(&method, &exp.system_for(n, m_test), &exp.test_set(n, m_test)?, exp.latency))
}

pub fn evaluate_fixed(exp: &ExperimentConfig, n: usize, m_test: usize) -> Result<EvalReport> {
    let method = Method::Fixed {
        tol: exp.sca.tol,
        max_iter: exp.sca.max_iter,
    };
    evaluate(&method, &exp.system_for(n, m_test), &exp.test_set(n, m_test)?, exp.latency)
}

fn outcome(r: Result<EvalReport>) -> Result<Outcome> {
    match r {
        Ok(r) => Ok(Outcome::Report(r)),
        Err(Error::NotApplicable(why)) => Ok(Outcome::NotApplicable(why)),
        Err(e) => Err(e),
    }
}

/// Evaluates every available checkpoint and the fixed baseline on the full
/// grid. Missing checkpoints leave their cells not applicable.
pub fn build_report(exp: &ExperimentConfig, checkpoints: &[(usize, Checkpoint)]) -> Result<CompareTable> {
    let mut grid = Vec::new();
    let mut outcomes = Vec::new();
    for &n in &exp.antennas {
        for &m in &exp.test_users {
            let key = RowKey {
                n_antennas: n,
                m_train: exp.train_users,
                m_test: m,
            };
            grid.push(key);
            outcomes.push((key, "Fixed".to_string(), Outcome::Report(evaluate_fixed(exp, n, m)?)));
            for (ck_n, ck) in checkpoints.iter().filter(|(ck_n, _)| *ck_n == n) {
                let label = ck.model.policy().kind().label().to_string();
                outcomes.push((key, label, evaluate_checkpoint(exp, ck, *ck_n, m)?));
            }
        }
    }
    compare_table(&grid, &outcomes, exp.references.clone())
}
