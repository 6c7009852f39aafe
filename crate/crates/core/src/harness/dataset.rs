use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SystemConfig, UserLayout};

/// I.i.d. user layouts, `U(-L, L)²` per user, reproducible from
/// `(cfg, count, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub cfg: SystemConfig,
    pub seed: u64,
    pub layouts: Vec<UserLayout>,
}

pub fn gen_dataset(cfg: &SystemConfig, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InvalidInput("dataset count must be at least 1".into()));
    }
    if cfg.n_users == 0 {
        return Err(Error::InvalidInput("dataset needs at least one user".into()));
    }
    cfg.validate()?;
    let l = cfg.half_range_m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layouts = (0..count)
        .map(|_| {
            let xy: Vec<(f64, f64)> = (0..cfg.n_users)
                .map(|_| (rng.random_range(-l..=l), rng.random_range(-l..=l)))
                .collect();
            UserLayout::from_xy(&xy)
        })
        .collect();
    Ok(Dataset {
        cfg: cfg.clone(),
        seed,
        layouts,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.layouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layouts.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.cfg.n_users
    }

    /// Holds out `fraction` of the samples (at least one, leaving at least
    /// one) chosen by a seeded shuffle. Returns `(train, validation)`.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidInput(format!("validation fraction {fraction} not in (0, 1)")));
        }
        if self.len() < 2 {
            return Err(Error::InvalidInput("need at least two samples to split".into()));
        }
        let n_val = ((self.len() as f64 * fraction).round() as usize).clamp(1, self.len() - 1);
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pick = |ids: &[usize]| Dataset {
            cfg: self.cfg.clone(),
            seed: self.seed,
            layouts: ids.iter().map(|&i| self.layouts[i].clone()).collect(),
        };
        Ok((pick(&idx[n_val..]), pick(&idx[..n_val])))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let ds: Dataset = serde_json::from_reader(f)?;
        for layout in &ds.layouts {
            layout.validate(ds.cfg.half_range_m)?;
        }
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_bounds() {
        let cfg = SystemConfig::standard(4, 3);
        let a = gen_dataset(&cfg, 50, 7).unwrap();
        let b = gen_dataset(&cfg, 50, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_dataset(&cfg, 50, 8).unwrap());
        for l in &a.layouts {
            assert_eq!(l.len(), 3);
            assert!(l.validate(100.0).is_ok());
        }
    }

    #[test]
    fn zero_count_rejected() {
        assert!(gen_dataset(&SystemConfig::standard(2, 2), 0, 1).is_err());
    }

    #[test]
    fn split_partitions() {
        let ds = gen_dataset(&SystemConfig::standard(2, 2), 100, 3).unwrap();
        let (tr, va) = ds.split(0.05, 9).unwrap();
        assert_eq!(va.len(), 5);
        assert_eq!(tr.len(), 95);
        for l in &va.layouts {
            assert!(!tr.layouts.contains(l));
        }
    }
}
