use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bgat::{loss, BgatArchitecture, BgatModel, Policy};
use crate::diffkit::{check_gradient, GradCheckReport, ParamKind, ParamSet, Tape};
use crate::error::{Error, Result};
use crate::harness::dataset::gen_dataset;
use crate::model::SystemConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub n_antennas: usize,
    pub n_users: usize,
    pub n_blocks: usize,
    pub heads: usize,
    pub coords: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            n_antennas: 3,
            n_users: 2,
            n_blocks: 2,
            heads: 2,
            coords: 100,
            step: 1e-6,
            tolerance: 1e-5,
            floor: 1e-3,
            seed: 0,
        }
    }
}

/// Picks `count` distinct flat indices: a quarter from the readout MLPs, a
/// quarter from the first block (whose outputs feed the edge refresh), the
/// rest uniformly.
pub fn sample_coords(params: &ParamSet, count: usize, seed: u64) -> Result<Vec<usize>> {
    let total = params.len();
    if count > total {
        return Err(Error::InvalidInput(format!("{count} coordinates requested, model has {total}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = |pred: &dyn Fn(&str) -> bool| -> Vec<usize> {
        params
            .shapes
            .specs
            .iter()
            .filter(|s| pred(&s.name))
            .flat_map(|s| s.offset..s.offset + s.rows * s.cols)
            .collect()
    };
    let readout = pool(&|n| n.contains("mlp_delta") || n.contains("mlp_power"));
    let first = pool(&|n| n.starts_with("block0.") && !n.contains("mlp_delta") && !n.contains("mlp_power"));
    let mut chosen = Vec::with_capacity(count);
    for group in [&readout, &first] {
        let k = (count / 4).min(group.len());
        chosen.extend(sample(&mut rng, group.len(), k).into_iter().map(|i| group[i]));
    }
    let rest: Vec<usize> = (0..total).filter(|i| !chosen.contains(i)).collect();
    let k = count - chosen.len();
    chosen.extend(sample(&mut rng, rest.len(), k).into_iter().map(|i| rest[i]));
    Ok(chosen)
}

/// Offsets every bias by `U(-0.1, 0.1)` so no ReLU input sits exactly on
/// its kink, where finite differences see a one-sided slope.
pub fn generic_point(mut params: ParamSet, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for spec in params.shapes.specs.clone() {
        if spec.kind == ParamKind::Bias {
            for v in &mut params.values[spec.offset..spec.offset + spec.rows * spec.cols] {
                *v += rng.random_range(-0.1..0.1);
            }
        }
    }
    params
}

/// Analytic gradient of the unsupervised loss through a small BGAT versus
/// central differences on one random layout.
pub fn bgat_gradcheck(gc: &GradCheckConfig) -> Result<GradCheckReport> {
    let cfg = SystemConfig::standard(gc.n_antennas, gc.n_users);
    let arch = BgatArchitecture {
        n_blocks: gc.n_blocks,
        heads: gc.heads,
        ..BgatArchitecture::default()
    };
    let model = BgatModel::new(arch, gc.n_antennas);
    let params = generic_point(model.init_params(gc.seed), gc.seed.wrapping_add(3));
    let layout = gen_dataset(&cfg, 1, gc.seed.wrapping_add(1))?.layouts.remove(0);
    let (_, analytic) = model.loss_and_grad(&params, &cfg, &layout)?;
    let coords = sample_coords(&params, gc.coords, gc.seed.wrapping_add(2))?;
    check_gradient(&params, &analytic, &coords, gc.step, gc.tolerance, gc.floor, |p| {
        let mut tape = Tape::new();
        let out = model.forward_tape(&mut tape, p, &cfg, &layout)?;
        let l = loss::loss_on_tape(&mut tape, &cfg, &layout, out.x, out.p)?;
        Ok(tape.scalar(l))
    })
}
